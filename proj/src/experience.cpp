#include "vctl/experience.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "vctl/util.hpp"

namespace vctl {

namespace {

constexpr const char* kSchemaVersion = "exp-v1";
constexpr double kRewardTol = 1e-9;

void fail(StoreErrc c, const std::string& msg) { throw StoreError(c, msg); }

nlohmann::json reward_cfg_to_json(const RewardConfig& cfg) {
  return {{"w_dev", cfg.w_dev},
          {"w_vio", cfg.w_vio},
          {"w_unconv", cfg.w_unconv},
          {"v_lo", cfg.v_lo},
          {"v_hi", cfg.v_hi}};
}

RewardConfig reward_cfg_from_json(const nlohmann::json& doc) {
  RewardConfig cfg;
  cfg.w_dev = doc.at("w_dev").get<double>();
  cfg.w_vio = doc.at("w_vio").get<double>();
  cfg.w_unconv = doc.at("w_unconv").get<double>();
  cfg.v_lo = doc.at("v_lo").get<double>();
  cfg.v_hi = doc.at("v_hi").get<double>();
  return cfg;
}

}  // namespace

nlohmann::json experience_to_json(const Experience& exp) {
  return {{"id", exp.id},
          {"context", {{"load", exp.context.load}, {"pv", exp.context.pv}}},
          {"reasoning", exp.reasoning},
          {"actions", schedule_to_json(exp.actions)},
          {"results", summary_to_json(exp.results)},
          {"reward", exp.reward}};
}

Experience experience_from_json(const nlohmann::json& doc) {
  Experience exp;
  try {
    exp.id = doc.at("id").get<std::string>();
    exp.context.load = doc.at("context").at("load").get<std::vector<double>>();
    exp.context.pv = doc.at("context").at("pv").get<std::vector<double>>();
    exp.reasoning = doc.at("reasoning").get<std::string>();
    exp.actions = schedule_from_json(doc.at("actions"));
    exp.results = summary_from_json(doc.at("results"));
    exp.reward = doc.at("reward").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(StoreErrc::corrupt_store, std::string("experience document: ") + e.what());
  }
  return exp;
}

ExperienceStore::ExperienceStore(int capacity, OltcSpec oltc,
                                 std::vector<ScSpec> scs, RewardConfig reward_cfg)
    : capacity_(capacity),
      oltc_(oltc),
      scs_(std::move(scs)),
      reward_cfg_(reward_cfg) {
  if (capacity_ < 1) throw std::invalid_argument("store capacity must be >= 1");
}

const Experience* ExperienceStore::find(const std::string& id) const {
  for (const Experience& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

double ExperienceStore::min_reward() const {
  double m = std::numeric_limits<double>::infinity();
  for (const Experience& e : entries_) m = std::min(m, e.reward);
  return m;
}

double ExperienceStore::max_reward() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const Experience& e : entries_) m = std::max(m, e.reward);
  return m;
}

std::string ExperienceStore::allocate_id() {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%06llu",
                static_cast<unsigned long long>(next_id_++));
  return buf;
}

void ExperienceStore::validate_experience(const Experience& exp) const {
  const ScheduleCheck check = validate_schedule(exp.actions, oltc_, scs_);
  if (!check.valid)
    fail(StoreErrc::corrupt_store,
         "experience " + exp.id + " actions fail validation: " + check.joined());
  const double recomputed = reward(exp.results, reward_cfg_);
  if (std::abs(recomputed - exp.reward) > kRewardTol)
    fail(StoreErrc::corrupt_store,
         "experience " + exp.id + " stored reward " + std::to_string(exp.reward) +
             " disagrees with recomputation " + std::to_string(recomputed));
}

void ExperienceStore::add(Experience exp) {
  if (static_cast<int>(entries_.size()) >= capacity_)
    throw std::logic_error("add() on a full store; use replace()");
  validate_experience(exp);
  if (find(exp.id)) fail(StoreErrc::corrupt_store, "duplicate id " + exp.id);
  entries_.push_back(std::move(exp));
  if (dir_) persist_all();
}

void ExperienceStore::replace(const std::string& old_id, Experience candidate) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Experience& e) { return e.id == old_id; });
  if (it == entries_.end())
    fail(StoreErrc::not_found, "no experience with id " + old_id);
  if (!(candidate.reward > it->reward))
    fail(StoreErrc::not_an_improvement,
         "candidate reward " + std::to_string(candidate.reward) +
             " does not strictly beat " + std::to_string(it->reward));
  validate_experience(candidate);
  if (candidate.id != old_id && find(candidate.id))
    fail(StoreErrc::corrupt_store, "duplicate id " + candidate.id);

  const std::string cand_id = candidate.id;
  *it = std::move(candidate);
  if (dir_) {
    // New entry first, then the manifest rename commits the swap, then the
    // orphaned file goes away.
    write_text_file_atomic(*dir_ / (cand_id + ".exp.json"),
                           experience_to_json(*it).dump(2) + "\n");
    persist_all();
    if (cand_id != old_id)
      std::filesystem::remove(*dir_ / (old_id + ".exp.json"));
  }
}

void ExperienceStore::bind(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  dir_ = dir;
  persist_all();
}

void ExperienceStore::save(const std::filesystem::path& dir) {
  bind(dir);
}

void ExperienceStore::persist_all() const {
  nlohmann::json ids = nlohmann::json::array();
  for (const Experience& e : entries_) {
    write_text_file_atomic(*dir_ / (e.id + ".exp.json"),
                           experience_to_json(e).dump(2) + "\n");
    ids.push_back(e.id);
  }
  nlohmann::json jscs = nlohmann::json::array();
  for (const ScSpec& sc : scs_) jscs.push_back(sc_to_json(sc));
  const nlohmann::json manifest = {{"schema_version", kSchemaVersion},
                                   {"capacity", capacity_},
                                   {"entries", ids},
                                   {"next_id", next_id_},
                                   {"device_specs",
                                    {{"oltc", oltc_to_json(oltc_)}, {"scs", jscs}}},
                                   {"reward", reward_cfg_to_json(reward_cfg_)}};
  write_text_file_atomic(*dir_ / "manifest.json", manifest.dump(2) + "\n");
}

std::string ExperienceStore::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Experience& e : entries_)
    h = fnv1a64(experience_to_json(e).dump(), h);
  return to_hex(h);
}

ExperienceStore ExperienceStore::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const std::exception& e) {
    fail(StoreErrc::corrupt_store, std::string("manifest: ") + e.what());
  }
  try {
    const std::string version = manifest.at("schema_version").get<std::string>();
    if (version != kSchemaVersion)
      fail(StoreErrc::corrupt_store, "schema version '" + version +
                                         "' != expected '" + kSchemaVersion + "'");
    std::vector<ScSpec> scs;
    for (const auto& jsc : manifest.at("device_specs").at("scs"))
      scs.push_back(sc_from_json(jsc));
    ExperienceStore store(manifest.at("capacity").get<int>(),
                          oltc_from_json(manifest.at("device_specs").at("oltc")),
                          std::move(scs),
                          reward_cfg_from_json(manifest.at("reward")));
    for (const auto& jid : manifest.at("entries")) {
      const std::string id = jid.get<std::string>();
      const Experience exp = experience_from_json(
          nlohmann::json::parse(read_text_file(dir / (id + ".exp.json"))));
      if (exp.id != id)
        fail(StoreErrc::corrupt_store,
             "entry file " + id + ".exp.json carries id " + exp.id);
      store.validate_experience(exp);
      store.entries_.push_back(exp);
    }
    store.next_id_ = manifest.at("next_id").get<std::uint64_t>();
    if (static_cast<int>(store.entries_.size()) != store.capacity_)
      fail(StoreErrc::corrupt_store,
           "store holds " + std::to_string(store.entries_.size()) +
               " entries, capacity is " + std::to_string(store.capacity_));
    store.dir_ = dir;
    return store;
  } catch (const nlohmann::json::exception& e) {
    fail(StoreErrc::corrupt_store, std::string("manifest: ") + e.what());
  }
  throw std::logic_error("unreachable");
}

std::vector<int> stratified_day_picks(const std::vector<DayProfile>& days,
                                      int k) {
  const int n = static_cast<int>(days.size());
  std::vector<int> by_load(static_cast<size_t>(n));
  std::iota(by_load.begin(), by_load.end(), 0);
  auto peak = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end());
  };
  std::sort(by_load.begin(), by_load.end(), [&](int a, int b) {
    const double pa = peak(days[static_cast<size_t>(a)].load_mw);
    const double pb = peak(days[static_cast<size_t>(b)].load_mw);
    return pa != pb ? pa < pb : a < b;
  });

  std::vector<int> picks;
  picks.reserve(static_cast<size_t>(k));
  for (int b = 0; b < k; ++b) {
    const int lo = b * n / k;
    const int hi = (b + 1) * n / k;  // bucket = by_load[lo, hi)
    std::vector<int> bucket(by_load.begin() + lo, by_load.begin() + hi);
    std::sort(bucket.begin(), bucket.end(), [&](int a, int c) {
      const double pa = peak(days[static_cast<size_t>(a)].pv_mw);
      const double pc = peak(days[static_cast<size_t>(c)].pv_mw);
      return pa != pc ? pa < pc : a < c;
    });
    // Sweep the in-bucket PV rank from low to high across buckets so the
    // picks spread over both peak-load and peak-PV.
    const int rank = k > 1 ? b * (static_cast<int>(bucket.size()) - 1) / (k - 1)
                           : 0;
    picks.push_back(bucket[static_cast<size_t>(rank)]);
  }
  return picks;
}

}  // namespace vctl
