#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "vctl/agent.hpp"
#include "vctl/experience.hpp"
#include "vctl/util.hpp"

using namespace vctl;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  Network net = bundled_feeder141();
  std::vector<DayProfile> days = generate_dataset(42, 30, net);
  BusAllocation alloc = default_allocation(net);
  OltcSpec oltc;
  std::vector<ScSpec> scs;
  RewardConfig rcfg;

  Fixture() {
    for (const int i : net.sc_bus_indices()) {
      ScSpec s;
      s.bus = net.buses[static_cast<size_t>(i)].id;
      s.q_mvar = net.buses[static_cast<size_t>(i)].sc->q_mvar;
      scs.push_back(s);
    }
  }

  BootstrapInputs inputs() const {
    return BootstrapInputs{net, days, alloc, oltc, scs, rcfg, 7, 0.0};
  }
};

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / tag;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("bootstrap: size, reward consistency, stratification") {
  const Fixture fx;

  SUBCASE("K = 1 produces one entry whose reward matches recomputation") {
    const ExperienceStore store = bootstrap_store(1, fx.inputs());
    REQUIRE(store.entries().size() == 1);
    const Experience& e = store.entries().front();
    CHECK(e.reward ==
          doctest::Approx(reward(e.results, fx.rcfg)).epsilon(1e-12));
    CHECK(validate_schedule(e.actions, fx.oltc, fx.scs).valid);
  }

  SUBCASE("K = 8 over 30 days: distinct days, one per load-quantile bucket") {
    const std::vector<int> picks = stratified_day_picks(fx.days, 8);
    REQUIRE(picks.size() == 8);
    CHECK(std::set<int>(picks.begin(), picks.end()).size() == 8);

    // Rank days by peak load; each of the 8 rank buckets contributes one.
    std::vector<int> by_load(fx.days.size());
    for (size_t i = 0; i < by_load.size(); ++i) by_load[i] = static_cast<int>(i);
    std::sort(by_load.begin(), by_load.end(), [&](int a, int b) {
      const auto& da = fx.days[static_cast<size_t>(a)].load_mw;
      const auto& db = fx.days[static_cast<size_t>(b)].load_mw;
      const double pa = *std::max_element(da.begin(), da.end());
      const double pb = *std::max_element(db.begin(), db.end());
      return pa != pb ? pa < pb : a < b;
    });
    const int n = static_cast<int>(fx.days.size());
    for (int b = 0; b < 8; ++b) {
      const auto lo = by_load.begin() + b * n / 8;
      const auto hi = by_load.begin() + (b + 1) * n / 8;
      CHECK(std::count(lo, hi, picks[static_cast<size_t>(b)]) == 1);
    }

    const ExperienceStore store = bootstrap_store(8, fx.inputs());
    CHECK(store.entries().size() == 8);
    std::set<std::string> ids;
    for (const Experience& e : store.entries()) ids.insert(e.id);
    CHECK(ids.size() == 8);
  }

  SUBCASE("K above the dataset size is refused") {
    try {
      bootstrap_store(40, fx.inputs());
      FAIL("expected InsufficientDays");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::insufficient_days);
    }
  }
}

TEST_CASE("replace: strictness, size, monotone minimum") {
  const Fixture fx;
  ExperienceStore store = bootstrap_store(4, fx.inputs());
  const int k = store.capacity();

  auto lowest = [&store]() {
    const Experience* worst = &store.entries().front();
    for (const Experience& e : store.entries())
      if (e.reward < worst->reward) worst = &e;
    return worst;
  };

  SUBCASE("rejects a non-improvement and unknown ids") {
    Experience cand = store.entries().front();
    cand.id = "e999999";
    try {
      store.replace(lowest()->id, [&] {
        Experience c = cand;
        c.reward = lowest()->reward;  // equal is not strictly better
        c.results.deviation = -c.reward / 1000.0;
        c.results.violation_rate = 0.0;
        c.results.unconverged_cases = 0;
        return c;
      }());
      FAIL("expected NotAnImprovement");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::not_an_improvement);
    }
    try {
      store.replace("e424242", cand);
      FAIL("expected NotFound");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::not_found);
    }
  }

  SUBCASE("accepted replacements never lower the store minimum") {
    double prev_min = store.min_reward();
    for (int step = 0; step < 6; ++step) {
      const Experience* target = lowest();
      Experience cand = *target;
      cand.id = "r00000" + std::to_string(step);
      cand.reward = target->reward + 1.0;
      cand.results.deviation = -cand.reward / 1000.0;  // keep recompute exact
      cand.results.violation_rate = 0.0;
      cand.results.unconverged_cases = 0;
      store.replace(target->id, cand);
      CHECK(static_cast<int>(store.entries().size()) == k);
      CHECK(store.min_reward() >= prev_min);
      prev_min = store.min_reward();
    }
  }
}

TEST_CASE("persistence round-trip and corruption checks") {
  const Fixture fx;
  ExperienceStore store = bootstrap_store(3, fx.inputs());
  // Exercise byte-exact persistence of awkward reasoning text.
  {
    const Experience* worst = &store.entries().front();
    for (const Experience& e : store.entries())
      if (e.reward < worst->reward) worst = &e;
    Experience cand = *worst;
    cand.id = "rweird0";
    cand.reward = worst->reward + 0.5;
    cand.results.deviation = -cand.reward / 1000.0;
    cand.results.violation_rate = 0.0;
    cand.results.unconverged_cases = 0;
    cand.reasoning = "line1\n\ttabbed \"quoted\" \\ backslash\nunicode: μ ≤ 0.95 ✓\n";
    store.replace(worst->id, cand);
  }

  const fs::path dir = temp_dir("vctl_store_test");
  store.save(dir);

  SUBCASE("load(save(s)) is structurally identical") {
    const ExperienceStore loaded = ExperienceStore::load(dir);
    REQUIRE(loaded.entries().size() == store.entries().size());
    CHECK(loaded.capacity() == store.capacity());
    for (size_t i = 0; i < store.entries().size(); ++i) {
      CHECK(experience_to_json(loaded.entries()[i]) ==
            experience_to_json(store.entries()[i]));
    }
    CHECK(loaded.content_hash() == store.content_hash());
    // No stray temp files from the atomic write path.
    for (const auto& entry : fs::directory_iterator(dir))
      CHECK(entry.path().extension() != ".tmp");
  }

  SUBCASE("a document missing `reasoning` is rejected") {
    const std::string id = store.entries().front().id;
    nlohmann::json doc =
        nlohmann::json::parse(read_text_file(dir / (id + ".exp.json")));
    doc.erase("reasoning");
    write_text_file_atomic(dir / (id + ".exp.json"), doc.dump(2));
    try {
      ExperienceStore::load(dir);
      FAIL("expected CorruptStore");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::corrupt_store);
    }
  }

  SUBCASE("a reward off by more than 1e-9 from recomputation is rejected") {
    const std::string id = store.entries().front().id;
    nlohmann::json doc =
        nlohmann::json::parse(read_text_file(dir / (id + ".exp.json")));
    doc["reward"] = doc["reward"].get<double>() + 1e-6;
    write_text_file_atomic(dir / (id + ".exp.json"), doc.dump(2));
    try {
      ExperienceStore::load(dir);
      FAIL("expected CorruptStore");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::corrupt_store);
    }
  }

  SUBCASE("a wrong schema version is rejected") {
    nlohmann::json manifest =
        nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    manifest["schema_version"] = "exp-v0";
    write_text_file_atomic(dir / "manifest.json", manifest.dump(2));
    try {
      ExperienceStore::load(dir);
      FAIL("expected CorruptStore");
    } catch (const StoreError& e) {
      CHECK(e.code == StoreErrc::corrupt_store);
    }
  }

  fs::remove_all(dir);
}

TEST_CASE("bound stores persist replacements atomically") {
  const Fixture fx;
  const fs::path dir = temp_dir("vctl_store_bind");
  ExperienceStore store = bootstrap_store(2, fx.inputs());
  store.bind(dir);

  const Experience* worst = &store.entries().front();
  for (const Experience& e : store.entries())
    if (e.reward < worst->reward) worst = &e;
  const std::string old_id = worst->id;

  Experience cand = *worst;
  cand.id = "rbind00";
  cand.reward = worst->reward + 2.0;
  cand.results.deviation = -cand.reward / 1000.0;
  cand.results.violation_rate = 0.0;
  cand.results.unconverged_cases = 0;
  store.replace(old_id, cand);

  CHECK_FALSE(fs::exists(dir / (old_id + ".exp.json")));
  CHECK(fs::exists(dir / "rbind00.exp.json"));
  const ExperienceStore loaded = ExperienceStore::load(dir);
  CHECK(loaded.content_hash() == store.content_hash());
  fs::remove_all(dir);
}
