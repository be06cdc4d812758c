#include "vctl/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "vctl/devices.hpp"
#include "vctl/rng.hpp"
#include "vctl/util.hpp"

namespace vctl {

namespace {

void fail(NetworkErrc c, const std::string& msg) { throw NetworkError(c, msg); }

/// Orient the branch list as a tree rooted at the slack bus and cache the
/// sweep order. Rejects cycles and disconnected components.
void build_topology(Network& net) {
  const int n = net.bus_count();
  if (static_cast<int>(net.branches.size()) != n - 1)
    fail(NetworkErrc::non_radial,
         "branch count " + std::to_string(net.branches.size()) +
             " != bus count - 1 (" + std::to_string(n - 1) + ")");

  std::unordered_map<int, int> index;
  for (int i = 0; i < n; ++i) {
    if (!index.emplace(net.buses[i].id, i).second)
      fail(NetworkErrc::duplicate_bus_id,
           "duplicate bus id " + std::to_string(net.buses[i].id));
  }

  int slack = -1;
  for (int i = 0; i < n; ++i) {
    if (net.buses[i].kind == BusKind::slack) {
      if (slack >= 0) fail(NetworkErrc::missing_slack, "more than one slack bus");
      slack = i;
    }
  }
  if (slack < 0) fail(NetworkErrc::missing_slack, "no slack bus");
  net.slack_index = slack;

  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch)
  for (size_t b = 0; b < net.branches.size(); ++b) {
    const Branch& br = net.branches[b];
    auto fi = index.find(br.from_bus);
    auto ti = index.find(br.to_bus);
    if (fi == index.end() || ti == index.end())
      fail(NetworkErrc::invalid_reference,
           "branch references unknown bus " +
               std::to_string(fi == index.end() ? br.from_bus : br.to_bus));
    if (fi->second == ti->second)
      fail(NetworkErrc::non_radial,
           "self-loop branch at bus " + std::to_string(br.from_bus));
    if (br.r < 0.0 || br.x < 0.0 || (br.r == 0.0 && br.x == 0.0))
      fail(NetworkErrc::bad_document,
           "branch " + std::to_string(br.from_bus) + "->" +
               std::to_string(br.to_bus) + " needs r >= 0, x >= 0, not both zero");
    adj[static_cast<size_t>(fi->second)].emplace_back(ti->second, static_cast<int>(b));
    adj[static_cast<size_t>(ti->second)].emplace_back(fi->second, static_cast<int>(b));
  }

  net.parent.assign(static_cast<size_t>(n), -1);
  net.branch_z.assign(static_cast<size_t>(n), {0.0, 0.0});
  net.order.clear();
  net.order.reserve(static_cast<size_t>(n));

  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::queue<int> q;
  q.push(slack);
  seen[static_cast<size_t>(slack)] = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    net.order.push_back(u);
    for (auto [v, b] : adj[static_cast<size_t>(u)]) {
      if (seen[static_cast<size_t>(v)]) {
        if (v != net.parent[static_cast<size_t>(u)])
          fail(NetworkErrc::non_radial, "cycle detected through bus " +
                                            std::to_string(net.buses[static_cast<size_t>(v)].id));
        continue;
      }
      seen[static_cast<size_t>(v)] = 1;
      net.parent[static_cast<size_t>(v)] = u;
      net.branch_z[static_cast<size_t>(v)] = {net.branches[static_cast<size_t>(b)].r,
                                              net.branches[static_cast<size_t>(b)].x};
      q.push(v);
    }
  }
  if (static_cast<int>(net.order.size()) != n)
    fail(NetworkErrc::disconnected,
         std::to_string(n - static_cast<int>(net.order.size())) +
             " buses unreachable from the slack");
}

void validate_bus(const Bus& b) {
  if (b.p_load_nom < 0.0 || b.q_load_nom < 0.0 || b.pv_capacity < 0.0)
    fail(NetworkErrc::bad_document,
         "bus " + std::to_string(b.id) + " has a negative nominal value");
  if (b.sc && b.sc->q_mvar <= 0.0)
    fail(NetworkErrc::bad_document,
         "bus " + std::to_string(b.id) + " sc q_mvar must be > 0");
}

}  // namespace

int Network::index_of(int bus_id) const {
  for (int i = 0; i < bus_count(); ++i)
    if (buses[static_cast<size_t>(i)].id == bus_id) return i;
  return -1;
}

std::vector<int> Network::pv_bus_indices() const {
  std::vector<int> out;
  for (int i = 0; i < bus_count(); ++i)
    if (buses[static_cast<size_t>(i)].pv_capacity > 0.0) out.push_back(i);
  return out;
}

std::vector<int> Network::sc_bus_indices() const {
  std::vector<int> out;
  for (int i = 0; i < bus_count(); ++i)
    if (buses[static_cast<size_t>(i)].sc) out.push_back(i);
  return out;
}

double Network::total_p_load_nom() const {
  double s = 0.0;
  for (const Bus& b : buses) s += b.p_load_nom;
  return s;
}

double Network::total_q_load_nom() const {
  double s = 0.0;
  for (const Bus& b : buses) s += b.q_load_nom;
  return s;
}

double Network::total_pv_capacity() const {
  double s = 0.0;
  for (const Bus& b : buses) s += b.pv_capacity;
  return s;
}

Network load_network(const nlohmann::json& doc) {
  Network net;
  try {
    net.name = doc.at("name").get<std::string>();
    net.base_mva = doc.at("base_mva").get<double>();
    for (const auto& jb : doc.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      const std::string kind = jb.at("kind").get<std::string>();
      if (kind == "slack")
        b.kind = BusKind::slack;
      else if (kind == "load")
        b.kind = BusKind::load;
      else
        fail(NetworkErrc::bad_document, "unknown bus kind '" + kind + "'");
      b.p_load_nom = jb.at("p_load_nom").get<double>();
      b.q_load_nom = jb.at("q_load_nom").get<double>();
      b.pv_capacity = jb.at("pv_capacity").get<double>();
      if (jb.contains("sc") && !jb.at("sc").is_null())
        b.sc = ShuntCap{jb.at("sc").at("q_mvar").get<double>()};
      validate_bus(b);
      net.buses.push_back(b);
    }
    for (const auto& jb : doc.at("branches")) {
      Branch br;
      br.from_bus = jb.at("from").get<int>();
      br.to_bus = jb.at("to").get<int>();
      br.r = jb.at("r").get<double>();
      br.x = jb.at("x").get<double>();
      net.branches.push_back(br);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(NetworkErrc::bad_document, std::string("network document: ") + e.what());
  }
  if (net.base_mva <= 0.0)
    fail(NetworkErrc::bad_document, "base_mva must be > 0");
  build_topology(net);
  return net;
}

Network load_network_file(const std::filesystem::path& path) {
  return load_network(nlohmann::json::parse(read_text_file(path)));
}

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json jbuses = nlohmann::json::array();
  for (const Bus& b : net.buses) {
    nlohmann::json jb{{"id", b.id},
                      {"kind", b.kind == BusKind::slack ? "slack" : "load"},
                      {"p_load_nom", b.p_load_nom},
                      {"q_load_nom", b.q_load_nom},
                      {"pv_capacity", b.pv_capacity}};
    if (b.sc) jb["sc"] = {{"q_mvar", b.sc->q_mvar}};
    jbuses.push_back(std::move(jb));
  }
  nlohmann::json jbranches = nlohmann::json::array();
  for (const Branch& br : net.branches)
    jbranches.push_back(
        {{"from", br.from_bus}, {"to", br.to_bus}, {"r", br.r}, {"x", br.x}});
  return {{"name", net.name},
          {"base_mva", net.base_mva},
          {"buses", jbuses},
          {"branches", jbranches}};
}

VoltageSolution solve_power_flow(const Network& net, const CaseInjection& inj,
                                 double root_voltage,
                                 const SolverOptions& opts) {
  const size_t n = static_cast<size_t>(net.bus_count());
  if (inj.p_pu.size() != n || inj.q_pu.size() != n)
    throw DimensionMismatch("injection vectors must have one entry per bus");
  if (root_voltage < 0.8 || root_voltage > 1.2)
    throw std::invalid_argument("root_voltage outside [0.8, 1.2]");

  using cd = std::complex<double>;
  std::vector<cd> v(n, cd{root_voltage, 0.0});
  std::vector<cd> flow(n);  // current through the branch feeding bus i

  const size_t root = static_cast<size_t>(net.slack_index);
  VoltageSolution sol;
  sol.v_mag.assign(n, root_voltage);

  for (int it = 1; it <= opts.max_iter; ++it) {
    // Backward sweep: bus drawn currents, accumulated leaf to root.
    for (size_t i = 0; i < n; ++i) {
      if (i == root) {
        flow[i] = cd{0.0, 0.0};
        continue;
      }
      const cd s_inj{inj.p_pu[i], inj.q_pu[i]};
      flow[i] = -std::conj(s_inj / v[i]);
    }
    for (size_t k = net.order.size(); k-- > 1;) {
      const size_t i = static_cast<size_t>(net.order[k]);
      const size_t p = static_cast<size_t>(net.parent[i]);
      if (p != root) flow[p] += flow[i];
    }

    // Forward sweep: voltage drops root to leaves.
    double max_change = 0.0;
    for (size_t k = 1; k < net.order.size(); ++k) {
      const size_t i = static_cast<size_t>(net.order[k]);
      const size_t p = static_cast<size_t>(net.parent[i]);
      const cd vn = v[p] - net.branch_z[i] * flow[i];
      max_change = std::max(max_change, std::abs(vn - v[i]));
      v[i] = vn;
      if (std::abs(vn) < opts.collapse_floor)
        throw DivergedError("voltage collapse at bus " +
                            std::to_string(net.buses[i].id) + " (|V| = " +
                            std::to_string(std::abs(vn)) + " p.u.)");
    }

    sol.iterations = it;
    if (max_change < opts.tol) {
      sol.converged = true;
      break;
    }
  }

  for (size_t i = 0; i < n; ++i) sol.v_mag[i] = std::abs(v[i]);
  sol.v_mag[root] = root_voltage;
  return sol;
}

CaseInjection build_case_injection(const Network& net,
                                   const std::vector<double>& bus_p_load_mw,
                                   const std::vector<double>& bus_q_load_mvar,
                                   const std::vector<double>& bus_pv_mw,
                                   const std::vector<int>& sc_states,
                                   const std::vector<ScSpec>& sc_specs) {
  const size_t n = static_cast<size_t>(net.bus_count());
  if (bus_p_load_mw.size() != n || bus_q_load_mvar.size() != n ||
      bus_pv_mw.size() != n)
    throw DimensionMismatch("per-bus vectors must have one entry per bus");
  if (sc_states.size() != sc_specs.size())
    throw DimensionMismatch("sc_states length must match sc_specs");

  CaseInjection inj;
  inj.p_pu.assign(n, 0.0);
  inj.q_pu.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    inj.p_pu[i] = (bus_pv_mw[i] - bus_p_load_mw[i]) / net.base_mva;
    inj.q_pu[i] = -bus_q_load_mvar[i] / net.base_mva;
  }
  for (size_t m = 0; m < sc_specs.size(); ++m) {
    if (sc_states[m] == 0) continue;
    const int idx = net.index_of(sc_specs[m].bus);
    if (idx < 0)
      throw DimensionMismatch("sc spec references unknown bus " +
                              std::to_string(sc_specs[m].bus));
    inj.q_pu[static_cast<size_t>(idx)] += sc_specs[m].q_mvar / net.base_mva;
  }
  return inj;
}

Network bundled_feeder141() {
  // Deterministic synthetic 141-bus radial feeder: a 30-bus trunk with
  // laterals hanging off it. Impedances, loads and device placements all
  // come from one fixed seed so the document can be regenerated bit-exactly.
  constexpr int kBusCount = 141;
  constexpr int kTrunkLen = 30;
  constexpr std::uint64_t kSeed = 141;
  Rng rng(kSeed);

  nlohmann::json jbuses = nlohmann::json::array();
  nlohmann::json jbranches = nlohmann::json::array();

  jbuses.push_back({{"id", 1},
                    {"kind", "slack"},
                    {"p_load_nom", 0.0},
                    {"q_load_nom", 0.0},
                    {"pv_capacity", 0.0}});

  struct Row {
    int id;
    double p, q;
  };
  std::vector<Row> rows;

  // Aim for ~12 MW nominal peak load spread unevenly over 140 buses, with
  // reactive load at a 0.95-ish power factor (tan phi = 1/3).
  for (int id = 2; id <= kBusCount; ++id) {
    const double p = 0.086 * std::exp(0.55 * rng.normal());
    rows.push_back({id, p, p / 3.0});
  }

  // Trunk impedances: heavier conductor near the head, r/x ~ 1.5.
  // The 0.0016 scale is calibrated so the nominal peak sags the feeder
  // end to roughly 0.94 p.u. and a 60% PV day lifts it past 1.05.
  const double kZScale = 0.0016;
  int next_id = 2;
  for (int i = 0; i < kTrunkLen; ++i) {
    const int from = (i == 0) ? 1 : next_id - 1;
    const double taper = 1.0 + 1.2 * static_cast<double>(i) / kTrunkLen;
    const double r = kZScale * taper * (0.9 + 0.2 * rng.uniform01());
    jbranches.push_back({{"from", from}, {"to", next_id}, {"r", r}, {"x", r / 1.5}});
    ++next_id;
  }

  // Laterals: attach chains to seeded trunk positions until 141 buses exist.
  while (next_id <= kBusCount) {
    const int attach_trunk = static_cast<int>(rng.uniform_int(2, kTrunkLen + 1));
    const int max_len = kBusCount - next_id + 1;
    const int len = static_cast<int>(std::min<std::int64_t>(rng.uniform_int(3, 9), max_len));
    int from = attach_trunk;
    for (int j = 0; j < len; ++j) {
      const double r = kZScale * 1.6 * (0.8 + 0.4 * rng.uniform01());
      jbranches.push_back({{"from", from}, {"to", next_id}, {"r", r}, {"x", r / 1.8}});
      from = next_id;
      ++next_id;
    }
  }

  // 22 PV buses at 1.5 MW and 5 SC buses at 0.1 MVAr, sampled without
  // replacement from the non-slack buses.
  auto sample_ids = [&rng](int count, int lo, int hi,
                           const std::vector<int>& exclude) {
    std::vector<int> out;
    while (static_cast<int>(out.size()) < count) {
      const int id = static_cast<int>(rng.uniform_int(lo, hi));
      bool dup = std::find(out.begin(), out.end(), id) != out.end() ||
                 std::find(exclude.begin(), exclude.end(), id) != exclude.end();
      if (!dup) out.push_back(id);
    }
    return out;
  };
  const std::vector<int> pv_ids = sample_ids(22, 2, kBusCount, {});
  const std::vector<int> sc_ids = sample_ids(5, 2, kBusCount, pv_ids);

  for (const Row& row : rows) {
    nlohmann::json jb{{"id", row.id},
                      {"kind", "load"},
                      {"p_load_nom", row.p},
                      {"q_load_nom", row.q},
                      {"pv_capacity", 0.0}};
    if (std::find(pv_ids.begin(), pv_ids.end(), row.id) != pv_ids.end())
      jb["pv_capacity"] = 1.5;
    if (std::find(sc_ids.begin(), sc_ids.end(), row.id) != sc_ids.end())
      jb["sc"] = {{"q_mvar", 0.1}};
    jbuses.push_back(std::move(jb));
  }

  return load_network({{"name", "feeder141"},
                       {"base_mva", 10.0},
                       {"buses", jbuses},
                       {"branches", jbranches}});
}

}  // namespace vctl
