// Acceptance gate: runs every criterion at its stated tolerance and prints
// one [PASS]/[FAIL] line per criterion. Exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vctl/agent.hpp"
#include "vctl/config.hpp"
#include "vctl/harness.hpp"
#include "vctl/retrieval.hpp"
#include "vctl/rng.hpp"
#include "vctl/util.hpp"
#include "support/oracles.hpp"

using namespace vctl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

#define REQUIRE_C(cond, msg)                                       \
  do {                                                             \
    if (!(cond)) {                                                 \
      g_notes.push_back(std::string("      at ") + __FILE__ + ":" + \
                        std::to_string(__LINE__) + ": " + (msg));  \
      return false;                                                \
    }                                                              \
  } while (0)

void report(int number, const char* name, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", number, name);
  for (const std::string& note : g_notes) std::printf("%s\n", note.c_str());
  g_notes.clear();
  if (!ok) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

struct Bench {
  Network net = bundled_feeder141();
  std::vector<DayProfile> days;
  BusAllocation alloc;
  OltcSpec oltc;
  std::vector<ScSpec> scs;
  RewardConfig rcfg;
  PromptTemplates tpl;
  std::vector<int> stress_ids;

  Bench() {
    days = generate_dataset(42, 90, net);
    alloc = default_allocation(net);
    RunConfig cfg;
    scs = sc_specs_from_network(net, cfg);
    tpl = PromptTemplates::load(fs::path(VCTL_DATA_DIR) / "prompts");
    for (const DayProfile& d : days) {
      const double pp = *std::max_element(d.pv_mw.begin(), d.pv_mw.end());
      const double lp = *std::max_element(d.load_mw.begin(), d.load_mw.end());
      if (pp >= 1.5 * lp) stress_ids.push_back(d.day_id);
    }
  }

  SimContext ctx() const { return SimContext{net, oltc, scs, alloc, rcfg}; }
};

// --------------------------------------------------------------------------
// 1. Power-flow oracle equivalence (200 nets, 1e-6; 2-bus analytic; < 10 s)

bool criterion1() {
  const double t0 = now_seconds();
  Rng rng(10007);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 10));
    const Network net = oracles::random_tree_network(rng, n);
    CaseInjection inj;
    inj.p_pu.assign(static_cast<size_t>(n), 0.0);
    inj.q_pu.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      if (i == net.slack_index) continue;
      inj.p_pu[static_cast<size_t>(i)] = rng.uniform(-0.3, 0.3);
      inj.q_pu[static_cast<size_t>(i)] = rng.uniform(-0.3, 0.3);
    }
    const VoltageSolution sol = solve_power_flow(net, inj, 1.0);
    REQUIRE_C(sol.converged, "sweep failed to converge on trial " +
                                 std::to_string(trial));
    bool oracle_ok = false;
    const auto expect =
        oracles::dense_fixed_point_voltages(net, inj, 1.0, 500, 1e-12, &oracle_ok);
    REQUIRE_C(oracle_ok, "oracle failed to converge");
    for (int i = 0; i < n; ++i)
      REQUIRE_C(std::abs(sol.v_mag[static_cast<size_t>(i)] -
                         expect[static_cast<size_t>(i)]) < 1e-6,
                "sweep/oracle gap above 1e-6");
  }

  {
    const Network net = load_network(
        {{"name", "pair"},
         {"base_mva", 10.0},
         {"buses",
          {{{"id", 1}, {"kind", "slack"}, {"p_load_nom", 0.0}, {"q_load_nom", 0.0}, {"pv_capacity", 0.0}},
           {{"id", 2}, {"kind", "load"}, {"p_load_nom", 5.0}, {"q_load_nom", 2.0}, {"pv_capacity", 0.0}}}},
         {"branches", {{{"from", 1}, {"to", 2}, {"r", 0.01}, {"x", 0.02}}}}});
    CaseInjection inj;
    inj.p_pu = {0.0, -0.5};
    inj.q_pu = {0.0, -0.2};
    const VoltageSolution sol = solve_power_flow(net, inj, 1.0);
    const double expect = oracles::two_bus_voltage(0.01, 0.02, 0.5, 0.2, 1.0);
    REQUIRE_C(sol.converged, "two-bus case failed to converge");
    REQUIRE_C(std::abs(sol.v_mag[1] - expect) < 1e-6,
              "two-bus analytic gap above 1e-6");
  }

  const double elapsed = now_seconds() - t0;
  REQUIRE_C(elapsed < 10.0,
            "oracle suite took " + std::to_string(elapsed) + " s (limit 10)");
  return true;
}

// --------------------------------------------------------------------------
// 2. Performance: one 96x141 episode < 1 s; 30-episode sweep < 10 s

bool criterion2(const Bench& b) {
  const DayProfile& day = b.days[0];
  const ActionSchedule plan = neutral_schedule(b.oltc, b.scs);

  const auto t0 = std::chrono::steady_clock::now();
  const DispatchSummary s =
      simulate_day(b.net, day, plan, b.oltc, b.scs, b.alloc, b.rcfg);
  const double episode_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE_C(s.v_min_hourly.size() == 24, "summary malformed");
  REQUIRE_C(episode_s < 1.0, "single episode took " + std::to_string(episode_s) +
                                 " s (limit 1)");

  BootstrapInputs bins{b.net, b.days, b.alloc, b.oltc, b.scs, b.rcfg, 7, 0.0};
  const ExperienceStore store = bootstrap_store(8, bins);
  ScriptedBackend backend;
  std::vector<DayProfile> sweep_days(b.days.begin(), b.days.begin() + 30);
  std::vector<Forecast> fcs;
  for (const DayProfile& d : sweep_days) fcs.push_back(forecast_for_day(d, 7, 0.0));

  EpisodeOptions opts;
  const auto t1 = std::chrono::steady_clock::now();
  const auto recs = run_eval_sweep(Variant::Full, b.ctx(), b.tpl, sweep_days,
                                   fcs, &store, &backend, opts, 0 /*auto*/ + 2,
                                   nullptr, "perf");
  const double sweep_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  REQUIRE_C(recs.size() == 30, "sweep did not produce 30 records");
  REQUIRE_C(sweep_s < 10.0, "30-episode sweep took " + std::to_string(sweep_s) +
                                " s (limit 10)");
  return true;
}

// --------------------------------------------------------------------------
// 3. Similarity properties (1e4 cases) and Eq.(1)/(2) oracle match to 1e-12

bool criterion3() {
  Rng rng(30303);
  auto random_fc = [&rng](bool allow_zero) {
    Forecast f;
    const bool zero_pv = allow_zero && rng.uniform01() < 0.02;
    for (int h = 0; h < 24; ++h) {
      f.load.push_back(rng.uniform(0.0, 15.0));
      f.pv.push_back(zero_pv ? 0.0 : rng.uniform(0.0, 30.0));
    }
    return f;
  };

  for (int i = 0; i < 10000; ++i) {
    const Forecast a = random_fc(true);
    const Forecast b = random_fc(true);

    const double ps = profile_similarity(a, b);
    const double ss = statistical_similarity(a, b);
    REQUIRE_C(ps >= 0.0 && ps <= 1.0 + 1e-12, "PS out of [0,1]");
    REQUIRE_C(ss >= 0.0 && ss <= 1.0 + 1e-12, "SS out of [0,1]");
    REQUIRE_C(std::abs(ps - profile_similarity(b, a)) < 1e-12, "PS asymmetry");
    REQUIRE_C(std::abs(ss - statistical_similarity(b, a)) < 1e-12, "SS asymmetry");
    REQUIRE_C(std::abs(profile_similarity(a, a) - 1.0) < 1e-12,
              "PS self-similarity != 1");
    REQUIRE_C(std::abs(statistical_similarity(a, a) - 1.0) < 1e-12,
              "SS self-similarity != 1");

    Forecast scaled = a;
    const double cl = rng.uniform(0.1, 9.0);
    const double cp = rng.uniform(0.1, 9.0);
    for (double& v : scaled.load) v *= cl;
    for (double& v : scaled.pv) v *= cp;
    REQUIRE_C(std::abs(profile_similarity(scaled, b) - ps) < 1e-12,
              "PS not scale invariant");
    REQUIRE_C(std::abs(statistical_similarity(scaled, b) - ss) < 1e-12,
              "SS not scale invariant");

    const double ps_oracle = oracles::cosine_oracle(a.pv, b.pv) *
                             oracles::cosine_oracle(a.load, b.load);
    REQUIRE_C(std::abs(ps - ps_oracle) < 1e-12, "PS oracle mismatch");
    const double ss_oracle =
        oracles::cosine_oracle(oracles::stats_oracle(a.pv), oracles::stats_oracle(b.pv)) *
        oracles::cosine_oracle(oracles::stats_oracle(a.load), oracles::stats_oracle(b.load));
    REQUIRE_C(std::abs(ss - ss_oracle) < 1e-12, "SS oracle mismatch");
  }

  // Zero-vector conventions.
  Forecast dark_a = random_fc(false), dark_b = random_fc(false), sunny = random_fc(false);
  dark_a.pv.assign(24, 0.0);
  dark_b.pv.assign(24, 0.0);
  REQUIRE_C(std::abs(profile_similarity(dark_a, dark_b) -
                     oracles::cosine_oracle(dark_a.load, dark_b.load)) < 1e-12,
            "cos(0,0) convention broken");
  REQUIRE_C(profile_similarity(dark_a, sunny) == 0.0 ||
                std::abs(profile_similarity(dark_a, sunny)) < 1e-12,
            "cos(0,v) convention broken");
  return true;
}

// --------------------------------------------------------------------------
// 4. Retrieval equals brute-force full sort on 100 stores of size 100

bool criterion4() {
  Rng rng(40404);
  for (int trial = 0; trial < 100; ++trial) {
    OltcSpec oltc;
    ExperienceStore store(100, oltc, {}, {});
    std::vector<Forecast> contexts;
    for (int i = 0; i < 100; ++i) {
      Forecast f;
      if (i >= 80) {
        f = contexts[static_cast<size_t>(i - 80)];  // exact-tie material
        const double c = rng.uniform(0.5, 3.0);
        for (double& v : f.load) v *= c;
        for (double& v : f.pv) v *= c;
      } else {
        for (int h = 0; h < 24; ++h) {
          f.load.push_back(rng.uniform(0.0, 12.0));
          f.pv.push_back(rng.uniform(0.0, 24.0));
        }
      }
      contexts.push_back(f);
      Experience e;
      e.id = store.allocate_id();
      e.context = f;
      e.actions = neutral_schedule(oltc, {});
      e.results.v_min_hourly.assign(24, 1.0);
      e.results.v_max_hourly.assign(24, 1.0);
      store.add(std::move(e));
    }

    Forecast query;
    for (int h = 0; h < 24; ++h) {
      query.load.push_back(rng.uniform(0.0, 12.0));
      query.pv.push_back(rng.uniform(0.0, 24.0));
    }
    const int k_p = static_cast<int>(rng.uniform_int(1, 8));
    const int k_s = static_cast<int>(rng.uniform_int(1, 8));
    const RetrievalResult got = retrieve(store, query, k_p, k_s);

    std::vector<std::pair<std::string, double>> ps, ss;
    for (const Experience& e : store.entries()) {
      ps.push_back({e.id, profile_similarity(e.context, query)});
      ss.push_back({e.id, statistical_similarity(e.context, query)});
    }
    const auto want_p = oracles::brute_force_top_k(ps, k_p);
    const auto want_s = oracles::brute_force_top_k(ss, k_s);
    REQUIRE_C(got.profile_matches.size() == want_p.size(), "k_p size mismatch");
    REQUIRE_C(got.statistical_matches.size() == want_s.size(), "k_s size mismatch");
    for (size_t i = 0; i < want_p.size(); ++i) {
      REQUIRE_C(got.profile_matches[i].id == want_p[i].id, "PS order mismatch");
      REQUIRE_C(got.profile_matches[i].score == want_p[i].score,
                "PS score mismatch");
    }
    for (size_t i = 0; i < want_s.size(); ++i)
      REQUIRE_C(got.statistical_matches[i].id == want_s[i].id, "SS order mismatch");
  }
  return true;
}

// --------------------------------------------------------------------------
// 5. Constraint safety over 1e4 episodes + malformed-fixture rejection

bool criterion5(const Bench& b) {
  const Network net = load_network(
      {{"name", "tiny"},
       {"base_mva", 10.0},
       {"buses",
        {{{"id", 1}, {"kind", "slack"}, {"p_load_nom", 0.0}, {"q_load_nom", 0.0}, {"pv_capacity", 0.0}},
         {{"id", 2}, {"kind", "load"}, {"p_load_nom", 3.0}, {"q_load_nom", 1.0}, {"pv_capacity", 4.0}},
         {{"id", 3}, {"kind", "load"}, {"p_load_nom", 2.0}, {"q_load_nom", 0.7}, {"pv_capacity", 0.0}}}},
       {"branches",
        {{{"from", 1}, {"to", 2}, {"r", 0.012}, {"x", 0.008}},
         {{"from", 2}, {"to", 3}, {"r", 0.02}, {"x", 0.012}}}}});
  OltcSpec oltc;
  RunConfig rc;
  const std::vector<ScSpec> scs = sc_specs_from_network(net, rc);
  const BusAllocation alloc = default_allocation(net);
  const RewardConfig rcfg;
  const SimContext ctx{net, oltc, scs, alloc, rcfg};
  Rng rng(50505);

  // Half the budget: random plateau schedules, valid and invalid mixed.
  // The simulate_day guard must admit exactly the valid ones.
  int guarded = 0;
  for (int episode = 0; episode < 5000; ++episode) {
    DayProfile day;
    day.day_id = episode;
    for (int s = 0; s < 96; ++s) {
      day.load_mw.push_back(rng.uniform(0.0, 6.0));
      day.load_q_mvar.push_back(day.load_mw.back() / 3.0);
      day.pv_mw.push_back(s >= 24 && s < 80 ? rng.uniform(0.0, 5.0) : 0.0);
    }
    ActionSchedule plan;
    int tap = oltc.initial_tap;
    for (int h = 0; h < 24; ++h) {
      if (rng.uniform01() < 0.18)
        tap = static_cast<int>(rng.uniform_int(-1, oltc.num_taps));  // may stray
      plan.oltc_tap.push_back(tap);
    }
    const bool valid = validate_schedule(plan, oltc, scs).valid;
    bool admitted = true;
    try {
      simulate_day(net, day, plan, oltc, scs, alloc, rcfg);
    } catch (const InvalidSchedule&) {
      admitted = false;
    }
    REQUIRE_C(admitted == valid, "simulate_day guard disagreed with validity");
    if (!valid) ++guarded;
  }
  REQUIRE_C(guarded > 100, "random fuzz produced too few invalid schedules");

  // The other half: scripted-agent episodes; everything the agent emits
  // must reach the simulator valid.
  BootstrapInputs bins{net, b.days, alloc, oltc, scs, rcfg, 7, 0.0};
  const ExperienceStore store = bootstrap_store(6, bins);
  ScriptedBackend backend;
  EpisodeOptions opts;
  opts.k_p = 2;
  opts.k_s = 2;
  for (int episode = 0; episode < 5000; ++episode) {
    DayProfile day;
    day.day_id = episode;
    for (int s = 0; s < 96; ++s) {
      day.load_mw.push_back(rng.uniform(0.1, 6.0));
      day.load_q_mvar.push_back(day.load_mw.back() / 3.0);
      day.pv_mw.push_back(s >= 24 && s < 80 ? rng.uniform(0.0, 6.0) : 0.0);
    }
    const Forecast fc = forecast_for_day(day, 7, 0.0);
    const RunRecord rec =
        run_episode(Variant::Full, ctx, b.tpl, day, fc,
                    const_cast<ExperienceStore*>(&store), &backend, opts,
                    nullptr, "safety-" + std::to_string(episode));
    REQUIRE_C(!rec.degraded, "scripted agent degraded unexpectedly");
  }

  // Seeded malformed fixtures must be rejected with the right class.
  const std::vector<std::pair<std::string, ParseErrc>> fixtures = {
      {"no block at all", ParseErrc::no_schema_block},
      {"```json\n{\"other\": 1}\n```", ParseErrc::no_schema_block},
      {"```json\n{\"oltc_tap\": [1, 2,\n```", ParseErrc::malformed_block},
      {"```json\n{\"oltc_tap\": " + nlohmann::json(std::vector<int>(23, 5)).dump() +
           ", \"sc_state\": " +
           nlohmann::json(std::vector<std::vector<int>>(
                              scs.size(), std::vector<int>(24, 0)))
               .dump() +
           "}\n```",
       ParseErrc::schema_violation},
      {"```json\n{\"oltc_tap\": " + nlohmann::json(std::vector<int>(24, 12)).dump() +
           ", \"sc_state\": " +
           nlohmann::json(std::vector<std::vector<int>>(
                              scs.size(), std::vector<int>(24, 0)))
               .dump() +
           "}\n```",
       ParseErrc::schema_violation},
      {[&scs]() {
         ActionSchedule busy;
         busy.oltc_tap.assign(24, 5);
         for (int h = 0; h < 8; ++h) busy.oltc_tap[static_cast<size_t>(2 * h)] = 6;
         busy.sc_state.assign(scs.size(), std::vector<int>(24, 0));
         return "```json\n" + schedule_to_json(busy).dump() + "\n```";
       }(),
       ParseErrc::constraint_violation},
  };
  for (const auto& [text, expected] : fixtures) {
    try {
      parse_actions(text, oltc, scs);
      REQUIRE_C(false, "malformed fixture parsed successfully");
    } catch (const ParseError& e) {
      REQUIRE_C(e.code == expected, "wrong error class for fixture");
      REQUIRE_C(!e.hint.empty(), "missing repair hint");
    }
  }
  return true;
}

// --------------------------------------------------------------------------
// 6. Store evolution: min reward and test curve non-decreasing, size == K,
//    50 iterations x 3 seeds with the scripted improver.

bool criterion6(const Bench& b) {
  REQUIRE_C(b.stress_ids.size() >= 20, "stress scan found too few days");
  const std::vector<int> train_ids(b.stress_ids.begin(), b.stress_ids.begin() + 12);
  const std::vector<int> test_ids(b.stress_ids.begin() + 12,
                                  b.stress_ids.begin() + 20);

  ScriptedBackend backend;
  TrainingConfig cfg;
  cfg.iterations = 50;
  cfg.seeds = {1, 2, 3};
  cfg.store_capacity = 8;
  cfg.k_p = 8;  // full-coverage retrieval
  cfg.k_s = 0;
  cfg.rounds = 3;
  cfg.noise_sigma = 0.0;
  cfg.jobs = 2;

  // Track the store minimum across iterations by re-running per seed with
  // instrumentation driven through the records' store hashes is indirect;
  // instead run the loop manually mirroring run_training's schedule.
  for (const std::uint64_t seed : cfg.seeds) {
    BootstrapInputs bins{b.net, b.days, b.alloc, b.oltc,
                         b.scs, b.rcfg, cfg.forecast_seed, 0.0};
    ExperienceStore store = bootstrap_store(cfg.store_capacity, bins);
    const auto train_days = days_by_id(b.days, train_ids);

    std::vector<size_t> order(train_days.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(seed);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle.uniform_int(
                                  0, static_cast<std::int64_t>(i) - 1))]);

    EpisodeOptions opts;
    opts.training = true;
    opts.rounds = cfg.rounds;
    opts.k_p = cfg.k_p;
    opts.k_s = cfg.k_s;

    double min_reward = store.min_reward();
    for (int it = 1; it <= cfg.iterations; ++it) {
      const DayProfile& day = *train_days[order[static_cast<size_t>(it - 1) % order.size()]];
      const Forecast fc = forecast_for_day(day, cfg.forecast_seed, 0.0);
      run_episode(Variant::Full, b.ctx(), b.tpl, day, fc, &store, &backend,
                  opts, nullptr,
                  "c6-s" + std::to_string(seed) + "-i" + std::to_string(it));
      REQUIRE_C(static_cast<int>(store.entries().size()) == cfg.store_capacity,
                "store size drifted from K");
      REQUIRE_C(store.min_reward() >= min_reward - 1e-12,
                "store minimum reward decreased");
      min_reward = store.min_reward();
    }
  }

  // The Fig.-2-analog curve via the real training entry point.
  const TrainingResult tr = run_training(Variant::Full, b.ctx(), b.tpl, b.days,
                                         train_ids, test_ids, backend, cfg);
  std::map<std::uint64_t, std::vector<double>> per_seed;
  for (const CurvePoint& p : tr.curve) per_seed[p.seed].push_back(p.test_reward);
  REQUIRE_C(per_seed.size() == 3, "expected 3 seed curves");
  for (const auto& [seed, curve] : per_seed) {
    REQUIRE_C(curve.size() == static_cast<size_t>(cfg.iterations) + 1,
              "curve length mismatch");
    for (size_t i = 1; i < curve.size(); ++i)
      REQUIRE_C(curve[i] >= curve[i - 1] - 1e-12,
                "test curve decreased at iteration " + std::to_string(i) +
                    " (seed " + std::to_string(seed) + ")");
  }
  for (const auto& [seed, store] : tr.stores)
    REQUIRE_C(static_cast<int>(store.entries().size()) == cfg.store_capacity,
              "final store size != K");
  return true;
}

// --------------------------------------------------------------------------
// 7. Ablation ordering on the bundled stress set, 30 test episodes

bool criterion7(const Bench& b) {
  REQUIRE_C(b.stress_ids.size() >= 50, "need 50 stress days for the protocol");
  const std::vector<int> train_ids(b.stress_ids.begin(), b.stress_ids.begin() + 12);
  const std::vector<int> test_ids(b.stress_ids.begin() + 20,
                                  b.stress_ids.begin() + 50);

  ScriptedBackend backend;
  TrainingConfig cfg;
  cfg.iterations = 50;
  cfg.seeds = {1};
  cfg.store_capacity = 8;
  cfg.k_p = 8;
  cfg.k_s = 0;
  cfg.rounds = 3;
  cfg.noise_sigma = 0.0;
  cfg.jobs = 2;

  BootstrapInputs bins{b.net, b.days, b.alloc, b.oltc,
                       b.scs, b.rcfg, cfg.forecast_seed, 0.0};
  const ExperienceStore boot = bootstrap_store(cfg.store_capacity, bins);
  TrainingResult full_tr = run_training(Variant::Full, b.ctx(), b.tpl, b.days,
                                        train_ids, test_ids, backend, cfg);
  TrainingResult nor_tr = run_training(Variant::NoR, b.ctx(), b.tpl, b.days,
                                       train_ids, test_ids, backend, cfg);

  AblationStores stores;
  stores.bootstrap = &boot;
  stores.full = &full_tr.stores.at(1);
  stores.nor = &nor_tr.stores.at(1);
  const AblationResult result = run_ablation(b.ctx(), b.tpl, b.days, test_ids,
                                             stores, backend, cfg);
  REQUIRE_C(result.rows.size() == 5, "ablation table must have 5 rows");
  REQUIRE_C(result.records.size() == 5 * 30, "expected 5 x 30 episodes");

  std::map<Variant, AblationRow> rows;
  for (const AblationRow& r : result.rows) rows[r.variant] = r;
  const double full = rows.at(Variant::Full).mean_reward;
  const double nom = rows.at(Variant::NoM).mean_reward;
  const double noc = rows.at(Variant::NoC).mean_reward;
  const double noe = rows.at(Variant::NoE).mean_reward;
  REQUIRE_C(full >= nom - 1e-9, "Full < NoM");
  REQUIRE_C(nom >= noc - 1e-9, "NoM < NoC");
  REQUIRE_C(full >= noe - 1e-9, "Full < NoE");
  REQUIRE_C(rows.at(Variant::NoC).mean_violation_rate > 0.01,
            "NoC violation rate not above 1%");
  return true;
}

// --------------------------------------------------------------------------
// 8. Bit-exact reproducibility: scripted twice, then replay

bool criterion8(const Bench& b) {
  (void)b;
  const fs::path dir = fs::temp_directory_path() / "vctl_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string ds = (dir / "ds.json").string();
  const std::string net_arg =
      std::string("--network ") + VCTL_DATA_DIR + "/ieee141.json";
  const std::string prompts_arg =
      std::string("--prompts ") + VCTL_DATA_DIR + "/prompts";

  auto sh = [](const std::string& cmd) {
    return WEXITSTATUS(std::system((cmd + " > /dev/null 2>&1").c_str()));
  };
  REQUIRE_C(sh(std::string(VCTL_BIN) + " gen-data " + net_arg +
               " --seed 42 --days 16 --out " + ds) == 0,
            "gen-data failed");

  const std::string common =
      std::string(VCTL_BIN) + " train " + net_arg + " --dataset " + ds + " " +
      prompts_arg +
      " --seeds 1 --iterations 3 --k 4 --k-p 4 --k-s 0 --rounds 2"
      " --test-days 4 --noise-sigma 0 --jobs 1";
  const fs::path run1 = dir / "run1";
  const fs::path run2 = dir / "run2";
  const fs::path run3 = dir / "run3";
  REQUIRE_C(sh(common + " --backend scripted --out " + run1.string()) == 0,
            "train run 1 failed");
  REQUIRE_C(sh(common + " --backend scripted --out " + run2.string()) == 0,
            "train run 2 failed");
  for (const char* name : {"curve.csv", "records.jsonl", "config_echo.json"})
    REQUIRE_C(read_text_file(run1 / name) == read_text_file(run2 / name),
              std::string("scripted reruns differ in ") + name);
  REQUIRE_C(read_text_file(run1 / "store-s1" / "manifest.json") ==
                read_text_file(run2 / "store-s1" / "manifest.json"),
            "scripted reruns differ in the final store manifest");

  REQUIRE_C(sh(common + " --backend replay --transcript " +
               (run1 / "transcripts.jsonl").string() + " --out " +
               run3.string()) == 0,
            "replay run failed");
  for (const char* name : {"curve.csv", "records.jsonl"})
    REQUIRE_C(read_text_file(run1 / name) == read_text_file(run3 / name),
              std::string("replay differs in ") + name);
  for (const auto& entry : fs::directory_iterator(run1 / "store-s1"))
    REQUIRE_C(read_text_file(entry.path()) ==
                  read_text_file(run3 / "store-s1" / entry.path().filename()),
              "replay store differs");
  fs::remove_all(dir);
  return true;
}

// --------------------------------------------------------------------------
// 9. Persistence: lossless round-trips; corrupt stores rejected

bool criterion9(const Bench& b) {
  const fs::path dir = fs::temp_directory_path() / "vctl_acceptance_persist";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Dataset round-trip.
  const auto days = generate_dataset(9, 12, b.net);
  save_dataset(dir / "ds.json", days);
  REQUIRE_C(load_dataset(dir / "ds.json") == days, "dataset round-trip lossy");

  // Store round-trip, including odd reasoning bytes.
  BootstrapInputs bins{b.net, b.days, b.alloc, b.oltc, b.scs, b.rcfg, 7, 0.0};
  ExperienceStore store = bootstrap_store(4, bins);
  {
    const Experience* worst = &store.entries().front();
    for (const Experience& e : store.entries())
      if (e.reward < worst->reward) worst = &e;
    Experience cand = *worst;
    cand.id = "rb00000";
    cand.reward = worst->reward + 0.25;
    cand.results.deviation = -cand.reward / 1000.0;
    cand.results.violation_rate = 0.0;
    cand.results.unconverged_cases = 0;
    cand.reasoning = "multi\nline\twith \"quotes\" and unicode ≥ ✓";
    store.replace(worst->id, cand);
  }
  const fs::path sdir = dir / "store";
  store.save(sdir);
  const ExperienceStore loaded = ExperienceStore::load(sdir);
  REQUIRE_C(loaded.content_hash() == store.content_hash(),
            "store round-trip changed content");
  bool found_reasoning = false;
  for (const Experience& e : loaded.entries())
    if (e.id == "rb00000")
      found_reasoning =
          e.reasoning == "multi\nline\twith \"quotes\" and unicode ≥ ✓";
  REQUIRE_C(found_reasoning, "reasoning text not byte-exact after round-trip");

  // Corruption: missing reasoning key.
  {
    const std::string id = loaded.entries().front().id;
    nlohmann::json doc =
        nlohmann::json::parse(read_text_file(sdir / (id + ".exp.json")));
    doc.erase("reasoning");
    write_text_file_atomic(sdir / (id + ".exp.json"), doc.dump(2));
    bool rejected = false;
    try {
      ExperienceStore::load(sdir);
    } catch (const StoreError& e) {
      rejected = e.code == StoreErrc::corrupt_store;
    }
    REQUIRE_C(rejected, "missing-reasoning store not rejected");
  }

  // Corruption: reward inconsistent with results beyond 1e-9.
  store.save(sdir);
  {
    const std::string id = store.entries().front().id;
    nlohmann::json doc =
        nlohmann::json::parse(read_text_file(sdir / (id + ".exp.json")));
    doc["reward"] = doc["reward"].get<double>() + 5e-9;
    write_text_file_atomic(sdir / (id + ".exp.json"), doc.dump(2));
    bool rejected = false;
    try {
      ExperienceStore::load(sdir);
    } catch (const StoreError& e) {
      rejected = e.code == StoreErrc::corrupt_store;
    }
    REQUIRE_C(rejected, "reward-inconsistent store not rejected");
  }

  fs::remove_all(dir);
  return true;
}

}  // namespace

int main() {
  std::printf("acceptance gate (power-flow, retrieval, agent, harness)\n");
  const Bench bench;

  report(1, "power-flow oracle equivalence (1e-6, <10 s)", criterion1());
  report(2, "episode <1 s, 30-episode sweep <10 s", criterion2(bench));
  report(3, "similarity properties + Eq oracle (1e-12, 1e4 cases)", criterion3());
  report(4, "retrieval equals brute-force sort (100x100)", criterion4());
  report(5, "constraint safety over 1e4 episodes + parse fixtures",
         criterion5(bench));
  report(6, "store evolution: monotone min, monotone curve, size K",
         criterion6(bench));
  report(7, "ablation ordering Full>=NoM>=NoC, Full>=NoE, NoC vio >1%",
         criterion7(bench));
  report(8, "bit-exact reproducibility (scripted + replay)", criterion8(bench));
  report(9, "persistence round-trips and corruption rejection",
         criterion9(bench));

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
