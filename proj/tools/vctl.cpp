// vctl: seeded, reproducible experiment runner for the voltage-control
// testbed. Subcommands: gen-data, bootstrap, train, eval, ablate, inspect.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "vctl/config.hpp"
#include "vctl/harness.hpp"
#include "vctl/util.hpp"

namespace fs = std::filesystem;
using namespace vctl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCredentials = 3;

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct Wiring {
  Network net;
  std::vector<DayProfile> days;
  std::vector<ScSpec> scs;
  BusAllocation alloc;
  PromptTemplates tpl;
};

Wiring load_wiring(const RunConfig& cfg, bool need_dataset = true) {
  Wiring w;
  w.net = load_network_file(cfg.network_path);
  if (need_dataset) w.days = load_dataset(cfg.dataset_path);
  RunConfig tmp = cfg;
  w.scs = sc_specs_from_network(w.net, tmp);
  w.alloc = default_allocation(w.net);
  w.tpl = PromptTemplates::load(cfg.prompts_dir);
  return w;
}

std::unique_ptr<AgentBackend> make_backend(const RunConfig& cfg) {
  if (cfg.backend == "scripted") return std::make_unique<ScriptedBackend>();
  if (cfg.backend == "replay") {
    if (cfg.transcript_path.empty())
      throw std::invalid_argument("--backend replay needs --transcript");
    return std::make_unique<ReplayBackend>(cfg.transcript_path);
  }
  if (cfg.backend == "remote") {
    auto opts = RemoteBackend::options_from_env();
    if (opts.base_url.empty() || opts.api_key.empty() || opts.model.empty()) {
      std::cerr << "remote backend needs VO_LLM_BASE_URL, VO_LLM_API_KEY and "
                   "VO_LLM_MODEL\n";
      std::exit(kExitCredentials);
    }
    return std::make_unique<RemoteBackend>(std::move(opts));
  }
  throw std::invalid_argument("unknown backend '" + cfg.backend +
                              "' (scripted|remote|replay)");
}

TrainingConfig training_config(const RunConfig& cfg) {
  TrainingConfig t;
  t.iterations = cfg.iterations;
  t.seeds = cfg.seeds;
  t.store_capacity = cfg.store_capacity;
  t.k_p = cfg.k_p;
  t.k_s = cfg.k_s;
  t.rounds = cfg.rounds;
  t.retry_budget = cfg.retry_budget;
  t.noise_sigma = cfg.noise_sigma;
  t.forecast_seed = cfg.forecast_seed;
  t.jobs = resolve_jobs(cfg.jobs);
  return t;
}

SimContext make_context(const Wiring& w, const RunConfig& cfg) {
  return SimContext{w.net, cfg.oltc, w.scs, w.alloc, cfg.reward};
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_text_file_atomic(fs::path(cfg.out_dir) / "config_echo.json",
                         config_to_json(cfg).dump(2) + "\n");
}

// -------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, std::uint64_t seed, int days,
                 const std::string& out_path) {
  const Network net = load_network_file(cfg.network_path);
  const std::vector<DayProfile> dataset = generate_dataset(seed, days, net);
  save_dataset(out_path, dataset);

  double load_peak_max = 0.0, pv_peak_max = 0.0;
  int overvoltage_risk_days = 0;
  for (const DayProfile& d : dataset) {
    const double lp = *std::max_element(d.load_mw.begin(), d.load_mw.end());
    const double lt = *std::min_element(d.load_mw.begin(), d.load_mw.end());
    const double pp = *std::max_element(d.pv_mw.begin(), d.pv_mw.end());
    load_peak_max = std::max(load_peak_max, lp);
    pv_peak_max = std::max(pv_peak_max, pp);
    if (pp > lt) ++overvoltage_risk_days;
  }
  std::printf("wrote %d days to %s\n", days, out_path.c_str());
  std::printf("  max load peak %.2f MW, max pv peak %.2f MW\n", load_peak_max,
              pv_peak_max);
  std::printf("  days with pv peak above load trough: %d\n",
              overvoltage_risk_days);
  return kExitOk;
}

int cmd_bootstrap(const RunConfig& cfg) {
  const Wiring w = load_wiring(cfg);
  BootstrapInputs in{w.net,        w.days,          w.alloc,
                     cfg.oltc,     w.scs,           cfg.reward,
                     cfg.forecast_seed, cfg.noise_sigma};
  ExperienceStore store = bootstrap_store(cfg.store_capacity, in);
  store.save(cfg.store_dir);
  std::printf("bootstrapped %d experiences into %s (reward min %.4f, max %.4f)\n",
              cfg.store_capacity, cfg.store_dir.c_str(), store.min_reward(),
              store.max_reward());
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const Wiring w = load_wiring(cfg);
  const SimContext ctx = make_context(w, cfg);
  std::vector<int> train_ids, test_ids;
  split_days(w.days, cfg, train_ids, test_ids);

  auto backend = make_backend(cfg);
  TranscriptLog log;
  const TrainingConfig tcfg = training_config(cfg);
  const Variant variant = variant_from_string(cfg.variant);

  const TrainingResult result = run_training(
      variant, ctx, w.tpl, w.days, train_ids, test_ids, *backend, tcfg, &log);

  echo_config(cfg);
  const fs::path out(cfg.out_dir);
  write_text_file_atomic(out / "curve.csv", curve_to_csv(result.curve));
  write_text_file_atomic(out / "records.jsonl",
                         records_to_jsonl(result.train_records));
  log.flush_all();
  log.save(out / "transcripts.jsonl");
  for (const auto& [seed, store] : result.stores) {
    ExperienceStore copy = store;
    copy.save(out / ("store-s" + std::to_string(seed)));
  }
  double final_mean = 0.0;
  int n = 0;
  for (const CurvePoint& p : result.curve)
    if (p.iteration == cfg.iterations) {
      final_mean += p.test_reward;
      ++n;
    }
  std::printf("trained %s for %d iterations x %zu seeds; final test reward %.4f\n",
              cfg.variant.c_str(), cfg.iterations, cfg.seeds.size(),
              n > 0 ? final_mean / n : 0.0);
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  const Wiring w = load_wiring(cfg);
  const SimContext ctx = make_context(w, cfg);
  std::vector<int> train_ids, test_ids;
  split_days(w.days, cfg, train_ids, test_ids);
  const Variant variant = variant_from_string(cfg.variant);

  std::unique_ptr<ExperienceStore> store;
  const bool uses_store = variant == Variant::Full || variant == Variant::NoM ||
                          variant == Variant::NoR;
  if (uses_store) {
    if (cfg.store_dir.empty())
      throw std::invalid_argument(cfg.variant + " evaluation needs --store");
    store = std::make_unique<ExperienceStore>(ExperienceStore::load(cfg.store_dir));
  }
  auto backend = make_backend(cfg);
  TranscriptLog log;

  std::vector<DayProfile> days;
  std::vector<Forecast> fcs;
  for (const DayProfile* d : days_by_id(w.days, test_ids)) {
    days.push_back(*d);
    fcs.push_back(forecast_for_day(*d, cfg.forecast_seed, cfg.noise_sigma));
  }
  EpisodeOptions opts;
  opts.rounds = cfg.rounds;
  opts.retry_budget = cfg.retry_budget;
  opts.k_p = cfg.k_p;
  opts.k_s = cfg.k_s;

  const std::vector<RunRecord> recs = run_eval_sweep(
      variant, ctx, w.tpl, days, fcs, store.get(), backend.get(), opts,
      resolve_jobs(cfg.jobs), &log, "eval-" + cfg.variant);

  echo_config(cfg);
  const fs::path out(cfg.out_dir);
  write_text_file_atomic(out / "records.jsonl", records_to_jsonl(recs));
  log.flush_all();
  log.save(out / "transcripts.jsonl");

  double mean = 0.0;
  for (const RunRecord& r : recs) mean += r.reward;
  mean /= static_cast<double>(recs.size());
  std::printf("evaluated %s on %zu episodes: mean reward %.4f\n",
              cfg.variant.c_str(), recs.size(), mean);
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const std::string& full_store_dir,
               const std::string& nor_store_dir) {
  const Wiring w = load_wiring(cfg);
  const SimContext ctx = make_context(w, cfg);
  std::vector<int> train_ids, test_ids;
  split_days(w.days, cfg, train_ids, test_ids);

  auto backend = make_backend(cfg);
  TranscriptLog log;
  TrainingConfig tcfg = training_config(cfg);
  tcfg.seeds = {cfg.seeds.empty() ? 1 : cfg.seeds.front()};

  BootstrapInputs bins{w.net,        w.days,          w.alloc,
                       cfg.oltc,     w.scs,           cfg.reward,
                       cfg.forecast_seed, cfg.noise_sigma};
  const ExperienceStore boot = bootstrap_store(cfg.store_capacity, bins);

  std::unique_ptr<ExperienceStore> full_store, nor_store;
  if (!full_store_dir.empty()) {
    full_store =
        std::make_unique<ExperienceStore>(ExperienceStore::load(full_store_dir));
  } else {
    TrainingResult tr = run_training(Variant::Full, ctx, w.tpl, w.days,
                                     train_ids, test_ids, *backend, tcfg, &log);
    full_store = std::make_unique<ExperienceStore>(
        std::move(tr.stores.begin()->second));
  }
  if (!nor_store_dir.empty()) {
    nor_store =
        std::make_unique<ExperienceStore>(ExperienceStore::load(nor_store_dir));
  } else {
    TrainingResult tr = run_training(Variant::NoR, ctx, w.tpl, w.days,
                                     train_ids, test_ids, *backend, tcfg, &log);
    nor_store = std::make_unique<ExperienceStore>(
        std::move(tr.stores.begin()->second));
  }

  AblationStores stores;
  stores.full = full_store.get();
  stores.bootstrap = &boot;
  stores.nor = nor_store.get();

  const AblationResult result = run_ablation(ctx, w.tpl, w.days, test_ids,
                                             stores, *backend, tcfg, &log);

  echo_config(cfg);
  const fs::path out(cfg.out_dir);
  write_text_file_atomic(out / "ablation.csv", ablation_to_csv(result.rows));
  write_text_file_atomic(out / "ablation.txt", ablation_to_text(result.rows));
  write_text_file_atomic(out / "records.jsonl",
                         records_to_jsonl(result.records));
  log.flush_all();
  log.save(out / "transcripts.jsonl");
  std::fputs(ablation_to_text(result.rows).c_str(), stdout);
  return kExitOk;
}

int cmd_inspect(const RunConfig& cfg, const std::string& id,
                const std::string& format) {
  const ExperienceStore store = ExperienceStore::load(cfg.store_dir);
  const Experience* exp = store.find(id);
  if (!exp) {
    std::cerr << "no experience with id " << id << "\n";
    return kExitRuntime;
  }
  if (format == "json") {
    std::fputs(
        read_text_file(fs::path(cfg.store_dir) / (id + ".exp.json")).c_str(),
        stdout);
    return kExitOk;
  }
  std::printf("== context (hourly forecast) ==\n");
  std::printf("hour  load_mw   pv_mw\n");
  for (size_t h = 0; h < exp->context.load.size(); ++h)
    std::printf("%4zu %8.3f %8.3f\n", h + 1, exp->context.load[h],
                exp->context.pv[h]);
  std::printf("\n== reasoning ==\n%s\n",
              exp->reasoning.empty() ? "(none recorded)" : exp->reasoning.c_str());
  std::printf("\n== actions ==\n%s\n", schedule_to_json(exp->actions).dump().c_str());
  std::printf("\n== results ==\n");
  std::printf("deviation %.6f p.u., violation rate %.3f%%, unconverged %d\n",
              exp->results.deviation, 100.0 * exp->results.violation_rate,
              exp->results.unconverged_cases);
  std::printf("oltc ops %d\n", exp->results.op_counts.oltc_ops);
  std::printf("reward %.6f\n", exp->reward);
  return kExitOk;
}

std::string find_config_flag(int argc, char** argv) {
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  const std::string config_path = find_config_flag(argc, argv);
  try {
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"voltage-control experiment testbed"};
  app.require_subcommand(1);
  std::string config_dummy;
  app.add_option("--config", config_dummy, "JSON config file; flags override");

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--network", cfg.network_path, "network document");
    sub->add_option("--dataset", cfg.dataset_path, "dataset document");
    sub->add_option("--store", cfg.store_dir, "experience store directory");
    sub->add_option("--out", cfg.out_dir, "results directory");
    sub->add_option("--prompts", cfg.prompts_dir, "prompt template directory");
    sub->add_option("--variant", cfg.variant, "Full|NoC|NoE|NoM|NoR");
    sub->add_option("--backend", cfg.backend, "scripted|remote|replay");
    sub->add_option("--transcript", cfg.transcript_path,
                    "recorded transcript for replay");
    sub->add_option("--seeds", cfg.seeds, "training seeds");
    sub->add_option("--iterations", cfg.iterations, "training iterations");
    sub->add_option("--k", cfg.store_capacity, "store capacity K");
    sub->add_option("--k-p", cfg.k_p, "profile-similar retrieval count");
    sub->add_option("--k-s", cfg.k_s, "statistically-similar retrieval count");
    sub->add_option("--rounds", cfg.rounds, "modification rounds R");
    sub->add_option("--retry-budget", cfg.retry_budget, "parse retry budget");
    sub->add_option("--noise-sigma", cfg.noise_sigma, "forecast noise sigma");
    sub->add_option("--forecast-seed", cfg.forecast_seed, "forecast noise seed");
    sub->add_option("--jobs", cfg.jobs, "parallel episodes (0 = all cores)");
    sub->add_option("--train-days", cfg.train_days,
                    "training day count (0 = all non-test)");
    sub->add_option("--test-days", cfg.test_days, "held-out day count");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::uint64_t gen_seed = 42;
  int gen_days = 30;
  std::string gen_out = "dataset.json";
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--days", gen_days, "number of days")
      ->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--network", cfg.network_path, "network document")
      ->required();

  auto* boot = app.add_subcommand("bootstrap", "seed an experience store");
  add_common(boot);
  auto* train = app.add_subcommand("train", "run the training loop");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "evaluate one variant on test days");
  add_common(eval);
  auto* ablate = app.add_subcommand("ablate", "run the five-variant ablation");
  add_common(ablate);
  std::string full_store_dir, nor_store_dir;
  ablate->add_option("--full-store", full_store_dir,
                     "trained Full store (otherwise trained here)");
  ablate->add_option("--nor-store", nor_store_dir,
                     "trained NoR store (otherwise trained here)");

  auto* inspect = app.add_subcommand("inspect", "print one experience");
  add_common(inspect);
  std::string inspect_id, inspect_format = "text";
  inspect->add_option("--id", inspect_id, "experience id")->required();
  inspect->add_option("--format", inspect_format, "text|json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(cfg, gen_seed, gen_days, gen_out);
    if (boot->parsed()) return cmd_bootstrap(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg, full_store_dir, nor_store_dir);
    if (inspect->parsed()) return cmd_inspect(cfg, inspect_id, inspect_format);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
