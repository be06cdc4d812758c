#include "vctl/harness.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

#include "vctl/rng.hpp"
#include "vctl/util.hpp"

namespace vctl {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "Full";
    case Variant::NoC: return "NoC";
    case Variant::NoE: return "NoE";
    case Variant::NoM: return "NoM";
    case Variant::NoR: return "NoR";
  }
  return "Full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "Full") return Variant::Full;
  if (s == "NoC") return Variant::NoC;
  if (s == "NoE") return Variant::NoE;
  if (s == "NoM") return Variant::NoM;
  if (s == "NoR") return Variant::NoR;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected Full|NoC|NoE|NoM|NoR)");
}

nlohmann::json run_record_to_json(const RunRecord& rec) {
  return {{"episode_id", rec.episode_id},
          {"variant", to_string(rec.variant)},
          {"seed", rec.seed},
          {"day_id", rec.day_id},
          {"reward", rec.reward},
          {"deviation", rec.deviation},
          {"violation_rate", rec.violation_rate},
          {"unconverged", rec.unconverged},
          {"degraded", rec.degraded},
          {"input_hash", rec.input_hash},
          {"store_hash", rec.store_hash}};
}

std::string records_to_jsonl(const std::vector<RunRecord>& recs) {
  std::string out;
  for (const RunRecord& r : recs) out += run_record_to_json(r).dump() + "\n";
  return out;
}

Forecast forecast_for_day(const DayProfile& day, std::uint64_t forecast_seed,
                          double noise_sigma) {
  return make_forecast(
      day, forecast_seed * 1000003ull + static_cast<std::uint64_t>(day.day_id),
      noise_sigma);
}

std::vector<const DayProfile*> days_by_id(const std::vector<DayProfile>& all,
                                          const std::vector<int>& ids) {
  std::vector<const DayProfile*> out;
  out.reserve(ids.size());
  for (const int id : ids) {
    const auto it = std::find_if(all.begin(), all.end(),
                                 [id](const DayProfile& d) { return d.day_id == id; });
    if (it == all.end())
      throw std::invalid_argument("day id " + std::to_string(id) +
                                  " not in dataset");
    out.push_back(&*it);
  }
  return out;
}

namespace {

std::string input_hash(const DayProfile& day, const Forecast& fc,
                       const BusAllocation& alloc) {
  std::uint64_t h = fnv1a64(nlohmann::json({{"day_id", day.day_id},
                                            {"load_mw", day.load_mw},
                                            {"load_q_mvar", day.load_q_mvar},
                                            {"pv_mw", day.pv_mw}})
                                .dump());
  h = fnv1a64(nlohmann::json({{"load", fc.load}, {"pv", fc.pv}}).dump(), h);
  h = fnv1a64(nlohmann::json({{"load_share", alloc.load_share},
                              {"pv_share", alloc.pv_share}})
                  .dump(),
              h);
  return to_hex(h);
}

void fill_metrics(RunRecord& rec, const DispatchSummary& summary,
                  double reward_value) {
  rec.reward = reward_value;
  rec.deviation = summary.deviation;
  rec.violation_rate = summary.violation_rate;
  rec.unconverged = summary.unconverged_cases;
}

}  // namespace

RunRecord run_episode(Variant variant, const SimContext& ctx,
                      const PromptTemplates& tpl, const DayProfile& day,
                      const Forecast& forecast, ExperienceStore* store,
                      AgentBackend* backend, const EpisodeOptions& opts,
                      TranscriptLog* log, const std::string& episode_id) {
  RunRecord rec;
  rec.episode_id = episode_id;
  rec.variant = variant;
  rec.day_id = day.day_id;
  rec.input_hash = input_hash(day, forecast, ctx.alloc);
  rec.store_hash = "none";

  auto simulate = [&](const ActionSchedule& actions) {
    return simulate_day(ctx.net, day, actions, ctx.oltc, ctx.scs, ctx.alloc,
                        ctx.reward_cfg);
  };

  if (variant == Variant::NoC) {
    const DispatchSummary summary = simulate(neutral_schedule(ctx.oltc, ctx.scs));
    fill_metrics(rec, summary, reward(summary, ctx.reward_cfg));
    return rec;
  }

  if (!backend) throw std::invalid_argument("variant needs an agent backend");
  const bool uses_store = variant != Variant::NoE;
  if (uses_store && !store)
    throw std::invalid_argument(to_string(variant) + " needs an experience store");

  RetrievalResult retrieved;
  if (uses_store) retrieved = retrieve(*store, forecast, opts.k_p, opts.k_s);

  PromptOptions popts;
  popts.include_experiences = uses_store;
  popts.include_cot = variant != Variant::NoR;
  const PromptBundle bundle =
      build_generation_prompt(tpl, forecast, retrieved, store, ctx.net, ctx.oltc,
                              ctx.scs, ctx.reward_cfg, popts);

  Dialogue dlg;
  dlg.episode_id = episode_id;
  AgentResponse initial;
  try {
    initial = decide(*backend, dlg, bundle.render(), ctx.oltc, ctx.scs,
                     opts.retry_budget, log);
  } catch (const AgentFailure&) {
    rec.degraded = true;
    initial = scripted_policy(forecast, ctx.oltc, ctx.scs);
  }

  Candidate best;
  const bool modify =
      opts.training && variant != Variant::NoM && opts.rounds > 0 && !rec.degraded;
  if (modify) {
    best = modification_loop(*backend, dlg, ctx, tpl, day, initial, opts.rounds,
                             opts.retry_budget, log);
  } else {
    best.actions = initial.actions;
    best.summary = simulate(best.actions);
    best.reward = reward(best.summary, ctx.reward_cfg);
    best.reasoning = initial.reasoning;
  }

  const bool update = opts.training && uses_store && variant != Variant::NoM &&
                      !rec.degraded;
  if (update) {
    Experience cand;
    cand.context = forecast;
    cand.reasoning = variant == Variant::NoR ? "" : best.reasoning;
    cand.actions = best.actions;
    cand.results = best.summary;
    cand.reward = best.reward;
    update_store(*store, std::move(cand), retrieved);
  }

  if (uses_store) rec.store_hash = store->content_hash();
  fill_metrics(rec, best.summary, best.reward);
  return rec;
}

std::vector<RunRecord> run_eval_sweep(Variant variant, const SimContext& ctx,
                                      const PromptTemplates& tpl,
                                      const std::vector<DayProfile>& days,
                                      const std::vector<Forecast>& forecasts,
                                      const ExperienceStore* store,
                                      AgentBackend* backend,
                                      const EpisodeOptions& opts, int jobs,
                                      TranscriptLog* log,
                                      const std::string& id_prefix) {
  if (days.size() != forecasts.size())
    throw std::invalid_argument("days and forecasts must align");
  EpisodeOptions eval_opts = opts;
  eval_opts.training = false;  // no modification, no store updates on test

  const size_t n = days.size();
  std::vector<RunRecord> records(n);
  auto episode_id = [&](size_t i) {
    return id_prefix + "-d" + std::to_string(days[i].day_id);
  };

  const int workers = std::max(1, jobs);
  if (workers == 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i)
      records[i] = run_episode(variant, ctx, tpl, days[i], forecasts[i],
                               const_cast<ExperienceStore*>(store), backend,
                               eval_opts, log, episode_id(i));
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        records[i] = run_episode(variant, ctx, tpl, days[i], forecasts[i],
                                 const_cast<ExperienceStore*>(store), backend,
                                 eval_opts, log, episode_id(i));
      }
    };
    std::vector<std::future<void>> futures;
    for (int w = 0; w < workers; ++w)
      futures.push_back(std::async(std::launch::async, worker));
    for (auto& f : futures) f.get();
  }

  if (log)
    for (size_t i = 0; i < n; ++i) log->flush_episode(episode_id(i));
  return records;
}

TrainingResult run_training(Variant variant, const SimContext& ctx,
                            const PromptTemplates& tpl,
                            const std::vector<DayProfile>& all_days,
                            const std::vector<int>& train_day_ids,
                            const std::vector<int>& test_day_ids,
                            AgentBackend& backend, const TrainingConfig& cfg,
                            TranscriptLog* log) {
  {
    std::set<int> train_set(train_day_ids.begin(), train_day_ids.end());
    for (const int id : test_day_ids)
      if (train_set.count(id))
        throw std::invalid_argument("test day " + std::to_string(id) +
                                    " appears in the training set");
  }
  if (train_day_ids.empty()) throw std::invalid_argument("no training days");
  if (test_day_ids.empty()) throw std::invalid_argument("no test days");

  const auto train_days = days_by_id(all_days, train_day_ids);
  const auto test_days = days_by_id(all_days, test_day_ids);

  std::vector<DayProfile> test_copies;
  std::vector<Forecast> test_fcs;
  for (const DayProfile* d : test_days) {
    test_copies.push_back(*d);
    test_fcs.push_back(forecast_for_day(*d, cfg.forecast_seed, cfg.noise_sigma));
  }

  EpisodeOptions train_opts;
  train_opts.training = true;
  train_opts.rounds = cfg.rounds;
  train_opts.retry_budget = cfg.retry_budget;
  train_opts.k_p = cfg.k_p;
  train_opts.k_s = cfg.k_s;

  TrainingResult result;
  for (const std::uint64_t seed : cfg.seeds) {
    BootstrapInputs bins{ctx.net,        all_days,       ctx.alloc,
                         ctx.oltc,       ctx.scs,        ctx.reward_cfg,
                         cfg.forecast_seed, cfg.noise_sigma};
    ExperienceStore store = bootstrap_store(cfg.store_capacity, bins);

    // Seed-shuffled training day order (Fisher-Yates on indices).
    std::vector<size_t> order(train_days.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    auto eval_mean = [&](int iteration) {
      const std::string prefix = "curve-" + to_string(variant) + "-s" +
                                 std::to_string(seed) + "-i" +
                                 std::to_string(iteration);
      const std::vector<RunRecord> recs =
          run_eval_sweep(variant, ctx, tpl, test_copies, test_fcs, &store,
                         &backend, train_opts, cfg.jobs, log, prefix);
      double sum = 0.0;
      for (const RunRecord& r : recs) sum += r.reward;
      return sum / static_cast<double>(recs.size());
    };

    result.curve.push_back({seed, 0, eval_mean(0)});
    for (int it = 1; it <= cfg.iterations; ++it) {
      const DayProfile& day =
          *train_days[order[static_cast<size_t>(it - 1) % order.size()]];
      const Forecast fc =
          forecast_for_day(day, cfg.forecast_seed, cfg.noise_sigma);
      const std::string episode_id = "train-" + to_string(variant) + "-s" +
                                     std::to_string(seed) + "-i" +
                                     std::to_string(it) + "-d" +
                                     std::to_string(day.day_id);
      RunRecord rec = run_episode(variant, ctx, tpl, day, fc, &store, &backend,
                                  train_opts, log, episode_id);
      rec.seed = seed;
      if (log) log->flush_episode(episode_id);
      result.train_records.push_back(std::move(rec));
      result.curve.push_back({seed, it, eval_mean(it)});
    }
    result.stores.emplace(seed, std::move(store));
  }
  return result;
}

AblationResult run_ablation(const SimContext& ctx, const PromptTemplates& tpl,
                            const std::vector<DayProfile>& all_days,
                            const std::vector<int>& test_day_ids,
                            const AblationStores& stores, AgentBackend& backend,
                            const TrainingConfig& cfg, TranscriptLog* log) {
  const auto test_days = days_by_id(all_days, test_day_ids);
  std::vector<DayProfile> days;
  std::vector<Forecast> fcs;
  for (const DayProfile* d : test_days) {
    days.push_back(*d);
    fcs.push_back(forecast_for_day(*d, cfg.forecast_seed, cfg.noise_sigma));
  }

  EpisodeOptions opts;
  opts.rounds = cfg.rounds;
  opts.retry_budget = cfg.retry_budget;
  opts.k_p = cfg.k_p;
  opts.k_s = cfg.k_s;

  AblationResult result;
  const Variant variants[] = {Variant::Full, Variant::NoC, Variant::NoE,
                              Variant::NoM, Variant::NoR};
  for (const Variant v : variants) {
    const ExperienceStore* store = nullptr;
    switch (v) {
      case Variant::Full: store = stores.full; break;
      case Variant::NoM: store = stores.bootstrap; break;
      case Variant::NoR: store = stores.nor ? stores.nor : stores.full; break;
      default: break;
    }
    if ((v == Variant::Full || v == Variant::NoM || v == Variant::NoR) && !store)
      throw std::invalid_argument(to_string(v) +
                                  " ablation needs a store snapshot");
    const std::vector<RunRecord> recs = run_eval_sweep(
        v, ctx, tpl, days, fcs, store, &backend, opts, cfg.jobs, log,
        "ablate-" + to_string(v));

    AblationRow row;
    row.variant = v;
    for (const RunRecord& r : recs) {
      row.mean_reward += r.reward;
      row.mean_deviation += r.deviation;
      row.mean_violation_rate += r.violation_rate;
    }
    const double n = static_cast<double>(recs.size());
    row.mean_reward /= n;
    row.mean_deviation /= n;
    row.mean_violation_rate /= n;
    result.rows.push_back(row);
    result.records.insert(result.records.end(), recs.begin(), recs.end());
  }
  return result;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "seed,iteration,reward\n";
  for (const CurvePoint& p : curve)
    out += std::to_string(p.seed) + "," + std::to_string(p.iteration) + "," +
           nlohmann::json(p.test_reward).dump() + "\n";
  return out;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,reward,deviation,violation_rate\n";
  for (const AblationRow& r : rows)
    out += to_string(r.variant) + "," + nlohmann::json(r.mean_reward).dump() +
           "," + nlohmann::json(r.mean_deviation).dump() + "," +
           nlohmann::json(r.mean_violation_rate).dump() + "\n";
  return out;
}

std::string ablation_to_text(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %12s %12s %14s\n", "method", "reward",
                "dev", "vio_rate");
  out << line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-6s %12.4f %12.6f %13.3f%%\n",
                  to_string(r.variant).c_str(), r.mean_reward, r.mean_deviation,
                  100.0 * r.mean_violation_rate);
    out << line;
  }
  return out.str();
}

}  // namespace vctl
