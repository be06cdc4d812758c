#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vctl/agent.hpp"

namespace vctl {

enum class Variant { Full, NoC, NoE, NoM, NoR };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct RunRecord {
  std::string episode_id;
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  int day_id = 0;
  double reward = 0.0;
  double deviation = 0.0;
  double violation_rate = 0.0;
  int unconverged = 0;
  bool degraded = false;           // agent failed; scripted fallback used
  std::string input_hash;          // over (day, forecast, allocation)
  std::string store_hash;          // "none" for storeless variants
};

nlohmann::json run_record_to_json(const RunRecord& rec);
std::string records_to_jsonl(const std::vector<RunRecord>& recs);

struct EpisodeOptions {
  bool training = false;  // enables modification rounds and store updates
  int rounds = 3;
  int retry_budget = 2;
  int k_p = 2;
  int k_s = 2;
};

/// One day end to end for one variant. Full: retrieve, generate, modify
/// (training only), update store (training only). NoC: static devices.
/// NoE: no retrieval/no store. NoM: no modification, no update. NoR: no
/// CoT section, experiences stored without reasoning.
RunRecord run_episode(Variant variant, const SimContext& ctx,
                      const PromptTemplates& tpl, const DayProfile& day,
                      const Forecast& forecast, ExperienceStore* store,
                      AgentBackend* backend, const EpisodeOptions& opts,
                      TranscriptLog* log, const std::string& episode_id);

/// Evaluation sweep over test days (modification and store updates off).
/// Episodes run in parallel with `jobs` workers; records and transcript
/// flushes come back in day order regardless.
std::vector<RunRecord> run_eval_sweep(Variant variant, const SimContext& ctx,
                                      const PromptTemplates& tpl,
                                      const std::vector<DayProfile>& days,
                                      const std::vector<Forecast>& forecasts,
                                      const ExperienceStore* store,
                                      AgentBackend* backend,
                                      const EpisodeOptions& opts, int jobs,
                                      TranscriptLog* log,
                                      const std::string& id_prefix);

struct TrainingConfig {
  int iterations = 50;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int store_capacity = 16;
  int k_p = 2;
  int k_s = 2;
  int rounds = 3;
  int retry_budget = 2;
  double noise_sigma = 0.05;
  std::uint64_t forecast_seed = 7;
  int jobs = 1;
};

struct CurvePoint {
  std::uint64_t seed = 0;
  int iteration = 0;  // 0 = bootstrap store, before any training episode
  double test_reward = 0.0;
};

struct TrainingResult {
  std::vector<CurvePoint> curve;
  std::map<std::uint64_t, ExperienceStore> stores;  // final store per seed
  std::vector<RunRecord> train_records;
};

/// Per seed: bootstrap a store, run `iterations` training episodes over a
/// seed-shuffled day order, and evaluate the frozen store on the held-out
/// test days after each iteration (modification disabled).
TrainingResult run_training(Variant variant, const SimContext& ctx,
                            const PromptTemplates& tpl,
                            const std::vector<DayProfile>& all_days,
                            const std::vector<int>& train_day_ids,
                            const std::vector<int>& test_day_ids,
                            AgentBackend& backend, const TrainingConfig& cfg,
                            TranscriptLog* log = nullptr);

struct AblationRow {
  Variant variant = Variant::Full;
  double mean_reward = 0.0;
  double mean_deviation = 0.0;
  double mean_violation_rate = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // Full, NoC, NoE, NoM, NoR
  std::vector<RunRecord> records;
};

struct AblationStores {
  const ExperienceStore* full = nullptr;      // trained with modification
  const ExperienceStore* bootstrap = nullptr; // NoM reads this
  const ExperienceStore* nor = nullptr;       // trained without reasoning
};

/// All five variants on the same test episodes; every variant consumes
/// bit-identical day/forecast/allocation inputs.
AblationResult run_ablation(const SimContext& ctx, const PromptTemplates& tpl,
                            const std::vector<DayProfile>& all_days,
                            const std::vector<int>& test_day_ids,
                            const AblationStores& stores, AgentBackend& backend,
                            const TrainingConfig& cfg,
                            TranscriptLog* log = nullptr);

std::string curve_to_csv(const std::vector<CurvePoint>& curve);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);
std::string ablation_to_text(const std::vector<AblationRow>& rows);

Forecast forecast_for_day(const DayProfile& day, std::uint64_t forecast_seed,
                          double noise_sigma);

std::vector<const DayProfile*> days_by_id(const std::vector<DayProfile>& all,
                                          const std::vector<int>& ids);

}  // namespace vctl
