#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vctl/devices.hpp"
#include "vctl/simulation.hpp"

namespace vctl {

/// Experiment wiring shared by the CLI commands. A JSON config file seeds
/// these defaults; command-line flags override individual fields. The
/// effective config is echoed into every results directory.
struct RunConfig {
  std::string network_path;
  std::string dataset_path;
  std::string store_dir;
  std::string out_dir = "results";
  std::string prompts_dir = "data/prompts";
  std::string variant = "Full";
  std::string backend = "scripted";  // scripted | remote | replay
  std::string transcript_path;       // replay input

  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int iterations = 50;
  int store_capacity = 16;
  int k_p = 2;
  int k_s = 2;
  int rounds = 3;
  int retry_budget = 2;
  double noise_sigma = 0.05;
  std::uint64_t forecast_seed = 7;
  int jobs = 0;  // 0: all processors for eval sweeps

  int train_days = 0;  // 0: every day not in the test split
  int test_days = 30;  // taken from the end of the dataset

  RewardConfig reward;
  OltcSpec oltc;
  int sc_max_daily_ops = 4;
};

RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// SC specs assembled from the network's capacitor buses plus config
/// limits; order follows bus index order.
std::vector<ScSpec> sc_specs_from_network(const Network& net,
                                          const RunConfig& cfg);

/// Dataset split: last `test_days` ids are held out; training takes
/// `train_days` ids from the front (0 = all remaining).
void split_days(const std::vector<DayProfile>& days, const RunConfig& cfg,
                std::vector<int>& train_ids, std::vector<int>& test_ids);

}  // namespace vctl
