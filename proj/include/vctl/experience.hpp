#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vctl/devices.hpp"
#include "vctl/scenario.hpp"
#include "vctl/simulation.hpp"

namespace vctl {

enum class StoreErrc {
  insufficient_days,
  not_found,
  not_an_improvement,
  corrupt_store,
};

struct StoreError : std::runtime_error {
  StoreError(StoreErrc c, const std::string& what)
      : std::runtime_error(what), code(c) {}
  StoreErrc code;
};

/// The four-part record plus its cached score: what the day looked like,
/// how the decision was reasoned, what was done, and how dispatch went.
struct Experience {
  std::string id;
  Forecast context;
  std::string reasoning;
  ActionSchedule actions;
  DispatchSummary results;
  double reward = 0.0;
};

/// Fixed-capacity store. Size is exactly K from bootstrap onward; replace()
/// swaps entries and persists atomically when bound to a directory.
class ExperienceStore {
public:
  ExperienceStore(int capacity, OltcSpec oltc, std::vector<ScSpec> scs,
                  RewardConfig reward_cfg);

  int capacity() const { return capacity_; }
  const std::vector<Experience>& entries() const { return entries_; }
  const OltcSpec& oltc() const { return oltc_; }
  const std::vector<ScSpec>& scs() const { return scs_; }
  const RewardConfig& reward_config() const { return reward_cfg_; }

  const Experience* find(const std::string& id) const;
  double min_reward() const;
  double max_reward() const;

  /// Next id in the e%06d sequence; ids sort by age.
  std::string allocate_id();

  /// Validates and appends during bootstrap only (size < capacity).
  void add(Experience exp);

  /// Swap old_id for candidate; requires strict reward improvement.
  void replace(const std::string& old_id, Experience candidate);

  /// Bind to a directory; subsequent mutations persist there atomically.
  void bind(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir);

  /// Hash over entry documents, stable across runs.
  std::string content_hash() const;

  static ExperienceStore load(const std::filesystem::path& dir);

private:
  void validate_experience(const Experience& exp) const;
  void persist_all() const;

  int capacity_;
  OltcSpec oltc_;
  std::vector<ScSpec> scs_;
  RewardConfig reward_cfg_;
  std::vector<Experience> entries_;
  std::uint64_t next_id_ = 0;
  std::optional<std::filesystem::path> dir_;
};

nlohmann::json experience_to_json(const Experience& exp);
Experience experience_from_json(const nlohmann::json& doc);

/// Pick K days by stratified sampling over (peak load, peak PV), run each
/// through the scripted policy + simulator and store the outcomes.
/// Defined in agent.cpp to keep the policy in one place.
struct BootstrapInputs {
  const Network& net;
  const std::vector<DayProfile>& days;
  const BusAllocation& alloc;
  OltcSpec oltc;
  std::vector<ScSpec> scs;
  RewardConfig reward_cfg;
  std::uint64_t forecast_seed = 7;
  double noise_sigma = 0.0;
};

ExperienceStore bootstrap_store(int capacity, const BootstrapInputs& in);

/// Day indices chosen by the bootstrap stratification, exposed for tests:
/// days ranked by peak load are cut into K quantile buckets and one day is
/// taken per bucket, sweeping the in-bucket peak-PV rank low to high.
std::vector<int> stratified_day_picks(const std::vector<DayProfile>& days,
                                      int k);

}  // namespace vctl
