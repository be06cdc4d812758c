#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "vctl/network.hpp"

namespace vctl {

inline constexpr int kStepsPerDay = 96;
inline constexpr int kStepsPerHour = 4;

/// One day of region-level truth at 15-minute resolution.
struct DayProfile {
  int day_id = 0;
  std::vector<double> load_mw;     // length 96
  std::vector<double> load_q_mvar; // length 96
  std::vector<double> pv_mw;       // length 96

  bool operator==(const DayProfile&) const = default;
};

/// Hourly day-ahead view of a DayProfile; this is what the agent sees.
struct Forecast {
  std::vector<double> load;  // MW, length 24
  std::vector<double> pv;    // MW, length 24

  bool operator==(const Forecast&) const = default;
};

struct BusAllocation {
  std::vector<double> load_share;  // per bus, sums to 1
  std::vector<double> pv_share;    // per PV bus (pv order), sums to 1
};

struct BusCase {
  std::vector<double> p_load_mw;
  std::vector<double> q_load_mvar;
  std::vector<double> pv_mw;
};

/// Synthetic multi-day dataset: double-peak load with lognormal noise,
/// clear-sky PV bell shaped by a per-day cloud state. Pure in (seed,
/// num_days, net); amplitudes scale with the feeder's nominal totals so
/// sunny days provoke overvoltage and peak-load evenings undervoltage.
std::vector<DayProfile> generate_dataset(std::uint64_t seed, int num_days,
                                         const Network& net);

/// Hourly means of the 15-minute truth, each scaled by exp(N(0, sigma)).
Forecast make_forecast(const DayProfile& profile, std::uint64_t noise_seed,
                       double noise_sigma);

/// Weights proportional to nominal bus loads / PV capacities.
BusAllocation default_allocation(const Network& net);

/// Split region totals onto buses: P by load_share, Q at each bus's
/// nominal Q/P ratio, PV by pv_share over the PV buses.
BusCase disaggregate(double region_load_mw, double region_pv_mw,
                     const BusAllocation& alloc, const Network& net);

nlohmann::json dataset_to_json(const std::vector<DayProfile>& days);
std::vector<DayProfile> dataset_from_json(const nlohmann::json& doc);
void save_dataset(const std::filesystem::path& path,
                  const std::vector<DayProfile>& days);
std::vector<DayProfile> load_dataset(const std::filesystem::path& path);

}  // namespace vctl
