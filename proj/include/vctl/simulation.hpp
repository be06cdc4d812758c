#pragma once

#include <vector>

#include <json.hpp>

#include "vctl/devices.hpp"
#include "vctl/network.hpp"
#include "vctl/scenario.hpp"

namespace vctl {

struct InvalidSchedule : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ViolationDigest {
  int hour = 0;
  std::vector<int> bus_ids;  // buses that violated at any step of the hour
  double extreme_v = 1.0;    // the voltage farthest from 1.0 p.u.
};

/// Day-level reduction of 96 power-flow cases. Voltages from unconverged
/// cases are excluded from `deviation` but count as violations; the hourly
/// min/max digests keep their best iterates.
struct DispatchSummary {
  std::vector<double> v_min_hourly;  // length 24, p.u.
  std::vector<double> v_max_hourly;  // length 24, p.u.
  double deviation = 0.0;            // mean |V - 1| over converged bus-steps
  double violation_rate = 0.0;       // violating bus-steps / all bus-steps
  std::vector<ViolationDigest> violating_hours;
  OpCountReport op_counts;
  int unconverged_cases = 0;
};

struct RewardConfig {
  double w_dev = 1.0;     // per unit of 1000 * deviation
  double w_vio = 1.0;     // per percentage point of violation rate
  double w_unconv = 10.0; // per unconverged case
  double v_lo = 0.95;     // p.u.
  double v_hi = 1.05;     // p.u.
};

/// reward = -(w_dev*1000*deviation + w_vio*100*violation_rate
///            + w_unconv*unconverged); 0 is the maximum.
double reward(const DispatchSummary& summary, const RewardConfig& cfg);

/// Run the 96 15-minute cases of one day under an hourly schedule. The
/// OLTC acts through the slack voltage: root = tap_ratio(tap at step).
DispatchSummary simulate_day(const Network& net, const DayProfile& day,
                             const ActionSchedule& schedule,
                             const OltcSpec& oltc,
                             const std::vector<ScSpec>& scs,
                             const BusAllocation& alloc,
                             const RewardConfig& cfg = {});

nlohmann::json summary_to_json(const DispatchSummary& s);
DispatchSummary summary_from_json(const nlohmann::json& doc);

}  // namespace vctl
