#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace vctl {

inline constexpr int kScheduleHours = 24;

struct TapOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct OltcSpec {
  int num_taps = 11;
  double ratio_min = 0.97;  // p.u.
  double ratio_max = 1.03;  // p.u.
  int max_daily_ops = 6;
  int initial_tap = 5;      // middle tap
};

struct ScSpec {
  int bus = 0;
  double q_mvar = 0.1;
  int max_daily_ops = 4;
  int initial_state = 0;  // off
};

/// Day-ahead plan: one tap index per hour plus one on/off row per SC.
struct ActionSchedule {
  std::vector<int> oltc_tap;              // length 24
  std::vector<std::vector<int>> sc_state; // M rows of length 24, values 0/1

  bool operator==(const ActionSchedule&) const = default;
};

struct OpCountReport {
  int oltc_ops = 0;
  std::vector<int> sc_ops;
};

struct ScheduleViolation {
  bool op_limit = false;  // false: structural (length, range, non-binary)
  std::string message;
};

struct ScheduleCheck {
  bool valid = true;
  std::vector<ScheduleViolation> violations;

  std::string joined() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.message;
    }
    return out;
  }
};

double tap_ratio(const OltcSpec& spec, int tap);

/// Transition counts, including the step from the device's initial state
/// into hour 0. A multi-tap jump in one hour counts as one operation.
OpCountReport count_operations(const ActionSchedule& schedule,
                               const OltcSpec& oltc,
                               const std::vector<ScSpec>& scs);

ScheduleCheck validate_schedule(const ActionSchedule& schedule,
                                const OltcSpec& oltc,
                                const std::vector<ScSpec>& scs);

/// Repeat each hourly action steps_per_hour times (96 cases at 4/hour).
ActionSchedule expand_to_steps(const ActionSchedule& schedule,
                               int steps_per_hour);

ActionSchedule neutral_schedule(const OltcSpec& oltc,
                                const std::vector<ScSpec>& scs);

// Agent-facing wire format: {"oltc_tap": [...24 ints], "sc_state": [[...]xM]}.
nlohmann::json schedule_to_json(const ActionSchedule& schedule);
ActionSchedule schedule_from_json(const nlohmann::json& doc);

nlohmann::json oltc_to_json(const OltcSpec& spec);
OltcSpec oltc_from_json(const nlohmann::json& doc);
nlohmann::json sc_to_json(const ScSpec& spec);
ScSpec sc_from_json(const nlohmann::json& doc);

}  // namespace vctl
