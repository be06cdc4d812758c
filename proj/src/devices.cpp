#include "vctl/devices.hpp"

namespace vctl {

double tap_ratio(const OltcSpec& spec, int tap) {
  if (tap < 0 || tap >= spec.num_taps)
    throw TapOutOfRange("tap " + std::to_string(tap) + " outside [0, " +
                        std::to_string(spec.num_taps - 1) + "]");
  const double step =
      (spec.ratio_max - spec.ratio_min) / static_cast<double>(spec.num_taps - 1);
  return spec.ratio_min + static_cast<double>(tap) * step;
}

namespace {

int transitions(const std::vector<int>& states, int initial) {
  int ops = 0;
  int prev = initial;
  for (const int s : states) {
    if (s != prev) ++ops;
    prev = s;
  }
  return ops;
}

}  // namespace

OpCountReport count_operations(const ActionSchedule& schedule,
                               const OltcSpec& oltc,
                               const std::vector<ScSpec>& scs) {
  OpCountReport report;
  report.oltc_ops = transitions(schedule.oltc_tap, oltc.initial_tap);
  report.sc_ops.reserve(scs.size());
  for (size_t m = 0; m < scs.size(); ++m) {
    const auto& row = m < schedule.sc_state.size() ? schedule.sc_state[m]
                                                   : std::vector<int>{};
    report.sc_ops.push_back(transitions(row, scs[m].initial_state));
  }
  return report;
}

ScheduleCheck validate_schedule(const ActionSchedule& schedule,
                                const OltcSpec& oltc,
                                const std::vector<ScSpec>& scs) {
  ScheduleCheck check;
  auto flag = [&check](std::string msg, bool op_limit = false) {
    check.valid = false;
    check.violations.push_back({op_limit, std::move(msg)});
  };

  if (static_cast<int>(schedule.oltc_tap.size()) != kScheduleHours)
    flag("oltc_tap length " + std::to_string(schedule.oltc_tap.size()) +
         " != " + std::to_string(kScheduleHours));
  if (schedule.sc_state.size() != scs.size())
    flag("sc_state has " + std::to_string(schedule.sc_state.size()) +
         " rows, expected " + std::to_string(scs.size()));
  for (size_t m = 0; m < schedule.sc_state.size(); ++m) {
    if (static_cast<int>(schedule.sc_state[m].size()) != kScheduleHours)
      flag("sc_state[" + std::to_string(m) + "] length " +
           std::to_string(schedule.sc_state[m].size()) + " != " +
           std::to_string(kScheduleHours));
  }

  for (const int tap : schedule.oltc_tap) {
    if (tap < 0 || tap >= oltc.num_taps) {
      flag("tap out of range: " + std::to_string(tap) + " not in [0, " +
           std::to_string(oltc.num_taps - 1) + "]");
      break;
    }
  }
  for (size_t m = 0; m < schedule.sc_state.size(); ++m) {
    for (const int s : schedule.sc_state[m]) {
      if (s != 0 && s != 1) {
        flag("sc_state[" + std::to_string(m) + "] has non-binary value " +
             std::to_string(s));
        break;
      }
    }
  }

  if (!check.valid) return check;  // op counting needs a structurally sound plan

  const OpCountReport ops = count_operations(schedule, oltc, scs);
  if (ops.oltc_ops > oltc.max_daily_ops)
    flag("oltc ops " + std::to_string(ops.oltc_ops) + " > " +
             std::to_string(oltc.max_daily_ops),
         true);
  for (size_t m = 0; m < scs.size(); ++m) {
    if (ops.sc_ops[m] > scs[m].max_daily_ops)
      flag("sc[" + std::to_string(m) + "] ops " + std::to_string(ops.sc_ops[m]) +
               " > " + std::to_string(scs[m].max_daily_ops),
           true);
  }
  return check;
}

ActionSchedule expand_to_steps(const ActionSchedule& schedule,
                               int steps_per_hour) {
  if (steps_per_hour < 1)
    throw std::invalid_argument("steps_per_hour must be >= 1");
  ActionSchedule out;
  out.oltc_tap.reserve(schedule.oltc_tap.size() * static_cast<size_t>(steps_per_hour));
  for (const int tap : schedule.oltc_tap)
    for (int s = 0; s < steps_per_hour; ++s) out.oltc_tap.push_back(tap);
  out.sc_state.reserve(schedule.sc_state.size());
  for (const auto& row : schedule.sc_state) {
    std::vector<int> expanded;
    expanded.reserve(row.size() * static_cast<size_t>(steps_per_hour));
    for (const int st : row)
      for (int s = 0; s < steps_per_hour; ++s) expanded.push_back(st);
    out.sc_state.push_back(std::move(expanded));
  }
  return out;
}

ActionSchedule neutral_schedule(const OltcSpec& oltc,
                                const std::vector<ScSpec>& scs) {
  ActionSchedule s;
  s.oltc_tap.assign(kScheduleHours, oltc.initial_tap);
  for (const ScSpec& sc : scs)
    s.sc_state.emplace_back(kScheduleHours, sc.initial_state);
  return s;
}

nlohmann::json schedule_to_json(const ActionSchedule& schedule) {
  return {{"oltc_tap", schedule.oltc_tap}, {"sc_state", schedule.sc_state}};
}

ActionSchedule schedule_from_json(const nlohmann::json& doc) {
  ActionSchedule s;
  s.oltc_tap = doc.at("oltc_tap").get<std::vector<int>>();
  s.sc_state = doc.at("sc_state").get<std::vector<std::vector<int>>>();
  return s;
}

nlohmann::json oltc_to_json(const OltcSpec& spec) {
  return {{"num_taps", spec.num_taps},
          {"ratio_min", spec.ratio_min},
          {"ratio_max", spec.ratio_max},
          {"max_daily_ops", spec.max_daily_ops},
          {"initial_tap", spec.initial_tap}};
}

OltcSpec oltc_from_json(const nlohmann::json& doc) {
  OltcSpec spec;
  spec.num_taps = doc.at("num_taps").get<int>();
  spec.ratio_min = doc.at("ratio_min").get<double>();
  spec.ratio_max = doc.at("ratio_max").get<double>();
  spec.max_daily_ops = doc.at("max_daily_ops").get<int>();
  spec.initial_tap = doc.at("initial_tap").get<int>();
  return spec;
}

nlohmann::json sc_to_json(const ScSpec& spec) {
  return {{"bus", spec.bus},
          {"q_mvar", spec.q_mvar},
          {"max_daily_ops", spec.max_daily_ops},
          {"initial_state", spec.initial_state}};
}

ScSpec sc_from_json(const nlohmann::json& doc) {
  ScSpec spec;
  spec.bus = doc.at("bus").get<int>();
  spec.q_mvar = doc.at("q_mvar").get<double>();
  spec.max_daily_ops = doc.at("max_daily_ops").get<int>();
  spec.initial_state = doc.at("initial_state").get<int>();
  return spec;
}

}  // namespace vctl
