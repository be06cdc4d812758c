#include "vctl/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vctl {

double reward(const DispatchSummary& summary, const RewardConfig& cfg) {
  return -(cfg.w_dev * 1000.0 * summary.deviation +
           cfg.w_vio * 100.0 * summary.violation_rate +
           cfg.w_unconv * static_cast<double>(summary.unconverged_cases));
}

DispatchSummary simulate_day(const Network& net, const DayProfile& day,
                             const ActionSchedule& schedule,
                             const OltcSpec& oltc,
                             const std::vector<ScSpec>& scs,
                             const BusAllocation& alloc,
                             const RewardConfig& cfg) {
  const ScheduleCheck check = validate_schedule(schedule, oltc, scs);
  if (!check.valid)
    throw InvalidSchedule("invalid schedule reached simulate_day: " +
                          check.joined());
  if (static_cast<int>(day.load_mw.size()) != kStepsPerDay)
    throw DimensionMismatch("day profile must have 96 steps");

  const ActionSchedule steps = expand_to_steps(schedule, kStepsPerHour);
  const size_t n = static_cast<size_t>(net.bus_count());

  DispatchSummary out;
  out.v_min_hourly.assign(kScheduleHours, std::numeric_limits<double>::infinity());
  out.v_max_hourly.assign(kScheduleHours, -std::numeric_limits<double>::infinity());
  out.op_counts = count_operations(schedule, oltc, scs);

  double abs_dev_sum = 0.0;
  std::int64_t converged_samples = 0;
  std::int64_t violating_samples = 0;
  std::vector<std::set<int>> hour_violators(kScheduleHours);
  std::vector<double> hour_extreme(kScheduleHours, 1.0);

  std::vector<int> sc_at_step(scs.size());
  for (int s = 0; s < kStepsPerDay; ++s) {
    const int hour = s / kStepsPerHour;
    const BusCase bc = disaggregate(day.load_mw[static_cast<size_t>(s)],
                                    day.pv_mw[static_cast<size_t>(s)], alloc, net);
    for (size_t m = 0; m < scs.size(); ++m)
      sc_at_step[m] = steps.sc_state[m][static_cast<size_t>(s)];
    const CaseInjection inj = build_case_injection(
        net, bc.p_load_mw, bc.q_load_mvar, bc.pv_mw, sc_at_step, scs);
    const double root_v =
        tap_ratio(oltc, steps.oltc_tap[static_cast<size_t>(s)]);

    const VoltageSolution sol = solve_power_flow(net, inj, root_v);
    if (!sol.converged) ++out.unconverged_cases;

    for (size_t i = 0; i < n; ++i) {
      const double v = sol.v_mag[i];
      out.v_min_hourly[static_cast<size_t>(hour)] =
          std::min(out.v_min_hourly[static_cast<size_t>(hour)], v);
      out.v_max_hourly[static_cast<size_t>(hour)] =
          std::max(out.v_max_hourly[static_cast<size_t>(hour)], v);

      const bool violated = !sol.converged || v < cfg.v_lo || v > cfg.v_hi;
      if (violated) {
        ++violating_samples;
        hour_violators[static_cast<size_t>(hour)].insert(net.buses[i].id);
        if (std::abs(v - 1.0) >
            std::abs(hour_extreme[static_cast<size_t>(hour)] - 1.0))
          hour_extreme[static_cast<size_t>(hour)] = v;
      }
      if (sol.converged) {
        abs_dev_sum += std::abs(v - 1.0);
        ++converged_samples;
      }
    }
  }

  const std::int64_t total_samples =
      static_cast<std::int64_t>(kStepsPerDay) * static_cast<std::int64_t>(n);
  out.deviation = converged_samples > 0
                      ? abs_dev_sum / static_cast<double>(converged_samples)
                      : 0.0;
  out.violation_rate =
      static_cast<double>(violating_samples) / static_cast<double>(total_samples);

  for (int h = 0; h < kScheduleHours; ++h) {
    if (hour_violators[static_cast<size_t>(h)].empty()) continue;
    ViolationDigest vd;
    vd.hour = h;
    vd.bus_ids.assign(hour_violators[static_cast<size_t>(h)].begin(),
                      hour_violators[static_cast<size_t>(h)].end());
    vd.extreme_v = hour_extreme[static_cast<size_t>(h)];
    out.violating_hours.push_back(std::move(vd));
  }
  return out;
}

nlohmann::json summary_to_json(const DispatchSummary& s) {
  nlohmann::json jv = nlohmann::json::array();
  for (const ViolationDigest& v : s.violating_hours)
    jv.push_back(
        {{"hour", v.hour}, {"buses", v.bus_ids}, {"extreme_v", v.extreme_v}});
  return {{"v_min_hourly", s.v_min_hourly},
          {"v_max_hourly", s.v_max_hourly},
          {"deviation", s.deviation},
          {"violation_rate", s.violation_rate},
          {"violating_hours", jv},
          {"op_counts",
           {{"oltc", s.op_counts.oltc_ops}, {"sc", s.op_counts.sc_ops}}},
          {"unconverged_cases", s.unconverged_cases}};
}

DispatchSummary summary_from_json(const nlohmann::json& doc) {
  DispatchSummary s;
  s.v_min_hourly = doc.at("v_min_hourly").get<std::vector<double>>();
  s.v_max_hourly = doc.at("v_max_hourly").get<std::vector<double>>();
  s.deviation = doc.at("deviation").get<double>();
  s.violation_rate = doc.at("violation_rate").get<double>();
  for (const auto& jv : doc.at("violating_hours")) {
    ViolationDigest v;
    v.hour = jv.at("hour").get<int>();
    v.bus_ids = jv.at("buses").get<std::vector<int>>();
    v.extreme_v = jv.at("extreme_v").get<double>();
    s.violating_hours.push_back(std::move(v));
  }
  s.op_counts.oltc_ops = doc.at("op_counts").at("oltc").get<int>();
  s.op_counts.sc_ops = doc.at("op_counts").at("sc").get<std::vector<int>>();
  s.unconverged_cases = doc.at("unconverged_cases").get<int>();
  return s;
}

}  // namespace vctl
