#include "vctl/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "vctl/devices.hpp"
#include "vctl/rng.hpp"
#include "vctl/util.hpp"

namespace vctl {

namespace {

// Daylight window: PV is identically zero before 06:00 and from 20:00 on.
constexpr int kDawnStep = 24;   // 06:00
constexpr int kDuskStep = 80;   // 20:00

/// Double-peak daily load shape, normalized so its maximum is 1.
double load_shape(int step) {
  const double h = static_cast<double>(step) / kStepsPerHour;
  const double base = 0.45;
  const double morning = 0.25 * std::exp(-0.5 * std::pow((h - 10.0) / 2.2, 2));
  const double evening = 0.55 * std::exp(-0.5 * std::pow((h - 19.0) / 2.4, 2));
  const double night_dip = -0.12 * std::exp(-0.5 * std::pow((h - 3.5) / 2.5, 2));
  return (base + morning + evening + night_dip) / 1.0;
}

double pv_shape(int step) {
  if (step < kDawnStep || step >= kDuskStep) return 0.0;
  const double mid = 0.5 * (kDawnStep + kDuskStep);
  const double half = 0.5 * (kDuskStep - kDawnStep);
  const double u = (static_cast<double>(step) - mid) / half;  // [-1, 1)
  const double bell = std::cos(u * 1.5707963267948966);
  return bell * bell;
}

}  // namespace

std::vector<DayProfile> generate_dataset(std::uint64_t seed, int num_days,
                                         const Network& net) {
  if (num_days < 1) throw std::invalid_argument("num_days must be >= 1");
  Rng rng(seed);

  const double p_nom = net.total_p_load_nom();
  const double q_nom = net.total_q_load_nom();
  const double pv_cap = net.total_pv_capacity();
  const double qp_ratio = p_nom > 0.0 ? q_nom / p_nom : 0.0;

  std::vector<DayProfile> days;
  days.reserve(static_cast<size_t>(num_days));

  for (int d = 0; d < num_days; ++d) {
    DayProfile day;
    day.day_id = d;
    day.load_mw.resize(kStepsPerDay);
    day.load_q_mvar.resize(kStepsPerDay);
    day.pv_mw.resize(kStepsPerDay);

    // Seasonal level plus day-to-day spread; peak days approach the
    // feeder's nominal rating.
    const double season = 0.85 + 0.15 * std::sin(2.0 * M_PI * d / 30.0);
    const double day_level = season * (0.9 + 0.25 * rng.uniform01());

    // Cloud state: ~40% of days are heavily clouded, the rest mostly clear.
    const double clear = rng.uniform01() < 0.4 ? rng.uniform(0.05, 0.25)
                                               : rng.uniform(0.55, 0.8);
    const double cloud_jitter = rng.uniform(0.02, 0.08);

    for (int s = 0; s < kStepsPerDay; ++s) {
      const double noise = std::exp(0.03 * rng.normal());
      const double load = p_nom * day_level * load_shape(s) * noise;
      day.load_mw[s] = load;
      day.load_q_mvar[s] = load * qp_ratio;

      const double dip = 1.0 - cloud_jitter * (0.5 + 0.5 * std::sin(0.9 * s + d));
      day.pv_mw[s] = pv_cap * clear * pv_shape(s) * dip;
    }
    days.push_back(std::move(day));
  }
  return days;
}

Forecast make_forecast(const DayProfile& profile, std::uint64_t noise_seed,
                       double noise_sigma) {
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (static_cast<int>(profile.load_mw.size()) != kStepsPerDay ||
      static_cast<int>(profile.pv_mw.size()) != kStepsPerDay)
    throw DimensionMismatch("day profile must have 96 steps");

  Rng rng(noise_seed);
  Forecast fc;
  fc.load.resize(kScheduleHours);
  fc.pv.resize(kScheduleHours);
  for (int h = 0; h < kScheduleHours; ++h) {
    double load = 0.0, pv = 0.0;
    for (int s = 0; s < kStepsPerHour; ++s) {
      load += profile.load_mw[static_cast<size_t>(h * kStepsPerHour + s)];
      pv += profile.pv_mw[static_cast<size_t>(h * kStepsPerHour + s)];
    }
    load /= kStepsPerHour;
    pv /= kStepsPerHour;
    const double load_eps = noise_sigma == 0.0 ? 0.0 : rng.normal(0.0, noise_sigma);
    const double pv_eps = noise_sigma == 0.0 ? 0.0 : rng.normal(0.0, noise_sigma);
    fc.load[h] = load * std::exp(load_eps);
    fc.pv[h] = pv * std::exp(pv_eps);
  }
  return fc;
}

BusAllocation default_allocation(const Network& net) {
  BusAllocation alloc;
  const double p_total = net.total_p_load_nom();
  alloc.load_share.reserve(static_cast<size_t>(net.bus_count()));
  for (const Bus& b : net.buses)
    alloc.load_share.push_back(p_total > 0.0 ? b.p_load_nom / p_total : 0.0);

  const auto pv_buses = net.pv_bus_indices();
  const double pv_total = net.total_pv_capacity();
  alloc.pv_share.reserve(pv_buses.size());
  for (const int i : pv_buses)
    alloc.pv_share.push_back(
        pv_total > 0.0 ? net.buses[static_cast<size_t>(i)].pv_capacity / pv_total
                       : 0.0);
  return alloc;
}

BusCase disaggregate(double region_load_mw, double region_pv_mw,
                     const BusAllocation& alloc, const Network& net) {
  const size_t n = static_cast<size_t>(net.bus_count());
  if (alloc.load_share.size() != n)
    throw DimensionMismatch("load_share length != bus count");
  const auto pv_buses = net.pv_bus_indices();
  if (alloc.pv_share.size() != pv_buses.size())
    throw DimensionMismatch("pv_share length != PV bus count");
  if (region_load_mw < 0.0 || region_pv_mw < 0.0)
    throw std::invalid_argument("region quantities must be >= 0");

  BusCase out;
  out.p_load_mw.assign(n, 0.0);
  out.q_load_mvar.assign(n, 0.0);
  out.pv_mw.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double p = region_load_mw * alloc.load_share[i];
    out.p_load_mw[i] = p;
    const Bus& b = net.buses[i];
    out.q_load_mvar[i] = b.p_load_nom > 0.0 ? p * (b.q_load_nom / b.p_load_nom) : 0.0;
  }
  for (size_t k = 0; k < pv_buses.size(); ++k)
    out.pv_mw[static_cast<size_t>(pv_buses[k])] = region_pv_mw * alloc.pv_share[k];
  return out;
}

nlohmann::json dataset_to_json(const std::vector<DayProfile>& days) {
  nlohmann::json jdays = nlohmann::json::array();
  for (const DayProfile& d : days)
    jdays.push_back({{"day_id", d.day_id},
                     {"load_mw", d.load_mw},
                     {"load_q_mvar", d.load_q_mvar},
                     {"pv_mw", d.pv_mw}});
  return {{"days", jdays}};
}

std::vector<DayProfile> dataset_from_json(const nlohmann::json& doc) {
  std::vector<DayProfile> days;
  for (const auto& jd : doc.at("days")) {
    DayProfile d;
    d.day_id = jd.at("day_id").get<int>();
    d.load_mw = jd.at("load_mw").get<std::vector<double>>();
    d.load_q_mvar = jd.at("load_q_mvar").get<std::vector<double>>();
    d.pv_mw = jd.at("pv_mw").get<std::vector<double>>();
    if (static_cast<int>(d.load_mw.size()) != kStepsPerDay ||
        static_cast<int>(d.load_q_mvar.size()) != kStepsPerDay ||
        static_cast<int>(d.pv_mw.size()) != kStepsPerDay)
      throw DimensionMismatch("dataset day " + std::to_string(d.day_id) +
                              " does not have 96 steps");
    days.push_back(std::move(d));
  }
  return days;
}

void save_dataset(const std::filesystem::path& path,
                  const std::vector<DayProfile>& days) {
  write_text_file_atomic(path, dataset_to_json(days).dump(2) + "\n");
}

std::vector<DayProfile> load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace vctl
