#include "vctl/config.hpp"

#include "vctl/util.hpp"

namespace vctl {

namespace {

template <typename T>
void maybe(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc, RunConfig base) {
  RunConfig c = std::move(base);
  maybe(doc, "network", c.network_path);
  maybe(doc, "dataset", c.dataset_path);
  maybe(doc, "store", c.store_dir);
  maybe(doc, "out", c.out_dir);
  maybe(doc, "prompts", c.prompts_dir);
  maybe(doc, "variant", c.variant);
  maybe(doc, "backend", c.backend);
  maybe(doc, "transcript", c.transcript_path);
  maybe(doc, "seeds", c.seeds);
  maybe(doc, "iterations", c.iterations);
  maybe(doc, "store_capacity", c.store_capacity);
  maybe(doc, "k_p", c.k_p);
  maybe(doc, "k_s", c.k_s);
  maybe(doc, "rounds", c.rounds);
  maybe(doc, "retry_budget", c.retry_budget);
  maybe(doc, "noise_sigma", c.noise_sigma);
  maybe(doc, "forecast_seed", c.forecast_seed);
  maybe(doc, "jobs", c.jobs);
  maybe(doc, "train_days", c.train_days);
  maybe(doc, "test_days", c.test_days);
  if (doc.contains("reward")) {
    const auto& jr = doc.at("reward");
    maybe(jr, "w_dev", c.reward.w_dev);
    maybe(jr, "w_vio", c.reward.w_vio);
    maybe(jr, "w_unconv", c.reward.w_unconv);
    maybe(jr, "v_lo", c.reward.v_lo);
    maybe(jr, "v_hi", c.reward.v_hi);
  }
  if (doc.contains("oltc")) {
    const auto& jo = doc.at("oltc");
    maybe(jo, "num_taps", c.oltc.num_taps);
    maybe(jo, "ratio_min", c.oltc.ratio_min);
    maybe(jo, "ratio_max", c.oltc.ratio_max);
    maybe(jo, "max_daily_ops", c.oltc.max_daily_ops);
    maybe(jo, "initial_tap", c.oltc.initial_tap);
  }
  maybe(doc, "sc_max_daily_ops", c.sc_max_daily_ops);
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  return {{"network", c.network_path},
          {"dataset", c.dataset_path},
          {"store", c.store_dir},
          {"out", c.out_dir},
          {"prompts", c.prompts_dir},
          {"variant", c.variant},
          {"backend", c.backend},
          {"transcript", c.transcript_path},
          {"seeds", c.seeds},
          {"iterations", c.iterations},
          {"store_capacity", c.store_capacity},
          {"k_p", c.k_p},
          {"k_s", c.k_s},
          {"rounds", c.rounds},
          {"retry_budget", c.retry_budget},
          {"noise_sigma", c.noise_sigma},
          {"forecast_seed", c.forecast_seed},
          {"jobs", c.jobs},
          {"train_days", c.train_days},
          {"test_days", c.test_days},
          {"reward",
           {{"w_dev", c.reward.w_dev},
            {"w_vio", c.reward.w_vio},
            {"w_unconv", c.reward.w_unconv},
            {"v_lo", c.reward.v_lo},
            {"v_hi", c.reward.v_hi}}},
          {"oltc",
           {{"num_taps", c.oltc.num_taps},
            {"ratio_min", c.oltc.ratio_min},
            {"ratio_max", c.oltc.ratio_max},
            {"max_daily_ops", c.oltc.max_daily_ops},
            {"initial_tap", c.oltc.initial_tap}}},
          {"sc_max_daily_ops", c.sc_max_daily_ops}};
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  return config_from_json(nlohmann::json::parse(read_text_file(path)),
                          std::move(base));
}

std::vector<ScSpec> sc_specs_from_network(const Network& net,
                                          const RunConfig& cfg) {
  std::vector<ScSpec> specs;
  for (const int i : net.sc_bus_indices()) {
    ScSpec spec;
    spec.bus = net.buses[static_cast<size_t>(i)].id;
    spec.q_mvar = net.buses[static_cast<size_t>(i)].sc->q_mvar;
    spec.max_daily_ops = cfg.sc_max_daily_ops;
    spec.initial_state = 0;
    specs.push_back(spec);
  }
  return specs;
}

void split_days(const std::vector<DayProfile>& days, const RunConfig& cfg,
                std::vector<int>& train_ids, std::vector<int>& test_ids) {
  const int n = static_cast<int>(days.size());
  const int n_test = std::min(cfg.test_days, n);
  const int n_train_max = n - n_test;
  const int n_train = cfg.train_days > 0 ? std::min(cfg.train_days, n_train_max)
                                         : n_train_max;
  train_ids.clear();
  test_ids.clear();
  for (int i = 0; i < n_train; ++i) train_ids.push_back(days[static_cast<size_t>(i)].day_id);
  for (int i = n - n_test; i < n; ++i) test_ids.push_back(days[static_cast<size_t>(i)].day_id);
}

}  // namespace vctl
