#include "vctl/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <sstream>

#include <httplib.h>

#include "vctl/util.hpp"

namespace vctl {

// ---------------------------------------------------------------------------
// Template plumbing

namespace {

std::string substitute(std::string text, const std::string& key,
                       const std::string& value) {
  const std::string token = "{{" + key + "}}";
  size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    text.replace(pos, token.size(), value);
    pos += value.size();
  }
  return text;
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fenced(const nlohmann::json& j) {
  return "```json\n" + j.dump() + "\n```";
}

constexpr const char* kForecastLabel = "Forecast for tomorrow (hourly, MW):";
constexpr const char* kDeviceLabel = "Device specifications:";
constexpr const char* kDigestLabel = "Dispatch results for your latest plan:";
constexpr const char* kActionsLabel = "Actions:";

}  // namespace

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t;
  t.role_task = read_text_file(dir / "role_task.txt");
  t.environment = read_text_file(dir / "environment.txt");
  t.output_format = read_text_file(dir / "output_format.txt");
  t.experiences_header = read_text_file(dir / "experiences_header.txt");
  t.cot_guidance = read_text_file(dir / "cot_guidance.txt");
  t.modification = read_text_file(dir / "modification.txt");
  return t;
}

std::string PromptBundle::render() const {
  std::string out;
  out += "## ROLE AND TASK\n" + role_task;
  out += "\n## ENVIRONMENT\n" + environment;
  out += "\n## OUTPUT FORMAT\n" + output_format;
  if (!past_experiences.empty())
    out += "\n## PAST EXPERIENCES\n" + past_experiences;
  if (!cot_guidance.empty()) out += "\n## GUIDANCE\n" + cot_guidance;
  return out;
}

namespace {

nlohmann::json device_spec_json(const OltcSpec& oltc,
                                const std::vector<ScSpec>& scs) {
  nlohmann::json jscs = nlohmann::json::array();
  for (const ScSpec& sc : scs) jscs.push_back(sc_to_json(sc));
  return {{"oltc", oltc_to_json(oltc)}, {"scs", jscs}};
}

std::string render_experience_block(const Experience& exp, const char* label,
                                    int rank, double score) {
  char head[96];
  std::snprintf(head, sizeof(head), "[%s #%d | similarity %.6f]", label, rank,
                score);
  char results[192];
  std::snprintf(results, sizeof(results),
                "Results: deviation %.6f p.u., violation rate %.3f%%, "
                "unconverged %d, reward %.6f",
                exp.results.deviation, 100.0 * exp.results.violation_rate,
                exp.results.unconverged_cases, exp.reward);
  std::string block = head;
  block += "\nContext (hourly, MW):\n";
  block += fenced({{"load", exp.context.load}, {"pv", exp.context.pv}});
  block += "\nReasoning:\n";
  block += exp.reasoning.empty() ? "(none recorded)" : exp.reasoning;
  block += "\n";
  block += kActionsLabel;
  block += "\n" + fenced(schedule_to_json(exp.actions));
  block += "\n";
  block += results;
  block += "\n";
  return block;
}

}  // namespace

PromptBundle build_generation_prompt(const PromptTemplates& tpl,
                                     const Forecast& forecast,
                                     const RetrievalResult& retrieved,
                                     const ExperienceStore* store,
                                     const Network& net, const OltcSpec& oltc,
                                     const std::vector<ScSpec>& scs,
                                     const RewardConfig& reward_cfg,
                                     const PromptOptions& opts) {
  const RewardConfig& rcfg = reward_cfg;

  PromptBundle bundle;
  bundle.role_task = substitute(
      tpl.role_task, "forecast_json",
      fenced({{"load", forecast.load}, {"pv", forecast.pv}}));

  std::string env = tpl.environment;
  env = substitute(env, "network_name", net.name);
  env = substitute(env, "bus_count", std::to_string(net.bus_count()));
  env = substitute(env, "pv_count", std::to_string(net.pv_bus_indices().size()));
  env = substitute(env, "pv_capacity", fmt_num(net.total_pv_capacity()));
  env = substitute(env, "sc_count", std::to_string(scs.size()));
  env = substitute(env, "v_lo", fmt_num(rcfg.v_lo));
  env = substitute(env, "v_hi", fmt_num(rcfg.v_hi));
  env = substitute(env, "num_taps", std::to_string(oltc.num_taps));
  env = substitute(env, "ratio_min", fmt_num(oltc.ratio_min));
  env = substitute(env, "ratio_max", fmt_num(oltc.ratio_max));
  env = substitute(env, "oltc_max_ops", std::to_string(oltc.max_daily_ops));
  env = substitute(env, "sc_max_ops",
                   std::to_string(scs.empty() ? 0 : scs.front().max_daily_ops));
  env = substitute(env, "initial_tap", std::to_string(oltc.initial_tap));
  env = substitute(env, "device_json", fenced(device_spec_json(oltc, scs)));
  bundle.environment = env;

  std::string ofmt = tpl.output_format;
  ofmt = substitute(ofmt, "tap_max", std::to_string(oltc.num_taps - 1));
  ofmt = substitute(ofmt, "sc_count", std::to_string(scs.size()));
  bundle.output_format = ofmt;

  if (opts.include_experiences) {
    if (!store || (retrieved.profile_matches.empty() &&
                   retrieved.statistical_matches.empty()))
      throw std::invalid_argument("generation prompt needs retrieved experiences");
    std::string blocks;
    int rank = 0;
    for (const ScoredId& s : retrieved.profile_matches) {
      const Experience* exp = store->find(s.id);
      blocks += render_experience_block(*exp, "profile-similar", ++rank, s.score);
      blocks += "\n";
    }
    rank = 0;
    for (const ScoredId& s : retrieved.statistical_matches) {
      const Experience* exp = store->find(s.id);
      blocks +=
          render_experience_block(*exp, "statistically-similar", ++rank, s.score);
      blocks += "\n";
    }
    bundle.past_experiences =
        substitute(tpl.experiences_header, "experience_blocks", blocks);
  }
  if (opts.include_cot) bundle.cot_guidance = tpl.cot_guidance;
  return bundle;
}

std::string build_modification_prompt(const PromptTemplates& tpl,
                                      const DispatchSummary& summary,
                                      double reward_value,
                                      const ActionSchedule& current,
                                      const RewardConfig& reward_cfg) {
  nlohmann::json digest = summary_to_json(summary);
  digest["reward"] = reward_value;
  digest["v_lo"] = reward_cfg.v_lo;
  digest["v_hi"] = reward_cfg.v_hi;
  digest["current_actions"] = schedule_to_json(current);
  return substitute(tpl.modification, "digest_json", fenced(digest));
}

// ---------------------------------------------------------------------------
// Completion parsing

namespace {

struct RawBlock {
  size_t pos = 0;
  std::string text;
  bool fenced = false;
};

/// Fenced ``` blocks (language tag stripped) plus bare top-level {...}
/// spans outside the fences, ordered by position in the text.
std::vector<RawBlock> extract_blocks(const std::string& text) {
  std::vector<RawBlock> blocks;
  std::vector<std::pair<size_t, size_t>> fenced_spans;
  size_t pos = 0;
  while (true) {
    const size_t open = text.find("```", pos);
    if (open == std::string::npos) break;
    const size_t close = text.find("```", open + 3);
    if (close == std::string::npos) break;
    size_t body = open + 3;
    const size_t eol = text.find('\n', body);
    if (eol != std::string::npos && eol < close) {
      // Drop an optional language tag line like "json".
      const std::string first = text.substr(body, eol - body);
      if (first.find('{') == std::string::npos) body = eol + 1;
    }
    blocks.push_back({open, text.substr(body, close - body), true});
    fenced_spans.emplace_back(open, close + 3);
    pos = close + 3;
  }

  auto inside_fence = [&fenced_spans](size_t i) {
    for (const auto& [a, b] : fenced_spans)
      if (i >= a && i < b) return true;
    return false;
  };

  int depth = 0;
  size_t start = 0;
  bool in_string = false;
  for (size_t i = 0; i < text.size(); ++i) {
    if (inside_fence(i)) continue;
    const char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"' && depth > 0) in_string = true;
    if (c == '{') {
      if (depth == 0) start = i;
      ++depth;
    } else if (c == '}') {
      if (depth > 0 && --depth == 0)
        blocks.push_back({start, text.substr(start, i - start + 1), false});
    }
  }

  std::sort(blocks.begin(), blocks.end(),
            [](const RawBlock& a, const RawBlock& b) { return a.pos < b.pos; });
  return blocks;
}

}  // namespace

ActionSchedule parse_actions(const std::string& completion,
                             const OltcSpec& oltc,
                             const std::vector<ScSpec>& scs) {
  const std::vector<RawBlock> blocks = extract_blocks(completion);
  if (blocks.empty())
    throw ParseError(ParseErrc::no_schema_block,
                     "completion contained no JSON block",
                     "Your answer must contain a JSON code block with keys "
                     "\"oltc_tap\" and \"sc_state\".");

  nlohmann::json chosen;
  bool found = false;
  bool saw_malformed_schema_block = false;
  std::string malformed_detail;
  for (const RawBlock& b : blocks) {
    nlohmann::json j = nlohmann::json::parse(b.text, nullptr, false);
    if (j.is_discarded()) {
      if (b.text.find("oltc_tap") != std::string::npos) {
        saw_malformed_schema_block = true;
        malformed_detail = "a block mentioning oltc_tap is not valid JSON";
      }
      continue;
    }
    if (j.is_object() && j.contains("oltc_tap") && j.contains("sc_state")) {
      chosen = std::move(j);  // last qualifying block wins
      found = true;
    }
  }
  if (!found) {
    if (saw_malformed_schema_block)
      throw ParseError(ParseErrc::malformed_block, malformed_detail,
                       "The JSON block could not be parsed; emit strictly "
                       "valid JSON with keys \"oltc_tap\" and \"sc_state\".");
    throw ParseError(ParseErrc::no_schema_block,
                     "no JSON block carries the schema keys",
                     "End with a JSON block holding \"oltc_tap\" (24 integers) "
                     "and \"sc_state\" (one 24-integer array per capacitor).");
  }

  ActionSchedule schedule;
  try {
    schedule = schedule_from_json(chosen);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrc::schema_violation,
                     std::string("schema types: ") + e.what(),
                     "\"oltc_tap\" must be an array of 24 integers and "
                     "\"sc_state\" an array of integer arrays.");
  }

  const ScheduleCheck check = validate_schedule(schedule, oltc, scs);
  if (!check.valid) {
    const bool only_ops =
        std::all_of(check.violations.begin(), check.violations.end(),
                    [](const ScheduleViolation& v) { return v.op_limit; });
    const std::string detail = check.joined();
    if (only_ops)
      throw ParseError(ParseErrc::constraint_violation, detail,
                       "Operation limits exceeded (" + detail +
                           "); remember that every hour-to-hour state change "
                           "counts, including the change from the initial state.");
    throw ParseError(ParseErrc::schema_violation, detail,
                     "Fix the schedule shape/values (" + detail + ").");
  }
  return schedule;
}

// ---------------------------------------------------------------------------
// Scripted policy

namespace {

struct HourWindow {
  int begin = -1;  // inclusive
  int end = -1;    // inclusive
  bool empty() const { return begin < 0 || end < begin; }
};

HourWindow hull_of(const std::vector<int>& hours) {
  HourWindow w;
  for (const int h : hours) {
    if (w.begin < 0 || h < w.begin) w.begin = h;
    if (h > w.end) w.end = h;
  }
  return w;
}

int arg_peak(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Rule thresholds. PV stress fires when generation exceeds the load at
// the PV peak hour (reverse flow); the load rule needs a clearly peaky
// day and PV-quiet hours.
constexpr double kPvWindowFrac = 0.7;
constexpr double kLoadPeakyRatio = 1.25;
constexpr double kLoadWindowFrac = 0.9;
constexpr double kPvQuietFrac = 0.2;

}  // namespace

AgentResponse scripted_policy(const Forecast& forecast, const OltcSpec& oltc,
                              const std::vector<ScSpec>& scs,
                              const PolicyHints& hints) {
  const int T = static_cast<int>(forecast.load.size());
  const int neutral = oltc.initial_tap;
  ActionSchedule plan = neutral_schedule(oltc, scs);
  std::ostringstream trace;

  const double pv_peak = *std::max_element(forecast.pv.begin(), forecast.pv.end());
  const double load_peak =
      *std::max_element(forecast.load.begin(), forecast.load.end());
  const double load_trough =
      *std::min_element(forecast.load.begin(), forecast.load.end());

  char line[256];
  std::snprintf(line, sizeof(line),
                "trend: load peak %.2f MW (hour %d), load trough %.2f MW, "
                "pv peak %.2f MW (hour %d)",
                load_peak, arg_peak(forecast.load) + 1, load_trough, pv_peak,
                pv_peak > 0.0 ? arg_peak(forecast.pv) + 1 : 0);
  trace << line << "\n";

  HourWindow pv_window;
  const double load_at_pv_peak =
      pv_peak > 0.0
          ? forecast.load[static_cast<size_t>(arg_peak(forecast.pv))]
          : 0.0;
  if (pv_peak > 0.0 && pv_peak > load_at_pv_peak) {
    std::vector<int> hours;
    for (int h = 0; h < T; ++h)
      if (forecast.pv[static_cast<size_t>(h)] >= kPvWindowFrac * pv_peak)
        hours.push_back(h);
    pv_window = hull_of(hours);
    const int depth = std::clamp(hints.depth_down, 1, neutral);
    for (int h = pv_window.begin; h <= pv_window.end; ++h)
      plan.oltc_tap[static_cast<size_t>(h)] = neutral - depth;
    std::snprintf(line, sizeof(line),
                  "rule pv-overvoltage: pv peak %.2f exceeds concurrent load "
                  "%.2f; tap %d during hours %d-%d (depth %d)",
                  pv_peak, load_at_pv_peak, neutral - depth, pv_window.begin + 1,
                  pv_window.end + 1, depth);
    trace << line << "\n";
  }

  if (load_peak > kLoadPeakyRatio * std::max(load_trough, 1e-9)) {
    std::vector<int> hours;
    for (int h = 0; h < T; ++h) {
      const bool load_high =
          forecast.load[static_cast<size_t>(h)] >= kLoadWindowFrac * load_peak;
      const bool pv_quiet =
          forecast.pv[static_cast<size_t>(h)] <= kPvQuietFrac * pv_peak;
      if (load_high && pv_quiet) hours.push_back(h);
    }
    HourWindow w = hull_of(hours);
    if (!w.empty() && !pv_window.empty()) {
      // Keep the raise window clear of the PV dip so taps stay piecewise
      // constant with at most two excursions.
      if (w.begin <= pv_window.end && w.end >= pv_window.begin) {
        if (w.end > pv_window.end)
          w.begin = pv_window.end + 1;
        else
          w.end = pv_window.begin - 1;
      }
    }
    if (!w.empty()) {
      const int depth = std::clamp(hints.depth_up, 1, oltc.num_taps - 1 - neutral);
      for (int h = w.begin; h <= w.end; ++h)
        plan.oltc_tap[static_cast<size_t>(h)] = neutral + depth;
      for (auto& row : plan.sc_state)
        for (int h = w.begin; h <= w.end; ++h) row[static_cast<size_t>(h)] = 1;
      std::snprintf(line, sizeof(line),
                    "rule load-undervoltage: peaky load (peak/trough %.2f); "
                    "tap %d and SCs on during hours %d-%d",
                    load_peak / std::max(load_trough, 1e-9), neutral + depth,
                    w.begin + 1, w.end + 1);
      trace << line << "\n";
    }
  }

  if (trace.str().find("rule ") == std::string::npos)
    trace << "rule neutral: no voltage stress expected; keeping initial states\n";

  AgentResponse resp;
  resp.reasoning = trace.str();
  resp.actions = std::move(plan);
  return resp;
}

// ---------------------------------------------------------------------------
// Scripted backend (generation + refinement)

namespace {

/// The first fenced JSON block after the last occurrence of `label`.
std::optional<nlohmann::json> labeled_json(const std::string& text,
                                           const std::string& label) {
  const size_t at = text.rfind(label);
  if (at == std::string::npos) return std::nullopt;
  const size_t open = text.find("```", at);
  if (open == std::string::npos) return std::nullopt;
  size_t body = text.find('\n', open);
  if (body == std::string::npos) return std::nullopt;
  ++body;
  const size_t close = text.find("```", body);
  if (close == std::string::npos) return std::nullopt;
  nlohmann::json j =
      nlohmann::json::parse(text.substr(body, close - body), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

/// Depth hints mimicked from every "Actions:" block in the prompt: the
/// deepest excursions below/above neutral seen in retrieved experiences.
PolicyHints hints_from_experiences(const std::string& text, int neutral) {
  PolicyHints hints;
  size_t pos = 0;
  while ((pos = text.find(kActionsLabel, pos)) != std::string::npos) {
    const size_t open = text.find("```", pos);
    pos += std::char_traits<char>::length(kActionsLabel);
    if (open == std::string::npos) continue;
    size_t body = text.find('\n', open);
    if (body == std::string::npos) continue;
    ++body;
    const size_t close = text.find("```", body);
    if (close == std::string::npos) continue;
    nlohmann::json j =
        nlohmann::json::parse(text.substr(body, close - body), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("oltc_tap")) continue;
    try {
      const auto taps = j.at("oltc_tap").get<std::vector<int>>();
      if (taps.empty()) continue;
      const int mn = *std::min_element(taps.begin(), taps.end());
      const int mx = *std::max_element(taps.begin(), taps.end());
      hints.depth_down = std::max(hints.depth_down, neutral - mn);
      hints.depth_up = std::max(hints.depth_up, mx - neutral);
    } catch (const nlohmann::json::exception&) {
    }
  }
  return hints;
}

std::string completion_text(const std::string& reasoning,
                            const ActionSchedule& actions) {
  return reasoning + "\n" + fenced(schedule_to_json(actions)) + "\n";
}

struct DeviceView {
  OltcSpec oltc;
  std::vector<ScSpec> scs;
};

std::optional<DeviceView> device_view_from_transcript(
    const std::vector<TranscriptMessage>& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != "user") continue;
    const auto j = labeled_json(it->text, kDeviceLabel);
    if (!j) continue;
    try {
      DeviceView view;
      view.oltc = oltc_from_json(j->at("oltc"));
      for (const auto& jsc : j->at("scs")) view.scs.push_back(sc_from_json(jsc));
      return view;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

ActionSchedule with_down_window(const ActionSchedule& cur, int neutral,
                                const HourWindow& w, int depth) {
  ActionSchedule out = cur;
  for (int h = w.begin; h <= w.end; ++h)
    out.oltc_tap[static_cast<size_t>(h)] = std::max(0, neutral - depth);
  return out;
}

ActionSchedule with_up_window(const ActionSchedule& cur, int neutral,
                              int num_taps, const HourWindow& w, int depth) {
  ActionSchedule out = cur;
  for (int h = w.begin; h <= w.end; ++h)
    out.oltc_tap[static_cast<size_t>(h)] =
        std::min(num_taps - 1, neutral + depth);
  return out;
}

ActionSchedule with_scs_on(const ActionSchedule& cur, int hour) {
  ActionSchedule out = cur;
  for (auto& row : out.sc_state) {
    std::vector<int> on_hours;
    for (int h = 0; h < static_cast<int>(row.size()); ++h)
      if (row[static_cast<size_t>(h)] == 1) on_hours.push_back(h);
    on_hours.push_back(hour);
    const HourWindow w = hull_of(on_hours);
    for (int h = w.begin; h <= w.end; ++h) row[static_cast<size_t>(h)] = 1;
  }
  return out;
}

/// One refinement step on the worst violated hour. Tries progressively
/// smaller edits and returns the first candidate that still validates.
ActionSchedule refine_schedule(const ActionSchedule& cur,
                               const nlohmann::json& digest,
                               const DeviceView& dev, std::string& note) {
  const auto& violations = digest.at("violating_hours");
  if (violations.empty()) {
    note = "no violating hours; keeping the plan";
    return cur;
  }
  double worst_gap = -1.0;
  int worst_hour = 0;
  double worst_v = 1.0;
  for (const auto& jv : violations) {
    const double v = jv.at("extreme_v").get<double>();
    if (std::abs(v - 1.0) > worst_gap) {
      worst_gap = std::abs(v - 1.0);
      worst_hour = jv.at("hour").get<int>();
      worst_v = v;
    }
  }
  const double v_hi = digest.at("v_hi").get<double>();
  const int neutral = dev.oltc.initial_tap;
  const bool over = worst_v > v_hi;

  std::vector<int> low_hours, high_hours;
  for (int h = 0; h < static_cast<int>(cur.oltc_tap.size()); ++h) {
    if (cur.oltc_tap[static_cast<size_t>(h)] < neutral) low_hours.push_back(h);
    if (cur.oltc_tap[static_cast<size_t>(h)] > neutral) high_hours.push_back(h);
  }

  std::vector<ActionSchedule> attempts;
  char buf[160];
  if (over) {
    const int cur_depth =
        low_hours.empty()
            ? 0
            : neutral - *std::min_element(cur.oltc_tap.begin(), cur.oltc_tap.end());
    const int deeper = std::min(neutral, cur_depth + 1);
    std::vector<int> hours = low_hours;
    hours.push_back(worst_hour);
    const HourWindow wide = hull_of(hours);
    attempts.push_back(with_down_window(cur, neutral, wide, deeper));
    attempts.push_back(with_down_window(cur, neutral, wide, std::max(1, cur_depth)));
    if (!low_hours.empty())
      attempts.push_back(with_down_window(cur, neutral, hull_of(low_hours), deeper));
    attempts.push_back(
        with_down_window(cur, neutral, HourWindow{worst_hour, worst_hour}, 1));
    std::snprintf(buf, sizeof(buf),
                  "overvoltage %.4f p.u. at hour %d: lowering taps there",
                  worst_v, worst_hour + 1);
  } else {
    const int cur_depth =
        high_hours.empty()
            ? 0
            : *std::max_element(cur.oltc_tap.begin(), cur.oltc_tap.end()) - neutral;
    const int deeper = std::min(dev.oltc.num_taps - 1 - neutral, cur_depth + 1);
    std::vector<int> hours = high_hours;
    hours.push_back(worst_hour);
    const HourWindow wide = hull_of(hours);
    attempts.push_back(with_scs_on(
        with_up_window(cur, neutral, dev.oltc.num_taps, wide, deeper), worst_hour));
    attempts.push_back(with_up_window(cur, neutral, dev.oltc.num_taps, wide, deeper));
    attempts.push_back(
        with_up_window(cur, neutral, dev.oltc.num_taps, wide, std::max(1, cur_depth)));
    attempts.push_back(with_scs_on(cur, worst_hour));
    attempts.push_back(with_up_window(cur, neutral, dev.oltc.num_taps,
                                      HourWindow{worst_hour, worst_hour}, 1));
    std::snprintf(buf, sizeof(buf),
                  "undervoltage %.4f p.u. at hour %d: raising support there",
                  worst_v, worst_hour + 1);
  }
  note = buf;

  for (const ActionSchedule& a : attempts) {
    if (a == cur) continue;
    if (validate_schedule(a, dev.oltc, dev.scs).valid) return a;
  }
  note += "; no refinement fits the operation limits, keeping the plan";
  return cur;
}

}  // namespace

std::string ScriptedBackend::complete(
    const std::string& episode_id,
    const std::vector<TranscriptMessage>& messages) {
  (void)episode_id;
  if (messages.empty() || messages.back().role != "user")
    throw AgentFailure("scripted backend expects a trailing user message");
  const std::string& last = messages.back().text;

  const auto device = device_view_from_transcript(messages);
  if (!device)
    throw AgentFailure("scripted backend found no device specification block");

  if (last.find(kDigestLabel) != std::string::npos) {
    const auto digest = labeled_json(last, kDigestLabel);
    if (!digest) throw AgentFailure("scripted backend could not parse the digest");
    ActionSchedule cur;
    try {
      cur = schedule_from_json(digest->at("current_actions"));
    } catch (const nlohmann::json::exception& e) {
      throw AgentFailure(std::string("digest current_actions: ") + e.what());
    }
    std::string note;
    const ActionSchedule refined = refine_schedule(cur, *digest, *device, note);
    return completion_text("refinement: " + note, refined);
  }

  const auto fc_json = labeled_json(last, kForecastLabel);
  if (!fc_json)
    throw AgentFailure("scripted backend found no forecast block");
  Forecast fc;
  try {
    fc.load = fc_json->at("load").get<std::vector<double>>();
    fc.pv = fc_json->at("pv").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw AgentFailure(std::string("forecast block: ") + e.what());
  }

  const PolicyHints hints =
      hints_from_experiences(last, device->oltc.initial_tap);
  const AgentResponse resp = scripted_policy(fc, device->oltc, device->scs, hints);
  std::string reasoning = resp.reasoning;
  if (hints.depth_down > 1 || hints.depth_up > 1) {
    char line[96];
    std::snprintf(line, sizeof(line),
                  "mimicking retrieved experiences: depth down %d, up %d\n",
                  hints.depth_down, hints.depth_up);
    reasoning += line;
  }
  return completion_text(reasoning, resp.actions);
}

// ---------------------------------------------------------------------------
// Remote backend

RemoteBackend::Options RemoteBackend::options_from_env() {
  Options opts;
  if (const char* v = std::getenv("VO_LLM_BASE_URL")) opts.base_url = v;
  if (const char* v = std::getenv("VO_LLM_API_KEY")) opts.api_key = v;
  if (const char* v = std::getenv("VO_LLM_MODEL")) opts.model = v;
  return opts;
}

RemoteBackend::RemoteBackend(Options opts) : opts_(std::move(opts)) {
  if (opts_.base_url.empty() || opts_.api_key.empty() || opts_.model.empty())
    throw std::invalid_argument(
        "remote backend needs VO_LLM_BASE_URL, VO_LLM_API_KEY and VO_LLM_MODEL");
}

std::string RemoteBackend::complete(
    const std::string& episode_id,
    const std::vector<TranscriptMessage>& messages) {
  (void)episode_id;
  // Split "scheme://host[:port]/prefix" into client target and path prefix.
  std::string target = opts_.base_url;
  std::string prefix;
  const size_t scheme = target.find("://");
  const size_t slash =
      scheme == std::string::npos ? target.find('/') : target.find('/', scheme + 3);
  if (slash != std::string::npos) {
    prefix = target.substr(slash);
    target = target.substr(0, slash);
  }
  if (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  nlohmann::json jmsgs = nlohmann::json::array();
  for (const TranscriptMessage& m : messages)
    jmsgs.push_back({{"role", m.role}, {"content", m.text}});
  const std::string body =
      nlohmann::json{{"model", opts_.model}, {"messages", jmsgs}}.dump();

  httplib::Client client(target);
  client.set_connection_timeout(opts_.timeout_sec, 0);
  client.set_read_timeout(opts_.timeout_sec, 0);
  httplib::Headers headers{{"Authorization", "Bearer " + opts_.api_key}};

  std::string last_error;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    auto res = client.Post(prefix + "/chat/completions", headers, body,
                           "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;  // retry on 5xx only
    }
    if (res->status != 200)
      throw AgentFailure("remote backend: status " + std::to_string(res->status) +
                         ": " + res->body);
    try {
      const nlohmann::json j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw AgentFailure(std::string("remote backend: bad response: ") + e.what());
    }
  }
  throw AgentFailure("remote backend: " + last_error);
}

// ---------------------------------------------------------------------------
// Replay backend

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript_path) {
  std::istringstream in(read_text_file(transcript_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    by_episode_[j.at("episode_id").get<std::string>()].push_back(
        {j.at("direction").get<std::string>(), j.at("text").get<std::string>()});
  }
}

std::string ReplayBackend::complete(
    const std::string& episode_id,
    const std::vector<TranscriptMessage>& messages) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = by_episode_.find(episode_id);
  if (it == by_episode_.end())
    throw ReplayMismatch("no transcript for episode " + episode_id);
  size_t& cur = cursor_[episode_id];
  const auto& entries = it->second;
  if (cur >= entries.size())
    throw ReplayMismatch("transcript for " + episode_id + " exhausted");
  if (entries[cur].direction != "send")
    throw ReplayMismatch("transcript for " + episode_id + " misaligned");
  if (messages.empty() || entries[cur].text != messages.back().text)
    throw ReplayMismatch("episode " + episode_id +
                         ": outgoing prompt differs from the recorded one");
  if (cur + 1 >= entries.size() || entries[cur + 1].direction != "recv")
    throw ReplayMismatch("transcript for " + episode_id +
                         " has no recorded completion");
  cur += 2;
  return entries[cur - 1].text;
}

// ---------------------------------------------------------------------------
// Transcript log

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void TranscriptLog::record(const std::string& episode_id, int round,
                           const std::string& direction,
                           const std::string& text) {
  std::lock_guard<std::mutex> lock(mu_);
  pending_[episode_id].push_back({{"episode_id", episode_id},
                                  {"round", round},
                                  {"direction", direction},
                                  {"timestamp", iso_now()},
                                  {"text", text}});
}

void TranscriptLog::flush_episode(const std::string& episode_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = pending_.find(episode_id);
  if (it == pending_.end()) return;
  for (auto& rec : it->second) flushed_.push_back(std::move(rec));
  pending_.erase(it);
}

void TranscriptLog::flush_all() {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& [id, recs] : pending_)
    for (auto& rec : recs) flushed_.push_back(std::move(rec));
  pending_.clear();
}

void TranscriptLog::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& rec : flushed_) out += rec.dump() + "\n";
  write_text_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Decision loop

AgentResponse decide(AgentBackend& backend, Dialogue& dlg,
                     const std::string& prompt_text, const OltcSpec& oltc,
                     const std::vector<ScSpec>& scs, int retry_budget,
                     TranscriptLog* log) {
  if (retry_budget < 0) throw std::invalid_argument("retry_budget must be >= 0");
  auto send = [&](const std::string& text) {
    dlg.messages.push_back({"user", text});
    if (log) log->record(dlg.episode_id, dlg.round, "send", text);
  };
  send(prompt_text);

  std::string last_error;
  for (int attempt = 0; attempt <= retry_budget; ++attempt) {
    const std::string completion = backend.complete(dlg.episode_id, dlg.messages);
    if (log) log->record(dlg.episode_id, dlg.round, "recv", completion);
    dlg.messages.push_back({"assistant", completion});
    try {
      AgentResponse resp;
      resp.actions = parse_actions(completion, oltc, scs);
      resp.reasoning = completion;
      return resp;
    } catch (const ParseError& e) {
      last_error = e.what();
      if (attempt == retry_budget) break;
      send("Your previous response could not be used. " + e.hint +
           " Please answer again, ending with one JSON code block in the "
           "required schema.");
    }
  }
  throw AgentFailure("no valid response after " +
                     std::to_string(retry_budget + 1) + " attempts (last: " +
                     last_error + ")");
}

Candidate modification_loop(AgentBackend& backend, Dialogue& dlg,
                            const SimContext& ctx, const PromptTemplates& tpl,
                            const DayProfile& day,
                            const AgentResponse& initial, int rounds,
                            int retry_budget, TranscriptLog* log) {
  if (rounds < 0) throw std::invalid_argument("rounds must be >= 0");

  auto simulate = [&](const ActionSchedule& actions) {
    return simulate_day(ctx.net, day, actions, ctx.oltc, ctx.scs, ctx.alloc,
                        ctx.reward_cfg);
  };

  std::vector<Candidate> candidates;
  {
    Candidate c;
    c.actions = initial.actions;
    c.summary = simulate(c.actions);
    c.reward = reward(c.summary, ctx.reward_cfg);
    c.round = 0;
    c.reasoning = initial.reasoning;
    candidates.push_back(std::move(c));
  }

  const Candidate* current = &candidates.front();
  for (int r = 1; r <= rounds; ++r) {
    dlg.round = r;
    const std::string prompt = build_modification_prompt(
        tpl, current->summary, current->reward, current->actions, ctx.reward_cfg);
    AgentResponse resp;
    try {
      resp = decide(backend, dlg, prompt, ctx.oltc, ctx.scs, retry_budget, log);
    } catch (const AgentFailure&) {
      continue;  // this round contributes no candidate
    }
    Candidate c;
    c.actions = resp.actions;
    c.summary = simulate(c.actions);
    c.reward = reward(c.summary, ctx.reward_cfg);
    c.round = r;
    c.reasoning = resp.reasoning;
    candidates.push_back(std::move(c));
    current = &candidates.back();
  }

  size_t best = 0;
  for (size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].reward > candidates[best].reward) best = i;
  return candidates[best];
}

std::optional<std::string> update_store(ExperienceStore& store,
                                        Experience candidate,
                                        const RetrievalResult& retrieved) {
  std::vector<std::string> ids;
  for (const ScoredId& s : retrieved.profile_matches) ids.push_back(s.id);
  for (const ScoredId& s : retrieved.statistical_matches) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const Experience* target = nullptr;
  for (const std::string& id : ids) {
    const Experience* e = store.find(id);
    if (!e || !(e->reward < candidate.reward)) continue;
    if (!target || e->reward < target->reward ||
        (e->reward == target->reward && e->id < target->id))
      target = e;
  }
  if (!target) return std::nullopt;
  const std::string old_id = target->id;
  if (candidate.id.empty()) candidate.id = store.allocate_id();
  store.replace(old_id, std::move(candidate));
  return old_id;
}

// ---------------------------------------------------------------------------
// Store bootstrap (lives here so the scripted policy stays in one place)

ExperienceStore bootstrap_store(int capacity, const BootstrapInputs& in) {
  if (static_cast<int>(in.days.size()) < capacity)
    throw StoreError(StoreErrc::insufficient_days,
                     "need at least " + std::to_string(capacity) +
                         " days, dataset has " + std::to_string(in.days.size()));
  ExperienceStore store(capacity, in.oltc, in.scs, in.reward_cfg);
  const std::vector<int> picks = stratified_day_picks(in.days, capacity);
  for (const int idx : picks) {
    const DayProfile& day = in.days[static_cast<size_t>(idx)];
    const Forecast fc = make_forecast(
        day, in.forecast_seed * 1000003ull + static_cast<std::uint64_t>(day.day_id),
        in.noise_sigma);
    const AgentResponse resp = scripted_policy(fc, in.oltc, in.scs);
    const DispatchSummary summary = simulate_day(in.net, day, resp.actions,
                                                 in.oltc, in.scs, in.alloc,
                                                 in.reward_cfg);
    Experience exp;
    exp.id = store.allocate_id();
    exp.context = fc;
    exp.reasoning = resp.reasoning;
    exp.actions = resp.actions;
    exp.results = summary;
    exp.reward = reward(summary, in.reward_cfg);
    store.add(std::move(exp));
  }
  return store;
}

}  // namespace vctl
