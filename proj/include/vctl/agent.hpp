#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vctl/devices.hpp"
#include "vctl/experience.hpp"
#include "vctl/network.hpp"
#include "vctl/retrieval.hpp"
#include "vctl/scenario.hpp"
#include "vctl/simulation.hpp"

namespace vctl {

// ---------------------------------------------------------------------------
// Prompts

/// Section texts live in versioned template files so they can be swapped
/// without touching code. Placeholders use {{name}}.
struct PromptTemplates {
  std::string role_task;
  std::string environment;
  std::string output_format;
  std::string experiences_header;
  std::string cot_guidance;
  std::string modification;

  static PromptTemplates load(const std::filesystem::path& dir);
};

struct PromptBundle {
  std::string role_task;
  std::string environment;
  std::string output_format;
  std::string past_experiences;  // empty when experiences are ablated
  std::string cot_guidance;      // empty when CoT guidance is ablated

  std::string render() const;
};

struct PromptOptions {
  bool include_experiences = true;
  bool include_cot = true;
};

/// `store` is only consulted to render the retrieved experiences; it may
/// be null when opts.include_experiences is false.
PromptBundle build_generation_prompt(const PromptTemplates& tpl,
                                     const Forecast& forecast,
                                     const RetrievalResult& retrieved,
                                     const ExperienceStore* store,
                                     const Network& net, const OltcSpec& oltc,
                                     const std::vector<ScSpec>& scs,
                                     const RewardConfig& reward_cfg,
                                     const PromptOptions& opts = {});

std::string build_modification_prompt(const PromptTemplates& tpl,
                                      const DispatchSummary& summary,
                                      double reward_value,
                                      const ActionSchedule& current,
                                      const RewardConfig& reward_cfg);

// ---------------------------------------------------------------------------
// Response parsing

enum class ParseErrc {
  no_schema_block,
  malformed_block,
  schema_violation,
  constraint_violation,
};

struct ParseError : std::runtime_error {
  ParseError(ParseErrc c, const std::string& what, std::string repair_hint)
      : std::runtime_error(what), code(c), hint(std::move(repair_hint)) {}
  ParseErrc code;
  std::string hint;  // quoted back to the model on retry
};

/// Extract the action schedule from a completion. Candidate JSON blocks are
/// fenced ``` blocks or bare top-level objects; among blocks that carry the
/// schema keys, the last one is authoritative.
ActionSchedule parse_actions(const std::string& completion,
                             const OltcSpec& oltc,
                             const std::vector<ScSpec>& scs);

struct AgentResponse {
  std::string reasoning;  // completion text, verbatim
  ActionSchedule actions;
};

// ---------------------------------------------------------------------------
// Backends

struct TranscriptMessage {
  std::string role;  // "user" or "assistant"
  std::string text;
};

struct AgentFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ReplayMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class AgentBackend {
public:
  virtual ~AgentBackend() = default;
  virtual std::string complete(const std::string& episode_id,
                               const std::vector<TranscriptMessage>& messages) = 0;
};

/// Deterministic stand-in for the LLM. Reads the same prompt text a model
/// would see: on a generation prompt it parses the forecast, device specs
/// and any experience blocks, and answers with the heuristic policy (depth
/// mimicked from the deepest retrieved actions); on a results digest it
/// patches the worst violated hour and returns the refined plan.
class ScriptedBackend : public AgentBackend {
public:
  explicit ScriptedBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string complete(const std::string& episode_id,
                       const std::vector<TranscriptMessage>& messages) override;

private:
  std::uint64_t seed_;
};

/// Chat-completion HTTP client. Configured from VO_LLM_BASE_URL,
/// VO_LLM_API_KEY and VO_LLM_MODEL; never used by the default test suite.
class RemoteBackend : public AgentBackend {
public:
  struct Options {
    std::string base_url;
    std::string api_key;
    std::string model;
    int timeout_sec = 60;
    int max_attempts = 3;  // retries on 5xx
  };
  static Options options_from_env();

  explicit RemoteBackend(Options opts);
  std::string complete(const std::string& episode_id,
                       const std::vector<TranscriptMessage>& messages) override;

private:
  Options opts_;
};

/// Serves the completions recorded in a transcript log, verifying that
/// each outgoing prompt matches the recorded one byte for byte.
class ReplayBackend : public AgentBackend {
public:
  explicit ReplayBackend(const std::filesystem::path& transcript_path);
  std::string complete(const std::string& episode_id,
                       const std::vector<TranscriptMessage>& messages) override;

private:
  struct Entry {
    std::string direction;
    std::string text;
  };
  std::mutex mu_;
  std::map<std::string, std::vector<Entry>> by_episode_;
  std::map<std::string, size_t> cursor_;
};

// ---------------------------------------------------------------------------
// Transcript logging

/// Newline-delimited {episode_id, round, direction, timestamp, text}
/// records. Records buffer per episode and are flushed in the order the
/// harness decides, keeping files deterministic under parallel sweeps.
class TranscriptLog {
public:
  void record(const std::string& episode_id, int round,
              const std::string& direction, const std::string& text);
  void flush_episode(const std::string& episode_id);
  void flush_all();
  void save(const std::filesystem::path& path) const;

private:
  std::mutex mu_;
  std::map<std::string, std::vector<nlohmann::json>> pending_;
  std::vector<nlohmann::json> flushed_;
};

// ---------------------------------------------------------------------------
// Decision making

struct Dialogue {
  std::string episode_id;
  std::vector<TranscriptMessage> messages;
  int round = 0;
};

/// Query the backend until a response parses and validates, feeding the
/// repair hint back on each failure. retry_budget extra attempts.
AgentResponse decide(AgentBackend& backend, Dialogue& dlg,
                     const std::string& prompt_text, const OltcSpec& oltc,
                     const std::vector<ScSpec>& scs, int retry_budget = 2,
                     TranscriptLog* log = nullptr);

struct PolicyHints {
  int depth_down = 1;  // taps below neutral during PV stress
  int depth_up = 1;    // taps above neutral during load stress
};

/// Deterministic rule policy: lower taps across the PV-peak window when PV
/// can exceed the load trough, raise taps and close capacitors across the
/// evening load peak when the day is peaky. The reasoning field records
/// which rules fired.
AgentResponse scripted_policy(const Forecast& forecast, const OltcSpec& oltc,
                              const std::vector<ScSpec>& scs,
                              const PolicyHints& hints = {});

struct SimContext {
  const Network& net;
  OltcSpec oltc;
  std::vector<ScSpec> scs;
  BusAllocation alloc;
  RewardConfig reward_cfg;
};

struct Candidate {
  ActionSchedule actions;
  DispatchSummary summary;
  double reward = 0.0;
  int round = 0;
  std::string reasoning;
};

/// R refinement rounds against simulated dispatch feedback; returns the
/// best candidate over all rounds including the initial one (ties to the
/// earliest round). A round that fails to parse contributes no candidate.
Candidate modification_loop(AgentBackend& backend, Dialogue& dlg,
                            const SimContext& ctx, const PromptTemplates& tpl,
                            const DayProfile& day,
                            const AgentResponse& initial, int rounds,
                            int retry_budget = 2, TranscriptLog* log = nullptr);

/// Replace the lowest-reward retrieved experience that the candidate
/// strictly outperforms (at most one per episode). The candidate gets a
/// fresh id on insertion. Returns the replaced id.
std::optional<std::string> update_store(ExperienceStore& store,
                                        Experience candidate,
                                        const RetrievalResult& retrieved);

}  // namespace vctl
