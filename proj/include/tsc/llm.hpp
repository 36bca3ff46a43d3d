#pragma once

#include "tsc/policy.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsc {

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

struct PromptContext {
    ObservationState observation;
};

/// "Eastern and western left-turn lanes" etc.
std::string_view phase_lane_description(Phase p);

/// The per-signal state section inserted into the prompt template.
std::string render_state_block(const ObservationState& obs);

/// Full user prompt: fixed task description, the state section, and the
/// answer requirements ending with the <signal> tag instruction.
std::string build_prompt(const PromptContext& ctx);

/// Template text before and after the state section.
std::string_view prompt_prefix();
std::string_view prompt_suffix();

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

class SignalParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Extracts the last <signal>...</signal> span (tags matched
/// case-insensitively), trims it and maps it to a phase code.
Phase parse_signal(std::string_view raw);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
};

struct LLMRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.1;
    int max_tokens = 1024;
    std::string model;
    double timeout_seconds = 60.0;
};

class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class BackendTimeout : public BackendError {
  public:
    using BackendError::BackendError;
};

class Backend {
  public:
    virtual ~Backend() = default;
    /// Raw completion text. Throws BackendError / BackendTimeout.
    virtual std::string complete(const LLMRequest& request) = 0;
    virtual bool is_deterministic() const = 0;
    virtual std::unique_ptr<Backend> clone_with_seed(std::uint64_t seed) const = 0;
};

/// Phase with the most early-queued vehicles listed in a rendered prompt
/// (ties to the lowest index). On networks where every lane exits, this is
/// the max-pressure choice.
Phase queue_oracle_from_prompt(std::string_view prompt);

/// Reads the state section of the prompt and answers with the queue oracle.
class DeterministicMockBackend final : public Backend {
  public:
    std::string complete(const LLMRequest& request) override;
    bool is_deterministic() const override { return true; }
    std::unique_ptr<Backend> clone_with_seed(std::uint64_t) const override;
};

/// Answers like the deterministic mock, except that with probability
/// `error_rate` it names a different (but valid) signal chosen uniformly.
class StochasticMockBackend final : public Backend {
  public:
    StochasticMockBackend(std::uint64_t seed, double error_rate);

    std::string complete(const LLMRequest& request) override;
    bool is_deterministic() const override { return false; }
    std::unique_ptr<Backend> clone_with_seed(std::uint64_t seed) const override;

  private:
    std::mt19937_64 rng_;
    double error_rate_;
};

/// Replays a fixed list of outcomes; nullopt entries raise BackendTimeout.
/// The last entry repeats once the script is exhausted.
class ScriptedBackend final : public Backend {
  public:
    explicit ScriptedBackend(std::vector<std::optional<std::string>> script);

    std::string complete(const LLMRequest& request) override;
    bool is_deterministic() const override { return true; }
    std::unique_ptr<Backend> clone_with_seed(std::uint64_t) const override;
    std::size_t calls() const { return calls_; }

  private:
    std::vector<std::optional<std::string>> script_;
    std::size_t calls_ = 0;
};

/// Chat-completions client: POST {model, messages, temperature, max_tokens}
/// to base_url + path, reading choices[0].message.content.
class HttpChatBackend final : public Backend {
  public:
    HttpChatBackend(std::string base_url, std::string path, std::string auth_token);

    std::string complete(const LLMRequest& request) override;
    bool is_deterministic() const override { return false; }
    std::unique_ptr<Backend> clone_with_seed(std::uint64_t) const override;

    static std::string request_body(const LLMRequest& request);
    static std::string extract_content(const std::string& response_body);

  private:
    std::string base_url_;
    std::string path_;
    std::string auth_token_;
};

// ---------------------------------------------------------------------------
// Decision with fallback
// ---------------------------------------------------------------------------

/// Where an LLM agent's action came from. `retry` is 0 for a first-try
/// answer; fallback actions come from max-pressure.
struct Provenance {
    enum class Source { Llm, Fallback };
    Source source = Source::Llm;
    int retry = 0;

    std::string label() const; ///< "llm", "llm-retry-<n>" or "fallback"
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct LLMDecision {
    Phase phase = Phase::ELWL;
    Provenance provenance;
};

struct LLMSettings {
    std::string model = "mock";
    std::string system_prompt = "You are an expert in traffic signal control.";
    double temperature = 0.1;
    int max_tokens = 1024;
    double timeout_seconds = 60.0;
    int retries = 2;
};

LLMRequest make_request(const PromptContext& ctx, const LLMSettings& settings);

/// Asks the backend, retrying up to `retries` times on a parse error or
/// backend failure, then falls back to max-pressure on `pressures`.
LLMDecision decide_with_fallback(Backend& backend, const PromptContext& ctx,
                                 const std::array<int, kNumPhases>& pressures, const LLMSettings& settings);

/// Policy wrapper around one LLM backend.
class LLMPolicy final : public Policy {
  public:
    LLMPolicy(std::unique_ptr<Backend> backend, LLMSettings settings);

    Phase decide(const DecisionContext& ctx) override;
    std::string name() const override { return "llm"; }
    bool is_deterministic() const override { return backend_->is_deterministic(); }

    std::size_t decisions() const { return decisions_; }
    std::size_t fallbacks() const { return fallbacks_; }
    std::size_t retried() const { return retried_; }
    const std::vector<Provenance>& provenance_log() const { return log_; }

  private:
    std::unique_ptr<Backend> backend_;
    LLMSettings settings_;
    std::size_t decisions_ = 0;
    std::size_t fallbacks_ = 0;
    std::size_t retried_ = 0;
    std::vector<Provenance> log_;
};

} // namespace tsc
