#include "tsc/llm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace tsc {

namespace {

constexpr std::string_view kPromptPrefix =
    "A traffic light regulates a four-section intersection with northern, southern, eastern, and western "
    "sections, each containing two lanes: one for through traffic and one for left-turns. Each lane is further "
    "divided into three segments. Segment 1 is the closest to the intersection. Segment 2 is in the middle. "
    "Segment 3 is the farthest. In a lane, there may be early queued vehicles and approaching vehicles "
    "traveling in different segments. Early queued vehicles have arrived at the intersection and await passage "
    "permission. Approaching vehicles will arrive at the intersection in the future. The traffic light has 4 "
    "signal phases. Each signal relieves vehicles' flow in the group of two specific lanes. The state of the "
    "intersection is listed below. It describes:\n"
    "\n"
    "- The group of lanes relieving vehicles' flow under each signal phase.\n"
    "\n"
    "- The number of early queued vehicles of the allowed lanes of each signal.\n"
    "\n"
    "- The number of approaching vehicles in different segments of the allowed lanes of each signal.\n"
    "\n";

constexpr std::string_view kPromptSuffix =
    "\n"
    "Please answer:\n"
    "Which is the most effective traffic signal that will most significantly improve the traffic condition "
    "during the next phase?\n"
    "Requirements:\n"
    "\n"
    "- Let's think step by step.\n"
    "\n"
    "- You can only choose one of the signals listed above.\n"
    "\n"
    "- You must follow the following steps to provide your analysis:\n"
    "\n"
    "Step 1: Provide your analysis for identifying the optimal traffic signal.\n"
    "\n"
    "Step 2: Answer your chosen signal.\n"
    "\n"
    "- Your choice can only be given after finishing the analysis.\n"
    "\n"
    "- Your choice must be identified by the tag: <signal>YOUR_CHOICE</signal>.\n";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string mock_answer(Phase chosen, const std::array<int, kNumPhases>& queued) {
    std::ostringstream out;
    out << "Step 1: Early queued vehicles per signal:";
    for (auto p : kAllPhases) {
        out << ' ' << phase_code(p) << '=' << queued[phase_index(p)];
    }
    out << ". Releasing " << phase_code(chosen) << " serves the lanes under consideration.\n";
    out << "Step 2: <signal>" << phase_code(chosen) << "</signal>";
    return out.str();
}

/// Early-queued totals per signal as listed in the prompt's state section.
std::array<int, kNumPhases> queued_totals_from_prompt(std::string_view prompt) {
    std::array<int, kNumPhases> totals{};
    std::array<bool, kNumPhases> seen{};
    std::optional<Phase> current;
    std::size_t pos = 0;
    while (pos < prompt.size()) {
        auto end = prompt.find('\n', pos);
        if (end == std::string_view::npos) end = prompt.size();
        const auto line = prompt.substr(pos, end - pos);
        pos = end + 1;
        constexpr std::string_view kSignal = "Signal: ";
        constexpr std::string_view kQueued = "- Early queued: ";
        if (line.starts_with(kSignal)) {
            current = parse_phase_code(trim(line.substr(kSignal.size())));
        } else if (current && line.starts_with(kQueued)) {
            // "... , <n> (Total)"
            const auto total_pos = line.rfind(" (Total)");
            const auto comma = line.rfind(", ", total_pos);
            if (total_pos == std::string_view::npos || comma == std::string_view::npos) {
                continue;
            }
            const auto digits = line.substr(comma + 2, total_pos - comma - 2);
            int n = 0;
            if (std::from_chars(digits.data(), digits.data() + digits.size(), n).ec == std::errc{}) {
                totals[phase_index(*current)] = n;
                seen[phase_index(*current)] = true;
            }
        }
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
        throw BackendError("prompt does not contain a complete state section");
    }
    return totals;
}

std::string user_prompt(const LLMRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == "user") {
            return it->content;
        }
    }
    throw BackendError("request has no user message");
}

} // namespace

std::string_view prompt_prefix() { return kPromptPrefix; }
std::string_view prompt_suffix() { return kPromptSuffix; }

std::string_view phase_lane_description(Phase p) {
    switch (p) {
    case Phase::ELWL:
        return "Eastern and western left-turn lanes";
    case Phase::NLSL:
        return "Northern and southern left-turn lanes";
    case Phase::ETWT:
        return "Eastern and western through lanes";
    case Phase::NTST:
        return "Northern and southern through lanes";
    }
    return "";
}

std::string render_state_block(const ObservationState& obs) {
    std::ostringstream out;
    for (auto p : kAllPhases) {
        const auto slots = phase_slots(p);
        const auto a = lane_label(slots[0]);
        const auto b = lane_label(slots[1]);
        if (p != Phase::ELWL) {
            out << '\n';
        }
        out << "Signal: " << phase_code(p) << '\n';
        out << "Allowed lanes: " << phase_lane_description(p) << '\n';
        const int qa = obs.queued[slots[0]];
        const int qb = obs.queued[slots[1]];
        out << "- Early queued: " << qa << " (" << a << "), " << qb << " (" << b << "), " << qa + qb
            << " (Total)\n";
        for (std::size_t seg = 0; seg < kSegments; ++seg) {
            const int sa = obs.approaching[slots[0]][seg];
            const int sb = obs.approaching[slots[1]][seg];
            out << "- Segment " << seg + 1 << ": " << sa << " (" << a << "), " << sb << " (" << b << "), "
                << sa + sb << " (Total)\n";
        }
    }
    return out.str();
}

std::string build_prompt(const PromptContext& ctx) {
    std::string out(kPromptPrefix);
    out += render_state_block(ctx.observation);
    out += kPromptSuffix;
    return out;
}

Phase parse_signal(std::string_view raw) {
    const auto text = lower(raw);
    constexpr std::string_view open = "<signal>";
    constexpr std::string_view close = "</signal>";
    const auto start = text.rfind(open);
    if (start == std::string::npos) {
        throw SignalParseError("no <signal> tag in response");
    }
    const auto body = start + open.size();
    const auto end = text.find(close, body);
    if (end == std::string::npos) {
        throw SignalParseError("unterminated <signal> tag");
    }
    const auto code = trim(raw.substr(body, end - body));
    const auto phase = parse_phase_code(code);
    if (!phase) {
        throw SignalParseError("unknown signal code '" + std::string(code) + "'");
    }
    return *phase;
}

Phase queue_oracle_from_prompt(std::string_view prompt) {
    return phase_from_index(argmax_lowest(queued_totals_from_prompt(prompt)));
}

std::string DeterministicMockBackend::complete(const LLMRequest& request) {
    const auto prompt = user_prompt(request);
    const auto totals = queued_totals_from_prompt(prompt);
    return mock_answer(phase_from_index(argmax_lowest(totals)), totals);
}

std::unique_ptr<Backend> DeterministicMockBackend::clone_with_seed(std::uint64_t) const {
    return std::make_unique<DeterministicMockBackend>();
}

StochasticMockBackend::StochasticMockBackend(std::uint64_t seed, double error_rate)
    : rng_(seed), error_rate_(error_rate) {
    if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
        throw ConfigError("mock error rate must lie in [0, 1]");
    }
}

std::string StochasticMockBackend::complete(const LLMRequest& request) {
    const auto prompt = user_prompt(request);
    const auto totals = queued_totals_from_prompt(prompt);
    auto chosen = argmax_lowest(totals);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng_) < error_rate_) {
        std::uniform_int_distribution<std::size_t> other(1, kNumPhases - 1);
        chosen = (chosen + other(rng_)) % kNumPhases;
    }
    return mock_answer(phase_from_index(chosen), totals);
}

std::unique_ptr<Backend> StochasticMockBackend::clone_with_seed(std::uint64_t seed) const {
    return std::make_unique<StochasticMockBackend>(seed, error_rate_);
}

ScriptedBackend::ScriptedBackend(std::vector<std::optional<std::string>> script) : script_(std::move(script)) {
    if (script_.empty()) {
        throw ContractViolation("scripted backend needs at least one entry");
    }
}

std::string ScriptedBackend::complete(const LLMRequest&) {
    const auto& entry = script_[std::min(calls_, script_.size() - 1)];
    ++calls_;
    if (!entry) {
        throw BackendTimeout("scripted timeout");
    }
    return *entry;
}

std::unique_ptr<Backend> ScriptedBackend::clone_with_seed(std::uint64_t) const {
    return std::make_unique<ScriptedBackend>(script_);
}

std::string Provenance::label() const {
    if (source == Source::Fallback) {
        return "fallback";
    }
    return retry == 0 ? "llm" : "llm-retry-" + std::to_string(retry);
}

LLMRequest make_request(const PromptContext& ctx, const LLMSettings& settings) {
    LLMRequest r;
    if (!settings.system_prompt.empty()) {
        r.messages.push_back({"system", settings.system_prompt});
    }
    r.messages.push_back({"user", build_prompt(ctx)});
    r.temperature = settings.temperature;
    r.max_tokens = settings.max_tokens;
    r.model = settings.model;
    r.timeout_seconds = settings.timeout_seconds;
    return r;
}

LLMDecision decide_with_fallback(Backend& backend, const PromptContext& ctx,
                                 const std::array<int, kNumPhases>& pressures, const LLMSettings& settings) {
    const auto request = make_request(ctx, settings);
    for (int attempt = 0; attempt <= std::max(0, settings.retries); ++attempt) {
        try {
            const auto raw = backend.complete(request);
            return {parse_signal(raw), {Provenance::Source::Llm, attempt}};
        } catch (const BackendError&) {
        } catch (const SignalParseError&) {
        }
    }
    return {maxpressure_decide(pressures), {Provenance::Source::Fallback, settings.retries}};
}

LLMPolicy::LLMPolicy(std::unique_ptr<Backend> backend, LLMSettings settings)
    : backend_(std::move(backend)), settings_(std::move(settings)) {
    if (!backend_) {
        throw ContractViolation("LLMPolicy needs a backend");
    }
}

Phase LLMPolicy::decide(const DecisionContext& ctx) {
    const auto d = decide_with_fallback(*backend_, {ctx.observation}, ctx.pressures, settings_);
    ++decisions_;
    if (d.provenance.source == Provenance::Source::Fallback) {
        ++fallbacks_;
    } else if (d.provenance.retry > 0) {
        ++retried_;
    }
    log_.push_back(d.provenance);
    return d.phase;
}

} // namespace tsc
