#include "tsc/policy.hpp"

namespace tsc {

DecisionContext make_context(const Environment& env, IntersectionId k, std::size_t step) {
    return {env.observe(k), env.phase_pressures(k), step};
}

std::vector<DecisionContext> make_contexts(const Environment& env, std::size_t step) {
    std::vector<DecisionContext> out;
    out.reserve(env.intersection_count());
    for (IntersectionId k = 0; k < env.intersection_count(); ++k) {
        out.push_back(make_context(env, k, step));
    }
    return out;
}

Phase fixed_decide(const std::vector<Phase>& cycle, std::size_t step) {
    if (cycle.empty()) {
        throw ContractViolation("fixed-time cycle must not be empty");
    }
    return cycle[step % cycle.size()];
}

Phase maxpressure_decide(const std::array<int, kNumPhases>& pressures) {
    return phase_from_index(argmax_lowest(pressures));
}

FixedTimePolicy::FixedTimePolicy() : cycle_(kAllPhases.begin(), kAllPhases.end()) {}

FixedTimePolicy::FixedTimePolicy(std::vector<Phase> cycle) : cycle_(std::move(cycle)) {
    if (cycle_.empty()) {
        throw ContractViolation("fixed-time cycle must not be empty");
    }
}

Phase FixedTimePolicy::decide(const DecisionContext& ctx) { return fixed_decide(cycle_, ctx.step); }

Phase MaxPressurePolicy::decide(const DecisionContext& ctx) { return maxpressure_decide(ctx.pressures); }

} // namespace tsc
