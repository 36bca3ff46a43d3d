#pragma once

#include "tsc/environment.hpp"
#include "tsc/types.hpp"

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace tsc {

/// Everything a controller may look at when choosing a phase for one
/// intersection. A value snapshot; policies never touch the environment.
struct DecisionContext {
    ObservationState observation;
    std::array<int, kNumPhases> pressures{};
    std::size_t step = 0; ///< decision step index t
};

DecisionContext make_context(const Environment& env, IntersectionId k, std::size_t step);
std::vector<DecisionContext> make_contexts(const Environment& env, std::size_t step);

class Policy {
  public:
    virtual ~Policy() = default;
    virtual Phase decide(const DecisionContext& ctx) = 0;
    virtual std::string name() const = 0;
    virtual bool is_deterministic() const = 0;
};

/// Index of the largest value; ties go to the lowest index.
template <typename T, std::size_t N>
std::size_t argmax_lowest(const std::array<T, N>& values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < N; ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

Phase fixed_decide(const std::vector<Phase>& cycle, std::size_t step);
Phase maxpressure_decide(const std::array<int, kNumPhases>& pressures);

/// Cycles through a fixed phase list, one entry per decision step,
/// regardless of traffic.
class FixedTimePolicy final : public Policy {
  public:
    FixedTimePolicy();
    explicit FixedTimePolicy(std::vector<Phase> cycle);

    Phase decide(const DecisionContext& ctx) override;
    std::string name() const override { return "fixed"; }
    bool is_deterministic() const override { return true; }

    const std::vector<Phase>& cycle() const { return cycle_; }

  private:
    std::vector<Phase> cycle_;
};

/// Chooses the phase with the largest pressure.
class MaxPressurePolicy final : public Policy {
  public:
    Phase decide(const DecisionContext& ctx) override;
    std::string name() const override { return "maxpressure"; }
    bool is_deterministic() const override { return true; }
};

} // namespace tsc
