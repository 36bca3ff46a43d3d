#pragma once

#include "tsc/policy.hpp"

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tsc {

/// Outcome of one plurality vote at one intersection.
struct VoteRecord {
    IntersectionId intersection = 0;
    std::size_t step = 0;
    std::vector<Phase> proposals;         ///< in agent order
    std::array<int, kNumPhases> tally{};  ///< sums to proposals.size()
    Phase chosen = Phase::ELWL;
    bool unanimous = false;
};

/// a* = argmax_a sum_i [a_i == a], ties broken towards the lowest phase index.
/// Throws ContractViolation on an empty proposal list.
VoteRecord majority_vote(std::span<const Phase> proposals);

/// Newline-free JSON object describing a vote, for audit logs.
std::string vote_record_json(const VoteRecord& record);

struct EnsembleDecision {
    std::vector<Phase> actions;
    std::vector<VoteRecord> votes;
};

/// Sampling-and-voting controller: each of N independent agents proposes a
/// phase for an intersection, and the plurality phase is executed.
class EnsembleController final : public Policy {
  public:
    explicit EnsembleController(std::vector<std::unique_ptr<Policy>> agents);

    std::size_t size() const { return agents_.size(); }
    Policy& agent(std::size_t i) { return *agents_.at(i); }

    /// Queries agents concurrently when > 1. Each agent still sees the
    /// intersections in order, so seeded agents stay reproducible.
    void set_max_in_flight(std::size_t n) { max_in_flight_ = n == 0 ? 1 : n; }

    /// One proposal per agent, in agent order. No agent sees another's output.
    std::vector<Phase> sample_actions(const DecisionContext& ctx);

    /// Sample and vote for every intersection; output order follows input.
    EnsembleDecision decide_all(const std::vector<DecisionContext>& contexts);

    Phase decide(const DecisionContext& ctx) override;
    std::string name() const override;
    bool is_deterministic() const override;

  private:
    std::vector<std::unique_ptr<Policy>> agents_;
    std::size_t max_in_flight_ = 1;
};

} // namespace tsc
