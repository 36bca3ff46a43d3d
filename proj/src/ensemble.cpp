#include "tsc/ensemble.hpp"

#include <algorithm>
#include <future>

namespace tsc {

VoteRecord majority_vote(std::span<const Phase> proposals) {
    if (proposals.empty()) {
        throw ContractViolation("majority_vote needs at least one proposal");
    }
    VoteRecord r;
    r.proposals.assign(proposals.begin(), proposals.end());
    for (auto p : proposals) {
        ++r.tally[phase_index(p)];
    }
    r.chosen = phase_from_index(argmax_lowest(r.tally));
    r.unanimous = r.tally[phase_index(r.chosen)] == static_cast<int>(proposals.size());
    return r;
}

std::string vote_record_json(const VoteRecord& r) {
    std::string out = "{\"step\":" + std::to_string(r.step) + ",\"intersection\":" +
                      std::to_string(r.intersection) + ",\"proposals\":[";
    for (std::size_t i = 0; i < r.proposals.size(); ++i) {
        if (i) out += ',';
        out += '"';
        out += phase_code(r.proposals[i]);
        out += '"';
    }
    out += "],\"tally\":[";
    for (std::size_t i = 0; i < r.tally.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(r.tally[i]);
    }
    out += "],\"chosen\":\"";
    out += phase_code(r.chosen);
    out += "\",\"unanimous\":";
    out += r.unanimous ? "true" : "false";
    out += '}';
    return out;
}

EnsembleController::EnsembleController(std::vector<std::unique_ptr<Policy>> agents)
    : agents_(std::move(agents)) {
    if (agents_.empty()) {
        throw ContractViolation("an ensemble needs at least one agent");
    }
    for (const auto& a : agents_) {
        if (!a) {
            throw ContractViolation("ensemble agent must not be null");
        }
    }
}

std::vector<Phase> EnsembleController::sample_actions(const DecisionContext& ctx) {
    std::vector<Phase> proposals;
    proposals.reserve(agents_.size());
    for (auto& agent : agents_) {
        proposals.push_back(agent->decide(ctx));
    }
    return proposals;
}

EnsembleDecision EnsembleController::decide_all(const std::vector<DecisionContext>& contexts) {
    const auto n = agents_.size();
    // proposals[agent][intersection]
    std::vector<std::vector<Phase>> proposals(n, std::vector<Phase>(contexts.size()));
    auto run_agent = [&](std::size_t i) {
        for (std::size_t k = 0; k < contexts.size(); ++k) {
            proposals[i][k] = agents_[i]->decide(contexts[k]);
        }
    };
    if (max_in_flight_ <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            run_agent(i);
        }
    } else {
        for (std::size_t begin = 0; begin < n; begin += max_in_flight_) {
            const auto end = std::min(n, begin + max_in_flight_);
            std::vector<std::future<void>> batch;
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(std::async(std::launch::async, run_agent, i));
            }
            for (auto& f : batch) {
                f.get();
            }
        }
    }

    EnsembleDecision out;
    out.actions.reserve(contexts.size());
    out.votes.reserve(contexts.size());
    std::vector<Phase> column(n);
    for (std::size_t k = 0; k < contexts.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = proposals[i][k];
        }
        auto record = majority_vote(column);
        record.intersection = contexts[k].observation.intersection;
        record.step = contexts[k].step;
        out.actions.push_back(record.chosen);
        out.votes.push_back(std::move(record));
    }
    return out;
}

Phase EnsembleController::decide(const DecisionContext& ctx) {
    const auto proposals = sample_actions(ctx);
    return majority_vote(proposals).chosen;
}

std::string EnsembleController::name() const {
    return agents_.front()->name() + "x" + std::to_string(agents_.size());
}

bool EnsembleController::is_deterministic() const {
    return std::all_of(agents_.begin(), agents_.end(), [](const auto& a) { return a->is_deterministic(); });
}

} // namespace tsc
