#include "support.hpp"

#include "tsc/ensemble.hpp"
#include "tsc/llm.hpp"

#include <doctest.h>

#include <algorithm>

using namespace tsc;

namespace {

/// Proposes a scripted phase per call.
class ScriptPolicy final : public Policy {
  public:
    explicit ScriptPolicy(std::vector<Phase> script) : script_(std::move(script)) {}
    Phase decide(const DecisionContext&) override { return script_[calls_++ % script_.size()]; }
    std::string name() const override { return "script"; }
    bool is_deterministic() const override { return true; }

  private:
    std::vector<Phase> script_;
    std::size_t calls_ = 0;
};

std::size_t brute_force(const std::vector<Phase>& v) {
    std::size_t best = 0;
    long best_count = -1;
    for (std::size_t a = 0; a < kNumPhases; ++a) {
        const auto c = std::count(v.begin(), v.end(), phase_from_index(a));
        if (c > best_count) {
            best = a;
            best_count = c;
        }
    }
    return best;
}

std::vector<Phase> phases(std::initializer_list<int> xs) {
    std::vector<Phase> out;
    for (int x : xs) out.push_back(phase_from_index(static_cast<std::size_t>(x)));
    return out;
}

} // namespace

TEST_CASE("majority vote examples") {
    const auto v = majority_vote(phases({2, 2, 1, 2, 0}));
    CHECK(v.chosen == Phase::ETWT);
    CHECK(v.tally[2] == 3);
    CHECK_FALSE(v.unanimous);
    CHECK(majority_vote(phases({0, 1})).chosen == Phase::ELWL);
    CHECK(majority_vote(phases({3, 3})).unanimous);
    CHECK_THROWS_AS(majority_vote(std::vector<Phase>{}), ContractViolation);
}

TEST_CASE("majority vote agrees with a count-and-argmax oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> n(1, 10), a(0, 3);
    for (int i = 0; i < 10000; ++i) {
        std::vector<Phase> v;
        const int len = n(rng);
        for (int j = 0; j < len; ++j) v.push_back(phase_from_index(static_cast<std::size_t>(a(rng))));
        const auto rec = majority_vote(v);
        REQUIRE(phase_index(rec.chosen) == brute_force(v));
        int sum = 0;
        for (int t : rec.tally) sum += t;
        REQUIRE(sum == len);
        // the tally, hence the outcome, ignores order
        auto shuffled = v;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        REQUIRE(majority_vote(shuffled).chosen == rec.chosen);
    }
}

TEST_CASE("ensemble of one is the lone policy") {
    std::vector<std::unique_ptr<Policy>> one;
    one.push_back(std::make_unique<FixedTimePolicy>());
    EnsembleController e(std::move(one));
    FixedTimePolicy bare;
    for (std::size_t t = 0; t < 8; ++t) {
        DecisionContext ctx;
        ctx.step = t;
        CHECK(e.sample_actions(ctx) == std::vector<Phase>{bare.decide(ctx)});
    }
    CHECK(e.name() == "fixedx1");
    CHECK(e.is_deterministic());
}

TEST_CASE("identical deterministic agents propose identically") {
    std::vector<std::unique_ptr<Policy>> agents;
    for (int i = 0; i < 5; ++i) agents.push_back(std::make_unique<MaxPressurePolicy>());
    EnsembleController e(std::move(agents));
    DecisionContext ctx;
    ctx.pressures = {0, 4, 1, 0};
    CHECK(e.sample_actions(ctx) == std::vector<Phase>(5, Phase::NLSL));
    auto second = ctx;
    second.observation.intersection = 1;
    const auto d = e.decide_all({ctx, second});
    CHECK(d.actions == std::vector<Phase>{Phase::NLSL, Phase::NLSL});
    for (const auto& v : d.votes) CHECK(v.unanimous);
    CHECK(d.votes[1].intersection == 1);
}

TEST_CASE("seeded stochastic agents reproduce their proposals") {
    auto make = [](std::size_t in_flight) {
        std::vector<std::unique_ptr<Policy>> agents;
        for (std::uint64_t i = 0; i < 10; ++i) {
            agents.push_back(std::make_unique<LLMPolicy>(std::make_unique<StochasticMockBackend>(100 + i, 0.5),
                                                         LLMSettings{}));
        }
        EnsembleController e(std::move(agents));
        e.set_max_in_flight(in_flight);
        return e;
    };
    std::vector<DecisionContext> ctxs(3);
    ctxs[1].observation.queued = {0, 0, 0, 0, 5, 5, 0, 0};
    auto a = make(1);
    auto b = make(1);
    auto c = make(4);
    for (int round = 0; round < 5; ++round) {
        const auto da = a.decide_all(ctxs);
        const auto db = b.decide_all(ctxs);
        const auto dc = c.decide_all(ctxs);
        for (std::size_t k = 0; k < ctxs.size(); ++k) {
            CHECK(da.votes[k].proposals == db.votes[k].proposals);
            CHECK(da.votes[k].proposals == dc.votes[k].proposals);
        }
    }
    CHECK_FALSE(a.is_deterministic());
}

TEST_CASE("hand-tallied mixed proposals") {
    std::vector<std::unique_ptr<Policy>> agents;
    agents.push_back(std::make_unique<ScriptPolicy>(phases({0, 3})));
    agents.push_back(std::make_unique<ScriptPolicy>(phases({1, 3})));
    agents.push_back(std::make_unique<ScriptPolicy>(phases({1, 2})));
    EnsembleController e(std::move(agents));
    // intersection 0 sees [0,1,1] -> 1, intersection 1 sees [3,3,2] -> 3
    const auto d = e.decide_all(std::vector<DecisionContext>(2));
    CHECK(d.actions == phases({1, 3}));
    CHECK(d.votes[0].tally == std::array<int, 4>{1, 2, 0, 0});
    CHECK(d.votes[1].tally == std::array<int, 4>{0, 0, 1, 2});
}

TEST_CASE("vote records serialize to one line") {
    auto v = majority_vote(phases({2, 2, 1}));
    v.intersection = 4;
    v.step = 7;
    CHECK(vote_record_json(v) ==
          R"({"step":7,"intersection":4,"proposals":["ETWT","ETWT","NLSL"],"tally":[0,1,2,0],"chosen":"ETWT","unanimous":false})");
}

TEST_CASE("an ensemble needs agents") {
    CHECK_THROWS_AS(EnsembleController(std::vector<std::unique_ptr<Policy>>{}), ContractViolation);
}
