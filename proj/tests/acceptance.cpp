// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.
#include "tsc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

using namespace tsc;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_seconds, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget_seconds) {
        o.pass = false;
        o.detail += " [over time budget]";
    }
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s (%.2f s / %.0f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs,
                budget_seconds);
    std::fflush(stdout);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string num(double v, int precision = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

RunConfig grid_run(const std::string& controller, std::int64_t rows, std::int64_t cols, double lambda,
                   std::uint64_t seed) {
    RunConfig c;
    c.grid = SyntheticGridSpec{rows, cols, DemandProfile::Uniform, lambda, 0};
    c.controller = controller;
    c.seed = seed;
    return c;
}

bool same_report(const MetricsReport& a, const MetricsReport& b) {
    return a.att == b.att && a.aql == b.aql && a.awt == b.awt && a.t_total == b.t_total &&
           a.waiting_total == b.waiting_total && a.n_exited == b.n_exited && a.n_entered == b.n_entered &&
           a.mean_queue_trace == b.mean_queue_trace && a.mean_waiting_trace == b.mean_waiting_trace;
}

double mean(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

Outcome voting_oracle() {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> n(1, 10), a(0, 3);
    int agree = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<Phase> v;
        const int len = n(rng);
        for (int j = 0; j < len; ++j) v.push_back(phase_from_index(static_cast<std::size_t>(a(rng))));
        std::array<int, 4> counts{};
        for (auto p : v) ++counts[phase_index(p)];
        std::size_t oracle = 0;
        for (std::size_t k = 1; k < 4; ++k)
            if (counts[k] > counts[oracle]) oracle = k;
        agree += phase_index(majority_vote(v).chosen) == oracle ? 1 : 0;
    }
    return {agree == 10000, std::to_string(agree) + "/10000 agree"};
}

Outcome transparency() {
    bool ok = true;
    std::string detail;
    for (const std::string controller : {"fixed", "maxpressure"}) {
        auto c = grid_run(controller, 3, 3, 0.08, 11);
        std::unique_ptr<Policy> bare;
        if (controller == "fixed") bare = std::make_unique<FixedTimePolicy>();
        else bare = std::make_unique<MaxPressurePolicy>();
        const auto reference = run_bare(c, *bare);
        for (int n : {1, 5}) {
            c.agents = n;
            const bool same = same_report(run(c).report, reference);
            ok = ok && same;
            detail += controller + " N=" + std::to_string(n) + (same ? " identical; " : " DIFFERS; ");
        }
    }
    return {ok, detail};
}

Outcome trend() {
    const double lambda = 0.05;
    bool ok = true;
    std::vector<double> fixed_att, mp_att, fixed_aql;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto f = run(grid_run("fixed", 3, 4, lambda, seed)).report;
        const auto m = run(grid_run("maxpressure", 3, 4, lambda, seed)).report;
        if (!f.att || !m.att) return {false, "no vehicle exited"};
        fixed_att.push_back(*f.att);
        mp_att.push_back(*m.att);
        fixed_aql.push_back(f.aql);
        ok = ok && f.aql > 20.0 && *m.att <= 0.9 * *f.att;
    }
    const double gain = 1.0 - mean(mp_att) / mean(fixed_att);
    return {ok, "lambda " + num(lambda) + ": fixed ATT " + num(mean(fixed_att)) + " (AQL " + num(mean(fixed_aql)) +
                    "), max-pressure ATT " + num(mean(mp_att)) + ", reduction " + num(100 * gain, 1) +
                    "% (every seed >= 10%)"};
}

Outcome learning_signal() {
    auto c = grid_run("mplight", 1, 1, 0.1, 0);
    c.mplight.episodes = 50;
    const auto dir = std::filesystem::temp_directory_path() / "tsc_acceptance_mplight";
    std::filesystem::remove_all(dir);
    c.out_dir = dir;
    const auto trained = train_mplight(c);
    double first = 0, last = 0;
    for (int i = 0; i < 5; ++i) {
        first += trained.curve[i].mean_reward / 5;
        last += trained.curve[45 + i].mean_reward / 5;
    }
    auto eval = c;
    eval.out_dir.reset();
    eval.mplight.weights_dir = dir;
    const auto frozen = run(eval).report;
    const auto fixed = run(grid_run("fixed", 1, 1, 0.1, 0)).report;
    const bool reward_ok = last >= first + 0.2 * std::abs(first);
    const bool att_ok = frozen.att && fixed.att && *frozen.att <= *fixed.att;
    return {reward_ok && att_ok, "reward first5 " + num(first) + " -> last5 " + num(last) + " (" +
                                     num(100 * (last - first) / std::abs(first), 1) + "%), frozen ATT " +
                                     num(frozen.att.value_or(NAN)) + " vs fixed " + num(fixed.att.value_or(NAN))};
}

Outcome gradients() {
    double worst = 0;
    for (std::uint64_t point = 0; point < 20; ++point) {
        auto net = QNetwork::standard(32, 1000 + point);
        std::mt19937_64 rng(point);
        std::uniform_real_distribution<double> u(0, 1);
        std::vector<double> inputs;
        std::vector<std::size_t> actions;
        std::vector<double> targets;
        for (int b = 0; b < 8; ++b) {
            for (std::size_t i = 0; i < kStateSize; ++i) inputs.push_back(u(rng));
            actions.push_back(rng() % 4);
            targets.push_back(u(rng) * 2 - 1);
        }
        std::vector<double> grad;
        net.loss_and_gradient(inputs, actions, targets, grad);
        auto params = net.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const float original = params[i];
            params[i] = original + 1e-4f;
            const double up = net.loss(inputs, actions, targets);
            const double hi = params[i];
            params[i] = original - 1e-4f;
            const double down = net.loss(inputs, actions, targets);
            const double lo = params[i];
            params[i] = original;
            const double numeric = (up - down) / (hi - lo);
            const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
            worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
        }
    }
    return {worst < 1e-4, "max relative error " + std::to_string(worst) + " over 20 points"};
}

std::vector<RunConfig> ci_scenarios() {
    std::vector<RunConfig> out;
    const std::filesystem::path dir = std::filesystem::path(TSC_SOURCE_DIR) / "scenarios";
    for (const char* f : {"jinan-like.json", "hangzhou-like.json", "ci-peak-2x2.json", "ci-routes-1x2.json"}) {
        RunConfig c;
        c.scenario_path = dir / f;
        out.push_back(c);
    }
    out.push_back(grid_run("fixed", 3, 3, 0.15, 0));
    return out;
}

Outcome conservation_and_determinism() {
    std::size_t ticks = 0;
    bool conserved = true;
    for (const auto& c : ci_scenarios()) {
        const auto scenario = resolve_scenario(c);
        Environment env(scenario.network, scenario.demand, make_sim_config(c, scenario));
        env.set_tick_observer([&](const Environment& e) {
            ++ticks;
            conserved = conserved && e.conservation_holds() &&
                        e.vehicles_entered() == e.vehicles_exited() + e.vehicles_on_network();
        });
        env.reset();
        MaxPressurePolicy mp;
        while (!env.finished()) {
            std::vector<Phase> actions;
            for (const auto& ctx : make_contexts(env, static_cast<std::size_t>(env.steps_taken())))
                actions.push_back(mp.decide(ctx));
            env.step(actions);
        }
    }

    bool identical = true;
    const auto base = std::filesystem::temp_directory_path() / "tsc_acceptance_replay";
    std::filesystem::remove_all(base);
    for (auto c : ci_scenarios()) {
        c.controller = "llm";
        c.agents = 3;
        c.llm.kind = "mock-stochastic";
        c.record_events = true;
        std::vector<std::string> outputs[2];
        for (int rep = 0; rep < 2; ++rep) {
            const auto dir = base / (c.resolved_scenario_name() + std::to_string(rep));
            c.out_dir = dir;
            c.vote_log = dir / "votes.ndjson";
            run(c);
            for (const char* f : {"results.csv", "report.md", "votes.ndjson", "events_seed0.log"})
                outputs[rep].push_back(slurp(dir / f));
        }
        identical = identical && outputs[0] == outputs[1];
    }
    return {conserved && identical, std::to_string(ticks) + " ticks checked, conservation " +
                                        (conserved ? "held" : "BROKEN") + "; replay files " +
                                        (identical ? "byte-identical" : "DIFFER")};
}

Outcome prompt_protocol() {
    ObservationState obs;
    obs.current_phase = Phase::ETWT;
    obs.queued = {1, 0, 2, 3, 4, 5, 0, 1};
    obs.approaching = {{{0, 1, 2}, {1, 0, 0}, {0, 0, 0}, {2, 1, 0}, {3, 2, 1}, {0, 0, 4}, {1, 1, 1}, {0, 2, 0}}};
    const auto golden = slurp(std::filesystem::path(TSC_SOURCE_DIR) / "tests/golden/prompt_canonical.txt");
    const bool golden_ok = !golden.empty() && build_prompt({obs}) == golden;

    bool parse_ok = true;
    for (auto p : kAllPhases) parse_ok = parse_ok && parse_signal("<signal>" + std::string(phase_code(p)) + "</signal>") == p;
    bool rejects = false;
    try {
        parse_signal("I would pick the through lanes.");
    } catch (const SignalParseError&) {
        rejects = true;
    }

    ScriptedBackend bad({std::string("no tag here")});
    LLMSettings s;
    s.retries = 2;
    const auto d = decide_with_fallback(bad, {obs}, {0, 7, 1, 2}, s);
    const bool fallback_ok = d.phase == Phase::NLSL && d.provenance.label() == "fallback" && bad.calls() == 3;
    return {golden_ok && parse_ok && rejects && fallback_ok,
            std::string("golden ") + (golden_ok ? "match" : "MISMATCH") + ", round-trip " + (parse_ok ? "ok" : "BAD") +
                ", tagless " + (rejects ? "rejected" : "ACCEPTED") + ", fallback after 3 calls " +
                (fallback_ok ? "recorded" : "WRONG")};
}

Outcome stochastic_ensemble() {
    auto config_for = [](int agents, std::uint64_t seed) {
        auto c = grid_run("llm", 1, 1, 0.1, seed);
        c.agents = agents;
        c.llm.kind = "mock-stochastic";
        c.llm.error_rate = 0.2;
        return c;
    };
    std::vector<double> att1, att10, dis1, dis10;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = run(config_for(1, seed));
        const auto b = run(config_for(10, seed));
        att1.push_back(a.report.att.value_or(NAN));
        att10.push_back(b.report.att.value_or(NAN));
        dis1.push_back(a.oracle_disagreement);
        dis10.push_back(b.oracle_disagreement);
    }
    const bool ok = mean(att10) <= mean(att1) && mean(dis10) < mean(dis1);
    return {ok, "ATT N=10 " + num(mean(att10)) + " vs N=1 " + num(mean(att1)) + "; disagreement N=10 " +
                    num(mean(dis10), 4) + " vs N=1 " + num(mean(dis1), 4)};
}

Outcome metrics_audit() {
    // 500 scheduled vehicles driving straight across a 2x2 grid.
    RoadNetwork net(2, 2);
    Demand demand;
    std::mt19937_64 rng(3);
    const auto& entries = net.entry_points();
    for (int i = 0; i < 500; ++i) {
        const auto e = entries[rng() % entries.size()];
        const auto heading = opposite(e.approach);
        Route route;
        std::optional<IntersectionId> k = e.intersection;
        while (k) {
            route.push_back({*k, heading});
            k = net.neighbor(*k, heading);
        }
        demand.vehicles.push_back({i * 6.0, e, route});
    }
    SimConfig sim;
    sim.record_events = true;
    Environment env(net, demand, sim);
    env.reset();
    MetricsAccumulator acc(net.size());
    FixedTimePolicy fixed;
    std::vector<double> step_end;
    while (!env.finished()) {
        std::vector<Phase> actions;
        for (const auto& ctx : make_contexts(env, static_cast<std::size_t>(env.steps_taken())))
            actions.push_back(fixed.decide(ctx));
        env.step(actions);
        step_end.push_back(env.clock());
        acc.record_step(env.last_step());
        for (auto id : env.last_step().exited) acc.record_exit(env.vehicle(id));
    }
    acc.set_entered(env.vehicles_entered());
    const auto report = acc.finalize();

    // Rebuild queue length per step end from JoinQueue/Discharge events.
    const auto& events = env.events();
    std::size_t e = 0;
    long queued = 0;
    double total = 0;
    for (double t_end : step_end) {
        while (e < events.size() && events[e].time <= t_end) {
            if (events[e].kind == EventKind::JoinQueue) ++queued;
            if (events[e].kind == EventKind::Discharge) --queued;
            ++e;
        }
        total += static_cast<double>(queued);
    }
    const double aql_events = total / static_cast<double>(step_end.size());
    const double rel_att = std::abs(*report.att * static_cast<double>(report.n_exited) - report.t_total) / report.t_total;
    const bool ok = env.vehicles_spawned() == 500 && rel_att <= 1e-9 &&
                    std::abs(aql_events - report.aql) <= 1e-9 * std::max(1.0, report.aql);
    return {ok, std::to_string(report.n_exited) + "/500 exited; |ATT*n - T_total|/T_total = " +
                    std::to_string(rel_att) + "; AQL events " + num(aql_events, 6) + " vs streamed " +
                    num(report.aql, 6)};
}

} // namespace

int main() {
    criterion(1, "Voting oracle equivalence", 1, voting_oracle);
    criterion(2, "Ensemble transparency", 10, transparency);
    criterion(3, "Trend reproduction (max-pressure vs fixed)", 60, trend);
    criterion(4, "MPLight learning signal", 300, learning_signal);
    criterion(5, "Gradient correctness", 10, gradients);
    criterion(6, "Conservation and determinism", 30, conservation_and_determinism);
    criterion(7, "Prompt protocol fidelity", 1, prompt_protocol);
    criterion(8, "Ensemble effect on stochastic agents", 120, stochastic_ensemble);
    criterion(9, "Metrics formula audit", 10, metrics_audit);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures;
}
