#include "support.hpp"

#include "tsc/harness.hpp"

#include <doctest.h>

using namespace tsc;

namespace {

RunConfig grid_config(const std::string& controller, std::int64_t rows = 2, std::int64_t cols = 2,
                      double lambda = 0.05) {
    RunConfig c;
    c.grid = SyntheticGridSpec{rows, cols, DemandProfile::Uniform, lambda, 1};
    c.controller = controller;
    return c;
}

} // namespace

TEST_CASE("a default run takes T/tau decision steps") {
    const auto r = run(grid_config("maxpressure"));
    CHECK(r.decision_steps == 120);
    CHECK(r.report.mean_queue_trace.size() == 120);
    CHECK(r.report.n_exited > 0);
    CHECK(r.unanimity_rate == 1.0);
    CHECK(r.oracle_disagreement == 0.0);

    auto c = grid_config("fixed");
    c.duration_seconds = 600;
    c.tau_seconds = 20;
    CHECK(run(c).decision_steps == 30);
}

TEST_CASE("empty demand gives zero queues and exits") {
    auto c = grid_config("fixed", 2, 2, 0.0);
    const auto r = run(c);
    CHECK(r.report.aql == 0.0);
    CHECK(r.report.n_exited == 0);
    CHECK_FALSE(r.report.att.has_value());
}

TEST_CASE("config validation") {
    auto c = grid_config("fixed");
    c.agents = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = grid_config("nope");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = grid_config("fixed");
    c.duration_seconds = 100;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = grid_config("fixed");
    c.scenario_path = "x.json";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = grid_config("llm");
    c.llm.kind = "http";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = grid_config("fixed");
    c.scenario_path = fixture::source_dir() / "scenarios/missing.json";
    c.grid.reset();
    CHECK_THROWS_AS(run(c), ScenarioError);
}

TEST_CASE("config JSON round-trip and unknown keys") {
    auto c = grid_config("llm", 3, 4, 0.07);
    c.agents = 5;
    c.seed = 12;
    c.llm.kind = "mock-stochastic";
    c.llm.error_rate = 0.3;
    const auto doc = config_to_json(c);
    const auto back = config_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(config_to_json(back) == doc);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"controler", "fixed"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"agents", "five"}}), ConfigError);
}

TEST_CASE("same config and seed produce byte-identical files") {
    auto c = grid_config("llm", 2, 2, 0.08);
    c.agents = 3;
    c.llm.kind = "mock-stochastic";
    c.record_events = true;
    const auto a = fixture::temp_dir("replay_a");
    const auto b = fixture::temp_dir("replay_b");
    c.out_dir = a;
    c.vote_log = a / "votes.ndjson";
    run(c);
    c.out_dir = b;
    c.vote_log = b / "votes.ndjson";
    run(c);
    for (const char* f : {"results.csv", "report.md", "events_seed0.log", "votes.ndjson"}) {
        INFO(f);
        const auto x = fixture::slurp(a / f);
        CHECK_FALSE(x.empty());
        CHECK(x == fixture::slurp(b / f));
    }
    const auto votes = fixture::slurp(a / "votes.ndjson");
    CHECK(std::count(votes.begin(), votes.end(), '\n') == 120 * 4);
}

TEST_CASE("multi-seed runs report mean and spread") {
    auto c = grid_config("fixed");
    const auto dir = fixture::temp_dir("seeds");
    c.out_dir = dir;
    const auto results = run_seeds(c, parse_seed_list("0..2"));
    CHECK(results.size() == 3);
    const auto csv = fixture::slurp(dir / "results.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(fixture::slurp(dir / "report.md").find("±") != std::string::npos);
}

TEST_CASE("seed lists") {
    CHECK(parse_seed_list("0..3") == std::vector<std::uint64_t>{0, 1, 2, 3});
    CHECK(parse_seed_list("4,1,9") == std::vector<std::uint64_t>{4, 1, 9});
    CHECK(parse_seed_list("7") == std::vector<std::uint64_t>{7});
    CHECK_THROWS_AS(parse_seed_list("3..1"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("a"), ConfigError);
}

TEST_CASE("compare builds one row per method and agent count") {
    std::vector<RunConfig> configs{grid_config("fixed", 3, 4), grid_config("maxpressure", 3, 4)};
    const auto table = compare(configs, 2);
    REQUIRE(table.rows.size() == 2);
    const auto& s = table.scenarios.front();
    CHECK(*table.rows[1].by_scenario.at(s).att.mean < *table.rows[0].by_scenario.at(s).att.mean);
    const auto md = table.to_markdown();
    CHECK(md.find("| Max pressure (1 agent) | **") != std::string::npos);
    CHECK(table.to_csv().rfind(csv_header(), 0) == 0);

    CHECK_THROWS_AS(compare({grid_config("fixed")}), ContractViolation);
    CHECK_THROWS_AS(compare({grid_config("fixed", 2, 2), grid_config("maxpressure", 3, 3)}), ContractViolation);
}

TEST_CASE("mplight rows share the scenario columns") {
    std::vector<RunConfig> configs;
    for (int n : {1, 5, 10}) {
        auto c = grid_config("mplight", 1, 1);
        c.agents = n;
        c.duration_seconds = 300;
        c.mplight.episodes = 1;
        configs.push_back(c);
    }
    const auto table = compare(configs);
    REQUIRE(table.rows.size() == 3);
    for (const auto& row : table.rows) {
        CHECK(row.by_scenario.size() == 1);
        CHECK(row.by_scenario.count(table.scenarios.front()) == 1);
    }
}

TEST_CASE("training") {
    auto c = grid_config("mplight", 1, 1);
    c.duration_seconds = 600;
    c.mplight.episodes = 0;
    CHECK_THROWS_AS(train_mplight(c), ConfigError);
    CHECK_THROWS_AS(train_mplight(grid_config("fixed")), ConfigError);

    c.mplight.episodes = 4;
    c.agents = 2;
    const auto dir = fixture::temp_dir("train");
    c.out_dir = dir;
    const auto trained = train_mplight(c);
    CHECK(trained.curve.size() == 4);
    CHECK(trained.weight_files.size() == 2);
    const auto csv = fixture::slurp(dir / "training_curve.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    // frozen weights load back into an evaluation run
    auto eval = c;
    eval.out_dir.reset();
    eval.mplight.weights_dir = dir;
    const auto r = run(eval);
    CHECK(r.training_curve.empty());
    CHECK(r.decision_steps == 20);

    auto again = c;
    again.out_dir = fixture::temp_dir("train_again");
    train_mplight(again);
    CHECK(fixture::slurp(dir / "mplight_agent1.bin") == fixture::slurp(*again.out_dir / "mplight_agent1.bin"));
    CHECK(fixture::slurp(dir / "training_curve.csv") == fixture::slurp(*again.out_dir / "training_curve.csv"));

    auto independent = c;
    independent.out_dir.reset();
    independent.mplight.vote_during_training = false;
    CHECK(train_mplight(independent).curve.size() == 4);
}

TEST_CASE("plans expand scenarios, methods and seeds") {
    const auto dir = fixture::temp_dir("plan");
    const auto plan = nlohmann::json::parse(R"({
        "out": "out",
        "duration": 600,
        "seeds": "0..1",
        "scenarios": [
            {"name": "small", "grid": {"rows": 2, "cols": 2, "lambda": 0.05, "seed": 0}},
            {"name": "routed", "path": "ci-routes-1x2.json"}
        ],
        "methods": [
            {"controller": "fixed"},
            {"controller": "llm", "agents": [1, 3], "llm": {"backend": "mock-stochastic"}}
        ]
    })");
    std::filesystem::copy_file(fixture::source_dir() / "scenarios/ci-routes-1x2.json", dir / "ci-routes-1x2.json");
    const auto table = run_plan(plan, dir, 2);
    CHECK(table.scenarios == std::vector<std::string>{"small", "routed"});
    CHECK(table.rows.size() == 3);
    CHECK(table.runs.size() == 12);
    CHECK(std::filesystem::exists(dir / "out/report.md"));
    CHECK(std::filesystem::exists(dir / "out/results_small.csv"));
    CHECK_THROWS_AS(run_plan(nlohmann::json{{"methods", 1}}, dir), ConfigError);
}

TEST_CASE("environment supplies the endpoint and token") {
    ::setenv(kLlmUrlEnv, "http://127.0.0.1:9", 1);
    ::setenv(kLlmTokenEnv, "secret-value", 1);
    LLMBackendConfig l;
    apply_llm_environment(l);
    CHECK(l.endpoints == std::vector<std::string>{"http://127.0.0.1:9"});
    CHECK(l.auth_token == "secret-value");
    ::unsetenv(kLlmUrlEnv);
    ::unsetenv(kLlmTokenEnv);
    RunConfig c = grid_config("llm");
    c.llm = l;
    c.llm.kind = "http";
    CHECK(config_to_json(c).dump().find("secret-value") == std::string::npos);
}
