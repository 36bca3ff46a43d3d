#include "tsc/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw tsc::ConfigError("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw tsc::ConfigError(path.string() + ": " + e.what());
    }
}

struct CommonFlags {
    std::string scenario;
    std::string config_file;
    std::string controller = "fixed";
    int agents = 1;
    std::uint64_t seed = 0;
    std::string seeds;
    int duration = 3600;
    int tau = 30;
    std::string out;
    std::string vote_log;
    std::string llm_config;
    std::string llm_backend;
    double error_rate = -1.0;
    int episodes = -1;
    std::string weights_dir;
    bool independent_training = false;
    bool record_events = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--scenario", f.scenario, "scenario JSON file");
    cmd->add_option("--config", f.config_file, "run config JSON (flags given on the command line win)");
    cmd->add_option("--controller", f.controller, "fixed | maxpressure | mplight | llm");
    cmd->add_option("--agents", f.agents, "number of voting agents N");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--seeds", f.seeds, "seed list, e.g. 0..9 or 1,4,7");
    cmd->add_option("--duration", f.duration, "simulated seconds T");
    cmd->add_option("--tau", f.tau, "minimum action time in seconds");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--vote-log", f.vote_log, "write one JSON line per vote");
    cmd->add_option("--llm-config", f.llm_config, "LLM backend settings (JSON)");
    cmd->add_option("--llm-backend", f.llm_backend, "mock | mock-stochastic | http");
    cmd->add_option("--error-rate", f.error_rate, "mock-stochastic error rate");
    cmd->add_option("--episodes", f.episodes, "MPLight training episodes");
    cmd->add_option("--weights-dir", f.weights_dir, "load frozen MPLight weights from here");
    cmd->add_flag("--independent-training", f.independent_training, "train MPLight agents separately");
    cmd->add_flag("--record-events", f.record_events, "write the simulator event log");
}

tsc::RunConfig resolve(const CLI::App* cmd, const CommonFlags& f) {
    tsc::RunConfig c;
    if (!f.config_file.empty()) {
        c = tsc::config_from_json(read_json(f.config_file));
    }
    auto given = [&](const char* name) { return cmd->count(name) > 0; };
    if (given("--scenario")) {
        c.scenario_path = f.scenario;
        c.grid.reset();
    }
    if (given("--controller")) c.controller = f.controller;
    if (given("--agents")) c.agents = f.agents;
    if (given("--seed")) c.seed = f.seed;
    if (given("--duration")) c.duration_seconds = f.duration;
    if (given("--tau")) c.tau_seconds = f.tau;
    if (given("--out")) c.out_dir = f.out;
    if (given("--vote-log")) c.vote_log = f.vote_log;
    if (given("--llm-config")) tsc::apply_llm_config(c.llm, read_json(f.llm_config));
    if (given("--llm-backend")) c.llm.kind = f.llm_backend;
    if (given("--error-rate")) c.llm.error_rate = f.error_rate;
    if (given("--episodes")) c.mplight.episodes = f.episodes;
    if (given("--weights-dir")) c.mplight.weights_dir = f.weights_dir;
    if (f.independent_training) c.mplight.vote_during_training = false;
    if (f.record_events) c.record_events = true;
    tsc::apply_llm_environment(c.llm);
    return c;
}

void print_summary(const std::vector<tsc::RunResult>& results) {
    for (const auto& r : results) {
        std::cout << r.method << " x" << r.agents << " seed " << r.seed << ": ATT "
                  << tsc::format_metric(r.report.att, 3) << "  AQL " << tsc::format_metric(r.report.aql, 3)
                  << "  AWT " << tsc::format_metric(r.report.awt, 3) << "  exited " << r.report.n_exited << "/"
                  << r.report.n_entered << "  (" << r.wall_seconds << " s)\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sampling-and-voting traffic signal control"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "simulate one controller");
    add_common(run_cmd, run_flags);

    CommonFlags train_flags;
    train_flags.controller = "mplight";
    auto* train_cmd = app.add_subcommand("train", "train MPLight agents and save weights");
    add_common(train_cmd, train_flags);

    tsc::SyntheticGridSpec grid;
    std::string profile = "uniform";
    std::string grid_out;
    auto* gen_cmd = app.add_subcommand("gen-grid", "write a synthetic grid scenario");
    gen_cmd->add_option("--rows", grid.rows)->required();
    gen_cmd->add_option("--cols", grid.cols)->required();
    gen_cmd->add_option("--lambda", grid.lambda, "arrivals per second per entry lane")->required();
    gen_cmd->add_option("--seed", grid.seed);
    gen_cmd->add_option("--profile", profile, "uniform | peak-directional");
    gen_cmd->add_option("--out", grid_out)->required();

    std::string plan_path;
    std::size_t jobs = 1;
    auto* compare_cmd = app.add_subcommand("compare", "run a comparison plan");
    compare_cmd->add_option("--plan", plan_path)->required();
    compare_cmd->add_option("--jobs", jobs, "runs executed in parallel");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            auto config = resolve(run_cmd, run_flags);
            config.validate();
            std::cerr << "effective config:\n" << tsc::config_to_json(config).dump(2) << "\n";
            std::vector<std::uint64_t> seeds{config.seed};
            if (!run_flags.seeds.empty()) seeds = tsc::parse_seed_list(run_flags.seeds);
            print_summary(tsc::run_seeds(config, seeds));
        } else if (train_cmd->parsed()) {
            auto config = resolve(train_cmd, train_flags);
            config.controller = "mplight";
            std::cerr << "effective config:\n" << tsc::config_to_json(config).dump(2) << "\n";
            const auto trained = tsc::train_mplight(config);
            for (const auto& ep : trained.curve) {
                std::cout << "episode " << ep.episode << " reward " << ep.mean_reward << " loss " << ep.mean_loss
                          << " epsilon " << ep.epsilon << "\n";
            }
            for (const auto& w : trained.weight_files) std::cout << "wrote " << w.string() << "\n";
        } else if (gen_cmd->parsed()) {
            const auto p = tsc::parse_demand_profile(profile);
            if (!p) throw tsc::ConfigError("unknown profile '" + profile + "'");
            grid.profile = *p;
            tsc::write_atomic(grid_out, tsc::serialize_scenario(tsc::generate_grid(grid)));
            std::cout << "wrote " << grid_out << "\n";
        } else if (compare_cmd->parsed()) {
            const std::filesystem::path path(plan_path);
            const auto table = tsc::run_plan(read_json(path), path.parent_path(), jobs);
            std::cout << table.to_markdown();
        }
    } catch (const tsc::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    } catch (const tsc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
