#include "tsc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

namespace tsc {

using ojson = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t agent_seed(std::uint64_t run_seed, std::size_t agent) {
    return splitmix64(run_seed * 0x100000001B3ull + agent + 1);
}

std::uint64_t episode_seed(std::uint64_t run_seed, int episode) {
    return splitmix64(run_seed ^ (0xE915'0DE5ull + static_cast<std::uint64_t>(episode) * 0x9E37ull));
}

std::string method_label(const std::string& controller) {
    if (controller == "fixed") return "Fixed";
    if (controller == "maxpressure") return "Max pressure";
    if (controller == "mplight") return "MPLight";
    if (controller == "llm") return "LLM";
    return controller;
}

std::string weight_file_name(std::size_t agent) { return "mplight_agent" + std::to_string(agent) + ".bin"; }

std::string fmt(double v, int precision = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

template <typename T>
void read_if(const nlohmann::json& obj, const char* key, T& out) {
    if (const auto it = obj.find(key); it != obj.end()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("config field '") + key + "' has the wrong type");
        }
    }
}

void check_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

void accumulate_outcome(Environment& env, MetricsAccumulator& metrics) {
    metrics.record_step(env.last_step());
    for (auto id : env.last_step().exited) {
        metrics.record_exit(env.vehicle(id));
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

const std::vector<std::string>& controller_registry() {
    static const std::vector<std::string> names{"fixed", "maxpressure", "mplight", "llm"};
    return names;
}

void RunConfig::validate() const {
    if (scenario_path.has_value() == grid.has_value()) {
        throw ConfigError("exactly one of a scenario file or a grid spec is required");
    }
    const auto& reg = controller_registry();
    if (std::find(reg.begin(), reg.end(), controller) == reg.end()) {
        throw ConfigError("unknown controller '" + controller + "'");
    }
    if (agents < 1) {
        throw ConfigError("agent count must be at least 1");
    }
    SimConfig sim;
    sim.tick_seconds = tick_seconds;
    sim.tau_seconds = tau_seconds;
    sim.duration_seconds = duration_seconds;
    sim.validate();
    if (controller == "llm") {
        const auto& k = llm.kind;
        if (k != "mock" && k != "mock-stochastic" && k != "http") {
            throw ConfigError("unknown LLM backend '" + k + "'");
        }
        if (k == "http" && llm.endpoints.empty()) {
            throw ConfigError(std::string("http backend needs an endpoint (set ") + kLlmUrlEnv + ")");
        }
        if (llm.settings.retries < 0) {
            throw ConfigError("retries must be >= 0");
        }
    }
    if (controller == "mplight" && !mplight.weights_dir && mplight.episodes <= 0) {
        throw ConfigError("nothing to train: mplight needs episodes > 0 or a weights directory");
    }
}

std::string RunConfig::resolved_scenario_name() const {
    if (!scenario_name.empty()) return scenario_name;
    if (scenario_path) return scenario_path->stem().string();
    if (grid) {
        return "grid" + std::to_string(grid->rows) + "x" + std::to_string(grid->cols) + "-" +
               std::string(demand_profile_name(grid->profile)) + "-" + fmt(grid->lambda, 3);
    }
    return "scenario";
}

ojson config_to_json(const RunConfig& c) {
    ojson doc;
    if (c.scenario_path) doc["scenario"] = c.scenario_path->generic_string();
    if (c.grid) {
        doc["grid"] = {{"rows", c.grid->rows},
                       {"cols", c.grid->cols},
                       {"profile", demand_profile_name(c.grid->profile)},
                       {"lambda", c.grid->lambda},
                       {"seed", c.grid->seed}};
    }
    doc["scenario_name"] = c.resolved_scenario_name();
    doc["controller"] = c.controller;
    doc["agents"] = c.agents;
    doc["seed"] = c.seed;
    doc["duration"] = c.duration_seconds;
    doc["tau"] = c.tau_seconds;
    doc["tick"] = c.tick_seconds;
    if (c.controller == "llm") {
        const auto& l = c.llm;
        doc["llm"] = {{"backend", l.kind},
                      {"error_rate", l.error_rate},
                      {"endpoints", l.endpoints},
                      {"path", l.path},
                      {"max_in_flight", l.max_in_flight},
                      {"model", l.settings.model},
                      {"system_prompt", l.settings.system_prompt},
                      {"temperature", l.settings.temperature},
                      {"max_tokens", l.settings.max_tokens},
                      {"timeout_seconds", l.settings.timeout_seconds},
                      {"retries", l.settings.retries}};
    }
    if (c.controller == "mplight") {
        const auto& m = c.mplight;
        ojson mp;
        mp["episodes"] = m.episodes;
        mp["vote_during_training"] = m.vote_during_training;
        if (m.weights_dir) mp["weights_dir"] = m.weights_dir->generic_string();
        mp["hidden"] = m.agent.hidden;
        mp["gamma"] = m.agent.gamma;
        mp["learning_rate"] = m.agent.learning_rate;
        mp["batch_size"] = m.agent.batch_size;
        mp["memory_capacity"] = m.agent.memory_capacity;
        mp["target_update"] = m.agent.target_update;
        mp["epsilon_start"] = m.agent.epsilon_start;
        mp["epsilon_min"] = m.agent.epsilon_min;
        mp["epsilon_decay_fraction"] = m.epsilon_decay_fraction;
        mp["capacity_norm"] = m.agent.capacity_norm;
        mp["reward_scale"] = m.agent.reward_scale;
        doc["mplight"] = std::move(mp);
    }
    if (c.vote_log) doc["vote_log"] = c.vote_log->generic_string();
    doc["record_events"] = c.record_events;
    return doc;
}

void apply_llm_config(LLMBackendConfig& l, const nlohmann::json& doc) {
    check_keys(doc, "llm", {"backend", "error_rate", "endpoints", "base_url", "path", "max_in_flight", "model",
                            "system_prompt", "temperature", "max_tokens", "timeout_seconds", "retries"});
    read_if(doc, "backend", l.kind);
    read_if(doc, "error_rate", l.error_rate);
    read_if(doc, "endpoints", l.endpoints);
    if (const auto it = doc.find("base_url"); it != doc.end()) {
        l.endpoints = {it->get<std::string>()};
    }
    read_if(doc, "path", l.path);
    read_if(doc, "max_in_flight", l.max_in_flight);
    read_if(doc, "model", l.settings.model);
    read_if(doc, "system_prompt", l.settings.system_prompt);
    read_if(doc, "temperature", l.settings.temperature);
    read_if(doc, "max_tokens", l.settings.max_tokens);
    read_if(doc, "timeout_seconds", l.settings.timeout_seconds);
    read_if(doc, "retries", l.settings.retries);
}

void apply_llm_environment(LLMBackendConfig& l) {
    if (l.endpoints.empty()) {
        if (const char* url = std::getenv(kLlmUrlEnv); url && *url) {
            l.endpoints = {url};
        }
    }
    if (l.auth_token.empty()) {
        if (const char* token = std::getenv(kLlmTokenEnv); token) {
            l.auth_token = token;
        }
    }
}

RunConfig config_from_json(const nlohmann::json& doc, RunConfig c) {
    check_keys(doc, "config", {"scenario", "grid", "scenario_name", "controller", "agents", "seed", "duration",
                               "tau", "tick", "llm", "mplight", "out", "vote_log", "record_events"});
    if (const auto it = doc.find("scenario"); it != doc.end()) {
        c.scenario_path = it->get<std::string>();
        c.grid.reset();
    }
    if (const auto it = doc.find("grid"); it != doc.end()) {
        check_keys(*it, "grid", {"rows", "cols", "profile", "lambda", "seed"});
        SyntheticGridSpec g;
        read_if(*it, "rows", g.rows);
        read_if(*it, "cols", g.cols);
        read_if(*it, "lambda", g.lambda);
        read_if(*it, "seed", g.seed);
        if (const auto p = it->find("profile"); p != it->end()) {
            const auto profile = parse_demand_profile(p->get<std::string>());
            if (!profile) throw ConfigError("unknown demand profile");
            g.profile = *profile;
        }
        c.grid = g;
        c.scenario_path.reset();
    }
    read_if(doc, "scenario_name", c.scenario_name);
    read_if(doc, "controller", c.controller);
    read_if(doc, "agents", c.agents);
    read_if(doc, "seed", c.seed);
    read_if(doc, "duration", c.duration_seconds);
    read_if(doc, "tau", c.tau_seconds);
    read_if(doc, "tick", c.tick_seconds);
    if (const auto it = doc.find("llm"); it != doc.end()) {
        apply_llm_config(c.llm, *it);
    }
    if (const auto it = doc.find("mplight"); it != doc.end()) {
        check_keys(*it, "mplight", {"episodes", "vote_during_training", "weights_dir", "hidden", "gamma",
                                    "learning_rate", "batch_size", "memory_capacity", "target_update",
                                    "epsilon_start", "epsilon_min", "epsilon_decay_fraction", "capacity_norm",
                                    "reward_scale"});
        auto& m = c.mplight;
        read_if(*it, "episodes", m.episodes);
        read_if(*it, "vote_during_training", m.vote_during_training);
        if (const auto w = it->find("weights_dir"); w != it->end()) m.weights_dir = w->get<std::string>();
        read_if(*it, "hidden", m.agent.hidden);
        read_if(*it, "gamma", m.agent.gamma);
        read_if(*it, "learning_rate", m.agent.learning_rate);
        read_if(*it, "batch_size", m.agent.batch_size);
        read_if(*it, "memory_capacity", m.agent.memory_capacity);
        read_if(*it, "target_update", m.agent.target_update);
        read_if(*it, "epsilon_start", m.agent.epsilon_start);
        read_if(*it, "epsilon_min", m.agent.epsilon_min);
        read_if(*it, "epsilon_decay_fraction", m.epsilon_decay_fraction);
        read_if(*it, "capacity_norm", m.agent.capacity_norm);
        read_if(*it, "reward_scale", m.agent.reward_scale);
    }
    if (const auto it = doc.find("out"); it != doc.end()) c.out_dir = it->get<std::string>();
    if (const auto it = doc.find("vote_log"); it != doc.end()) c.vote_log = it->get<std::string>();
    read_if(doc, "record_events", c.record_events);
    return c;
}

// ---------------------------------------------------------------------------
// Scenario plumbing
// ---------------------------------------------------------------------------

LoadedScenario resolve_scenario(const RunConfig& config) {
    if (config.scenario_path) {
        return load_scenario(*config.scenario_path);
    }
    if (config.grid) {
        return build_scenario(generate_grid(*config.grid));
    }
    throw ConfigError("no scenario configured");
}

SimConfig make_sim_config(const RunConfig& config, const LoadedScenario& scenario) {
    SimConfig sim;
    sim.tick_seconds = config.tick_seconds;
    sim.tau_seconds = config.tau_seconds;
    sim.duration_seconds = config.duration_seconds;
    sim.seed = config.seed;
    sim.record_events = config.record_events;
    scenario.dynamics.apply_to(sim);
    sim.validate();
    return sim;
}

// ---------------------------------------------------------------------------
// MPLight training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::shared_ptr<MPLightAgent>> make_agents(const RunConfig& config) {
    const auto steps_per_episode = static_cast<std::size_t>(config.duration_seconds / config.tau_seconds);
    const auto total_steps = steps_per_episode * static_cast<std::size_t>(std::max(0, config.mplight.episodes));
    std::vector<std::shared_ptr<MPLightAgent>> agents;
    for (int i = 0; i < config.agents; ++i) {
        auto cfg = config.mplight.agent;
        cfg.seed = agent_seed(config.seed, static_cast<std::size_t>(i));
        cfg.epsilon_decay_steps = std::max<std::size_t>(
            1, static_cast<std::size_t>(config.mplight.epsilon_decay_fraction * static_cast<double>(total_steps)));
        agents.push_back(std::make_shared<MPLightAgent>(cfg));
    }
    return agents;
}

/// Trains `agents` together (voting) for all episodes; returns per-episode stats.
std::vector<TrainingEpisode> train_group(const RunConfig& config, const LoadedScenario& scenario,
                                         const std::vector<std::shared_ptr<MPLightAgent>>& agents) {
    std::vector<std::unique_ptr<Policy>> policies;
    for (const auto& a : agents) {
        policies.push_back(std::make_unique<MPLightPolicy>(a, true));
    }
    EnsembleController ensemble(std::move(policies));

    std::vector<TrainingEpisode> curve;
    for (int e = 0; e < config.mplight.episodes; ++e) {
        auto sim = make_sim_config(config, scenario);
        sim.seed = episode_seed(config.seed, e);
        sim.record_events = false;
        Environment env(scenario.network, scenario.demand, sim);
        env.reset();

        const double capacity = config.mplight.agent.capacity_norm;
        double reward_sum = 0.0;
        double loss_sum = 0.0;
        std::size_t reward_n = 0;
        std::size_t loss_n = 0;
        for (int t = 0; t < sim.decision_steps(); ++t) {
            const auto contexts = make_contexts(env, static_cast<std::size_t>(t));
            const auto decision = ensemble.decide_all(contexts);
            env.step(decision.actions);
            for (IntersectionId k = 0; k < env.intersection_count(); ++k) {
                Transition tr;
                tr.state = encode_state(contexts[k].observation, capacity);
                tr.action = decision.actions[k];
                tr.reward = -static_cast<double>(env.intersection_pressure(k));
                tr.next_state = encode_state(env.observe(k), capacity);
                reward_sum += tr.reward;
                ++reward_n;
                for (const auto& a : agents) {
                    a->store(tr);
                }
            }
            for (const auto& a : agents) {
                if (const auto loss = a->train_step()) {
                    loss_sum += *loss;
                    ++loss_n;
                }
                a->advance_exploration();
            }
        }
        curve.push_back({e, reward_n ? reward_sum / static_cast<double>(reward_n) : 0.0,
                         loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0, agents.front()->epsilon()});
    }
    return curve;
}

} // namespace

TrainingResult train_mplight(const RunConfig& config) {
    if (config.controller != "mplight") {
        throw ConfigError("train_mplight needs controller=mplight");
    }
    if (config.mplight.episodes <= 0) {
        throw ConfigError("nothing to train: episodes must be > 0");
    }
    config.validate();
    const auto scenario = resolve_scenario(config);

    TrainingResult result;
    result.agents = make_agents(config);
    if (config.mplight.vote_during_training || result.agents.size() == 1) {
        result.curve = train_group(config, scenario, result.agents);
    } else {
        // Independent learners; the reported curve is the mean over agents.
        for (const auto& agent : result.agents) {
            const auto curve = train_group(config, scenario, {agent});
            if (result.curve.empty()) {
                result.curve.assign(curve.size(), {});
                for (std::size_t e = 0; e < curve.size(); ++e) result.curve[e].episode = curve[e].episode;
            }
            for (std::size_t e = 0; e < curve.size(); ++e) {
                const auto n = static_cast<double>(result.agents.size());
                result.curve[e].mean_reward += curve[e].mean_reward / n;
                result.curve[e].mean_loss += curve[e].mean_loss / n;
                result.curve[e].epsilon = curve[e].epsilon;
            }
        }
    }

    if (config.out_dir) {
        std::filesystem::create_directories(*config.out_dir);
        for (std::size_t i = 0; i < result.agents.size(); ++i) {
            const auto path = *config.out_dir / weight_file_name(i);
            result.agents[i]->save(path);
            result.weight_files.push_back(path);
        }
        std::string csv = "episode,mean_reward,mean_loss,epsilon\n";
        for (const auto& ep : result.curve) {
            csv += std::to_string(ep.episode) + "," + fmt(ep.mean_reward, 6) + "," + fmt(ep.mean_loss, 6) + "," +
                   fmt(ep.epsilon, 6) + "\n";
        }
        write_atomic(*config.out_dir / "training_curve.csv", csv);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Controllers and runs
// ---------------------------------------------------------------------------

EnsembleController build_controller(const RunConfig& config, const TrainingResult* trained) {
    std::vector<std::unique_ptr<Policy>> agents;
    const auto n = static_cast<std::size_t>(config.agents);
    if (config.controller == "fixed") {
        for (std::size_t i = 0; i < n; ++i) agents.push_back(std::make_unique<FixedTimePolicy>());
    } else if (config.controller == "maxpressure") {
        for (std::size_t i = 0; i < n; ++i) agents.push_back(std::make_unique<MaxPressurePolicy>());
    } else if (config.controller == "llm") {
        for (std::size_t i = 0; i < n; ++i) {
            std::unique_ptr<Backend> backend;
            const auto seed = agent_seed(config.seed, i);
            if (config.llm.kind == "mock") {
                backend = std::make_unique<DeterministicMockBackend>();
            } else if (config.llm.kind == "mock-stochastic") {
                backend = std::make_unique<StochasticMockBackend>(seed, config.llm.error_rate);
            } else if (config.llm.kind == "http") {
                if (config.llm.endpoints.empty()) {
                    throw ConfigError("http backend needs an endpoint");
                }
                backend = std::make_unique<HttpChatBackend>(config.llm.endpoints[i % config.llm.endpoints.size()],
                                                            config.llm.path, config.llm.auth_token);
            } else {
                throw ConfigError("unknown LLM backend '" + config.llm.kind + "'");
            }
            agents.push_back(std::make_unique<LLMPolicy>(std::move(backend), config.llm.settings));
        }
    } else if (config.controller == "mplight") {
        if (trained) {
            if (trained->agents.size() != n) {
                throw ContractViolation("trained agent count does not match the configured agent count");
            }
            for (const auto& a : trained->agents) agents.push_back(std::make_unique<MPLightPolicy>(a, false));
        } else if (config.mplight.weights_dir) {
            for (std::size_t i = 0; i < n; ++i) {
                auto cfg = config.mplight.agent;
                cfg.seed = agent_seed(config.seed, i);
                auto agent = std::make_shared<MPLightAgent>(cfg);
                agent->load(*config.mplight.weights_dir / weight_file_name(i));
                agents.push_back(std::make_unique<MPLightPolicy>(std::move(agent), false));
            }
        } else {
            throw ConfigError("mplight controller needs trained agents or a weights directory");
        }
    } else {
        throw ConfigError("unknown controller '" + config.controller + "'");
    }
    EnsembleController controller(std::move(agents));
    if (config.controller == "llm") {
        controller.set_max_in_flight(config.llm.max_in_flight);
    }
    return controller;
}

namespace {

RunResult run_once(const RunConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    const auto scenario = resolve_scenario(config);
    const auto sim = make_sim_config(config, scenario);

    RunResult result;
    result.method = config.controller;
    result.scenario = config.resolved_scenario_name();
    result.agents = config.agents;
    result.seed = config.seed;
    result.config_echo = config_to_json(config);

    std::optional<TrainingResult> trained;
    if (config.controller == "mplight" && !config.mplight.weights_dir) {
        trained = train_mplight(config);
        result.training_curve = trained->curve;
    }
    auto controller = build_controller(config, trained ? &*trained : nullptr);

    Environment env(scenario.network, scenario.demand, sim);
    env.reset();
    MetricsAccumulator metrics(env.intersection_count());
    std::size_t votes = 0;
    std::size_t unanimous = 0;
    std::size_t disagreements = 0;
    for (int t = 0; t < sim.decision_steps(); ++t) {
        const auto contexts = make_contexts(env, static_cast<std::size_t>(t));
        const auto decision = controller.decide_all(contexts);
        for (std::size_t k = 0; k < contexts.size(); ++k) {
            const auto& v = decision.votes[k];
            ++votes;
            unanimous += v.unanimous ? 1 : 0;
            disagreements += v.chosen != maxpressure_decide(contexts[k].pressures) ? 1 : 0;
            if (config.vote_log) {
                result.vote_log.push_back("{\"seed\":" + std::to_string(config.seed) + "," +
                                          vote_record_json(v).substr(1));
            }
        }
        env.step(decision.actions);
        accumulate_outcome(env, metrics);
    }
    metrics.set_entered(env.vehicles_entered());
    result.report = metrics.finalize();
    result.decision_steps = result.report.steps;
    result.unanimity_rate = votes ? static_cast<double>(unanimous) / static_cast<double>(votes) : 0.0;
    result.oracle_disagreement = votes ? static_cast<double>(disagreements) / static_cast<double>(votes) : 0.0;

    std::size_t llm_decisions = 0;
    std::size_t llm_fallbacks = 0;
    for (std::size_t i = 0; i < controller.size(); ++i) {
        if (const auto* p = dynamic_cast<const LLMPolicy*>(&controller.agent(i))) {
            llm_decisions += p->decisions();
            llm_fallbacks += p->fallbacks();
        }
    }
    result.fallback_rate =
        llm_decisions ? static_cast<double>(llm_fallbacks) / static_cast<double>(llm_decisions) : 0.0;
    if (config.record_events) {
        result.event_log = env.serialize_events();
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

} // namespace

RunResult run(const RunConfig& config) {
    auto result = run_once(config);
    if (config.out_dir) {
        write_run_outputs(*config.out_dir, {result}, config.vote_log);
    }
    return result;
}

std::vector<RunResult> run_seeds(const RunConfig& config, const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) {
        throw ConfigError("no seeds given");
    }
    std::vector<RunResult> out;
    for (auto seed : seeds) {
        auto c = config;
        c.seed = seed;
        if (c.out_dir && seeds.size() > 1) {
            c.out_dir = *c.out_dir / ("seed" + std::to_string(seed));
        }
        out.push_back(run_once(c));
    }
    if (config.out_dir) {
        write_run_outputs(*config.out_dir, out, config.vote_log);
    }
    return out;
}

MetricsReport run_bare(const RunConfig& config, Policy& policy) {
    config.validate();
    const auto scenario = resolve_scenario(config);
    Environment env(scenario.network, scenario.demand, make_sim_config(config, scenario));
    env.reset();
    MetricsAccumulator metrics(env.intersection_count());
    for (int t = 0; t < env.config().decision_steps(); ++t) {
        const auto contexts = make_contexts(env, static_cast<std::size_t>(t));
        std::vector<Phase> actions;
        for (const auto& ctx : contexts) actions.push_back(policy.decide(ctx));
        env.step(actions);
        accumulate_outcome(env, metrics);
    }
    metrics.set_entered(env.vehicles_entered());
    return metrics.finalize();
}

// ---------------------------------------------------------------------------
// Comparison tables
// ---------------------------------------------------------------------------

MetricSummary summarize(const std::vector<std::optional<double>>& values) {
    std::vector<double> xs;
    for (const auto& v : values) {
        if (v) xs.push_back(*v);
    }
    MetricSummary s;
    if (xs.empty()) {
        return s;
    }
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    s.mean = mean;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

namespace {

ComparisonTable tabulate(const std::string& scenario, const std::vector<RunResult>& results) {
    ComparisonTable table;
    table.scenarios = {scenario};
    std::vector<std::pair<std::string, int>> order;
    std::map<std::pair<std::string, int>, std::vector<const RunResult*>> groups;
    for (const auto& r : results) {
        const auto key = std::make_pair(r.method, r.agents);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&r);
        table.runs.push_back({r.method, r.agents, r.seed, r.report});
    }
    for (const auto& key : order) {
        const auto& g = groups[key];
        std::vector<std::optional<double>> att, aql, awt;
        for (const auto* r : g) {
            att.push_back(r->report.att);
            aql.push_back(r->report.aql);
            awt.push_back(r->report.awt);
        }
        ComparisonRow row{key.first, key.second, {}};
        row.by_scenario[scenario] = {summarize(att), summarize(aql), summarize(awt), g.size()};
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string scenario_identity(const RunConfig& c) {
    return config_to_json(c).contains("scenario") ? c.scenario_path->lexically_normal().generic_string()
                                                  : config_to_json(c)["grid"].dump();
}

} // namespace

ComparisonTable compare(const std::vector<RunConfig>& configs, std::size_t jobs) {
    if (configs.size() < 2) {
        throw ContractViolation("compare needs at least two configurations");
    }
    const auto identity = scenario_identity(configs.front());
    for (const auto& c : configs) {
        c.validate();
        if (scenario_identity(c) != identity) {
            throw ContractViolation("compare configurations must share one scenario");
        }
    }
    std::vector<RunResult> results(configs.size());
    jobs = std::max<std::size_t>(1, jobs);
    for (std::size_t begin = 0; begin < configs.size(); begin += jobs) {
        const auto end = std::min(configs.size(), begin + jobs);
        std::vector<std::future<RunResult>> batch;
        for (std::size_t i = begin; i < end; ++i) {
            batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                       [&configs, i] { return run(configs[i]); }));
        }
        for (std::size_t i = begin; i < end; ++i) {
            results[i] = batch[i - begin].get();
        }
    }
    return tabulate(configs.front().resolved_scenario_name(), results);
}

ComparisonTable merge_tables(const std::vector<ComparisonTable>& tables) {
    ComparisonTable out;
    for (const auto& t : tables) {
        for (const auto& s : t.scenarios) out.scenarios.push_back(s);
        out.runs.insert(out.runs.end(), t.runs.begin(), t.runs.end());
        for (const auto& row : t.rows) {
            auto it = std::find_if(out.rows.begin(), out.rows.end(), [&](const ComparisonRow& r) {
                return r.method == row.method && r.agents == row.agents;
            });
            if (it == out.rows.end()) {
                out.rows.push_back(row);
            } else {
                for (const auto& [k, v] : row.by_scenario) it->by_scenario[k] = v;
            }
        }
    }
    return out;
}

std::string ComparisonTable::to_markdown() const {
    // Best (lowest mean) per scenario x metric.
    std::map<std::pair<std::string, int>, double> best;
    auto metric = [](const ScenarioSummary& s, int m) -> const MetricSummary& {
        return m == 0 ? s.att : (m == 1 ? s.aql : s.awt);
    };
    for (const auto& row : rows) {
        for (const auto& [scenario, summary] : row.by_scenario) {
            for (int m = 0; m < 3; ++m) {
                const auto& v = metric(summary, m).mean;
                if (!v) continue;
                auto key = std::make_pair(scenario, m);
                auto it = best.find(key);
                if (it == best.end() || *v < it->second) best[key] = *v;
            }
        }
    }

    std::ostringstream out;
    out << "| Method |";
    for (const auto& s : scenarios) out << ' ' << s << " ATT | " << s << " AQL | " << s << " AWT |";
    out << "\n|---|";
    for (std::size_t i = 0; i < scenarios.size(); ++i) out << "---|---|---|";
    out << '\n';
    for (const auto& row : rows) {
        out << "| " << method_label(row.method) << " (" << row.agents << (row.agents == 1 ? " agent" : " agents")
            << ") |";
        for (const auto& s : scenarios) {
            const auto it = row.by_scenario.find(s);
            for (int m = 0; m < 3; ++m) {
                if (it == row.by_scenario.end() || !metric(it->second, m).mean) {
                    out << " - |";
                    continue;
                }
                const auto& ms = metric(it->second, m);
                std::string cell = fmt(*ms.mean);
                if (it->second.runs > 1) cell += " ± " + fmt(ms.stddev);
                const auto b = best.find({s, m});
                if (b != best.end() && *ms.mean == b->second) cell = "**" + cell + "**";
                out << ' ' << cell << " |";
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string ComparisonTable::to_csv() const {
    std::string out = csv_header();
    for (const auto& r : runs) out += csv_row(r);
    return out;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

ComparisonTable run_plan(const nlohmann::json& plan, const std::filesystem::path& plan_dir, std::size_t jobs) {
    check_keys(plan, "plan", {"out", "seeds", "duration", "tau", "tick", "scenarios", "methods", "llm", "mplight"});
    RunConfig base;
    read_if(plan, "duration", base.duration_seconds);
    read_if(plan, "tau", base.tau_seconds);
    read_if(plan, "tick", base.tick_seconds);
    if (const auto it = plan.find("llm"); it != plan.end()) apply_llm_config(base.llm, *it);
    apply_llm_environment(base.llm);

    std::vector<std::uint64_t> seeds{0};
    if (const auto it = plan.find("seeds"); it != plan.end()) {
        seeds = it->is_string() ? parse_seed_list(it->get<std::string>()) : it->get<std::vector<std::uint64_t>>();
    }
    const auto scenarios = plan.value("scenarios", nlohmann::json());
    const auto methods = plan.value("methods", nlohmann::json());
    if (!scenarios.is_array() || scenarios.empty() || !methods.is_array() || methods.empty()) {
        throw ConfigError("plan needs non-empty 'scenarios' and 'methods' arrays");
    }
    std::optional<std::filesystem::path> out_dir;
    if (const auto it = plan.find("out"); it != plan.end()) {
        out_dir = plan_dir / it->get<std::string>();
    }

    std::vector<ComparisonTable> tables;
    for (const auto& scenario : scenarios) {
        check_keys(scenario, "scenario", {"name", "path", "grid"});
        RunConfig sbase = base;
        if (const auto p = scenario.find("path"); p != scenario.end()) {
            sbase.scenario_path = plan_dir / p->get<std::string>();
        }
        if (const auto g = scenario.find("grid"); g != scenario.end()) {
            sbase = config_from_json(nlohmann::json{{"grid", *g}}, sbase);
        }
        read_if(scenario, "name", sbase.scenario_name);

        std::vector<RunConfig> configs;
        for (const auto& method : methods) {
            auto overrides = method;
            std::vector<int> agent_counts{1};
            if (const auto a = overrides.find("agents"); a != overrides.end()) {
                agent_counts = a->is_array() ? a->get<std::vector<int>>() : std::vector<int>{a->get<int>()};
                overrides.erase("agents");
            }
            auto mbase = config_from_json(overrides, sbase);
            if (plan.contains("mplight") && !overrides.contains("mplight")) {
                mbase = config_from_json(nlohmann::json{{"mplight", plan["mplight"]}}, mbase);
            }
            for (int n : agent_counts) {
                for (auto seed : seeds) {
                    auto c = mbase;
                    c.agents = n;
                    c.seed = seed;
                    c.out_dir.reset();
                    configs.push_back(c);
                }
            }
        }
        auto table = compare(configs, jobs);
        if (out_dir) {
            std::filesystem::create_directories(*out_dir);
            write_atomic(*out_dir / ("results_" + table.scenarios.front() + ".csv"), table.to_csv());
        }
        tables.push_back(std::move(table));
    }
    auto merged = merge_tables(tables);
    if (out_dir) {
        write_atomic(*out_dir / "report.md", merged.to_markdown());
    }
    return merged;
}

void write_run_outputs(const std::filesystem::path& dir, const std::vector<RunResult>& results,
                       const std::optional<std::filesystem::path>& vote_log) {
    if (results.empty()) {
        throw ContractViolation("no results to write");
    }
    std::filesystem::create_directories(dir);
    std::string csv = csv_header();
    for (const auto& r : results) csv += csv_row({r.method, r.agents, r.seed, r.report});
    write_atomic(dir / "results.csv", csv);

    const auto table = tabulate(results.front().scenario, results);
    std::ostringstream md;
    md << table.to_markdown() << '\n';
    md << "| seed | decision steps | entered | exited | unanimity | fallback | differs from max-pressure |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : results) {
        md << "| " << r.seed << " | " << r.decision_steps << " | " << r.report.n_entered << " | "
           << r.report.n_exited << " | " << fmt(r.unanimity_rate, 4) << " | " << fmt(r.fallback_rate, 4) << " | "
           << fmt(r.oracle_disagreement, 4) << " |\n";
    }
    write_atomic(dir / "report.md", md.str());

    auto echo = results.front().config_echo;
    if (results.size() > 1) {
        echo.erase("seed");
        auto seeds = ojson::array();
        for (const auto& r : results) seeds.push_back(r.seed);
        echo["seeds"] = std::move(seeds);
    }
    write_atomic(dir / "config.json", echo.dump(2) + "\n");

    if (vote_log) {
        std::string lines;
        for (const auto& r : results) {
            for (const auto& l : r.vote_log) lines += l + "\n";
        }
        write_atomic(*vote_log, lines);
    }
    for (const auto& r : results) {
        if (!r.event_log.empty()) {
            write_atomic(dir / ("events_seed" + std::to_string(r.seed) + ".log"), r.event_log);
        }
    }
}

// ---------------------------------------------------------------------------
// Utilities
// ---------------------------------------------------------------------------

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp);
        }
        out << content;
        if (!out) {
            throw std::runtime_error("failed writing " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
    std::vector<std::uint64_t> out;
    auto parse_one = [&](const std::string& s) -> std::uint64_t {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("invalid seed '" + s + "'");
        }
    };
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dots = part.find("..");
        if (dots != std::string::npos) {
            const auto lo = parse_one(part.substr(0, dots));
            const auto hi = parse_one(part.substr(dots + 2));
            if (hi < lo) throw ConfigError("empty seed range '" + part + "'");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(parse_one(part));
        }
    }
    if (out.empty()) {
        throw ConfigError("no seeds given");
    }
    return out;
}

} // namespace tsc
