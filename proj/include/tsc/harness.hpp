#pragma once

#include "tsc/ensemble.hpp"
#include "tsc/llm.hpp"
#include "tsc/metrics.hpp"
#include "tsc/mplight.hpp"
#include "tsc/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsc {

inline constexpr const char* kLlmUrlEnv = "TSC_LLM_URL";
inline constexpr const char* kLlmTokenEnv = "TSC_LLM_TOKEN";

struct LLMBackendConfig {
    std::string kind = "mock"; ///< mock | mock-stochastic | http
    double error_rate = 0.2;   ///< mock-stochastic only
    /// One entry means every agent samples the same endpoint; several
    /// entries are treated as replicas, agent i using endpoints[i % n].
    std::vector<std::string> endpoints;
    std::string path = "/v1/chat/completions";
    std::string auth_token; ///< read from the environment, never echoed
    std::size_t max_in_flight = 1;
    LLMSettings settings;
};

struct MPLightTrainingConfig {
    int episodes = 30;
    bool vote_during_training = true;
    std::optional<std::filesystem::path> weights_dir; ///< load frozen weights instead of training
    MPLightConfig agent;
    double epsilon_decay_fraction = 0.2; ///< of all training decision steps
};

struct RunConfig {
    std::optional<std::filesystem::path> scenario_path;
    std::optional<SyntheticGridSpec> grid;
    std::string scenario_name; ///< label used in tables; derived when empty

    std::string controller = "fixed"; ///< fixed | maxpressure | mplight | llm
    int agents = 1;
    std::uint64_t seed = 0;
    int duration_seconds = 3600;
    int tau_seconds = 30;
    int tick_seconds = 1;

    LLMBackendConfig llm;
    MPLightTrainingConfig mplight;

    std::optional<std::filesystem::path> out_dir;
    std::optional<std::filesystem::path> vote_log;
    bool record_events = false;

    /// Throws ConfigError on an invalid combination.
    void validate() const;
    std::string resolved_scenario_name() const;
};

const std::vector<std::string>& controller_registry();

nlohmann::ordered_json config_to_json(const RunConfig& config);
/// Reads a config object; unknown keys raise ConfigError.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
/// Merges a JSON LLM configuration file into `config`.
void apply_llm_config(LLMBackendConfig& config, const nlohmann::json& doc);
/// Fills endpoint URL and token from TSC_LLM_URL / TSC_LLM_TOKEN when unset.
void apply_llm_environment(LLMBackendConfig& config);

struct TrainingEpisode {
    int episode = 0;
    double mean_reward = 0.0; ///< mean -pressure over steps and intersections
    double mean_loss = 0.0;
    double epsilon = 0.0;
};

struct TrainingResult {
    std::vector<TrainingEpisode> curve;
    std::vector<std::shared_ptr<MPLightAgent>> agents;
    std::vector<std::filesystem::path> weight_files;
};

struct RunResult {
    std::string method;
    std::string scenario;
    int agents = 1;
    std::uint64_t seed = 0;
    MetricsReport report;
    std::size_t decision_steps = 0;
    double unanimity_rate = 0.0;
    double fallback_rate = 0.0;
    double oracle_disagreement = 0.0; ///< share of votes that differ from max-pressure
    double wall_seconds = 0.0;
    nlohmann::ordered_json config_echo;
    std::vector<TrainingEpisode> training_curve;
    std::string event_log;
    std::vector<std::string> vote_log;
};

LoadedScenario resolve_scenario(const RunConfig& config);
SimConfig make_sim_config(const RunConfig& config, const LoadedScenario& scenario);

/// Trains `config.agents` independently seeded MPLight agents. Writes one
/// weight file per agent and the training curve when out_dir is set.
TrainingResult train_mplight(const RunConfig& config);

/// Builds the controller for `config`. MPLight agents come from `trained`
/// (or from weights_dir) and act greedily.
EnsembleController build_controller(const RunConfig& config, const TrainingResult* trained = nullptr);

/// Runs one closed-loop simulation: T/tau decision steps of observe, sample,
/// vote and step, then metrics. Writes outputs when out_dir is set.
RunResult run(const RunConfig& config);

/// Runs `config` once per seed; writes one combined set of outputs when
/// out_dir is set.
std::vector<RunResult> run_seeds(const RunConfig& config, const std::vector<std::uint64_t>& seeds);

/// Same loop as run() with one bare policy deciding every intersection,
/// no ensemble around it.
MetricsReport run_bare(const RunConfig& config, Policy& policy);

/// results.csv, report.md, config.json, optional vote log and event logs.
void write_run_outputs(const std::filesystem::path& dir, const std::vector<RunResult>& results,
                       const std::optional<std::filesystem::path>& vote_log = std::nullopt);

struct MetricSummary {
    std::optional<double> mean;
    double stddev = 0.0;
};

struct ScenarioSummary {
    MetricSummary att, aql, awt;
    std::size_t runs = 0;
};

struct ComparisonRow {
    std::string method;
    int agents = 1;
    std::map<std::string, ScenarioSummary> by_scenario;
};

struct ComparisonTable {
    std::vector<std::string> scenarios;
    std::vector<ComparisonRow> rows;
    std::vector<RunRow> runs;

    std::string to_markdown() const;
    std::string to_csv() const;
};

MetricSummary summarize(const std::vector<std::optional<double>>& values);

/// Runs every config (up to `jobs` at a time) and tabulates one row per
/// (method, agents). All configs must share one scenario.
ComparisonTable compare(const std::vector<RunConfig>& configs, std::size_t jobs = 1);

/// Merges per-scenario tables into one table with a column block per scenario.
ComparisonTable merge_tables(const std::vector<ComparisonTable>& tables);

/// Expands a plan document (scenarios x methods x agent counts x seeds),
/// runs it and writes results.csv / report.md into the plan's out dir.
ComparisonTable run_plan(const nlohmann::json& plan, const std::filesystem::path& plan_dir, std::size_t jobs = 1);

/// Writes via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::vector<std::uint64_t> parse_seed_list(const std::string& spec);

} // namespace tsc
