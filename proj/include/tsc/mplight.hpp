#pragma once

#include "tsc/environment.hpp"
#include "tsc/policy.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace tsc {

inline constexpr std::size_t kStateSize = kNumPhases + kGovernedLanes;

/// One-hot current phase followed by the eight governed-lane vehicle counts
/// divided by a capacity constant and clamped to [0, 1].
using StateVector = std::array<double, kStateSize>;

StateVector encode_state(const ObservationState& obs, double capacity = 40.0);

/// Fully connected Q-network with tanh hidden layers and a linear output
/// layer. Parameters are stored flat as 32-bit floats (layer by layer:
/// weights row-major [out][in], then biases); arithmetic runs in double.
class QNetwork {
  public:
    QNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

    /// Default MPLight shape: 12 -> hidden -> hidden -> 4.
    static QNetwork standard(std::size_t hidden, std::uint64_t seed);

    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<float> parameters() { return params_; }
    std::span<const float> parameters() const { return params_; }

    std::vector<double> forward(std::span<const double> input) const;

    /// L = mean_b (Q(x_b)[a_b] - y_b)^2 over a batch of flattened inputs.
    double loss(std::span<const double> inputs, std::span<const std::size_t> actions,
                std::span<const double> targets) const;
    /// Same loss; `grad` receives dL/dparam, one entry per parameter.
    double loss_and_gradient(std::span<const double> inputs, std::span<const std::size_t> actions,
                             std::span<const double> targets, std::vector<double>& grad) const;

    friend bool operator==(const QNetwork& a, const QNetwork& b) {
        return a.sizes_ == b.sizes_ && a.params_ == b.params_;
    }

  private:
    struct LayerView {
        std::size_t in, out, weights, biases; // offsets into params_
    };

    std::vector<std::size_t> sizes_;
    std::vector<LayerView> layers_;
    std::vector<float> params_;
};

class WeightFileError : public std::runtime_error {
  public:
    enum class Kind { Io, Format, Version, Shape };

    WeightFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

inline constexpr std::array<char, 4> kWeightMagic{'T', 'S', 'C', 'Q'};
inline constexpr std::uint32_t kWeightVersion = 1;

/// Binary layout (little-endian): magic "TSCQ", u32 version, u32 layer-size
/// count L, L x u32 layer sizes, then every parameter as f32.
void save_weights(const QNetwork& net, const std::filesystem::path& path);
/// Loads into `net`; the file's layer sizes must match.
void load_weights(QNetwork& net, const std::filesystem::path& path);

struct Transition {
    StateVector state{};
    Phase action = Phase::ELWL;
    double reward = 0.0; ///< -pressure of the intersection after the tau window
    StateVector next_state{};

    friend bool operator==(const Transition&, const Transition&) = default;
};

class EmptyMemoryError : public std::runtime_error {
  public:
    EmptyMemoryError() : std::runtime_error("replay memory is empty") {}
};

/// Fixed-capacity ring buffer of transitions with uniform sampling.
class ReplayMemory {
  public:
    explicit ReplayMemory(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return buffer_.size(); }
    /// i-th oldest transition still stored.
    const Transition& at(std::size_t i) const;
    /// `n` distinct transitions (fewer if the memory holds fewer).
    std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const;

  private:
    std::vector<Transition> buffer_;
    std::size_t head_ = 0; // next write position
    std::size_t size_ = 0;
};

struct MPLightConfig {
    std::size_t hidden = 32;
    double gamma = 0.8;
    double learning_rate = 0.001;
    std::size_t batch_size = 32;
    std::size_t memory_capacity = 10000;
    std::size_t target_update = 100;
    double epsilon_start = 1.0;
    double epsilon_min = 0.05;
    std::size_t epsilon_decay_steps = 1; ///< decision steps over which epsilon decays linearly
    double capacity_norm = 40.0;
    double reward_scale = 0.05; ///< applied to rewards inside the TD target
    std::uint64_t seed = 0;
};

/// y = reward_scale * r + gamma * max_a' Q_target(s', a')
double td_target(double reward, double next_max_q, double gamma, double reward_scale = 1.0);

/// Deep Q-learning agent. One instance serves every intersection of the
/// network (shared parameters); it learns from all of their transitions.
class MPLightAgent {
  public:
    explicit MPLightAgent(MPLightConfig config);

    const MPLightConfig& config() const { return config_; }
    QNetwork& network() { return online_; }
    const QNetwork& network() const { return online_; }
    const QNetwork& target_network() const { return target_; }
    const ReplayMemory& memory() const { return memory_; }

    std::array<double, kNumPhases> q_values(const StateVector& s) const;
    /// Epsilon-greedy when `explore`; otherwise greedy with lowest-index ties.
    Phase act(const StateVector& s, bool explore);

    double epsilon() const { return epsilon_; }
    void set_epsilon(double e);
    /// Moves epsilon one decision step along its linear schedule.
    void advance_exploration();

    void store(Transition t);
    /// One gradient step on a uniformly sampled batch. Returns nullopt
    /// (skip) while the memory holds fewer than batch_size transitions.
    std::optional<double> train_step();
    std::size_t train_steps() const { return train_steps_; }

    void sync_target() { target_ = online_; }
    void save(const std::filesystem::path& path) const { save_weights(online_, path); }
    void load(const std::filesystem::path& path);

  private:
    MPLightConfig config_;
    QNetwork online_;
    QNetwork target_;
    ReplayMemory memory_;
    std::mt19937_64 explore_rng_;
    std::mt19937_64 replay_rng_;
    double epsilon_;
    std::size_t exploration_steps_ = 0;
    std::size_t train_steps_ = 0;

    // Adam state
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t adam_t_ = 0;
};

/// Policy view of a (shared) MPLight agent.
class MPLightPolicy final : public Policy {
  public:
    MPLightPolicy(std::shared_ptr<MPLightAgent> agent, bool explore);

    Phase decide(const DecisionContext& ctx) override;
    std::string name() const override { return "mplight"; }
    bool is_deterministic() const override { return !explore_; }

    void set_explore(bool explore) { explore_ = explore; }
    MPLightAgent& agent() { return *agent_; }
    const std::shared_ptr<MPLightAgent>& shared_agent() const { return agent_; }

  private:
    std::shared_ptr<MPLightAgent> agent_;
    bool explore_;
};

} // namespace tsc
