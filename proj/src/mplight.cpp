#include "tsc/mplight.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace tsc {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        return false;
    }
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

} // namespace

StateVector encode_state(const ObservationState& obs, double capacity) {
    StateVector s{};
    s[phase_index(obs.current_phase)] = 1.0;
    for (std::size_t lane = 0; lane < kGovernedLanes; ++lane) {
        s[kNumPhases + lane] = std::clamp(obs.lane_total(lane) / capacity, 0.0, 1.0);
    }
    return s;
}

// ---------------------------------------------------------------------------
// QNetwork
// ---------------------------------------------------------------------------

QNetwork::QNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2 || std::any_of(sizes_.begin(), sizes_.end(), [](auto n) { return n == 0; })) {
        throw ContractViolation("a Q-network needs at least two non-empty layers");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const auto in = sizes_[l];
        const auto out = sizes_[l + 1];
        layers_.push_back({in, out, offset, offset + in * out});
        offset += in * out + out;
    }
    params_.assign(offset, 0.0f);

    // Glorot-uniform weights, zero biases.
    std::mt19937_64 rng(seed);
    for (const auto& layer : layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
            params_[layer.weights + i] = static_cast<float>(dist(rng));
        }
    }
}

QNetwork QNetwork::standard(std::size_t hidden, std::uint64_t seed) {
    return QNetwork({kStateSize, hidden, hidden, kNumPhases}, seed);
}

std::vector<double> QNetwork::forward(std::span<const double> input) const {
    if (input.size() != input_size()) {
        throw ContractViolation("Q-network input has the wrong size");
    }
    std::vector<double> act(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        next.assign(layer.out, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double z = params_[layer.biases + o];
            const float* w = &params_[layer.weights + o * layer.in];
            for (std::size_t i = 0; i < layer.in; ++i) {
                z += static_cast<double>(w[i]) * act[i];
            }
            next[o] = l + 1 < layers_.size() ? std::tanh(z) : z;
        }
        act.swap(next);
    }
    return act;
}

double QNetwork::loss(std::span<const double> inputs, std::span<const std::size_t> actions,
                      std::span<const double> targets) const {
    const auto batch = actions.size();
    if (batch == 0 || targets.size() != batch || inputs.size() != batch * input_size()) {
        throw ContractViolation("inconsistent batch shapes");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto q = forward(inputs.subspan(b * input_size(), input_size()));
        const double err = q.at(actions[b]) - targets[b];
        total += err * err;
    }
    return total / static_cast<double>(batch);
}

double QNetwork::loss_and_gradient(std::span<const double> inputs, std::span<const std::size_t> actions,
                                   std::span<const double> targets, std::vector<double>& grad) const {
    const auto batch = actions.size();
    if (batch == 0 || targets.size() != batch || inputs.size() != batch * input_size()) {
        throw ContractViolation("inconsistent batch shapes");
    }
    grad.assign(params_.size(), 0.0);
    double total = 0.0;

    // activations[l] is the input to layer l; activations.back() is the output.
    std::vector<std::vector<double>> activations(layers_.size() + 1);
    std::vector<double> delta;
    std::vector<double> prev_delta;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto x = inputs.subspan(b * input_size(), input_size());
        activations[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            auto& out = activations[l + 1];
            out.assign(layer.out, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                double z = params_[layer.biases + o];
                for (std::size_t i = 0; i < layer.in; ++i) {
                    z += static_cast<double>(params_[layer.weights + o * layer.in + i]) * activations[l][i];
                }
                out[o] = l + 1 < layers_.size() ? std::tanh(z) : z;
            }
        }
        const auto a = actions[b];
        if (a >= output_size()) {
            throw ContractViolation("action index out of range");
        }
        const double err = activations.back()[a] - targets[b];
        total += err * err;

        delta.assign(output_size(), 0.0);
        delta[a] = 2.0 * err / static_cast<double>(batch);
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& layer = layers_[l];
            const auto& in = activations[l];
            for (std::size_t o = 0; o < layer.out; ++o) {
                if (delta[o] == 0.0) {
                    continue;
                }
                grad[layer.biases + o] += delta[o];
                for (std::size_t i = 0; i < layer.in; ++i) {
                    grad[layer.weights + o * layer.in + i] += delta[o] * in[i];
                }
            }
            if (l == 0) {
                break;
            }
            prev_delta.assign(layer.in, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                for (std::size_t i = 0; i < layer.in; ++i) {
                    prev_delta[i] += static_cast<double>(params_[layer.weights + o * layer.in + i]) * delta[o];
                }
            }
            // in[] are tanh outputs of the previous layer.
            for (std::size_t i = 0; i < layer.in; ++i) {
                prev_delta[i] *= 1.0 - in[i] * in[i];
            }
            delta.swap(prev_delta);
        }
    }
    return total / static_cast<double>(batch);
}

// ---------------------------------------------------------------------------
// Weight files
// ---------------------------------------------------------------------------

void save_weights(const QNetwork& net, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw WeightFileError(WeightFileError::Kind::Io, "cannot write " + tmp);
        }
        out.write(kWeightMagic.data(), kWeightMagic.size());
        write_u32(out, kWeightVersion);
        write_u32(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
        for (auto n : net.layer_sizes()) {
            write_u32(out, static_cast<std::uint32_t>(n));
        }
        for (float p : net.parameters()) {
            write_u32(out, std::bit_cast<std::uint32_t>(p));
        }
        if (!out) {
            throw WeightFileError(WeightFileError::Kind::Io, "failed writing " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

void load_weights(QNetwork& net, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw WeightFileError(WeightFileError::Kind::Io, "cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kWeightMagic) {
        throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": bad magic header");
    }
    std::uint32_t version = 0;
    std::uint32_t count = 0;
    if (!read_u32(in, version)) {
        throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": truncated header");
    }
    if (version != kWeightVersion) {
        throw WeightFileError(WeightFileError::Kind::Version,
                              path.string() + ": unsupported version " + std::to_string(version));
    }
    if (!read_u32(in, count) || count > 64) {
        throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": corrupt layer table");
    }
    std::vector<std::size_t> sizes(count);
    for (auto& n : sizes) {
        std::uint32_t v = 0;
        if (!read_u32(in, v)) {
            throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": truncated layer table");
        }
        n = v;
    }
    if (sizes != net.layer_sizes()) {
        throw WeightFileError(WeightFileError::Kind::Shape, path.string() + ": layer shapes do not match");
    }
    std::vector<float> params(net.parameter_count());
    for (auto& p : params) {
        std::uint32_t bits = 0;
        if (!read_u32(in, bits)) {
            throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": truncated parameters");
        }
        p = std::bit_cast<float>(bits);
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw WeightFileError(WeightFileError::Kind::Format, path.string() + ": trailing bytes");
    }
    std::copy(params.begin(), params.end(), net.parameters().begin());
}

// ---------------------------------------------------------------------------
// Replay memory
// ---------------------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : buffer_(capacity) {
    if (capacity == 0) {
        throw ContractViolation("replay memory capacity must be positive");
    }
}

void ReplayMemory::push(Transition t) {
    buffer_[head_] = std::move(t);
    head_ = (head_ + 1) % buffer_.size();
    size_ = std::min(size_ + 1, buffer_.size());
}

const Transition& ReplayMemory::at(std::size_t i) const {
    if (i >= size_) {
        throw std::out_of_range("replay memory index out of range");
    }
    const auto oldest = (head_ + buffer_.size() - size_) % buffer_.size();
    return buffer_[(oldest + i) % buffer_.size()];
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t n, std::mt19937_64& rng) const {
    if (size_ == 0) {
        throw EmptyMemoryError();
    }
    n = std::min(n, size_);
    // Partial Fisher-Yates over the stored indices.
    std::vector<std::size_t> idx(size_);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, size_ - 1);
        std::swap(idx[i], idx[pick(rng)]);
        out.push_back(&at(idx[i]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

double td_target(double reward, double next_max_q, double gamma, double reward_scale) {
    return reward_scale * reward + gamma * next_max_q;
}

MPLightAgent::MPLightAgent(MPLightConfig config)
    : config_(config),
      online_(QNetwork::standard(config.hidden, derive_seed(config.seed, 1))),
      target_(online_),
      memory_(config.memory_capacity),
      explore_rng_(derive_seed(config.seed, 2)),
      replay_rng_(derive_seed(config.seed, 3)),
      epsilon_(config.epsilon_start) {
    if (config_.batch_size == 0 || config_.target_update == 0) {
        throw ConfigError("batch_size and target_update must be positive");
    }
    if (!(config_.epsilon_min >= 0.0 && config_.epsilon_min <= config_.epsilon_start && config_.epsilon_start <= 1.0)) {
        throw ConfigError("epsilon schedule must satisfy 0 <= epsilon_min <= epsilon_start <= 1");
    }
    m_.assign(online_.parameter_count(), 0.0);
    v_.assign(online_.parameter_count(), 0.0);
}

std::array<double, kNumPhases> MPLightAgent::q_values(const StateVector& s) const {
    const auto q = online_.forward(s);
    std::array<double, kNumPhases> out{};
    std::copy(q.begin(), q.end(), out.begin());
    return out;
}

Phase MPLightAgent::act(const StateVector& s, bool explore) {
    if (explore) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(explore_rng_) < epsilon_) {
            std::uniform_int_distribution<std::size_t> pick(0, kNumPhases - 1);
            return phase_from_index(pick(explore_rng_));
        }
    }
    return phase_from_index(argmax_lowest(q_values(s)));
}

void MPLightAgent::set_epsilon(double e) {
    epsilon_ = std::clamp(e, config_.epsilon_min, 1.0);
}

void MPLightAgent::advance_exploration() {
    ++exploration_steps_;
    const double frac = std::min(1.0, static_cast<double>(exploration_steps_) /
                                          static_cast<double>(std::max<std::size_t>(1, config_.epsilon_decay_steps)));
    epsilon_ = config_.epsilon_start + (config_.epsilon_min - config_.epsilon_start) * frac;
}

void MPLightAgent::store(Transition t) { memory_.push(std::move(t)); }

std::optional<double> MPLightAgent::train_step() {
    if (memory_.size() < config_.batch_size) {
        return std::nullopt;
    }
    const auto batch = memory_.sample(config_.batch_size, replay_rng_);
    std::vector<double> inputs;
    std::vector<std::size_t> actions;
    std::vector<double> targets;
    inputs.reserve(batch.size() * kStateSize);
    for (const auto* t : batch) {
        inputs.insert(inputs.end(), t->state.begin(), t->state.end());
        actions.push_back(phase_index(t->action));
        const auto next_q = target_.forward(t->next_state);
        targets.push_back(td_target(t->reward, *std::max_element(next_q.begin(), next_q.end()), config_.gamma,
                                    config_.reward_scale));
    }
    std::vector<double> grad;
    const double loss = online_.loss_and_gradient(inputs, actions, targets, grad);

    // Adam
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++adam_t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
    auto params = online_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double step = config_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        params[i] = static_cast<float>(static_cast<double>(params[i]) - step);
    }

    ++train_steps_;
    if (train_steps_ % config_.target_update == 0) {
        sync_target();
    }
    return loss;
}

void MPLightAgent::load(const std::filesystem::path& path) {
    load_weights(online_, path);
    sync_target();
}

MPLightPolicy::MPLightPolicy(std::shared_ptr<MPLightAgent> agent, bool explore)
    : agent_(std::move(agent)), explore_(explore) {
    if (!agent_) {
        throw ContractViolation("MPLightPolicy needs an agent");
    }
}

Phase MPLightPolicy::decide(const DecisionContext& ctx) {
    return agent_->act(encode_state(ctx.observation, agent_->config().capacity_norm), explore_);
}

} // namespace tsc
