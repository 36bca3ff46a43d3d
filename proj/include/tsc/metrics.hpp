#pragma once

#include "tsc/environment.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsc {

/// Final statistics of one run.
///
/// ATT and AWT are means over exited vehicles and are undefined (nullopt)
/// when nothing exited. AQL is the time mean, over decision steps, of the
/// total number of queued vehicles in the network. Vehicles still on the
/// network at the end are not part of ATT/AWT; they show up as
/// `n_entered - n_exited`.
struct MetricsReport {
    std::optional<double> att;
    double aql = 0.0;
    std::optional<double> awt;
    double t_total = 0.0;
    double waiting_total = 0.0;
    std::uint64_t n_exited = 0;
    std::uint64_t n_entered = 0;
    std::size_t steps = 0;
    std::vector<double> mean_queue_trace;   ///< Q-bar per step (per-intersection average)
    std::vector<double> mean_waiting_trace; ///< W-bar per step (per-intersection average)
};

class MetricsAccumulator {
  public:
    explicit MetricsAccumulator(std::size_t intersections);

    /// Appends Q-bar = mean(queues) and W-bar = mean(waits).
    void record_step(std::span<const double> queues, std::span<const double> waits);
    void record_step(const StepStats& stats);
    /// Records T_i = exit_time - entry_time and the vehicle's waiting total.
    void record_exit(const Vehicle& vehicle);
    void set_entered(std::uint64_t n) { entered_ = n; }

    std::size_t steps() const { return q_bar_.size(); }
    const std::vector<double>& travel_times() const { return travel_; }

    MetricsReport finalize() const;

  private:
    std::size_t k_;
    std::vector<double> q_bar_;
    std::vector<double> w_bar_;
    std::vector<double> travel_;
    std::vector<double> waiting_;
    std::uint64_t entered_ = 0;
};

/// One CSV row per run: method, agents, seed, att, aql, awt, n_entered, n_exited.
struct RunRow {
    std::string method;
    int agents = 1;
    std::uint64_t seed = 0;
    MetricsReport report;
};

std::string csv_header();
std::string csv_row(const RunRow& row);
std::string format_metric(const std::optional<double>& v, int precision = 6);

} // namespace tsc
