#include "tsc/metrics.hpp"

#include <cstdio>
#include <numeric>

namespace tsc {

MetricsAccumulator::MetricsAccumulator(std::size_t intersections) : k_(intersections) {
    if (k_ == 0) {
        throw ContractViolation("metrics need at least one intersection");
    }
}

void MetricsAccumulator::record_step(std::span<const double> queues, std::span<const double> waits) {
    if (queues.size() != k_ || waits.size() != k_) {
        throw ContractViolation("record_step expects " + std::to_string(k_) + " values each");
    }
    const auto n = static_cast<double>(k_);
    q_bar_.push_back(std::accumulate(queues.begin(), queues.end(), 0.0) / n);
    w_bar_.push_back(std::accumulate(waits.begin(), waits.end(), 0.0) / n);
}

void MetricsAccumulator::record_step(const StepStats& stats) {
    std::vector<double> queues(stats.queue_per_intersection.begin(), stats.queue_per_intersection.end());
    record_step(queues, stats.waiting_per_intersection);
}

void MetricsAccumulator::record_exit(const Vehicle& vehicle) {
    if (!vehicle.exit_time || !vehicle.entry_time) {
        throw ContractViolation("record_exit needs a vehicle with entry and exit times");
    }
    travel_.push_back(*vehicle.exit_time - *vehicle.entry_time);
    waiting_.push_back(vehicle.waiting_seconds);
}

MetricsReport MetricsAccumulator::finalize() const {
    MetricsReport r;
    r.steps = q_bar_.size();
    r.mean_queue_trace = q_bar_;
    r.mean_waiting_trace = w_bar_;
    r.n_exited = travel_.size();
    r.n_entered = entered_;
    r.t_total = std::accumulate(travel_.begin(), travel_.end(), 0.0);
    r.waiting_total = std::accumulate(waiting_.begin(), waiting_.end(), 0.0);
    if (!travel_.empty()) {
        const auto n = static_cast<double>(travel_.size());
        r.att = r.t_total / n;
        r.awt = r.waiting_total / n;
    }
    if (!q_bar_.empty()) {
        const double network_total =
            std::accumulate(q_bar_.begin(), q_bar_.end(), 0.0) * static_cast<double>(k_);
        r.aql = network_total / static_cast<double>(q_bar_.size());
    }
    return r;
}

std::string format_metric(const std::optional<double>& v, int precision) {
    if (!v) {
        return "NA";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
    return buf;
}

std::string csv_header() { return "method,agents,seed,att,aql,awt,n_entered,n_exited\n"; }

std::string csv_row(const RunRow& row) {
    return row.method + "," + std::to_string(row.agents) + "," + std::to_string(row.seed) + "," +
           format_metric(row.report.att) + "," + format_metric(row.report.aql) + "," +
           format_metric(row.report.awt) + "," + std::to_string(row.report.n_entered) + "," +
           std::to_string(row.report.n_exited) + "\n";
}

} // namespace tsc
