#pragma once

#include "tsc/network.hpp"
#include "tsc/types.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tsc {

/// Simulation constants. All times are in seconds.
struct SimConfig {
    int tick_seconds = 1;
    int tau_seconds = 30;
    int duration_seconds = 3600;
    double saturation_headway = 2.0;
    double segment_traverse_seconds = 10.0;
    int capacity_per_segment = 13;
    double turn_probability = 0.1;
    std::uint64_t seed = 0;
    bool record_events = false;

    /// Throws ConfigError when an invariant does not hold.
    void validate() const;
    int decision_steps() const { return duration_seconds / tau_seconds; }
};

/// Poisson arrival rate (vehicles per second) at one boundary approach.
struct EntryDemand {
    EntryPoint entry;
    double lambda = 0.0;
};

/// A pre-scheduled vehicle with a fixed route.
struct ScheduledVehicle {
    double entry_time = 0.0;
    EntryPoint entry;
    Route route;
};

struct Demand {
    std::vector<EntryDemand> rates;
    std::vector<ScheduledVehicle> vehicles; ///< sorted by entry_time
};

using VehicleId = std::uint64_t;

struct Vehicle {
    VehicleId id = 0;
    EntryPoint entry{};
    Route route;
    std::size_t hop = 0; ///< index of the next turn decision in `route`
    double spawn_time = 0.0;
    std::optional<double> entry_time; ///< set when the vehicle is placed on the network
    std::optional<double> exit_time;
    double waiting_seconds = 0.0;
    std::optional<LaneId> lane;
    std::size_t segment = 2; ///< 0-based, 0 is segment 1 (nearest the stop line)
    bool queued = false;
    double segment_elapsed = 0.0;
};

/// Per-intersection snapshot handed to policies. Lane order follows the
/// governed lane slots (phase p releases lanes 2p and 2p+1).
struct ObservationState {
    IntersectionId intersection = 0;
    Phase current_phase = Phase::ELWL;
    std::array<int, kGovernedLanes> queued{};
    std::array<std::array<int, kSegments>, kGovernedLanes> approaching{};

    int lane_total(std::size_t lane) const;

    friend bool operator==(const ObservationState&, const ObservationState&) = default;
};

enum class EventKind : std::uint8_t { Spawn, Enter, JoinQueue, Discharge, Exit, Decision };

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::Spawn;
    VehicleId vehicle = 0;
    LaneId lane = 0;     ///< lane for vehicle events; intersection for Decision
    std::size_t detail = 0; ///< phase index for Decision

    friend bool operator==(const Event&, const Event&) = default;
};

std::string_view event_kind_name(EventKind k);

/// Queue and waiting statistics of the last decision step.
struct StepStats {
    std::vector<int> queue_per_intersection;       ///< at the end of the step
    std::vector<double> waiting_per_intersection;  ///< seconds accrued during the step
    std::vector<VehicleId> exited;                 ///< vehicles that left during the step
};

/// Discrete-time grid traffic environment. Each lane is split into three
/// cells; vehicles cross one cell per `segment_traverse_seconds`, queue at
/// the stop line, and discharge at one vehicle per `saturation_headway`
/// while their lane is released.
class Environment {
  public:
    Environment(RoadNetwork network, Demand demand, SimConfig config);

    const RoadNetwork& network() const { return network_; }
    const SimConfig& config() const { return config_; }
    std::size_t intersection_count() const { return network_.size(); }

    std::vector<ObservationState> reset();
    std::vector<ObservationState> step(const std::vector<Phase>& actions);
    ObservationState observe(IntersectionId k) const;
    std::vector<ObservationState> observe_all() const;

    /// Sum over the phase's two lanes of (lane queue - receiving road queue).
    /// The receiving road is the downstream approach; exits count as zero.
    int pressure(IntersectionId k, Phase phase) const;
    std::array<int, kNumPhases> phase_pressures(IntersectionId k) const;
    /// Pressure summed over all eight governed lanes.
    int intersection_pressure(IntersectionId k) const;

    double clock() const { return clock_; }
    int steps_taken() const { return steps_taken_; }
    bool finished() const { return clock_ >= config_.duration_seconds; }
    Phase current_phase(IntersectionId k) const;

    int lane_queue(LaneId lane) const;
    int lane_vehicle_count(LaneId lane) const;
    /// Queue on the downstream approach of `lane` (0 if it exits).
    int receiving_queue(LaneId lane) const;
    int intersection_queue(IntersectionId k) const;
    int network_queue() const;

    std::uint64_t vehicles_spawned() const { return spawned_; }
    std::uint64_t vehicles_entered() const { return entered_; }
    std::uint64_t vehicles_exited() const { return exited_; }
    std::uint64_t vehicles_on_network() const;
    std::uint64_t backlog_size() const;
    bool conservation_holds() const;

    const std::vector<Vehicle>& vehicles() const { return vehicles_; }
    const Vehicle& vehicle(VehicleId id) const;
    const StepStats& last_step() const { return last_step_; }
    const std::vector<Event>& events() const { return events_; }
    std::string serialize_events() const;

    /// Called after every micro-tick.
    void set_tick_observer(std::function<void(const Environment&)> fn) { tick_observer_ = std::move(fn); }

    /// Places a vehicle directly on `lane` for fixtures. `route` must start at
    /// the lane's intersection with a heading matching the lane's movement.
    /// `segment` is 0-based; nullopt puts the vehicle in the stop-line queue.
    VehicleId place_vehicle(LaneId lane, Route route, std::optional<std::size_t> segment);

  private:
    struct LaneState {
        std::array<std::deque<VehicleId>, kSegments> moving;
        std::deque<VehicleId> queue;
        double discharge_credit = 0.0;
    };

    struct IntersectionState {
        Phase phase = Phase::ELWL;
        double phase_elapsed = 0.0;
    };

    void tick();
    void spawn_arrivals();
    void discharge_queues();
    void advance_vehicles();
    void accumulate_waiting();

    Route sample_route(const EntryPoint& entry);
    bool try_place(VehicleId id, IntersectionId k, Direction approach);
    std::size_t segment_occupancy(const LaneState& lane, std::size_t segment) const;
    void log(double time, EventKind kind, VehicleId vehicle, LaneId lane, std::size_t detail = 0);

    RoadNetwork network_;
    Demand demand_;
    SimConfig config_;

    std::mt19937_64 rng_;
    double clock_ = 0.0;
    int steps_taken_ = 0;
    std::vector<LaneState> lanes_;
    std::vector<IntersectionState> intersections_;
    std::vector<Vehicle> vehicles_;
    std::vector<std::deque<VehicleId>> backlog_; ///< per entry point
    std::vector<std::size_t> demand_entry_;      ///< demand rate -> entry point index
    std::size_t next_scheduled_ = 0;
    std::uint64_t spawned_ = 0;
    std::uint64_t entered_ = 0;
    std::uint64_t exited_ = 0;

    StepStats last_step_;
    std::vector<Event> events_;
    std::function<void(const Environment&)> tick_observer_;
};

} // namespace tsc
