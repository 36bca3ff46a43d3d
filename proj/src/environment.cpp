#include "tsc/environment.hpp"

#include <algorithm>
#include <sstream>

namespace tsc {

void SimConfig::validate() const {
    if (tick_seconds <= 0) {
        throw ConfigError("tick_seconds must be positive");
    }
    if (tau_seconds <= 0 || tau_seconds % tick_seconds != 0) {
        throw ConfigError("tau_seconds must be a positive multiple of tick_seconds");
    }
    if (duration_seconds <= 0 || duration_seconds % tau_seconds != 0) {
        throw ConfigError("duration_seconds must be a positive multiple of tau_seconds");
    }
    if (!(saturation_headway > 0.0)) {
        throw ConfigError("saturation_headway must be positive");
    }
    if (!(segment_traverse_seconds > 0.0)) {
        throw ConfigError("segment_traverse_seconds must be positive");
    }
    if (capacity_per_segment < 1) {
        throw ConfigError("capacity_per_segment must be at least 1");
    }
    if (!(turn_probability >= 0.0 && turn_probability <= 1.0)) {
        throw ConfigError("turn_probability must lie in [0, 1]");
    }
}

int ObservationState::lane_total(std::size_t lane) const {
    int total = queued.at(lane);
    for (int c : approaching.at(lane)) {
        total += c;
    }
    return total;
}

std::string_view event_kind_name(EventKind k) {
    switch (k) {
    case EventKind::Spawn:
        return "spawn";
    case EventKind::Enter:
        return "enter";
    case EventKind::JoinQueue:
        return "join";
    case EventKind::Discharge:
        return "discharge";
    case EventKind::Exit:
        return "exit";
    case EventKind::Decision:
        return "decision";
    }
    return "?";
}

Environment::Environment(RoadNetwork network, Demand demand, SimConfig config)
    : network_(std::move(network)), demand_(std::move(demand)), config_(config) {
    config_.validate();
    network_.validate();
    const auto& entries = network_.entry_points();
    for (const auto& rate : demand_.rates) {
        const auto it = std::find(entries.begin(), entries.end(), rate.entry);
        if (it == entries.end()) {
            throw TopologyError("demand references " + entry_point_id(rate.entry) +
                                " which is not a boundary approach");
        }
        if (!(rate.lambda >= 0.0)) {
            throw ConfigError("arrival rate must be non-negative at " + entry_point_id(rate.entry));
        }
        demand_entry_.push_back(static_cast<std::size_t>(it - entries.begin()));
    }
    for (const auto& v : demand_.vehicles) {
        if (auto problem = network_.route_problem(v.entry, v.route)) {
            throw TopologyError("scheduled vehicle: " + *problem);
        }
    }
    if (!std::is_sorted(demand_.vehicles.begin(), demand_.vehicles.end(),
                        [](const auto& a, const auto& b) { return a.entry_time < b.entry_time; })) {
        throw ConfigError("scheduled vehicles must be sorted by entry_time");
    }
    reset();
}

std::vector<ObservationState> Environment::reset() {
    config_.validate();
    rng_.seed(config_.seed);
    clock_ = 0.0;
    steps_taken_ = 0;
    lanes_.assign(network_.lane_count(), LaneState{});
    intersections_.assign(network_.size(), IntersectionState{});
    vehicles_.clear();
    backlog_.assign(network_.entry_points().size(), {});
    next_scheduled_ = 0;
    spawned_ = entered_ = exited_ = 0;
    last_step_ = StepStats{};
    events_.clear();
    return observe_all();
}

std::vector<ObservationState> Environment::step(const std::vector<Phase>& actions) {
    if (actions.size() != network_.size()) {
        throw ContractViolation("expected " + std::to_string(network_.size()) + " actions, got " +
                                std::to_string(actions.size()));
    }
    if (finished()) {
        throw ContractViolation("simulation already reached its duration");
    }
    for (IntersectionId k = 0; k < actions.size(); ++k) {
        auto& state = intersections_[k];
        if (state.phase != actions[k]) {
            state.phase = actions[k];
            state.phase_elapsed = 0.0;
        }
        log(clock_, EventKind::Decision, 0, k, phase_index(actions[k]));
    }

    last_step_.queue_per_intersection.assign(network_.size(), 0);
    last_step_.waiting_per_intersection.assign(network_.size(), 0.0);
    last_step_.exited.clear();

    const int ticks = config_.tau_seconds / config_.tick_seconds;
    for (int i = 0; i < ticks; ++i) {
        tick();
    }
    ++steps_taken_;
    for (IntersectionId k = 0; k < network_.size(); ++k) {
        last_step_.queue_per_intersection[k] = intersection_queue(k);
    }
    return observe_all();
}

void Environment::tick() {
    spawn_arrivals();
    discharge_queues();
    advance_vehicles();
    accumulate_waiting();
    clock_ += config_.tick_seconds;
    for (auto& s : intersections_) {
        s.phase_elapsed += config_.tick_seconds;
    }
    if (tick_observer_) {
        tick_observer_(*this);
    }
}

Route Environment::sample_route(const EntryPoint& entry) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::size_t max_turning_hops = network_.rows() + network_.cols() + 4;
    Route route;
    auto heading = opposite(entry.approach);
    IntersectionId at = entry.intersection;
    while (true) {
        const double u = uniform(rng_);
        const double side = uniform(rng_);
        if (u < config_.turn_probability && route.size() < max_turning_hops) {
            heading = side < 0.5 ? left_of(heading) : right_of(heading);
        }
        route.push_back({at, heading});
        const auto next = network_.neighbor(at, heading);
        if (!next) {
            break;
        }
        at = *next;
    }
    return route;
}

std::size_t Environment::segment_occupancy(const LaneState& lane, std::size_t segment) const {
    return lane.moving[segment].size() + (segment == 0 ? lane.queue.size() : 0);
}

bool Environment::try_place(VehicleId id, IntersectionId k, Direction approach) {
    auto& v = vehicles_[id];
    const auto heading_in = opposite(approach);
    const auto movement = movement_between(heading_in, v.route.at(v.hop).heading);
    if (!movement || v.route[v.hop].intersection != k) {
        throw TopologyError("vehicle " + std::to_string(id) + " has no lane at intersection " +
                            std::to_string(k));
    }
    const auto lane_id = RoadNetwork::lane_id(k, slot_index(approach, *movement));
    auto& lane = lanes_[lane_id];
    const auto entry_segment = kSegments - 1;
    if (segment_occupancy(lane, entry_segment) >= static_cast<std::size_t>(config_.capacity_per_segment)) {
        return false;
    }
    lane.moving[entry_segment].push_back(id);
    v.lane = lane_id;
    v.segment = entry_segment;
    v.queued = false;
    v.segment_elapsed = 0.0;
    return true;
}

void Environment::spawn_arrivals() {
    const auto& entries = network_.entry_points();
    auto create = [&](const EntryPoint& entry, Route route) {
        Vehicle v;
        v.id = vehicles_.size();
        v.entry = entry;
        v.route = std::move(route);
        v.spawn_time = clock_;
        vehicles_.push_back(std::move(v));
        ++spawned_;
        const auto idx = static_cast<std::size_t>(
            std::find(entries.begin(), entries.end(), entry) - entries.begin());
        backlog_[idx].push_back(vehicles_.back().id);
        log(clock_, EventKind::Spawn, vehicles_.back().id, 0);
    };

    while (next_scheduled_ < demand_.vehicles.size() &&
           demand_.vehicles[next_scheduled_].entry_time <= clock_) {
        const auto& s = demand_.vehicles[next_scheduled_++];
        create(s.entry, s.route);
    }
    for (std::size_t i = 0; i < demand_.rates.size(); ++i) {
        const auto& rate = demand_.rates[i];
        if (rate.lambda <= 0.0) {
            continue;
        }
        std::poisson_distribution<int> arrivals(rate.lambda * config_.tick_seconds);
        const int n = arrivals(rng_);
        for (int j = 0; j < n; ++j) {
            create(rate.entry, sample_route(rate.entry));
        }
    }
    for (std::size_t e = 0; e < backlog_.size(); ++e) {
        auto& pending = backlog_[e];
        while (!pending.empty()) {
            const auto id = pending.front();
            if (!try_place(id, entries[e].intersection, entries[e].approach)) {
                break;
            }
            pending.pop_front();
            vehicles_[id].entry_time = clock_;
            ++entered_;
            log(clock_, EventKind::Enter, id, *vehicles_[id].lane);
        }
    }
}

void Environment::discharge_queues() {
    const double end_of_tick = clock_ + config_.tick_seconds;
    const double rate = config_.tick_seconds / config_.saturation_headway;
    for (LaneId lane_id = 0; lane_id < lanes_.size(); ++lane_id) {
        auto& lane = lanes_[lane_id];
        const auto k = RoadNetwork::lane_intersection(lane_id);
        if (!slot_permitted(RoadNetwork::lane_slot_of(lane_id), intersections_[k].phase)) {
            lane.discharge_credit = 0.0;
            continue;
        }
        lane.discharge_credit += rate;
        while (lane.discharge_credit >= 1.0 && !lane.queue.empty()) {
            const auto id = lane.queue.front();
            auto& v = vehicles_[id];
            const auto hop = v.route.at(v.hop);
            const auto next = network_.neighbor(k, hop.heading);
            if (next) {
                ++v.hop;
                if (!try_place(id, *next, opposite(hop.heading))) {
                    --v.hop;
                    break;
                }
                lane.queue.pop_front();
                log(end_of_tick, EventKind::Discharge, id, lane_id);
                log(end_of_tick, EventKind::Enter, id, *v.lane);
            } else {
                lane.queue.pop_front();
                log(end_of_tick, EventKind::Discharge, id, lane_id);
                v.lane.reset();
                v.queued = false;
                v.exit_time = end_of_tick;
                ++exited_;
                last_step_.exited.push_back(id);
                log(end_of_tick, EventKind::Exit, id, lane_id);
            }
            lane.discharge_credit -= 1.0;
        }
        lane.discharge_credit = std::min(lane.discharge_credit, 1.0);
    }
}

void Environment::advance_vehicles() {
    const auto capacity = static_cast<std::size_t>(config_.capacity_per_segment);
    const double dt = config_.tick_seconds;
    const double traverse = config_.segment_traverse_seconds;
    for (LaneId lane_id = 0; lane_id < lanes_.size(); ++lane_id) {
        auto& lane = lanes_[lane_id];
        // Stop-line cell first so a vehicle advances at most one cell per tick.
        for (auto id : lane.moving[0]) {
            vehicles_[id].segment_elapsed += dt;
        }
        while (!lane.moving[0].empty() && vehicles_[lane.moving[0].front()].segment_elapsed >= traverse) {
            const auto id = lane.moving[0].front();
            lane.moving[0].pop_front();
            lane.queue.push_back(id);
            vehicles_[id].queued = true;
            log(clock_ + dt, EventKind::JoinQueue, id, lane_id);
        }
        for (std::size_t seg = 1; seg < kSegments; ++seg) {
            for (auto id : lane.moving[seg]) {
                vehicles_[id].segment_elapsed += dt;
            }
            auto& from = lane.moving[seg];
            while (!from.empty() && vehicles_[from.front()].segment_elapsed >= traverse &&
                   segment_occupancy(lane, seg - 1) < capacity) {
                const auto id = from.front();
                from.pop_front();
                lane.moving[seg - 1].push_back(id);
                auto& v = vehicles_[id];
                v.segment = seg - 1;
                v.segment_elapsed = 0.0;
            }
        }
    }
}

void Environment::accumulate_waiting() {
    const double dt = config_.tick_seconds;
    for (LaneId lane_id = 0; lane_id < lanes_.size(); ++lane_id) {
        const auto& lane = lanes_[lane_id];
        if (lane.queue.empty()) {
            continue;
        }
        for (auto id : lane.queue) {
            vehicles_[id].waiting_seconds += dt;
        }
        if (!last_step_.waiting_per_intersection.empty()) {
            last_step_.waiting_per_intersection[RoadNetwork::lane_intersection(lane_id)] +=
                dt * static_cast<double>(lane.queue.size());
        }
    }
}

void Environment::log(double time, EventKind kind, VehicleId vehicle, LaneId lane, std::size_t detail) {
    if (config_.record_events) {
        events_.push_back({time, kind, vehicle, lane, detail});
    }
}

ObservationState Environment::observe(IntersectionId k) const {
    network_.check(k);
    ObservationState obs;
    obs.intersection = k;
    obs.current_phase = intersections_[k].phase;
    for (std::size_t slot = 0; slot < kGovernedLanes; ++slot) {
        const auto& lane = lanes_[RoadNetwork::lane_id(k, slot)];
        obs.queued[slot] = static_cast<int>(lane.queue.size());
        for (std::size_t seg = 0; seg < kSegments; ++seg) {
            obs.approaching[slot][seg] = static_cast<int>(lane.moving[seg].size());
        }
    }
    return obs;
}

std::vector<ObservationState> Environment::observe_all() const {
    std::vector<ObservationState> out;
    out.reserve(network_.size());
    for (IntersectionId k = 0; k < network_.size(); ++k) {
        out.push_back(observe(k));
    }
    return out;
}

int Environment::lane_queue(LaneId lane) const { return static_cast<int>(lanes_.at(lane).queue.size()); }

int Environment::lane_vehicle_count(LaneId lane) const {
    const auto& l = lanes_.at(lane);
    std::size_t n = l.queue.size();
    for (const auto& seg : l.moving) {
        n += seg.size();
    }
    return static_cast<int>(n);
}

int Environment::receiving_queue(LaneId lane) const {
    const auto link = network_.downstream(lane);
    if (!link) {
        return 0;
    }
    int total = 0;
    for (auto movement : {Movement::Left, Movement::Through, Movement::Right}) {
        total += lane_queue(RoadNetwork::lane_id(link->intersection, slot_index(link->approach, movement)));
    }
    return total;
}

int Environment::pressure(IntersectionId k, Phase phase) const {
    network_.check(k);
    int p = 0;
    for (auto slot : phase_slots(phase)) {
        const auto lane = RoadNetwork::lane_id(k, slot);
        p += lane_queue(lane) - receiving_queue(lane);
    }
    return p;
}

std::array<int, kNumPhases> Environment::phase_pressures(IntersectionId k) const {
    std::array<int, kNumPhases> out{};
    for (auto p : kAllPhases) {
        out[phase_index(p)] = pressure(k, p);
    }
    return out;
}

int Environment::intersection_pressure(IntersectionId k) const {
    int total = 0;
    for (int p : phase_pressures(k)) {
        total += p;
    }
    return total;
}

Phase Environment::current_phase(IntersectionId k) const {
    network_.check(k);
    return intersections_[k].phase;
}

int Environment::intersection_queue(IntersectionId k) const {
    int total = 0;
    for (std::size_t slot = 0; slot < kLanesPerIntersection; ++slot) {
        total += lane_queue(RoadNetwork::lane_id(k, slot));
    }
    return total;
}

int Environment::network_queue() const {
    int total = 0;
    for (const auto& lane : lanes_) {
        total += static_cast<int>(lane.queue.size());
    }
    return total;
}

std::uint64_t Environment::vehicles_on_network() const {
    std::uint64_t n = 0;
    for (const auto& lane : lanes_) {
        n += lane.queue.size();
        for (const auto& seg : lane.moving) {
            n += seg.size();
        }
    }
    return n;
}

std::uint64_t Environment::backlog_size() const {
    std::uint64_t n = 0;
    for (const auto& b : backlog_) {
        n += b.size();
    }
    return n;
}

bool Environment::conservation_holds() const {
    return spawned_ == exited_ + vehicles_on_network() + backlog_size() &&
           entered_ == exited_ + vehicles_on_network();
}

const Vehicle& Environment::vehicle(VehicleId id) const {
    if (id >= vehicles_.size()) {
        throw NotFoundError("unknown vehicle " + std::to_string(id));
    }
    return vehicles_[id];
}

std::string Environment::serialize_events() const {
    std::ostringstream out;
    for (const auto& e : events_) {
        out << e.time << ' ' << event_kind_name(e.kind) << ' ' << e.vehicle << ' ' << e.lane << ' '
            << e.detail << '\n';
    }
    return out.str();
}

VehicleId Environment::place_vehicle(LaneId lane_id, Route route, std::optional<std::size_t> segment) {
    if (lane_id >= lanes_.size()) {
        throw NotFoundError("unknown lane " + std::to_string(lane_id));
    }
    const auto k = RoadNetwork::lane_intersection(lane_id);
    const auto slot = lane_slot(RoadNetwork::lane_slot_of(lane_id));
    if (route.empty() || route.front().intersection != k ||
        movement_between(opposite(slot.approach), route.front().heading) != slot.movement) {
        throw ContractViolation("route does not start with this lane's movement");
    }
    if (segment && *segment >= kSegments) {
        throw ContractViolation("segment index out of range");
    }
    auto& lane = lanes_[lane_id];
    const auto seg = segment.value_or(0);
    if (segment_occupancy(lane, seg) >= static_cast<std::size_t>(config_.capacity_per_segment)) {
        throw ContractViolation("segment is at capacity");
    }
    Vehicle v;
    v.id = vehicles_.size();
    v.entry = {k, slot.approach};
    v.route = std::move(route);
    v.spawn_time = clock_;
    v.entry_time = clock_;
    v.lane = lane_id;
    v.segment = seg;
    v.queued = !segment.has_value();
    vehicles_.push_back(std::move(v));
    const auto id = vehicles_.back().id;
    if (segment) {
        lane.moving[seg].push_back(id);
    } else {
        lane.queue.push_back(id);
    }
    ++spawned_;
    ++entered_;
    log(clock_, EventKind::Spawn, id, lane_id);
    log(clock_, EventKind::Enter, id, lane_id);
    if (!segment) {
        log(clock_, EventKind::JoinQueue, id, lane_id);
    }
    return id;
}

} // namespace tsc
