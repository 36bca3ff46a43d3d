#include "tsc/network.hpp"

#include <charconv>

namespace tsc {

std::string entry_point_id(const EntryPoint& e) {
    return "I" + std::to_string(e.intersection) + ":" + direction_char(e.approach);
}

std::optional<EntryPoint> parse_entry_point_id(std::string_view id) {
    const auto colon = id.find(':');
    if (id.size() < 4 || id.front() != 'I' || colon == std::string_view::npos) {
        return std::nullopt;
    }
    std::size_t k = 0;
    const auto digits = id.substr(1, colon - 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        return std::nullopt;
    }
    const auto dir = parse_direction(id.substr(colon + 1));
    if (!dir) {
        return std::nullopt;
    }
    return EntryPoint{k, *dir};
}

RoadNetwork::RoadNetwork(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw TopologyError("grid must have at least one row and one column");
    }
    for (IntersectionId k = 0; k < size(); ++k) {
        for (auto side : kAllDirections) {
            if (!neighbor(k, side)) {
                entry_points_.push_back({k, side});
            }
        }
    }
}

void RoadNetwork::check(IntersectionId k) const {
    if (!contains(k)) {
        throw NotFoundError("unknown intersection " + std::to_string(k));
    }
}

std::optional<IntersectionId> RoadNetwork::neighbor(IntersectionId k, Direction heading) const {
    check(k);
    const auto r = k / cols_;
    const auto c = k % cols_;
    switch (heading) {
    case Direction::N:
        if (r == 0) return std::nullopt;
        return k - cols_;
    case Direction::S:
        if (r + 1 == rows_) return std::nullopt;
        return k + cols_;
    case Direction::W:
        if (c == 0) return std::nullopt;
        return k - 1;
    case Direction::E:
        if (c + 1 == cols_) return std::nullopt;
        return k + 1;
    }
    return std::nullopt;
}

std::optional<DownstreamLink> RoadNetwork::downstream(LaneId lane) const {
    const auto k = lane_intersection(lane);
    check(k);
    const auto slot = lane_slot(lane_slot_of(lane));
    const auto heading = heading_after(opposite(slot.approach), slot.movement);
    const auto next = neighbor(k, heading);
    if (!next) {
        return std::nullopt;
    }
    return DownstreamLink{*next, opposite(heading)};
}

bool RoadNetwork::is_entry(const EntryPoint& e) const {
    return contains(e.intersection) && !neighbor(e.intersection, e.approach);
}

std::optional<std::string> RoadNetwork::route_problem(const EntryPoint& entry,
                                                      const Route& route) const {
    if (!is_entry(entry)) {
        return "entry " + entry_point_id(entry) + " is not a boundary approach";
    }
    if (route.empty()) {
        return "route is empty";
    }
    auto heading = opposite(entry.approach);
    IntersectionId at = entry.intersection;
    for (std::size_t i = 0; i < route.size(); ++i) {
        const auto& hop = route[i];
        if (!contains(hop.intersection)) {
            return "hop " + std::to_string(i) + " references intersection " +
                   std::to_string(hop.intersection) + " outside the grid";
        }
        if (hop.intersection != at) {
            return "hop " + std::to_string(i) + " is not adjacent to the previous hop";
        }
        if (!movement_between(heading, hop.heading)) {
            return "hop " + std::to_string(i) + " is a U-turn";
        }
        const auto next = neighbor(at, hop.heading);
        const bool last = i + 1 == route.size();
        if (last && next) {
            return "route ends inside the grid";
        }
        if (!last && !next) {
            return "route leaves the grid before its last hop";
        }
        if (next) {
            at = *next;
        }
        heading = hop.heading;
    }
    return std::nullopt;
}

void RoadNetwork::validate() const {
    for (LaneId lane = 0; lane < lane_count(); ++lane) {
        const auto link = downstream(lane);
        if (link && !contains(link->intersection)) {
            throw TopologyError("lane " + std::to_string(lane) + " has a dangling downstream link");
        }
    }
}

} // namespace tsc
