#pragma once

#include "tsc/types.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tsc {

using IntersectionId = std::size_t; ///< 0-based, row-major over the grid.
using LaneId = std::size_t;         ///< intersection * 12 + slot.

/// Where a lane's discharged vehicles go: the approach of a neighbouring
/// intersection, or off the network.
struct DownstreamLink {
    IntersectionId intersection;
    Direction approach;

    friend bool operator==(const DownstreamLink&, const DownstreamLink&) = default;
};

/// A boundary approach where vehicles enter the network.
struct EntryPoint {
    IntersectionId intersection;
    Direction approach;

    friend bool operator==(const EntryPoint&, const EntryPoint&) = default;
};

std::string entry_point_id(const EntryPoint& e);
std::optional<EntryPoint> parse_entry_point_id(std::string_view id);

/// One turn decision: leave `intersection` travelling `heading`.
struct RouteHop {
    IntersectionId intersection;
    Direction heading;

    friend bool operator==(const RouteHop&, const RouteHop&) = default;
};

using Route = std::vector<RouteHop>;

/// Static topology of a rows x cols grid. Row 0 is the northern edge,
/// column 0 the western edge. Every intersection has 12 incoming lanes
/// (4 approaches x {left, through, right}).
class RoadNetwork {
  public:
    RoadNetwork(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    std::size_t lane_count() const { return size() * kLanesPerIntersection; }

    bool contains(IntersectionId k) const { return k < size(); }
    void check(IntersectionId k) const;

    /// Neighbour reached by leaving `k` heading `heading`, if any.
    std::optional<IntersectionId> neighbor(IntersectionId k, Direction heading) const;

    static LaneId lane_id(IntersectionId k, std::size_t slot) {
        return k * kLanesPerIntersection + slot;
    }
    static IntersectionId lane_intersection(LaneId lane) { return lane / kLanesPerIntersection; }
    static std::size_t lane_slot_of(LaneId lane) { return lane % kLanesPerIntersection; }

    /// Downstream link of a lane; nullopt means the lane exits the network.
    std::optional<DownstreamLink> downstream(LaneId lane) const;

    /// Boundary approaches, in intersection order then N, E, S, W.
    const std::vector<EntryPoint>& entry_points() const { return entry_points_; }
    bool is_entry(const EntryPoint& e) const;

    /// Checks that consecutive hops are adjacent, the first hop is at the
    /// entry intersection, no hop is a U-turn and the last hop leaves the
    /// grid. Returns a human readable reason on failure.
    std::optional<std::string> route_problem(const EntryPoint& entry, const Route& route) const;

    /// Every non-exit lane must resolve to an existing intersection.
    void validate() const;

  private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<EntryPoint> entry_points_;
};

} // namespace tsc
