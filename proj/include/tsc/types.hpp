#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tsc {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class TopologyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

// ---------------------------------------------------------------------------
// Compass directions
// ---------------------------------------------------------------------------

/// A compass direction. Used both as a heading (direction of travel) and as
/// an approach (the side of the intersection a vehicle arrives from).
enum class Direction : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{Direction::N, Direction::E, Direction::S,
                                                          Direction::W};

constexpr Direction opposite(Direction d) {
    return static_cast<Direction>((static_cast<int>(d) + 2) % 4);
}
/// Heading after a left turn, for a vehicle travelling towards `d`.
constexpr Direction left_of(Direction d) {
    return static_cast<Direction>((static_cast<int>(d) + 3) % 4);
}
constexpr Direction right_of(Direction d) {
    return static_cast<Direction>((static_cast<int>(d) + 1) % 4);
}

char direction_char(Direction d);
std::optional<Direction> parse_direction(std::string_view s);

enum class Movement : std::uint8_t { Through, Left, Right };

std::string_view movement_name(Movement m);

/// Movement performed by a vehicle travelling `heading_in` that leaves with
/// `heading_out`. Returns nullopt for a U-turn.
std::optional<Movement> movement_between(Direction heading_in, Direction heading_out);

/// Heading taken when a vehicle travelling `heading_in` performs `m`.
Direction heading_after(Direction heading_in, Movement m);

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

inline constexpr std::size_t kNumPhases = 4;
inline constexpr std::size_t kGovernedLanes = 8;
inline constexpr std::size_t kLanesPerIntersection = 12;
inline constexpr std::size_t kSegments = 3;

/// One of the four signal phases. Index order is fixed:
/// 0 ELWL, 1 NLSL, 2 ETWT, 3 NTST.
enum class Phase : std::uint8_t { ELWL = 0, NLSL = 1, ETWT = 2, NTST = 3 };

inline constexpr std::array<Phase, kNumPhases> kAllPhases{Phase::ELWL, Phase::NLSL, Phase::ETWT,
                                                         Phase::NTST};

constexpr std::size_t phase_index(Phase p) { return static_cast<std::size_t>(p); }
Phase phase_from_index(std::size_t i);

std::string_view phase_code(Phase p);
/// Case-insensitive lookup of a phase code.
std::optional<Phase> parse_phase_code(std::string_view code);

/// Slot of an incoming lane inside an intersection. Governed lanes occupy
/// slots 0..7 in phase order (phase p governs slots 2p and 2p+1); right-turn
/// lanes occupy 8..11.
struct LaneSlot {
    Direction approach;
    Movement movement;

    friend bool operator==(const LaneSlot&, const LaneSlot&) = default;
};

LaneSlot lane_slot(std::size_t slot);
std::size_t slot_index(Direction approach, Movement movement);

/// The two governed lane slots released by a phase.
std::array<std::size_t, 2> phase_slots(Phase p);

/// Whether `slot` may discharge under `p` (right-turn lanes always may).
bool slot_permitted(std::size_t slot, Phase p);

/// Short lane label such as "ET" or "WL".
std::string lane_label(std::size_t slot);

} // namespace tsc
