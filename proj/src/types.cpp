#include "tsc/types.hpp"

#include <algorithm>
#include <cctype>

namespace tsc {

namespace {

constexpr std::array<LaneSlot, kLanesPerIntersection> kSlots{{
    {Direction::E, Movement::Left},
    {Direction::W, Movement::Left},
    {Direction::N, Movement::Left},
    {Direction::S, Movement::Left},
    {Direction::E, Movement::Through},
    {Direction::W, Movement::Through},
    {Direction::N, Movement::Through},
    {Direction::S, Movement::Through},
    {Direction::E, Movement::Right},
    {Direction::W, Movement::Right},
    {Direction::N, Movement::Right},
    {Direction::S, Movement::Right},
}};

constexpr std::array<std::string_view, kNumPhases> kPhaseCodes{"ELWL", "NLSL", "ETWT", "NTST"};

} // namespace

char direction_char(Direction d) {
    switch (d) {
    case Direction::N:
        return 'N';
    case Direction::E:
        return 'E';
    case Direction::S:
        return 'S';
    case Direction::W:
        return 'W';
    }
    return '?';
}

std::optional<Direction> parse_direction(std::string_view s) {
    if (s.size() != 1) {
        return std::nullopt;
    }
    switch (std::toupper(static_cast<unsigned char>(s[0]))) {
    case 'N':
        return Direction::N;
    case 'E':
        return Direction::E;
    case 'S':
        return Direction::S;
    case 'W':
        return Direction::W;
    default:
        return std::nullopt;
    }
}

std::string_view movement_name(Movement m) {
    switch (m) {
    case Movement::Through:
        return "through";
    case Movement::Left:
        return "left";
    case Movement::Right:
        return "right";
    }
    return "?";
}

std::optional<Movement> movement_between(Direction heading_in, Direction heading_out) {
    if (heading_out == heading_in) {
        return Movement::Through;
    }
    if (heading_out == left_of(heading_in)) {
        return Movement::Left;
    }
    if (heading_out == right_of(heading_in)) {
        return Movement::Right;
    }
    return std::nullopt;
}

Direction heading_after(Direction heading_in, Movement m) {
    switch (m) {
    case Movement::Left:
        return left_of(heading_in);
    case Movement::Right:
        return right_of(heading_in);
    case Movement::Through:
        break;
    }
    return heading_in;
}

Phase phase_from_index(std::size_t i) {
    if (i >= kNumPhases) {
        throw ContractViolation("phase index out of range: " + std::to_string(i));
    }
    return static_cast<Phase>(i);
}

std::string_view phase_code(Phase p) { return kPhaseCodes[phase_index(p)]; }

std::optional<Phase> parse_phase_code(std::string_view code) {
    for (std::size_t i = 0; i < kNumPhases; ++i) {
        const auto ref = kPhaseCodes[i];
        if (code.size() == ref.size() &&
            std::equal(code.begin(), code.end(), ref.begin(), [](char a, char b) {
                return std::toupper(static_cast<unsigned char>(a)) == b;
            })) {
            return static_cast<Phase>(i);
        }
    }
    return std::nullopt;
}

LaneSlot lane_slot(std::size_t slot) {
    if (slot >= kLanesPerIntersection) {
        throw ContractViolation("lane slot out of range: " + std::to_string(slot));
    }
    return kSlots[slot];
}

std::size_t slot_index(Direction approach, Movement movement) {
    for (std::size_t i = 0; i < kSlots.size(); ++i) {
        if (kSlots[i].approach == approach && kSlots[i].movement == movement) {
            return i;
        }
    }
    throw ContractViolation("no lane slot for approach/movement");
}

std::array<std::size_t, 2> phase_slots(Phase p) {
    const auto i = phase_index(p);
    return {2 * i, 2 * i + 1};
}

bool slot_permitted(std::size_t slot, Phase p) {
    if (slot >= kGovernedLanes) {
        return true;
    }
    return slot / 2 == phase_index(p);
}

std::string lane_label(std::size_t slot) {
    const auto s = lane_slot(slot);
    std::string out(1, direction_char(s.approach));
    switch (s.movement) {
    case Movement::Through:
        out += 'T';
        break;
    case Movement::Left:
        out += 'L';
        break;
    case Movement::Right:
        out += 'R';
        break;
    }
    return out;
}

} // namespace tsc
