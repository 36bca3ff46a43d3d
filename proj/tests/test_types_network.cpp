#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace tsc;

TEST_CASE("phase codes round-trip and govern two lanes each") {
    std::set<std::size_t> seen;
    for (auto p : kAllPhases) {
        CHECK(parse_phase_code(phase_code(p)) == p);
        for (auto s : phase_slots(p)) {
            CHECK(slot_permitted(s, p));
            seen.insert(s);
        }
    }
    CHECK(seen.size() == kGovernedLanes);
    CHECK(parse_phase_code("etwt") == Phase::ETWT);
    CHECK_FALSE(parse_phase_code("EW").has_value());
    CHECK_THROWS_AS(phase_from_index(4), ContractViolation);
}

TEST_CASE("lane labels follow phase order") {
    const char* expected[] = {"EL", "WL", "NL", "SL", "ET", "WT", "NT", "ST"};
    for (std::size_t s = 0; s < kGovernedLanes; ++s) {
        CHECK(lane_label(s) == expected[s]);
        const auto slot = lane_slot(s);
        CHECK(slot_index(slot.approach, slot.movement) == s);
    }
    for (std::size_t s = kGovernedLanes; s < kLanesPerIntersection; ++s) {
        for (auto p : kAllPhases) CHECK(slot_permitted(s, p));
    }
}

TEST_CASE("turn geometry") {
    // Heading west, a left turn goes south and a right turn north.
    CHECK(heading_after(Direction::W, Movement::Left) == Direction::S);
    CHECK(heading_after(Direction::W, Movement::Right) == Direction::N);
    CHECK(movement_between(Direction::E, Direction::E) == Movement::Through);
    CHECK_FALSE(movement_between(Direction::E, Direction::W).has_value());
}

TEST_CASE("grid topology") {
    RoadNetwork net(3, 4);
    CHECK(net.size() == 12);
    CHECK(net.lane_count() == 144);
    CHECK(net.neighbor(0, Direction::E) == IntersectionId{1});
    CHECK(net.neighbor(0, Direction::S) == IntersectionId{4});
    CHECK_FALSE(net.neighbor(0, Direction::N).has_value());
    CHECK_FALSE(net.neighbor(3, Direction::E).has_value());
    // 2*(3+4) boundary approaches
    CHECK(net.entry_points().size() == 14);
    CHECK_THROWS_AS(RoadNetwork(0, 3), TopologyError);
    CHECK_THROWS_AS(net.check(12), NotFoundError);
    CHECK_NOTHROW(net.validate());

    // ET lane at 1 heads west into intersection 0 from its east side.
    const auto link = net.downstream(fixture::lane(1, Direction::E, Movement::Through));
    REQUIRE(link.has_value());
    CHECK(link->intersection == 0);
    CHECK(link->approach == Direction::E);
    CHECK_FALSE(net.downstream(fixture::lane(0, Direction::E, Movement::Through)).has_value());
}

TEST_CASE("entry point ids") {
    CHECK(entry_point_id({5, Direction::W}) == "I5:W");
    const auto e = parse_entry_point_id("I11:S");
    REQUIRE(e.has_value());
    CHECK(e->intersection == 11);
    CHECK(e->approach == Direction::S);
    CHECK_FALSE(parse_entry_point_id("11:S").has_value());
    CHECK_FALSE(parse_entry_point_id("I1:Q").has_value());
    CHECK_FALSE(parse_entry_point_id("I:N").has_value());
}

TEST_CASE("route checks") {
    RoadNetwork net(1, 2);
    const EntryPoint west{0, Direction::W};
    CHECK_FALSE(net.route_problem(west, {{0, Direction::E}, {1, Direction::E}}).has_value());
    CHECK(net.route_problem(west, {{0, Direction::E}}).has_value());                   // ends inside
    CHECK(net.route_problem(west, {{0, Direction::W}}).has_value());                   // U-turn
    CHECK(net.route_problem(west, {{1, Direction::E}}).has_value());                   // wrong start
    CHECK(net.route_problem(west, {{0, Direction::N}, {1, Direction::E}}).has_value()); // leaves early
    CHECK(net.route_problem(west, {{0, Direction::E}, {7, Direction::E}}).has_value());
}
