#pragma once

#include "tsc/environment.hpp"
#include "tsc/network.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsc {

inline constexpr const char* kScenarioVersion = "1";

class ScenarioError : public std::runtime_error {
  public:
    enum class Kind { Parse, Schema, Dangling, Io };

    ScenarioError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

struct ScenarioDemand {
    std::string entry_lane; ///< "I<k>:<side>", e.g. "I0:W"
    double lambda = 0.0;    ///< vehicles per second
};

struct ScenarioVehicle {
    double entry_time = 0.0;
    std::string entry_lane;
    /// Hops as written in the file. Intersections are kept signed so that
    /// out-of-grid references survive parsing and reach validation.
    struct Hop {
        std::int64_t intersection = 0;
        Direction heading = Direction::N;
    };
    std::vector<Hop> route;
};

/// Optional overrides of the simulation dynamics.
struct DynamicsOverrides {
    std::optional<double> saturation_headway;
    std::optional<double> segment_traverse_seconds;
    std::optional<int> capacity_per_segment;
    std::optional<double> turn_probability;

    void apply_to(SimConfig& config) const;
};

/// In-memory form of the versioned scenario JSON document.
struct ScenarioFile {
    std::string version = kScenarioVersion;
    std::int64_t rows = 1;
    std::int64_t cols = 1;
    std::vector<ScenarioDemand> demand;
    std::vector<ScenarioVehicle> vehicles;
    DynamicsOverrides dynamics;
};

struct Violation {
    std::string code;    ///< e.g. GRID_EMPTY, RATE_NEGATIVE, ROUTE_DANGLING
    std::string field;   ///< JSON path of the offending field
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every scenario invariant. An empty result means the scenario is valid.
std::vector<Violation> validate(const ScenarioFile& scenario);

/// Strict parse: unknown keys and wrongly typed fields raise a Schema error.
ScenarioFile parse_scenario_text(const std::string& text);
std::string serialize_scenario(const ScenarioFile& scenario);

struct LoadedScenario {
    RoadNetwork network;
    DynamicsOverrides dynamics;
    Demand demand;
};

/// Validates and converts a parsed scenario into simulation inputs.
LoadedScenario build_scenario(const ScenarioFile& scenario);
LoadedScenario load_scenario(const std::filesystem::path& path);

enum class DemandProfile { Uniform, PeakDirectional };

std::string_view demand_profile_name(DemandProfile p);
std::optional<DemandProfile> parse_demand_profile(std::string_view name);

struct SyntheticGridSpec {
    std::int64_t rows = 1;
    std::int64_t cols = 1;
    DemandProfile profile = DemandProfile::Uniform;
    double lambda = 0.05;
    std::uint64_t seed = 0;
};

/// Peak-directional demand multiplies the rate of every entry on one
/// seed-selected boundary side by this factor.
inline constexpr double kPeakFactor = 3.0;

/// Builds a scenario with one Poisson demand entry per boundary approach.
/// Pure function of `spec`.
ScenarioFile generate_grid(const SyntheticGridSpec& spec);

} // namespace tsc
