#include "tsc/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace tsc {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& field, const std::string& reason) {
    throw ScenarioError(ScenarioError::Kind::Schema, field + ": " + reason);
}

void reject_unknown_keys(const ojson& obj, const std::string& where,
                         std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            schema_error(where + "." + key, "unknown key");
        }
    }
}

const ojson& require(const ojson& obj, const std::string& where, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        schema_error(where + "." + key, "missing required field");
    }
    return *it;
}

double as_number(const ojson& v, const std::string& field) {
    if (!v.is_number()) {
        schema_error(field, "expected a number");
    }
    return v.get<double>();
}

std::int64_t as_integer(const ojson& v, const std::string& field) {
    if (!v.is_number_integer()) {
        schema_error(field, "expected an integer");
    }
    return v.get<std::int64_t>();
}

std::string as_string(const ojson& v, const std::string& field) {
    if (!v.is_string()) {
        schema_error(field, "expected a string");
    }
    return v.get<std::string>();
}

const ojson& as_object(const ojson& v, const std::string& field) {
    if (!v.is_object()) {
        schema_error(field, "expected an object");
    }
    return v;
}

const ojson& as_array(const ojson& v, const std::string& field) {
    if (!v.is_array()) {
        schema_error(field, "expected an array");
    }
    return v;
}

std::string heading_string(Direction d) { return std::string(1, direction_char(d)); }

} // namespace

void DynamicsOverrides::apply_to(SimConfig& config) const {
    if (saturation_headway) config.saturation_headway = *saturation_headway;
    if (segment_traverse_seconds) config.segment_traverse_seconds = *segment_traverse_seconds;
    if (capacity_per_segment) config.capacity_per_segment = *capacity_per_segment;
    if (turn_probability) config.turn_probability = *turn_probability;
}

std::vector<Violation> validate(const ScenarioFile& s) {
    std::vector<Violation> out;
    if (s.version != kScenarioVersion) {
        out.push_back({"VERSION_UNSUPPORTED", "version", "unsupported version '" + s.version + "'"});
    }
    const bool grid_ok = s.rows >= 1 && s.cols >= 1;
    if (!grid_ok) {
        out.push_back({"GRID_EMPTY", "grid", "rows and cols must both be at least 1"});
    }
    std::optional<RoadNetwork> network;
    if (grid_ok) {
        network.emplace(static_cast<std::size_t>(s.rows), static_cast<std::size_t>(s.cols));
    }

    auto check_entry = [&](const std::string& id, const std::string& field) -> std::optional<EntryPoint> {
        const auto entry = parse_entry_point_id(id);
        if (!entry) {
            out.push_back({"ENTRY_MALFORMED", field, "'" + id + "' is not of the form I<k>:<N|E|S|W>"});
            return std::nullopt;
        }
        if (network && !network->is_entry(*entry)) {
            out.push_back({"ENTRY_UNKNOWN", field, "'" + id + "' is not a boundary approach of the grid"});
            return std::nullopt;
        }
        return entry;
    };

    std::set<std::string> seen;
    for (std::size_t i = 0; i < s.demand.size(); ++i) {
        const auto& d = s.demand[i];
        const auto field = "demand[" + std::to_string(i) + "]";
        if (!(d.lambda >= 0.0)) {
            out.push_back({"RATE_NEGATIVE", field + ".lambda", "arrival rate must be >= 0"});
        }
        check_entry(d.entry_lane, field + ".entry_lane");
        if (!seen.insert(d.entry_lane).second) {
            out.push_back({"ENTRY_DUPLICATE", field + ".entry_lane", "entry lane listed twice"});
        }
    }

    for (std::size_t i = 0; i < s.vehicles.size(); ++i) {
        const auto& v = s.vehicles[i];
        const auto field = "vehicles[" + std::to_string(i) + "]";
        if (!(v.entry_time >= 0.0)) {
            out.push_back({"ENTRY_TIME_NEGATIVE", field + ".entry_time", "entry time must be >= 0"});
        }
        if (i > 0 && v.entry_time < s.vehicles[i - 1].entry_time) {
            out.push_back({"VEHICLES_UNSORTED", field + ".entry_time", "vehicles must be sorted by entry_time"});
        }
        const auto entry = check_entry(v.entry_lane, field + ".entry_lane");
        if (!grid_ok) {
            continue;
        }
        bool dangling = false;
        for (std::size_t h = 0; h < v.route.size(); ++h) {
            const auto k = v.route[h].intersection;
            if (k < 0 || k >= s.rows * s.cols) {
                out.push_back({"ROUTE_DANGLING", field + ".route[" + std::to_string(h) + "]",
                               "intersection " + std::to_string(k) + " is outside the grid"});
                dangling = true;
            }
        }
        if (dangling || !entry) {
            continue;
        }
        Route route;
        for (const auto& hop : v.route) {
            route.push_back({static_cast<IntersectionId>(hop.intersection), hop.heading});
        }
        if (auto problem = network->route_problem(*entry, route)) {
            out.push_back({"ROUTE_INVALID", field + ".route", *problem});
        }
    }

    const auto& dyn = s.dynamics;
    if (dyn.saturation_headway && !(*dyn.saturation_headway > 0.0)) {
        out.push_back({"DYNAMICS_INVALID", "dynamics.saturation_headway", "must be > 0"});
    }
    if (dyn.segment_traverse_seconds && !(*dyn.segment_traverse_seconds > 0.0)) {
        out.push_back({"DYNAMICS_INVALID", "dynamics.segment_traverse_seconds", "must be > 0"});
    }
    if (dyn.capacity_per_segment && *dyn.capacity_per_segment < 1) {
        out.push_back({"DYNAMICS_INVALID", "dynamics.capacity_per_segment", "must be >= 1"});
    }
    if (dyn.turn_probability && !(*dyn.turn_probability >= 0.0 && *dyn.turn_probability <= 1.0)) {
        out.push_back({"DYNAMICS_INVALID", "dynamics.turn_probability", "must lie in [0, 1]"});
    }
    return out;
}

ScenarioFile parse_scenario_text(const std::string& text) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError(ScenarioError::Kind::Parse, std::string("invalid JSON: ") + e.what());
    }
    as_object(doc, "$");
    reject_unknown_keys(doc, "$", {"version", "grid", "demand", "vehicles", "dynamics"});

    ScenarioFile s;
    s.version = as_string(require(doc, "$", "version"), "version");

    const auto& grid = as_object(require(doc, "$", "grid"), "grid");
    reject_unknown_keys(grid, "grid", {"rows", "cols"});
    s.rows = as_integer(require(grid, "grid", "rows"), "grid.rows");
    s.cols = as_integer(require(grid, "grid", "cols"), "grid.cols");

    const auto& demand = as_array(require(doc, "$", "demand"), "demand");
    for (std::size_t i = 0; i < demand.size(); ++i) {
        const auto field = "demand[" + std::to_string(i) + "]";
        const auto& d = as_object(demand[i], field);
        reject_unknown_keys(d, field, {"entry_lane", "lambda"});
        s.demand.push_back({as_string(require(d, field, "entry_lane"), field + ".entry_lane"),
                            as_number(require(d, field, "lambda"), field + ".lambda")});
    }

    if (const auto it = doc.find("vehicles"); it != doc.end()) {
        const auto& vehicles = as_array(*it, "vehicles");
        for (std::size_t i = 0; i < vehicles.size(); ++i) {
            const auto field = "vehicles[" + std::to_string(i) + "]";
            const auto& v = as_object(vehicles[i], field);
            reject_unknown_keys(v, field, {"entry_time", "entry_lane", "route"});
            ScenarioVehicle sv;
            sv.entry_time = as_number(require(v, field, "entry_time"), field + ".entry_time");
            sv.entry_lane = as_string(require(v, field, "entry_lane"), field + ".entry_lane");
            const auto& route = as_array(require(v, field, "route"), field + ".route");
            for (std::size_t h = 0; h < route.size(); ++h) {
                const auto hf = field + ".route[" + std::to_string(h) + "]";
                const auto& hop = as_object(route[h], hf);
                reject_unknown_keys(hop, hf, {"intersection", "heading"});
                const auto heading_text = as_string(require(hop, hf, "heading"), hf + ".heading");
                const auto heading = parse_direction(heading_text);
                if (!heading) {
                    schema_error(hf + ".heading", "expected one of N, E, S, W");
                }
                sv.route.push_back({as_integer(require(hop, hf, "intersection"), hf + ".intersection"), *heading});
            }
            s.vehicles.push_back(std::move(sv));
        }
    }

    if (const auto it = doc.find("dynamics"); it != doc.end()) {
        const auto& dyn = as_object(*it, "dynamics");
        reject_unknown_keys(dyn, "dynamics",
                            {"saturation_headway", "segment_traverse_seconds", "capacity_per_segment",
                             "turn_probability"});
        if (auto f = dyn.find("saturation_headway"); f != dyn.end())
            s.dynamics.saturation_headway = as_number(*f, "dynamics.saturation_headway");
        if (auto f = dyn.find("segment_traverse_seconds"); f != dyn.end())
            s.dynamics.segment_traverse_seconds = as_number(*f, "dynamics.segment_traverse_seconds");
        if (auto f = dyn.find("capacity_per_segment"); f != dyn.end())
            s.dynamics.capacity_per_segment = static_cast<int>(as_integer(*f, "dynamics.capacity_per_segment"));
        if (auto f = dyn.find("turn_probability"); f != dyn.end())
            s.dynamics.turn_probability = as_number(*f, "dynamics.turn_probability");
    }
    return s;
}

std::string serialize_scenario(const ScenarioFile& s) {
    ojson doc;
    doc["version"] = s.version;
    doc["grid"] = {{"rows", s.rows}, {"cols", s.cols}};
    doc["demand"] = ojson::array();
    for (const auto& d : s.demand) {
        doc["demand"].push_back({{"entry_lane", d.entry_lane}, {"lambda", d.lambda}});
    }
    if (!s.vehicles.empty()) {
        doc["vehicles"] = ojson::array();
        for (const auto& v : s.vehicles) {
            ojson route = ojson::array();
            for (const auto& hop : v.route) {
                route.push_back({{"intersection", hop.intersection}, {"heading", heading_string(hop.heading)}});
            }
            doc["vehicles"].push_back(
                {{"entry_time", v.entry_time}, {"entry_lane", v.entry_lane}, {"route", std::move(route)}});
        }
    }
    ojson dyn = ojson::object();
    if (s.dynamics.saturation_headway) dyn["saturation_headway"] = *s.dynamics.saturation_headway;
    if (s.dynamics.segment_traverse_seconds) dyn["segment_traverse_seconds"] = *s.dynamics.segment_traverse_seconds;
    if (s.dynamics.capacity_per_segment) dyn["capacity_per_segment"] = *s.dynamics.capacity_per_segment;
    if (s.dynamics.turn_probability) dyn["turn_probability"] = *s.dynamics.turn_probability;
    if (!dyn.empty()) {
        doc["dynamics"] = std::move(dyn);
    }
    return doc.dump(2) + "\n";
}

LoadedScenario build_scenario(const ScenarioFile& s) {
    const auto violations = validate(s);
    if (!violations.empty()) {
        const auto& v = violations.front();
        const bool dangling = std::any_of(violations.begin(), violations.end(), [](const Violation& x) {
            return x.code == "ROUTE_DANGLING" || x.code == "ROUTE_INVALID" || x.code == "ENTRY_UNKNOWN";
        });
        std::string msg = v.code + " at " + v.field + ": " + v.message;
        if (violations.size() > 1) {
            msg += " (+" + std::to_string(violations.size() - 1) + " more)";
        }
        throw ScenarioError(dangling ? ScenarioError::Kind::Dangling : ScenarioError::Kind::Schema, msg);
    }
    LoadedScenario out{RoadNetwork(static_cast<std::size_t>(s.rows), static_cast<std::size_t>(s.cols)),
                       s.dynamics, {}};
    out.network.validate();
    for (const auto& d : s.demand) {
        out.demand.rates.push_back({*parse_entry_point_id(d.entry_lane), d.lambda});
    }
    for (const auto& v : s.vehicles) {
        ScheduledVehicle sv{v.entry_time, *parse_entry_point_id(v.entry_lane), {}};
        for (const auto& hop : v.route) {
            sv.route.push_back({static_cast<IntersectionId>(hop.intersection), hop.heading});
        }
        out.demand.vehicles.push_back(std::move(sv));
    }
    return out;
}

LoadedScenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ScenarioError(ScenarioError::Kind::Io, "cannot open scenario file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return build_scenario(parse_scenario_text(buf.str()));
}

std::string_view demand_profile_name(DemandProfile p) {
    return p == DemandProfile::Uniform ? "uniform" : "peak-directional";
}

std::optional<DemandProfile> parse_demand_profile(std::string_view name) {
    if (name == "uniform") return DemandProfile::Uniform;
    if (name == "peak-directional") return DemandProfile::PeakDirectional;
    return std::nullopt;
}

ScenarioFile generate_grid(const SyntheticGridSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1) {
        throw ScenarioError(ScenarioError::Kind::Schema, "grid: rows and cols must both be at least 1");
    }
    if (!(spec.lambda >= 0.0)) {
        throw ScenarioError(ScenarioError::Kind::Schema, "lambda: arrival rate must be >= 0");
    }
    std::mt19937_64 rng(spec.seed);
    const auto peak_side = kAllDirections[std::uniform_int_distribution<int>(0, 3)(rng)];

    ScenarioFile s;
    s.rows = spec.rows;
    s.cols = spec.cols;
    const RoadNetwork network(static_cast<std::size_t>(spec.rows), static_cast<std::size_t>(spec.cols));
    for (const auto& entry : network.entry_points()) {
        double lambda = spec.lambda;
        if (spec.profile == DemandProfile::PeakDirectional && entry.approach == peak_side) {
            lambda *= kPeakFactor;
        }
        s.demand.push_back({entry_point_id(entry), lambda});
    }
    return s;
}

} // namespace tsc
