#pragma once

#include "tsc/environment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <random>
#include <string>

namespace fixture {

inline std::filesystem::path source_dir() { return TSC_SOURCE_DIR; }

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("tsc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline tsc::SimConfig quiet_config(int duration = 3600) {
    tsc::SimConfig c;
    c.duration_seconds = duration;
    return c;
}

inline tsc::Environment empty_env(std::size_t rows, std::size_t cols, int duration = 3600) {
    return tsc::Environment(tsc::RoadNetwork(rows, cols), {}, quiet_config(duration));
}

inline tsc::LaneId lane(tsc::IntersectionId k, tsc::Direction approach, tsc::Movement m) {
    return tsc::RoadNetwork::lane_id(k, tsc::slot_index(approach, m));
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace fixture
