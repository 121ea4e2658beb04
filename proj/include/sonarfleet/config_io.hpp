#pragma once

#include <string>

#include "sonarfleet/mission.hpp"

namespace sonarfleet {

// JSON config round trip. Every field has the built-in default; a config file
// may set any subset.
MissionConfig load_config(const std::string& path);
void save_config(const MissionConfig& cfg, const std::string& path);
std::string config_to_json(const MissionConfig& cfg);
MissionConfig config_from_json(const std::string& text);

}  // namespace sonarfleet
