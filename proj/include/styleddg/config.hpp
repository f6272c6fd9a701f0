#pragma once

#include <string>
#include <vector>

#include "styleddg/federation.hpp"

namespace styleddg {

// Plain-text key = value configuration. '#' starts a comment; unknown keys
// raise ConfigError naming the key. Every key has a default, so an empty
// file is a valid config.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

void apply_override(RunConfig& cfg, const std::string& assignment);  // "key=value"

// Full resolved key set in fixed order; reparsing reproduces cfg exactly.
std::string config_to_text(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace styleddg
