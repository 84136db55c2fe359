#pragma once

// Key-value run configuration ("key = value" lines, '#' starts a comment).

#include "erf/nerf_dataset.hpp"
#include "erf/optimize.hpp"

#include <string>
#include <vector>

namespace xrf {

struct RunConfig {
  TrainConfig train;
  int sh_bands = kDefaultShBands;
  int cube_resolution = kDefaultCubeResolution;
  LoadOptions load;
  /// Render settings for `render` and `eval`; sample caps are off by default.
  RenderConfig render = [] {
    RenderConfig r;
    r.filter = false;
    return r;
  }();
};

/// Applies the assignments in `text` on top of `config`. Unknown keys and
/// malformed values throw InvalidArgument naming the line.
void apply_config(RunConfig& config, const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::string& path);
/// All keys with their current values, one "key = value" per line.
std::string dump_config(const RunConfig& config);
std::vector<std::string> config_keys();

RenderMode parse_render_mode(const std::string& s);
std::string to_string(RenderMode m);
SensorMode parse_sensor_mode(const std::string& s);
std::string to_string(SensorMode m);

}  // namespace xrf
