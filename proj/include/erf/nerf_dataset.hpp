#pragma once

// Posed-image datasets in the NeRF-synthetic directory layout:
// transforms_{train,test}.json next to the referenced PNG files.

#include "erf/dataset.hpp"

#include <string>

namespace xrf {

struct LoadOptions {
  bool white_background = true;
  PyramidFilter filter = PyramidFilter::Box;
};

/// Reads transforms_train.json (required) and transforms_test.json
/// (optional). An optional top-level "aabb": [[x, y, z], [x, y, z]] sets the
/// scene bounds.
Dataset load_nerf_synthetic(const std::string& dir, const LoadOptions& options = {});

/// Writes level 0 of every image plus the two transforms files. All cameras
/// must share one horizontal field of view.
void save_nerf_synthetic(const Dataset& data, const std::string& dir);

}  // namespace xrf
