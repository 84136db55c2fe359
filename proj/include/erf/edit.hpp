#pragma once

// Direct edits of an explicit model.

#include "erf/scene_model.hpp"

namespace xrf {

/// For every node whose centre lies in `box`, maps the RGB vector of each SH
/// basis function (f0 and the three gradient components) through
/// `channel_map`. Returns the number of edited nodes.
size_t edit_recolor(SceneModel& model, const Aabb& box, const Mat3& channel_map);

/// For every node whose centre lies in `box`, replaces the opacity plane by
/// the free-space border plane. Structure is unchanged. Returns the number of
/// edited nodes.
size_t edit_cut(SceneModel& model, const Aabb& box);

}  // namespace xrf
