#include "erf/edit.hpp"

namespace xrf {

size_t edit_recolor(SceneModel& model, const Aabb& box, const Mat3& channel_map) {
  box.validate();
  if (!channel_map.allFinite()) throw InvalidArgument("edit_recolor: non-finite channel map");
  Svo& svo = model.svo;
  const int bases = svo.sh_basis_count();
  size_t edited = 0;
  for (size_t n = 0; n < svo.node_count(); ++n) {
    const auto node = static_cast<int32_t>(n);
    if (!box.contains(svo.center(node))) continue;
    auto p = svo.node_params(node);
    for (int block = 0; block < 4; ++block) {
      const int offset = block == 0 ? svo.sh_f0_offset() : svo.sh_grad_offset(block - 1);
      for (int k = 0; k < bases; ++k) {
        Vec3 rgb;
        for (int c = 0; c < 3; ++c) rgb[c] = p[static_cast<size_t>(offset + c * bases + k)];
        rgb = channel_map * rgb;
        for (int c = 0; c < 3; ++c) p[static_cast<size_t>(offset + c * bases + k)] = rgb[c];
      }
    }
    ++edited;
  }
  if (edited) ++model.revision;
  return edited;
}

size_t edit_cut(SceneModel& model, const Aabb& box) {
  box.validate();
  Svo& svo = model.svo;
  const auto border = svo.border_plane();
  size_t edited = 0;
  for (size_t n = 0; n < svo.node_count(); ++n) {
    const auto node = static_cast<int32_t>(n);
    if (!box.contains(svo.center(node))) continue;
    auto p = svo.node_params(node);
    for (int i = 0; i < 4; ++i) p[static_cast<size_t>(i)] = border[static_cast<size_t>(i)];
    ++edited;
  }
  if (edited) ++model.revision;
  return edited;
}

}  // namespace xrf
