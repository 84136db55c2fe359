#pragma once

// "ERF1" binary model container (little-endian):
//   magic "ERF1", u32 version
//   chunk "HEAD": f64 root side, f64 root center[3], f64 root min[3],
//                 f64 aabb min[3], f64 aabb max[3],
//                 u32 max depth, u32 sh bands, u32 cube resolution, u64 node count
//   chunk "NODE": per node in breadth-first order, u8 child mask (0x00 or 0xFF)
//                 followed by stride() float32 raw parameters
//   chunk "CUBE": 6 * R * R * 3 float32 texels
// Each chunk is a 4-byte tag, a u64 payload length and the payload.

#include "erf/scene_model.hpp"

#include <string>

namespace xrf {

inline constexpr uint32_t kModelFormatVersion = 1;

/// Size in bytes of one NODE record for the given band count.
size_t node_record_size(int sh_bands);

std::string serialize_model(const SceneModel& model);
/// Throws DataError on any malformed input; never returns a partial model.
SceneModel deserialize_model(const std::string& bytes);

void save_model(const SceneModel& model, const std::string& path);
SceneModel load_model(const std::string& path);

/// Exact equality of bounds, topology (compared breadth-first), parameters
/// and texels.
bool models_equal(const SceneModel& a, const SceneModel& b);

}  // namespace xrf
