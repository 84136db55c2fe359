#include "erf/nerf_dataset.hpp"

#include "erf/image_io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace xrf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("cannot parse '" + path.string() + "': " + e.what());
  }
}

Camera parse_frame_camera(const json& matrix, const std::string& where) {
  if (!matrix.is_array() || matrix.size() < 3) throw DataError(where + ": transform_matrix must be 4x4");
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int r = 0; r < static_cast<int>(matrix.size()) && r < 4; ++r) {
    const json& row = matrix[static_cast<size_t>(r)];
    if (!row.is_array() || row.size() != 4) throw DataError(where + ": transform_matrix must be 4x4");
    for (int c = 0; c < 4; ++c) {
      if (!row[static_cast<size_t>(c)].is_number()) throw DataError(where + ": non-numeric matrix entry");
      m(r, c) = row[static_cast<size_t>(c)].get<double>();
    }
  }
  Camera cam;
  cam.rotation = m.topLeftCorner<3, 3>();
  cam.position = m.topRightCorner<3, 1>();
  const double ortho = (cam.rotation.transpose() * cam.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-4) || !(std::abs(cam.rotation.determinant() - 1.0) <= 1e-4))
    throw DataError(where + ": rotation is not rigid (orthogonality error " + std::to_string(ortho) + ")");
  if (!cam.position.allFinite()) throw DataError(where + ": non-finite camera position");
  return cam;
}

void load_split(const fs::path& file, Split split, const LoadOptions& options, Dataset& data) {
  const json root = read_json(file);
  const std::string where = file.string();
  if (!root.contains("camera_angle_x") || !root["camera_angle_x"].is_number())
    throw DataError(where + ": missing camera_angle_x");
  const double angle = root["camera_angle_x"].get<double>();
  if (!(angle > 0.0 && angle < M_PI)) throw DataError(where + ": camera_angle_x out of range");
  if (!root.contains("frames") || !root["frames"].is_array()) throw DataError(where + ": missing frames");
  if (root.contains("aabb")) {
    const json& box = root["aabb"];
    if (!box.is_array() || box.size() != 2 || box[0].size() != 3 || box[1].size() != 3)
      throw DataError(where + ": aabb must be [[x, y, z], [x, y, z]]");
    Aabb aabb;
    for (int a = 0; a < 3; ++a) {
      aabb.min[a] = box[0][static_cast<size_t>(a)].get<double>();
      aabb.max[a] = box[1][static_cast<size_t>(a)].get<double>();
    }
    try {
      aabb.validate();
    } catch (const InvalidArgument& e) {
      throw DataError(where + ": " + e.what());
    }
    data.aabb = aabb;
    data.has_aabb = true;
  }
  const Rgb bg = options.white_background ? Rgb::Ones() : Rgb::Zero();
  const json& frames = root["frames"];
  const size_t first = data.cameras.size();
  data.cameras.resize(first + frames.size());
  data.pyramids.resize(first + frames.size());
  data.names.resize(first + frames.size());
  data.split.resize(first + frames.size(), split);
  for (size_t i = 0; i < frames.size(); ++i) {
    const json& f = frames[i];
    const std::string fw = where + " frame " + std::to_string(i);
    if (!f.contains("file_path") || !f["file_path"].is_string()) throw DataError(fw + ": missing file_path");
    if (!f.contains("transform_matrix")) throw DataError(fw + ": missing transform_matrix");
    data.cameras[first + i] = parse_frame_camera(f["transform_matrix"], fw);
    data.names[first + i] = f["file_path"].get<std::string>();
  }
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int64_t k = 0; k < static_cast<int64_t>(frames.size()); ++k) {
    const size_t i = first + static_cast<size_t>(k);
    try {
      fs::path p = file.parent_path() / data.names[i];
      if (!p.has_extension()) p += ".png";
      Image img = read_png(p.string(), bg);
      Camera& cam = data.cameras[i];
      cam.width = img.width;
      cam.height = img.height;
      cam.fx = 0.5 * img.width / std::tan(0.5 * angle);
      cam.fy = cam.fx;
      cam.cx = 0.5 * img.width;
      cam.cy = 0.5 * img.height;
      data.pyramids[i] = build_pyramid(img, options.filter);
    } catch (const Error& e) {
#pragma omp critical(erf_load_error)
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError(error);
}

}  // namespace

Dataset load_nerf_synthetic(const std::string& dir, const LoadOptions& options) {
  const fs::path root(dir);
  Dataset data;
  const fs::path train = root / "transforms_train.json";
  if (!fs::exists(train)) throw DataError("missing '" + train.string() + "'");
  load_split(train, Split::Train, options, data);
  const fs::path test = root / "transforms_test.json";
  if (fs::exists(test)) load_split(test, Split::Test, options, data);
  if (data.indices(Split::Train).empty()) throw DataError("'" + train.string() + "' has no frames");
  return data;
}

void save_nerf_synthetic(const Dataset& data, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create '" + dir + "': " + ec.message());
  for (Split s : {Split::Train, Split::Test}) {
    const std::vector<int> ids = data.indices(s);
    if (ids.empty() && s == Split::Test) continue;
    const std::string sub = s == Split::Train ? "train" : "test";
    fs::create_directories(root / sub);
    json doc;
    double angle = 0.0;
    json frames = json::array();
    for (size_t k = 0; k < ids.size(); ++k) {
      const auto i = static_cast<size_t>(ids[k]);
      const Camera& cam = data.cameras[i];
      const double a = 2.0 * std::atan(0.5 * cam.width / cam.fx);
      if (k == 0) angle = a;
      else if (std::abs(a - angle) > 1e-9) throw InvalidArgument("save_nerf_synthetic: cameras differ in field of view");
      const std::string name = sub + "/r_" + std::to_string(k);
      write_png((root / (name + ".png")).string(), data.pyramids[i][0]);
      json m = json::array();
      for (int r = 0; r < 4; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) {
          double v = r == 3 ? (c == 3 ? 1.0 : 0.0) : (c < 3 ? cam.rotation(r, c) : cam.position[r]);
          row.push_back(v);
        }
        m.push_back(row);
      }
      frames.push_back({{"file_path", "./" + name}, {"transform_matrix", m}});
    }
    doc["camera_angle_x"] = angle;
    doc["frames"] = frames;
    if (data.has_aabb)
      doc["aabb"] = {{data.aabb.min.x(), data.aabb.min.y(), data.aabb.min.z()},
                     {data.aabb.max.x(), data.aabb.max.y(), data.aabb.max.z()}};
    std::ofstream out(root / ("transforms_" + sub + ".json"));
    out << doc.dump(2) << "\n";
    if (!out) throw DataError("failed writing transforms for '" + dir + "'");
  }
}

}  // namespace xrf
