#include "erf/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xrf {

static_assert(std::endian::native == std::endian::little, "model container assumes a little-endian host");

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void tag(const char* t) { out_.append(t, 4); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const char* data, size_t size) : p_(data), end_(data + size) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  std::string tag() {
    need(4);
    std::string t(p_, 4);
    p_ += 4;
    return t;
  }
  void need(size_t n) const {
    if (static_cast<size_t>(end_ - p_) < n) throw DataError("model file truncated");
  }
  const char* pos() const { return p_; }
  void skip(size_t n) {
    need(n);
    p_ += n;
  }
  bool done() const { return p_ == end_; }

 private:
  const char* p_;
  const char* end_;
};

void begin_chunk(Writer& w, const char* tag, uint64_t length) {
  w.tag(tag);
  w.put<uint64_t>(length);
}

}  // namespace

size_t node_record_size(int sh_bands) { return 1 + 4 * static_cast<size_t>(4 + 4 * 3 * sh_bands * sh_bands); }

std::string serialize_model(const SceneModel& model) {
  const Svo& svo = model.svo;
  const std::vector<int32_t> order = svo.breadth_first_order();
  Writer w;
  w.tag("ERF1");
  w.put<uint32_t>(kModelFormatVersion);
  begin_chunk(w, "HEAD", 8 * 13 + 4 * 3 + 8);
  w.put<double>(svo.root_side());
  const Vec3 rc = svo.root_center();
  for (int a = 0; a < 3; ++a) w.put<double>(rc[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(svo.root_min()[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(model.aabb.min[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(model.aabb.max[a]);
  w.put<uint32_t>(static_cast<uint32_t>(svo.max_depth()));
  w.put<uint32_t>(static_cast<uint32_t>(svo.sh_bands()));
  w.put<uint32_t>(static_cast<uint32_t>(model.background.resolution));
  w.put<uint64_t>(order.size());
  begin_chunk(w, "NODE", order.size() * node_record_size(svo.sh_bands()));
  for (int32_t n : order) {
    w.put<uint8_t>(svo.is_leaf(n) ? 0x00 : 0xFF);
    for (double v : svo.node_params(n)) w.put<float>(static_cast<float>(v));
  }
  begin_chunk(w, "CUBE", model.background.texels.size() * 4);
  for (double v : model.background.texels) w.put<float>(static_cast<float>(v));
  return std::move(w.str());
}

SceneModel deserialize_model(const std::string& bytes) {
  Reader r(bytes.data(), bytes.size());
  if (r.tag() != "ERF1") throw DataError("not an ERF1 model (bad magic)");
  const auto version = r.get<uint32_t>();
  if (version != kModelFormatVersion) throw DataError("unsupported model version " + std::to_string(version));

  bool have_head = false, have_node = false, have_cube = false;
  double side = 0.0;
  Vec3 center, root_min, amin, amax;
  uint32_t max_depth = 0, bands = 0, cube_res = 0;
  uint64_t node_count = 0;
  SceneModel model;
  while (!r.done()) {
    const std::string tag = r.tag();
    const auto length = r.get<uint64_t>();
    r.need(length);
    Reader c(r.pos(), length);
    if (tag == "HEAD") {
      side = c.get<double>();
      for (int a = 0; a < 3; ++a) center[a] = c.get<double>();
      for (int a = 0; a < 3; ++a) root_min[a] = c.get<double>();
      for (int a = 0; a < 3; ++a) amin[a] = c.get<double>();
      for (int a = 0; a < 3; ++a) amax[a] = c.get<double>();
      max_depth = c.get<uint32_t>();
      bands = c.get<uint32_t>();
      cube_res = c.get<uint32_t>();
      node_count = c.get<uint64_t>();
      if (!c.done()) throw DataError("model header has trailing bytes");
      if (!(side > 0.0) || !std::isfinite(side) || !center.allFinite() || !root_min.allFinite() ||
          (root_min + Vec3::Constant(0.5 * side) - center).cwiseAbs().maxCoeff() > 1e-9 * side)
        throw DataError("model header: bad root cube");
      if (bands < 1 || bands > 4) throw DataError("model header: sh_bands out of range");
      if (max_depth > static_cast<uint32_t>(Svo::kMaxDepth)) throw DataError("model header: max depth out of range");
      if (cube_res < 1 || cube_res > 65536) throw DataError("model header: bad cube-map resolution");
      if (node_count < 1 || node_count % 8 != 1) throw DataError("model header: bad node count");
      model.aabb.min = amin;
      model.aabb.max = amax;
      try {
        model.aabb.validate();
      } catch (const InvalidArgument& e) {
        throw DataError(std::string("model header: ") + e.what());
      }
      have_head = true;
    } else if (tag == "NODE") {
      if (!have_head) throw DataError("NODE chunk before HEAD");
      const size_t rec = node_record_size(static_cast<int>(bands));
      if (length != node_count * rec) throw DataError("NODE chunk length does not match node count");
      Svo svo(root_min, side, static_cast<int>(bands));
      for (uint64_t i = 0; i < node_count; ++i) {
        const auto mask = c.get<uint8_t>();
        if (mask != 0x00 && mask != 0xFF) throw DataError("NODE record " + std::to_string(i) + ": bad child mask");
        if (i >= svo.node_count()) throw DataError("NODE records describe a disconnected tree");
        const auto node = static_cast<int32_t>(i);
        auto p = svo.node_params(node);
        for (double& v : p) {
          v = static_cast<double>(c.get<float>());
          if (!std::isfinite(v)) throw DataError("NODE record " + std::to_string(i) + ": non-finite parameter");
        }
        if (mask == 0xFF) {
          if (svo.node_count() + 8 > node_count) throw DataError("NODE records overflow the node count");
          if (svo.info(node).depth + 1 > Svo::kMaxDepth) throw DataError("NODE records exceed maximum depth");
          svo.subdivide(node);
        }
      }
      if (svo.node_count() != node_count) throw DataError("NODE records do not form a complete tree");
      if (static_cast<uint32_t>(svo.max_depth()) != max_depth) throw DataError("NODE tree depth differs from header");
      model.svo = std::move(svo);
      have_node = true;
    } else if (tag == "CUBE") {
      if (!have_head) throw DataError("CUBE chunk before HEAD");
      CubeMap cube(static_cast<int>(cube_res));
      if (length != cube.texels.size() * 4) throw DataError("CUBE chunk length does not match resolution");
      for (double& v : cube.texels) {
        v = static_cast<double>(c.get<float>());
        if (!std::isfinite(v)) throw DataError("CUBE chunk: non-finite texel");
      }
      model.background = std::move(cube);
      have_cube = true;
    }
    r.skip(length);  // unknown chunks are ignored
  }
  if (!have_head || !have_node || !have_cube) throw DataError("model file is missing a required chunk");
  return model;
}

void save_model(const SceneModel& model, const std::string& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
}

SceneModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_model(ss.str());
  } catch (const DataError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

bool models_equal(const SceneModel& a, const SceneModel& b) {
  const Svo& x = a.svo;
  const Svo& y = b.svo;
  if (a.aabb.min != b.aabb.min || a.aabb.max != b.aabb.max) return false;
  if (x.root_side() != y.root_side() || x.root_min() != y.root_min() || x.sh_bands() != y.sh_bands()) return false;
  if (x.node_count() != y.node_count() || x.max_depth() != y.max_depth()) return false;
  if (a.background.resolution != b.background.resolution || a.background.texels != b.background.texels) return false;
  const std::vector<int32_t> ox = x.breadth_first_order();
  const std::vector<int32_t> oy = y.breadth_first_order();
  if (ox.size() != oy.size()) return false;
  for (size_t i = 0; i < ox.size(); ++i) {
    if (x.is_leaf(ox[i]) != y.is_leaf(oy[i])) return false;
    const NodeInfo& ix = x.info(ox[i]);
    const NodeInfo& iy = y.info(oy[i]);
    if (ix.depth != iy.depth || ix.coord != iy.coord) return false;
    const auto px = x.node_params(ox[i]);
    const auto py = y.node_params(oy[i]);
    if (std::memcmp(px.data(), py.data(), px.size_bytes()) != 0) return false;
  }
  return true;
}

}  // namespace xrf
