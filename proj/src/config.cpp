#include "erf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace xrf {

RenderMode parse_render_mode(const std::string& s) {
  if (s == "opacity") return RenderMode::Opacity;
  if (s == "exp-softplus") return RenderMode::ExpSoftplus;
  if (s == "exp-lilu") return RenderMode::ExpLilu;
  throw InvalidArgument("unknown renderer mode '" + s + "' (opacity | exp-softplus | exp-lilu)");
}

std::string to_string(RenderMode m) {
  switch (m) {
    case RenderMode::Opacity:
      return "opacity";
    case RenderMode::ExpSoftplus:
      return "exp-softplus";
    case RenderMode::ExpLilu:
      return "exp-lilu";
  }
  return "unknown";
}

SensorMode parse_sensor_mode(const std::string& s) {
  if (s == "identity") return SensorMode::Identity;
  if (s == "gamma") return SensorMode::Gamma;
  throw InvalidArgument("unknown sensor mode '" + s + "' (identity | gamma)");
}

std::string to_string(SensorMode m) { return m == SensorMode::Gamma ? "gamma" : "identity"; }

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw InvalidArgument("bad numeric value '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidArgument("bad boolean value '" + s + "'");
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

template <class T, class Access>
Field number(Access access) {
  return Field{[access](RunConfig& c, const std::string& s) { access(c) = parse_number<T>(s); },
               [access](const RunConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) return fmt_double(access(const_cast<RunConfig&>(c)));
                 else return std::to_string(access(const_cast<RunConfig&>(c)));
               }};
}

template <class Access>
Field boolean(Access access) {
  return Field{[access](RunConfig& c, const std::string& s) { access(c) = parse_bool(s); },
               [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"sh_bands", number<int>([](RunConfig& c) -> int& { return c.sh_bands; })},
      {"cube_resolution", number<int>([](RunConfig& c) -> int& { return c.cube_resolution; })},
      {"samples_per_side", number<int>([](RunConfig& c) -> int& { return c.train.objective.render.samples_per_side; })},
      {"max_samples", number<size_t>([](RunConfig& c) -> size_t& { return c.train.objective.render.max_samples; })},
      {"max_opacity_samples",
       number<size_t>([](RunConfig& c) -> size_t& { return c.train.objective.render.max_opacity_samples; })},
      {"renderer", Field{[](RunConfig& c, const std::string& s) { c.train.objective.render.mode = c.render.mode = parse_render_mode(s); },
                         [](const RunConfig& c) { return to_string(c.train.objective.render.mode); }}},
      {"sensor", Field{[](RunConfig& c, const std::string& s) { c.train.objective.render.sensor = c.render.sensor = parse_sensor_mode(s); },
                       [](const RunConfig& c) { return to_string(c.train.objective.render.sensor); }}},
      {"train_filter", boolean([](RunConfig& c) -> bool& { return c.train.objective.render.filter; })},
      {"render_filter", boolean([](RunConfig& c) -> bool& { return c.render.filter; })},
      {"lambda", number<double>([](RunConfig& c) -> double& { return c.train.objective.lambda; })},
      {"huber_delta", number<double>([](RunConfig& c) -> double& { return c.train.objective.huber_delta; })},
      {"batch_size", number<size_t>([](RunConfig& c) -> size_t& { return c.train.batch_size; })},
      {"prior_batch_size", number<size_t>([](RunConfig& c) -> size_t& { return c.train.prior_batch_size; })},
      {"lr", number<double>([](RunConfig& c) -> double& { return c.train.lr; })},
      {"lr_decay", number<double>([](RunConfig& c) -> double& { return c.train.lr_decay; })},
      {"seed_threshold", number<double>([](RunConfig& c) -> double& { return c.train.seed_threshold; })},
      {"expand_threshold", number<double>([](RunConfig& c) -> double& { return c.train.expand_threshold; })},
      {"cache_cell_level", number<int>([](RunConfig& c) -> int& { return c.train.cache.cell_level; })},
      {"cache_decay", number<double>([](RunConfig& c) -> double& { return c.train.cache.decay; })},
      {"cache_floor", number<double>([](RunConfig& c) -> double& { return c.train.cache.floor; })},
      {"cache_rebuild_interval", number<int>([](RunConfig& c) -> int& { return c.train.cache.rebuild_interval; })},
      {"importance_sampling", boolean([](RunConfig& c) -> bool& { return c.train.cache.importance; })},
      {"max_mip_level", number<int>([](RunConfig& c) -> int& { return c.train.max_mip_level; })},
      {"node_budget", number<size_t>([](RunConfig& c) -> size_t& { return c.train.node_budget; })},
      {"initial_depth", number<int>([](RunConfig& c) -> int& { return c.train.initial_depth; })},
      {"max_phases", number<int>([](RunConfig& c) -> int& { return c.train.max_phases; })},
      {"iterations_per_phase", number<size_t>([](RunConfig& c) -> size_t& { return c.train.iterations_per_phase; })},
      {"stats_interval", number<size_t>([](RunConfig& c) -> size_t& { return c.train.stats_interval; })},
      {"white_background", boolean([](RunConfig& c) -> bool& { return c.load.white_background; })},
      {"pyramid_filter",
       Field{[](RunConfig& c, const std::string& s) {
               if (s == "box") c.load.filter = PyramidFilter::Box;
               else if (s == "gaussian") c.load.filter = PyramidFilter::Gaussian;
               else throw InvalidArgument("unknown pyramid filter '" + s + "' (box | gaussian)");
             },
             [](const RunConfig& c) { return std::string(c.load.filter == PyramidFilter::Box ? "box" : "gaussian"); }}},
  };
  return table;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config(RunConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(number);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw InvalidArgument(where + ": unknown key '" + key + "'");
    try {
      it->second.set(config, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + ": " + e.what());
    }
  }
  config.train.objective.render.seed = config.train.seed;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_config(c, ss.str(), path);
  return c;
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& kv : fields()) keys.push_back(kv.first);
  return keys;
}

}  // namespace xrf
