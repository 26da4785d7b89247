#include "gsdrive/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gsdrive/error.hpp"

namespace gsdrive {

namespace {

using Json = nlohmann::ordered_json;

Json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat3(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

Json gaussian_json(const Gaussian3D& g) {
  Json j;
  j["mean"] = vec(g.mean);
  j["scale"] = vec(g.scale);
  j["rotation"] = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
  j["opacity"] = g.opacity;
  j["color"] = vec(g.color);
  return j;
}

Json polyline_json(const Polyline& p) {
  Json a = Json::array();
  for (const auto& v : p) a.push_back({v.x(), v.y()});
  return a;
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kFormat, "scene file: " + what); }

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  if (!j.contains(key)) bad(where + " lacks \"" + key + "\"");
  return j[key];
}

void only_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end()) {
      bad("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where + " must be a number");
  return j.get<double>();
}

Eigen::VectorXd numbers(const Json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n) bad(where + " must be an array of " + std::to_string(n) + " numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], where);
  return v;
}

Gaussian3D parse_gaussian(const Json& j, const std::string& where) {
  only_keys(j, {"mean", "scale", "rotation", "opacity", "color"}, where);
  Gaussian3D g;
  g.mean = numbers(field(j, "mean", where), 3, where + ".mean");
  g.scale = numbers(field(j, "scale", where), 3, where + ".scale");
  const Eigen::VectorXd q = numbers(field(j, "rotation", where), 4, where + ".rotation");
  g.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  g.opacity = number(field(j, "opacity", where), where + ".opacity");
  g.color = numbers(field(j, "color", where), 3, where + ".color");
  return g;
}

Polyline parse_polyline(const Json& j, const std::string& where) {
  if (!j.is_array()) bad(where + " must be an array of points");
  Polyline p;
  for (std::size_t i = 0; i < j.size(); ++i) p.push_back(numbers(j[i], 2, where));
  return p;
}

Mat3 parse_mat3(const Json& j, const std::string& where) {
  const Eigen::VectorXd v = numbers(j, 9, where);
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = v[3 * r + c];
  }
  return m;
}

int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where + " must be an integer");
  return j.get<int>();
}

const Json& array_field(const Json& j, const char* key) {
  const Json& a = field(j, key, "scene");
  if (!a.is_array()) bad(std::string(key) + " must be an array");
  return a;
}

}  // namespace

std::string scene_to_json(const Scene& s) {
  Json j;
  j["version"] = kSceneVersion;
  j["name"] = s.name;
  j["road_half_width"] = s.road_half_width;
  j["gaussians"] = Json::array();
  for (const auto& g : s.gaussians) j["gaussians"].push_back(gaussian_json(g));
  j["cameras"] = Json::array();
  for (const auto& c : s.cameras) {
    Json cj;
    cj["intrinsics"] = mat3(c.intrinsics);
    cj["rotation_w2c"] = mat3(c.rotation_w2c);
    cj["translation_w2c"] = vec(c.translation_w2c);
    cj["image_size"] = {c.image_size.width, c.image_size.height};
    j["cameras"].push_back(cj);
  }
  j["expert_trajectory"] = polyline_json(s.expert_trajectory);
  j["agents"] = Json::array();
  for (const auto& a : s.agents) {
    Json aj;
    aj["radius"] = a.radius;
    aj["poses"] = Json::array();
    for (const auto& p : a.poses) aj["poses"].push_back({p.position.x(), p.position.y(), p.heading});
    aj["body"] = Json::array();
    for (const auto& g : a.body) aj["body"].push_back(gaussian_json(g));
    j["agents"].push_back(aj);
  }
  j["lane_centerlines"] = Json::array();
  for (const auto& l : s.lane_centerlines) j["lane_centerlines"].push_back(polyline_json(l));
  return j.dump(1) + "\n";
}

Scene scene_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("top level must be an object");
  only_keys(j, {"version", "name", "road_half_width", "gaussians", "cameras", "expert_trajectory", "agents",
                "lane_centerlines"},
            "scene");
  const Json& version = field(j, "version", "scene");
  if (!version.is_string() || version.get<std::string>() != kSceneVersion) {
    throw Error(ErrorCode::kVersionMismatch, "scene file version must be gsscene/1");
  }
  Scene s;
  const Json& name = field(j, "name", "scene");
  if (!name.is_string()) bad("name must be a string");
  s.name = name.get<std::string>();
  s.road_half_width = number(field(j, "road_half_width", "scene"), "road_half_width");
  const Json& gs = array_field(j, "gaussians");
  for (std::size_t i = 0; i < gs.size(); ++i) s.gaussians.push_back(parse_gaussian(gs[i], "gaussians[" + std::to_string(i) + "]"));
  const Json& cams = array_field(j, "cameras");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string where = "cameras[" + std::to_string(i) + "]";
    only_keys(cams[i], {"intrinsics", "rotation_w2c", "translation_w2c", "image_size"}, where);
    Camera c;
    c.intrinsics = parse_mat3(field(cams[i], "intrinsics", where), where + ".intrinsics");
    c.rotation_w2c = parse_mat3(field(cams[i], "rotation_w2c", where), where + ".rotation_w2c");
    c.translation_w2c = numbers(field(cams[i], "translation_w2c", where), 3, where + ".translation_w2c");
    const Json& size = field(cams[i], "image_size", where);
    if (!size.is_array() || size.size() != 2) bad(where + ".image_size must be [width, height]");
    c.image_size.width = integer(size[0], where + ".image_size");
    c.image_size.height = integer(size[1], where + ".image_size");
    s.cameras.push_back(c);
  }
  s.expert_trajectory = parse_polyline(array_field(j, "expert_trajectory"), "expert_trajectory");
  const Json& agents = array_field(j, "agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string where = "agents[" + std::to_string(i) + "]";
    only_keys(agents[i], {"radius", "poses", "body"}, where);
    AgentScript a;
    a.radius = number(field(agents[i], "radius", where), where + ".radius");
    const Json& poses = field(agents[i], "poses", where);
    if (!poses.is_array()) bad(where + ".poses must be an array");
    for (const auto& p : poses) {
      const Eigen::VectorXd v = numbers(p, 3, where + ".poses");
      a.poses.push_back({Vec2(v[0], v[1]), v[2]});
    }
    const Json& body = field(agents[i], "body", where);
    if (!body.is_array()) bad(where + ".body must be an array");
    for (std::size_t k = 0; k < body.size(); ++k) a.body.push_back(parse_gaussian(body[k], where + ".body"));
    s.agents.push_back(std::move(a));
  }
  const Json& lanes = array_field(j, "lane_centerlines");
  for (const auto& l : lanes) s.lane_centerlines.push_back(parse_polyline(l, "lane_centerlines"));
  try {
    s.validate();
  } catch (const Error& e) {
    bad(e.what());
  }
  return s;
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << scene_to_json(scene);
  if (!f) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return scene_from_json(ss.str());
}

std::vector<std::shared_ptr<const Scene>> load_scene_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, "not a scene directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::kIo, "no scene files in " + dir.string());
  std::vector<std::shared_ptr<const Scene>> out;
  for (const auto& f : files) out.push_back(std::make_shared<const Scene>(load_scene(f)));
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& rgb) {
  if (rgb.channels != 3) throw Error(ErrorCode::kShapeMismatch, "PPM needs a 3-channel image");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
  for (double v : rgb.data) {
    const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    f.put(static_cast<char>(b));
  }
}

void write_depth(const std::filesystem::path& path, const Image& depth) {
  static_assert(std::endian::native == std::endian::little, "depth files are little-endian");
  if (depth.channels != 1) throw Error(ErrorCode::kShapeMismatch, "depth image must be single-channel");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f.write("GSDEPTH0", 8);
  const std::uint32_t w = static_cast<std::uint32_t>(depth.width), h = static_cast<std::uint32_t>(depth.height);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  for (double v : depth.data) {
    const float x = static_cast<float>(v);
    f.write(reinterpret_cast<const char*>(&x), 4);
  }
}

Image read_depth(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "GSDEPTH0", 8) != 0) throw Error(ErrorCode::kFormat, "not a GSDEPTH0 file");
  std::uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || w > 1u << 16 || h > 1u << 16) throw Error(ErrorCode::kFormat, "bad depth header");
  Image img(static_cast<int>(w), static_cast<int>(h), 1);
  for (double& v : img.data) {
    float x;
    f.read(reinterpret_cast<char*>(&x), 4);
    v = x;
  }
  if (!f) throw Error(ErrorCode::kFormat, "depth file truncated");
  return img;
}

}  // namespace gsdrive
