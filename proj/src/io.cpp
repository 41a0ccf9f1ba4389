#include "frustum_forge/io.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

using nlohmann::json;

namespace {

json parse_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(ctx + ": missing field '" + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number()) throw FormatError(ctx + ": field '" + key + "' is not a number");
  return v.get<double>();
}

int require_int(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number_integer()) throw FormatError(ctx + ": field '" + key + "' is not an integer");
  return v.get<int>();
}

std::string require_string(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_string()) throw FormatError(ctx + ": field '" + key + "' is not a string");
  return v.get<std::string>();
}

std::vector<double> require_numbers(const json& j, const char* key, std::size_t n,
                                    const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_array() || v.size() != n) {
    throw FormatError(ctx + ": field '" + key + "' must be an array of " +
                      std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& e : v) {
    if (!e.is_number()) throw FormatError(ctx + ": field '" + key + "' holds a non-number");
    out.push_back(e.get<double>());
  }
  return out;
}

json box_to_json(const Box3D& b) {
  json j;
  j["class_id"] = b.class_id;
  j["score"] = b.score;
  j["center"] = {b.center.x(), b.center.y(), b.center.z()};
  j["size"] = {b.w, b.l, b.h};
  j["yaw"] = b.yaw;
  return j;
}

Box3D box_from_json(const json& j, const std::string& ctx) {
  Box3D b;
  b.class_id = require_int(j, "class_id", ctx);
  b.score = require_number(j, "score", ctx);
  const auto c = require_numbers(j, "center", 3, ctx);
  b.center = Vec3(c[0], c[1], c[2]);
  const auto s = require_numbers(j, "size", 3, ctx);
  b.w = s[0];
  b.l = s[1];
  b.h = s[2];
  b.yaw = require_number(j, "yaw", ctx);
  validate_box(b);
  b.yaw = wrap_angle(b.yaw);
  return b;
}

float load_le_f32(const unsigned char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0x0000ff00u) << 8) | ((u & 0x000000ffu) << 24);
  }
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void store_le_f32(float f, unsigned char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0x0000ff00u) << 8) | ((u & 0x000000ffu) << 24);
  }
  std::memcpy(p, &u, 4);
}

PointCloud load_points_binary(const std::filesystem::path& path, int expected_count) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open points file " + path.string());
  const std::streamoff size = f.tellg();
  if (size != static_cast<std::streamoff>(expected_count) * 16) {
    throw FormatError(path.string() + ": size " + std::to_string(size) +
                      " does not match point_count " + std::to_string(expected_count));
  }
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(buf.data()), size);
  if (!f) throw IoError("short read on " + path.string());

  PointCloud cloud;
  cloud.points.reserve(expected_count);
  cloud.intensity.reserve(expected_count);
  for (int i = 0; i < expected_count; ++i) {
    const unsigned char* rec = buf.data() + static_cast<std::size_t>(i) * 16;
    const float x = load_le_f32(rec);
    const float y = load_le_f32(rec + 4);
    const float z = load_le_f32(rec + 8);
    const float in = load_le_f32(rec + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(in)) {
      throw FormatError(path.string() + ": non-finite value in record " + std::to_string(i));
    }
    cloud.points.emplace_back(x, y, z);
    cloud.intensity.push_back(in);
  }
  return cloud;
}

void save_points_binary(const std::filesystem::path& path, const PointCloud& cloud) {
  const std::size_t n = cloud.points.size();
  std::vector<unsigned char> buf(n * 16);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char* rec = buf.data() + i * 16;
    store_le_f32(static_cast<float>(cloud.points[i].x()), rec);
    store_le_f32(static_cast<float>(cloud.points[i].y()), rec + 4);
    store_le_f32(static_cast<float>(cloud.points[i].z()), rec + 8);
    store_le_f32(i < cloud.intensity.size() ? cloud.intensity[i] : 0.0f, rec + 12);
  }
  atomic_write_binary(path, buf.data(), buf.size());
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  const unsigned id = counter.fetch_add(1);
  return path.parent_path() /
         (path.filename().string() + ".tmp." + std::to_string(id));
}

}  // namespace

const CameraModel* Scene::find_camera(const std::string& id) const {
  for (const auto& c : cameras) {
    if (c.camera_id == id) return &c;
  }
  return nullptr;
}

bool Vocabulary::is_base(int class_id) const {
  for (const auto& c : base_classes) {
    if (c.id == class_id) return true;
  }
  return false;
}

bool Vocabulary::is_novel(int class_id) const {
  for (const auto& c : novel_classes) {
    if (c.id == class_id) return true;
  }
  return false;
}

const ClassInfo* Vocabulary::find(int class_id) const {
  for (const auto& c : base_classes) {
    if (c.id == class_id) return &c;
  }
  for (const auto& c : novel_classes) {
    if (c.id == class_id) return &c;
  }
  return nullptr;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  atomic_write_binary(path, content.data(), content.size());
}

void atomic_write_binary(const std::filesystem::path& path, const void* data,
                         std::size_t size) {
  const auto parent = path.parent_path();
  if (!parent.empty()) {
    std::error_code dir_ec;
    std::filesystem::create_directories(parent, dir_ec);
    // a real failure surfaces as the open error below
  }
  const auto tmp = temp_sibling(path);
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create " + tmp.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    f.flush();
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed on " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

void validate_box(const Box3D& box) {
  if (!box.center.allFinite() || !std::isfinite(box.yaw)) {
    throw FormatError("box has non-finite pose");
  }
  if (!(box.w > 0.0) || !(box.l > 0.0) || !(box.h > 0.0)) {
    throw FormatError("box sizes must be positive");
  }
  if (!(box.score >= 0.0 && box.score <= 1.0)) {
    throw FormatError("box score must lie in [0, 1]");
  }
}

void validate_camera(const CameraModel& cam) {
  const std::string ctx = "camera '" + cam.camera_id + "'";
  const Mat3& K = cam.intrinsics;
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) {
    throw FormatError(ctx + ": intrinsics must be upper triangular");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
    throw FormatError(ctx + ": focal lengths must be positive");
  }
  const Mat3 R = cam.extrinsic.rotation();
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(R.determinant() - 1.0) > 1e-9) {
    throw FormatError(ctx + ": extrinsic rotation is not a proper rotation");
  }
  if (cam.image_w <= 0 || cam.image_h <= 0) {
    throw FormatError(ctx + ": image dimensions must be positive");
  }
}

Scene load_scene(const std::filesystem::path& manifest_path) {
  const json j = parse_file(manifest_path);
  const std::string ctx = manifest_path.string();
  Scene scene;
  scene.scene_id = require_string(j, "scene_id", ctx);

  const json& cams = require(j, "cameras", ctx);
  if (!cams.is_array()) throw FormatError(ctx + ": 'cameras' must be an array");
  std::set<std::string> seen;
  for (const auto& cj : cams) {
    CameraModel cam;
    cam.camera_id = require_string(cj, "camera_id", ctx);
    if (!seen.insert(cam.camera_id).second) {
      throw FormatError(ctx + ": duplicate camera_id '" + cam.camera_id + "'");
    }
    const auto K = require_numbers(cj, "intrinsics", 9, ctx);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = K[r * 3 + c];
    }
    const auto E = require_numbers(cj, "extrinsic", 16, ctx);
    Mat4 M;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) M(r, c) = E[r * 4 + c];
    }
    if ((M.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
      throw FormatError(ctx + ": extrinsic bottom row must be (0, 0, 0, 1)");
    }
    cam.extrinsic.linear() = M.topLeftCorner<3, 3>();
    cam.extrinsic.translation() = M.topRightCorner<3, 1>();
    cam.image_w = require_int(cj, "image_w", ctx);
    cam.image_h = require_int(cj, "image_h", ctx);
    validate_camera(cam);
    scene.cameras.push_back(std::move(cam));
  }

  for (const char* key : {"base_gt", "novel_gt"}) {
    const json& arr = require(j, key, ctx);
    if (!arr.is_array()) throw FormatError(ctx + ": '" + std::string(key) + "' must be an array");
    auto& dst = std::string(key) == "base_gt" ? scene.base_gt : scene.novel_gt;
    for (const auto& bj : arr) dst.push_back(box_from_json(bj, ctx));
  }

  const int count = require_int(j, "point_count", ctx);
  if (count < 0) throw FormatError(ctx + ": point_count must be non-negative");
  const std::string points_file = require_string(j, "points_file", ctx);
  scene.cloud = load_points_binary(manifest_path.parent_path() / points_file, count);
  return scene;
}

void save_scene(const std::filesystem::path& manifest_path, const Scene& scene) {
  const std::string points_name = manifest_path.stem().string() + ".points.bin";
  save_points_binary(manifest_path.parent_path() / points_name, scene.cloud);

  json j;
  j["scene_id"] = scene.scene_id;
  j["points_file"] = points_name;
  j["point_count"] = scene.cloud.size();
  json cams = json::array();
  for (const auto& cam : scene.cameras) {
    json cj;
    cj["camera_id"] = cam.camera_id;
    json K = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) K.push_back(cam.intrinsics(r, c));
    }
    cj["intrinsics"] = std::move(K);
    Mat4 M = Mat4::Identity();
    M.topLeftCorner<3, 3>() = cam.extrinsic.linear();
    M.topRightCorner<3, 1>() = cam.extrinsic.translation();
    json E = json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) E.push_back(M(r, c));
    }
    cj["extrinsic"] = std::move(E);
    cj["image_w"] = cam.image_w;
    cj["image_h"] = cam.image_h;
    cams.push_back(std::move(cj));
  }
  j["cameras"] = std::move(cams);
  json base = json::array();
  for (const auto& b : scene.base_gt) base.push_back(box_to_json(b));
  j["base_gt"] = std::move(base);
  json novel = json::array();
  for (const auto& b : scene.novel_gt) novel.push_back(box_to_json(b));
  j["novel_gt"] = std::move(novel);

  atomic_write_text(manifest_path, j.dump(2) + "\n");
}

std::vector<Detection2D> load_detections(const std::filesystem::path& path,
                                         const Scene& scene) {
  const json j = parse_file(path);
  const std::string ctx = path.string();
  if (!j.is_array()) throw FormatError(ctx + ": expected a JSON array");
  std::vector<Detection2D> out;
  out.reserve(j.size());
  for (const auto& dj : j) {
    Detection2D d;
    d.camera_id = require_string(dj, "camera_id", ctx);
    if (scene.find_camera(d.camera_id) == nullptr) {
      throw ReferenceError(ctx + ": unknown camera_id '" + d.camera_id + "'");
    }
    d.class_id = require_int(dj, "class_id", ctx);
    d.score = require_number(dj, "score", ctx);
    if (!(d.score >= 0.0 && d.score <= 1.0)) {
      throw FormatError(ctx + ": detection score must lie in [0, 1]");
    }
    const auto b = require_numbers(dj, "box", 4, ctx);
    d.box = Box2D{b[0], b[1], b[2], b[3]};
    if (!(d.box.u_min <= d.box.u_max) || !(d.box.v_min <= d.box.v_max)) {
      throw FormatError(ctx + ": detection box corners are not ordered");
    }
    out.push_back(std::move(d));
  }
  return out;
}

void save_detections(const std::filesystem::path& path,
                     const std::vector<Detection2D>& dets) {
  json j = json::array();
  for (const auto& d : dets) {
    json dj;
    dj["camera_id"] = d.camera_id;
    dj["class_id"] = d.class_id;
    dj["score"] = d.score;
    dj["box"] = {d.box.u_min, d.box.v_min, d.box.u_max, d.box.v_max};
    j.push_back(std::move(dj));
  }
  atomic_write_text(path, j.dump(2) + "\n");
}

std::vector<Box3D> load_boxes(const std::filesystem::path& path) {
  const json j = parse_file(path);
  if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array");
  std::vector<Box3D> out;
  out.reserve(j.size());
  for (const auto& bj : j) out.push_back(box_from_json(bj, path.string()));
  return out;
}

void save_boxes(const std::filesystem::path& path, const std::vector<Box3D>& boxes) {
  json j = json::array();
  for (const auto& b : boxes) j.push_back(box_to_json(b));
  atomic_write_text(path, j.dump(2) + "\n");
}

std::vector<int> load_point_labels(const std::filesystem::path& path) {
  const json j = parse_file(path);
  if (!j.is_array())
    throw FormatError(path.string() + ": expected a JSON array of labels");
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer())
      throw FormatError(path.string() + ": labels must be integers");
    out.push_back(v.get<int>());
  }
  return out;
}

void save_point_labels(const std::filesystem::path& path,
                       const std::vector<int>& labels) {
  json j = json::array();
  for (int v : labels) j.push_back(v);
  atomic_write_text(path, j.dump() + "\n");
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  const json j = parse_file(path);
  const std::string ctx = path.string();
  Vocabulary v;
  for (const char* key : {"base_classes", "novel_classes"}) {
    const json& arr = require(j, key, ctx);
    if (!arr.is_array()) throw FormatError(ctx + ": '" + std::string(key) + "' must be an array");
    auto& dst = std::string(key) == "base_classes" ? v.base_classes : v.novel_classes;
    for (const auto& cj : arr) {
      ClassInfo info;
      info.id = require_int(cj, "id", ctx);
      info.name = require_string(cj, "name", ctx);
      dst.push_back(std::move(info));
    }
  }
  std::set<int> ids;
  for (const auto& c : v.base_classes) {
    if (!ids.insert(c.id).second) throw FormatError(ctx + ": duplicate class id");
  }
  for (const auto& c : v.novel_classes) {
    if (!ids.insert(c.id).second) {
      throw FormatError(ctx + ": class id " + std::to_string(c.id) +
                        " appears in both sets or twice");
    }
  }
  return v;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v) {
  json j;
  json base = json::array();
  for (const auto& c : v.base_classes) base.push_back({{"id", c.id}, {"name", c.name}});
  json novel = json::array();
  for (const auto& c : v.novel_classes) novel.push_back({{"id", c.id}, {"name", c.name}});
  j["base_classes"] = std::move(base);
  j["novel_classes"] = std::move(novel);
  atomic_write_text(path, j.dump(2) + "\n");
}

AnchorTable load_anchors(const std::filesystem::path& path) {
  const json j = parse_file(path);
  const std::string ctx = path.string();
  if (!j.is_object()) throw FormatError(ctx + ": expected a JSON object");
  AnchorTable t;
  for (const auto& [key, val] : j.items()) {
    std::size_t pos = 0;
    int id = 0;
    try {
      id = std::stoi(key, &pos);
    } catch (const std::exception&) {
      throw FormatError(ctx + ": anchor key '" + key + "' is not a class id");
    }
    if (pos != key.size()) {
      throw FormatError(ctx + ": anchor key '" + key + "' is not a class id");
    }
    if (!val.is_array() || val.size() != 3) {
      throw FormatError(ctx + ": anchor for class " + key + " must be [w, l, h]");
    }
    Vec3 size(val[0].get<double>(), val[1].get<double>(), val[2].get<double>());
    if (!(size.x() > 0.0) || !(size.y() > 0.0) || !(size.z() > 0.0)) {
      throw FormatError(ctx + ": anchor sizes must be positive");
    }
    t.sizes[id] = size;
  }
  return t;
}

void save_anchors(const std::filesystem::path& path, const AnchorTable& t) {
  json j = json::object();
  for (const auto& [id, size] : t.sizes) {
    j[std::to_string(id)] = {size.x(), size.y(), size.z()};
  }
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace frustum_forge
