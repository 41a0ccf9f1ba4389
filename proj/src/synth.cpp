#include "frustum_forge/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "frustum_forge/errors.hpp"
#include "frustum_forge/util.hpp"

namespace frustum_forge {

namespace {

using nlohmann::json;

constexpr const char* kSpecKeys[] = {
    "n_per_class_min", "n_per_class_max", "area_half", "min_range",
    "size_jitter", "max_place_attempts", "point_density", "falloff_exponent",
    "max_points_per_object", "ground_points", "clutter_points",
    "clutter_height", "n_cameras", "focal", "image_w", "image_h",
    "cam_height", "jitter_px", "miss_prob", "misclass_prob", "score_lo",
    "score_hi", "seed"};

double read_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw FormatError(std::string("synth spec: '") + key + "' must be a number");
  return j[key].get<double>();
}

int read_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw FormatError(std::string("synth spec: '") + key +
                      "' must be an integer");
  return j[key].get<int>();
}

}  // namespace

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object())
    throw FormatError(path.string() + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kSpecKeys), std::end(kSpecKeys),
                     [&](const char* k) { return key == k; }) ==
        std::end(kSpecKeys))
      throw FormatError(path.string() + ": unknown synth spec key '" + key +
                        "'");
  }
  SynthSpec s;
  s.n_per_class_min = read_int(j, "n_per_class_min", s.n_per_class_min);
  s.n_per_class_max = read_int(j, "n_per_class_max", s.n_per_class_max);
  s.area_half = read_num(j, "area_half", s.area_half);
  s.min_range = read_num(j, "min_range", s.min_range);
  s.size_jitter = read_num(j, "size_jitter", s.size_jitter);
  s.max_place_attempts = read_int(j, "max_place_attempts", s.max_place_attempts);
  s.point_density = read_num(j, "point_density", s.point_density);
  s.falloff_exponent = read_num(j, "falloff_exponent", s.falloff_exponent);
  s.max_points_per_object =
      read_int(j, "max_points_per_object", s.max_points_per_object);
  s.ground_points = read_int(j, "ground_points", s.ground_points);
  s.clutter_points = read_int(j, "clutter_points", s.clutter_points);
  s.clutter_height = read_num(j, "clutter_height", s.clutter_height);
  s.n_cameras = read_int(j, "n_cameras", s.n_cameras);
  s.focal = read_num(j, "focal", s.focal);
  s.image_w = read_int(j, "image_w", s.image_w);
  s.image_h = read_int(j, "image_h", s.image_h);
  s.cam_height = read_num(j, "cam_height", s.cam_height);
  s.jitter_px = read_num(j, "jitter_px", s.jitter_px);
  s.miss_prob = read_num(j, "miss_prob", s.miss_prob);
  s.misclass_prob = read_num(j, "misclass_prob", s.misclass_prob);
  s.score_lo = read_num(j, "score_lo", s.score_lo);
  s.score_hi = read_num(j, "score_hi", s.score_hi);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw FormatError(path.string() + ": 'seed' must be an integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  validate_synth_spec(s);
  return s;
}

void save_synth_spec(const std::filesystem::path& path, const SynthSpec& s) {
  json j;
  j["n_per_class_min"] = s.n_per_class_min;
  j["n_per_class_max"] = s.n_per_class_max;
  j["area_half"] = s.area_half;
  j["min_range"] = s.min_range;
  j["size_jitter"] = s.size_jitter;
  j["max_place_attempts"] = s.max_place_attempts;
  j["point_density"] = s.point_density;
  j["falloff_exponent"] = s.falloff_exponent;
  j["max_points_per_object"] = s.max_points_per_object;
  j["ground_points"] = s.ground_points;
  j["clutter_points"] = s.clutter_points;
  j["clutter_height"] = s.clutter_height;
  j["n_cameras"] = s.n_cameras;
  j["focal"] = s.focal;
  j["image_w"] = s.image_w;
  j["image_h"] = s.image_h;
  j["cam_height"] = s.cam_height;
  j["jitter_px"] = s.jitter_px;
  j["miss_prob"] = s.miss_prob;
  j["misclass_prob"] = s.misclass_prob;
  j["score_lo"] = s.score_lo;
  j["score_hi"] = s.score_hi;
  j["seed"] = s.seed;
  atomic_write_text(path, j.dump(2) + "\n");
}

void validate_synth_spec(const SynthSpec& s) {
  auto fail = [](const std::string& m) { throw FormatError("synth spec: " + m); };
  if (s.n_per_class_min < 0 || s.n_per_class_max < s.n_per_class_min)
    fail("object count range must satisfy 0 <= min <= max");
  if (s.area_half <= 0.0) fail("area_half must be > 0");
  if (s.min_range < 0.0 || s.min_range >= s.area_half)
    fail("min_range must be in [0, area_half)");
  if (s.size_jitter < 0.0 || s.size_jitter >= 0.5)
    fail("size_jitter must be in [0, 0.5)");
  if (s.max_place_attempts < 1) fail("max_place_attempts must be >= 1");
  if (s.point_density < 0.0) fail("point_density must be >= 0");
  if (s.falloff_exponent < 0.0) fail("falloff_exponent must be >= 0");
  if (s.max_points_per_object < 0) fail("max_points_per_object must be >= 0");
  if (s.ground_points < 0 || s.clutter_points < 0)
    fail("point counts must be >= 0");
  if (s.clutter_height <= 0.0) fail("clutter_height must be > 0");
  if (s.n_cameras < 1) fail("n_cameras must be >= 1");
  if (s.focal <= 0.0) fail("focal must be > 0");
  if (s.image_w < 1 || s.image_h < 1) fail("image size must be positive");
  if (s.cam_height < 0.0) fail("cam_height must be >= 0");
  if (s.jitter_px < 0.0) fail("jitter_px must be >= 0");
  if (s.miss_prob < 0.0 || s.miss_prob > 1.0) fail("miss_prob must be in [0,1]");
  if (s.misclass_prob < 0.0 || s.misclass_prob > 1.0)
    fail("misclass_prob must be in [0,1]");
  if (s.score_lo < 0.0 || s.score_hi > 1.0 || s.score_lo > s.score_hi)
    fail("score range must satisfy 0 <= lo <= hi <= 1");
}

Vocabulary default_vocabulary() {
  Vocabulary v;
  v.base_classes = {{0, "car"}, {2, "truck"}, {3, "bus"}};
  v.novel_classes = {{1, "pedestrian"}, {4, "motorcycle"}, {5, "traffic_cone"}};
  return v;
}

AnchorTable default_anchors() {
  AnchorTable t;
  t.sizes[0] = Vec3(1.97, 4.63, 1.74);   // car
  t.sizes[1] = Vec3(0.67, 0.73, 1.77);   // pedestrian
  t.sizes[2] = Vec3(2.51, 6.93, 2.84);   // truck
  t.sizes[3] = Vec3(2.94, 10.5, 3.47);   // bus
  t.sizes[4] = Vec3(0.77, 2.11, 1.47);   // motorcycle
  t.sizes[5] = Vec3(0.41, 0.41, 1.07);   // traffic_cone
  return t;
}

namespace {

CameraModel make_camera(int id, double yaw, const SynthSpec& spec) {
  CameraModel cam;
  cam.camera_id = "cam_" + std::to_string(id);
  cam.image_w = spec.image_w;
  cam.image_h = spec.image_h;
  cam.intrinsics = Mat3::Identity();
  cam.intrinsics(0, 0) = spec.focal;
  cam.intrinsics(1, 1) = spec.focal;
  cam.intrinsics(0, 2) = spec.image_w / 2.0;
  cam.intrinsics(1, 2) = spec.image_h / 2.0;

  // Optical frame: x right, y down, z forward along `yaw` in the sensor
  // frame; the camera sits cam_height above the sensor origin.
  Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
  Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  Vec3 down(0.0, 0.0, -1.0);
  Mat3 rot;
  rot.row(0) = right.transpose();
  rot.row(1) = down.transpose();
  rot.row(2) = fwd.transpose();
  Vec3 pos(0.0, 0.0, spec.cam_height);
  cam.extrinsic = Iso3::Identity();
  cam.extrinsic.linear() = rot;
  cam.extrinsic.translation() = -(rot * pos);
  return cam;
}

bool inside_footprint(const Box3D& box, double x, double y, double margin) {
  double c = std::cos(box.yaw), s = std::sin(box.yaw);
  double dx = x - box.center.x(), dy = y - box.center.y();
  double lx = c * dx + s * dy;
  double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.l / 2.0 + margin &&
         std::abs(ly) <= box.w / 2.0 + margin;
}

struct Face {
  int fixed_axis;   // 0=x, 1=y, 2=z in the box frame
  double sign;      // which side of the axis
  int u_axis, v_axis;
};

constexpr Face kFaces[] = {
    {0, +1.0, 1, 2}, {0, -1.0, 1, 2}, {1, +1.0, 0, 2},
    {1, -1.0, 0, 2}, {2, +1.0, 0, 1}, {2, -1.0, 0, 1},
};

}  // namespace

SynthScene gen_scene(const SynthSpec& spec, const Vocabulary& vocab,
                     const AnchorTable& anchors, std::uint64_t seed,
                     const std::string& scene_id) {
  validate_synth_spec(spec);
  if (vocab.base_classes.empty() && vocab.novel_classes.empty())
    throw FormatError("gen_scene: empty vocabulary");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthScene out;
  Scene& scene = out.scene;
  scene.scene_id = scene_id;
  for (int c = 0; c < spec.n_cameras; ++c)
    scene.cameras.push_back(
        make_camera(c, c * 2.0 * kPi / spec.n_cameras, spec));

  // Object placement. Draw order per class: count, then per object three
  // size factors followed by (x, y, yaw) triples until one placement is
  // collision-free.
  std::vector<ClassInfo> all_classes = vocab.base_classes;
  all_classes.insert(all_classes.end(), vocab.novel_classes.begin(),
                     vocab.novel_classes.end());
  std::vector<Box3D> placed;
  auto place_class = [&](const ClassInfo& info, bool is_base) {
    auto it = anchors.sizes.find(info.id);
    if (it == anchors.sizes.end())
      throw MissingAnchor("gen_scene: class " + std::to_string(info.id) +
                          " has no anchor size");
    const Vec3& anchor = it->second;
    int count = spec.n_per_class_min;
    if (spec.n_per_class_max > spec.n_per_class_min)
      count += static_cast<int>(
          rng() % (spec.n_per_class_max - spec.n_per_class_min + 1));
    for (int k = 0; k < count; ++k) {
      Box3D box;
      box.class_id = info.id;
      box.score = 1.0;
      double jw = 1.0 + spec.size_jitter * (2.0 * unit(rng) - 1.0);
      double jl = 1.0 + spec.size_jitter * (2.0 * unit(rng) - 1.0);
      double jh = 1.0 + spec.size_jitter * (2.0 * unit(rng) - 1.0);
      box.w = anchor.x() * jw;
      box.l = anchor.y() * jl;
      box.h = anchor.z() * jh;
      bool done = false;
      for (int attempt = 0; attempt < spec.max_place_attempts; ++attempt) {
        double x = spec.area_half * (2.0 * unit(rng) - 1.0);
        double y = spec.area_half * (2.0 * unit(rng) - 1.0);
        double yaw = wrap_angle(kPi * (2.0 * unit(rng) - 1.0));
        if (std::hypot(x, y) < spec.min_range) continue;
        box.center = Vec3(x, y, box.h / 2.0);  // resting on the ground plane
        box.yaw = yaw;
        bool collides = false;
        for (const Box3D& other : placed)
          if (iou_bev(box, other) > 0.0) {
            collides = true;
            break;
          }
        if (!collides) {
          done = true;
          break;
        }
      }
      if (!done)
        throw PlacementExhausted("gen_scene: no room for class " +
                                 std::to_string(info.id) + " object " +
                                 std::to_string(k));
      placed.push_back(box);
      (is_base ? scene.base_gt : scene.novel_gt).push_back(box);
    }
  };
  for (const ClassInfo& info : vocab.base_classes) place_class(info, true);
  for (const ClassInfo& info : vocab.novel_classes) place_class(info, false);

  // Surface points: faces visible from the sensor origin, counts scaled by
  // area * cos(incidence) / range^exponent, samples pushed 5 mm inward.
  auto sample_object = [&](const Box3D& box) {
    Eigen::Rotation2D<double> rot(box.yaw);
    Mat3 R = Mat3::Identity();
    R.topLeftCorner<2, 2>() = rot.toRotationMatrix();
    Vec3 half(box.l / 2.0, box.w / 2.0, box.h / 2.0);
    int remaining = spec.max_points_per_object;
    for (const Face& face : kFaces) {
      if (remaining <= 0) break;
      Vec3 n_local = Vec3::Zero();
      n_local[face.fixed_axis] = face.sign;
      Vec3 n_world = R * n_local;
      Vec3 c_local = n_local.cwiseProduct(half);
      Vec3 c_world = R * c_local + box.center;
      double range = c_world.norm();
      if (range < 1e-6) continue;
      double cos_inc = n_world.dot(-c_world) / range;
      if (cos_inc <= 0.0) continue;  // back face, invisible
      double area = 4.0 * half[face.u_axis] * half[face.v_axis];
      double weight =
          spec.point_density * area * cos_inc / std::pow(range, spec.falloff_exponent);
      int n = std::min(remaining, static_cast<int>(std::lround(weight)));
      double inset = std::min(0.005, half[face.fixed_axis] * 0.5);
      for (int i = 0; i < n; ++i) {
        Vec3 p_local;
        p_local[face.fixed_axis] =
            face.sign * (half[face.fixed_axis] - inset);
        p_local[face.u_axis] =
            half[face.u_axis] * (2.0 * unit(rng) - 1.0);
        p_local[face.v_axis] =
            half[face.v_axis] * (2.0 * unit(rng) - 1.0);
        scene.cloud.points.push_back(R * p_local + box.center);
        scene.cloud.intensity.push_back(0.0f);
        out.point_labels.push_back(box.class_id);
      }
      remaining -= n;
    }
  };
  for (const Box3D& box : placed) sample_object(box);

  // Ground and clutter, rejected from every box footprint so objects keep a
  // clean density contrast.
  auto sample_free = [&](double z_lo, double z_hi) {
    for (int tries = 0; tries < 100; ++tries) {
      double x = spec.area_half * (2.0 * unit(rng) - 1.0);
      double y = spec.area_half * (2.0 * unit(rng) - 1.0);
      bool blocked = false;
      for (const Box3D& box : placed)
        if (inside_footprint(box, x, y, 0.05)) {
          blocked = true;
          break;
        }
      if (blocked) continue;
      double z = z_lo + (z_hi - z_lo) * (z_hi > z_lo ? unit(rng) : 0.0);
      scene.cloud.points.push_back(Vec3(x, y, z));
      scene.cloud.intensity.push_back(0.0f);
      out.point_labels.push_back(-1);
      return;
    }
  };
  for (int i = 0; i < spec.ground_points; ++i) sample_free(0.0, 0.0);
  for (int i = 0; i < spec.clutter_points; ++i)
    sample_free(0.05, spec.clutter_height);

  // Detections: one per ground-truth object, in the camera where the
  // projection covers the most area. Draw order per object: miss coin,
  // then four jitter offsets (when enabled), misclass coin, class pick
  // (when triggered), score.
  auto detect = [&](const Box3D& box) {
    int best_cam = -1;
    double best_area = 0.0;
    for (std::size_t ci = 0; ci < scene.cameras.size(); ++ci) {
      auto proj = project_box(scene.cameras[ci], box);
      if (!proj) continue;
      double a = area(*proj);
      if (a > best_area) {
        best_area = a;
        best_cam = static_cast<int>(ci);
      }
    }
    if (best_cam < 0) return;
    if (unit(rng) < spec.miss_prob) return;
    Box2D b = *project_box(scene.cameras[best_cam], box);
    if (spec.jitter_px > 0.0) {
      auto jitter = [&]() { return spec.jitter_px * (2.0 * unit(rng) - 1.0); };
      double u0 = b.u_min + jitter(), u1 = b.u_max + jitter();
      double v0 = b.v_min + jitter(), v1 = b.v_max + jitter();
      b.u_min = std::clamp(std::min(u0, u1), 0.0, double(spec.image_w));
      b.u_max = std::clamp(std::max(u0, u1), 0.0, double(spec.image_w));
      b.v_min = std::clamp(std::min(v0, v1), 0.0, double(spec.image_h));
      b.v_max = std::clamp(std::max(v0, v1), 0.0, double(spec.image_h));
    }
    int cls = box.class_id;
    if (unit(rng) < spec.misclass_prob && all_classes.size() > 1) {
      int pick = static_cast<int>(rng() % (all_classes.size() - 1));
      int i = 0;
      for (const ClassInfo& info : all_classes) {
        if (info.id == box.class_id) continue;
        if (i++ == pick) {
          cls = info.id;
          break;
        }
      }
    }
    Detection2D det;
    det.camera_id = scene.cameras[best_cam].camera_id;
    det.class_id = cls;
    det.score = spec.score_lo + (spec.score_hi - spec.score_lo) * unit(rng);
    det.box = b;
    out.detections.push_back(det);
  };
  for (const Box3D& box : scene.base_gt) detect(box);
  for (const Box3D& box : scene.novel_gt) detect(box);

  return out;
}

std::vector<std::string> visibility(const Scene& scene, const Box3D& box) {
  std::vector<std::string> cams;
  for (const CameraModel& cam : scene.cameras) {
    auto proj = project_box(cam, box);
    if (proj && area(*proj) > 0.0) cams.push_back(cam.camera_id);
  }
  return cams;
}

}  // namespace frustum_forge
