#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "frustum_forge/errors.hpp"
#include "frustum_forge/geometry.hpp"
#include "frustum_forge/io.hpp"
#include "frustum_forge/synth.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace frustum_forge;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ff_synth_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

SynthSpec small_spec() {
  SynthSpec s;
  s.area_half = 20.0;
  s.point_density = 800.0;
  s.ground_points = 1500;
  s.clutter_points = 200;
  return s;
}

std::vector<Box3D> all_gt(const Scene& scene) {
  std::vector<Box3D> boxes = scene.base_gt;
  boxes.insert(boxes.end(), scene.novel_gt.begin(), scene.novel_gt.end());
  return boxes;
}

const CameraModel& camera_by_id(const Scene& scene, const std::string& id) {
  for (const CameraModel& cam : scene.cameras)
    if (cam.camera_id == id) return cam;
  REQUIRE(false);
  return scene.cameras.front();
}

// Average-rank Spearman correlation.
std::vector<double> avg_ranks(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = avg_ranks(a), rb = avg_ranks(b);
  const int n = static_cast<int>(a.size());
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("synth spec round trips through JSON") {
  TempDir tmp;
  SynthSpec s;
  s.n_per_class_min = 2;
  s.n_per_class_max = 4;
  s.area_half = 33.0;
  s.min_range = 5.5;
  s.size_jitter = 0.11;
  s.max_place_attempts = 77;
  s.point_density = 1234.5;
  s.falloff_exponent = 1.5;
  s.max_points_per_object = 900;
  s.ground_points = 123;
  s.clutter_points = 45;
  s.clutter_height = 2.5;
  s.n_cameras = 4;
  s.focal = 640.0;
  s.image_w = 1024;
  s.image_h = 768;
  s.cam_height = 1.8;
  s.jitter_px = 3.0;
  s.miss_prob = 0.25;
  s.misclass_prob = 0.125;
  s.score_lo = 0.5;
  s.score_hi = 0.75;
  s.seed = 0xDEADBEEFCAFEull;

  const auto path = tmp.path / "spec.json";
  save_synth_spec(path, s);
  const SynthSpec r = load_synth_spec(path);
  CHECK(r.n_per_class_min == s.n_per_class_min);
  CHECK(r.n_per_class_max == s.n_per_class_max);
  CHECK(r.area_half == s.area_half);
  CHECK(r.min_range == s.min_range);
  CHECK(r.size_jitter == s.size_jitter);
  CHECK(r.max_place_attempts == s.max_place_attempts);
  CHECK(r.point_density == s.point_density);
  CHECK(r.falloff_exponent == s.falloff_exponent);
  CHECK(r.max_points_per_object == s.max_points_per_object);
  CHECK(r.ground_points == s.ground_points);
  CHECK(r.clutter_points == s.clutter_points);
  CHECK(r.clutter_height == s.clutter_height);
  CHECK(r.n_cameras == s.n_cameras);
  CHECK(r.focal == s.focal);
  CHECK(r.image_w == s.image_w);
  CHECK(r.image_h == s.image_h);
  CHECK(r.cam_height == s.cam_height);
  CHECK(r.jitter_px == s.jitter_px);
  CHECK(r.miss_prob == s.miss_prob);
  CHECK(r.misclass_prob == s.misclass_prob);
  CHECK(r.score_lo == s.score_lo);
  CHECK(r.score_hi == s.score_hi);
  CHECK(r.seed == s.seed);

  SUBCASE("empty object keeps every default") {
    const auto dflt = tmp.path / "empty.json";
    std::ofstream(dflt) << "{}\n";
    const SynthSpec d = load_synth_spec(dflt);
    const SynthSpec ref;
    CHECK(d.area_half == ref.area_half);
    CHECK(d.point_density == ref.point_density);
    CHECK(d.n_cameras == ref.n_cameras);
    CHECK(d.seed == ref.seed);
  }
}

TEST_CASE("synth spec loading rejects malformed input") {
  TempDir tmp;
  auto write = [&](const std::string& name, const std::string& text) {
    const auto p = tmp.path / name;
    std::ofstream(p) << text;
    return p;
  };
  CHECK_THROWS_AS(load_synth_spec(tmp.path / "absent.json"), IoError);
  CHECK_THROWS_AS(load_synth_spec(write("a.json", "{\"area_halff\": 3.0}")),
                  FormatError);
  CHECK_THROWS_AS(load_synth_spec(write("b.json", "{\"n_cameras\": 2.5}")),
                  FormatError);
  CHECK_THROWS_AS(load_synth_spec(write("c.json", "[1, 2]")), FormatError);
  CHECK_THROWS_AS(load_synth_spec(write("d.json", "{\"focal\": \"fast\"}")),
                  FormatError);
}

TEST_CASE("synth spec validation enforces parameter ranges") {
  auto check_bad = [](auto&& tweak) {
    SynthSpec s;
    tweak(s);
    CHECK_THROWS_AS(validate_synth_spec(s), FormatError);
  };
  check_bad([](SynthSpec& s) { s.n_per_class_max = s.n_per_class_min - 1; });
  check_bad([](SynthSpec& s) { s.min_range = s.area_half; });
  check_bad([](SynthSpec& s) { s.size_jitter = 0.6; });
  check_bad([](SynthSpec& s) { s.score_lo = 0.9; s.score_hi = 0.8; });
  check_bad([](SynthSpec& s) { s.n_cameras = 0; });
  check_bad([](SynthSpec& s) { s.miss_prob = 1.5; });
  check_bad([](SynthSpec& s) { s.area_half = -1.0; });
  validate_synth_spec(SynthSpec{});  // defaults are valid
}

TEST_CASE("default vocabulary and anchors cover six classes") {
  const Vocabulary v = default_vocabulary();
  REQUIRE(v.base_classes.size() == 3);
  REQUIRE(v.novel_classes.size() == 3);
  CHECK(v.base_classes[0].name == "car");
  CHECK(v.base_classes[0].id == 0);
  CHECK(v.novel_classes[0].name == "pedestrian");
  CHECK(v.novel_classes[0].id == 1);

  const AnchorTable t = default_anchors();
  for (const ClassInfo& info : v.base_classes)
    CHECK(t.sizes.count(info.id) == 1);
  for (const ClassInfo& info : v.novel_classes)
    CHECK(t.sizes.count(info.id) == 1);
  CHECK(t.sizes.at(0) == Vec3(1.97, 4.63, 1.74));
  CHECK(t.sizes.at(5).x() == t.sizes.at(5).y());  // cones are round
}

TEST_CASE("scene generation is deterministic in the seed") {
  const SynthSpec spec = small_spec();
  const Vocabulary vocab = default_vocabulary();
  const AnchorTable anchors = default_anchors();

  const SynthScene a = gen_scene(spec, vocab, anchors, 17, "scene_a");
  const SynthScene b = gen_scene(spec, vocab, anchors, 17, "scene_a");
  CHECK(a.scene.scene_id == b.scene.scene_id);
  REQUIRE(a.scene.cloud.points.size() == b.scene.cloud.points.size());
  for (std::size_t i = 0; i < a.scene.cloud.points.size(); ++i)
    CHECK(a.scene.cloud.points[i] == b.scene.cloud.points[i]);
  CHECK(a.point_labels == b.point_labels);
  REQUIRE(a.scene.base_gt.size() == b.scene.base_gt.size());
  for (std::size_t i = 0; i < a.scene.base_gt.size(); ++i) {
    CHECK(a.scene.base_gt[i].center == b.scene.base_gt[i].center);
    CHECK(a.scene.base_gt[i].yaw == b.scene.base_gt[i].yaw);
  }
  REQUIRE(a.detections.size() == b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) {
    CHECK(a.detections[i].camera_id == b.detections[i].camera_id);
    CHECK(a.detections[i].box.u_min == b.detections[i].box.u_min);
    CHECK(a.detections[i].score == b.detections[i].score);
  }

  SUBCASE("the scene id tags output without steering it") {
    const SynthScene c = gen_scene(spec, vocab, anchors, 17, "scene_c");
    CHECK(c.scene.scene_id == "scene_c");
    REQUIRE(!c.scene.base_gt.empty());
    CHECK(c.scene.base_gt[0].center == a.scene.base_gt[0].center);
  }
  SUBCASE("a different seed moves the scene") {
    const SynthScene c = gen_scene(spec, vocab, anchors, 18, "scene_a");
    REQUIRE(!c.scene.base_gt.empty());
    CHECK(c.scene.base_gt[0].center != a.scene.base_gt[0].center);
  }
}

TEST_CASE("ground truth placement is collision-free and grounded") {
  const SynthScene s =
      gen_scene(small_spec(), default_vocabulary(), default_anchors(), 29, "s");
  const auto boxes = all_gt(s.scene);
  REQUIRE(boxes.size() >= 6);

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box3D& b = boxes[i];
    CHECK(b.center.z() == b.h / 2.0);
    CHECK(std::hypot(b.center.x(), b.center.y()) >= small_spec().min_range);
    CHECK(std::abs(b.center.x()) <= small_spec().area_half);
    CHECK(std::abs(b.center.y()) <= small_spec().area_half);
    CHECK(b.yaw >= -kPi);
    CHECK(b.yaw < kPi);
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      CHECK(iou_bev(boxes[i], boxes[j]) == 0.0);
  }

  // Per-class counts respect the configured range, split by vocabulary side.
  std::map<int, int> counts;
  for (const Box3D& b : s.scene.base_gt) {
    CHECK((b.class_id == 0 || b.class_id == 2 || b.class_id == 3));
    ++counts[b.class_id];
  }
  for (const Box3D& b : s.scene.novel_gt) {
    CHECK((b.class_id == 1 || b.class_id == 4 || b.class_id == 5));
    ++counts[b.class_id];
  }
  REQUIRE(counts.size() == 6);
  for (const auto& [cls, n] : counts) {
    CHECK(n >= small_spec().n_per_class_min);
    CHECK(n <= small_spec().n_per_class_max);
  }
}

TEST_CASE("point labels tie surface points to boxes of that class") {
  const SynthScene s =
      gen_scene(small_spec(), default_vocabulary(), default_anchors(), 31, "s");
  const auto boxes = all_gt(s.scene);
  REQUIRE(s.point_labels.size() == s.scene.cloud.points.size());
  REQUIRE(s.scene.cloud.intensity.size() == s.scene.cloud.points.size());

  int n_free = 0;
  for (std::size_t i = 0; i < s.scene.cloud.points.size(); ++i) {
    const Vec3& p = s.scene.cloud.points[i];
    const int label = s.point_labels[i];
    if (label < 0) {
      ++n_free;
      // Ground sits on the plane, clutter floats; neither intrudes into a box.
      const bool on_ground = p.z() == 0.0;
      const bool in_air = p.z() >= 0.05 && p.z() <= small_spec().clutter_height;
      CHECK((on_ground || in_air));
      for (const Box3D& b : boxes) CHECK(!refs::bev_contains(b, p.x(), p.y()));
    } else {
      bool inside_own_class = false;
      for (const Box3D& b : boxes)
        if (b.class_id == label && refs::box_contains(b, p))
          inside_own_class = true;
      CHECK(inside_own_class);
    }
  }
  CHECK(n_free ==
        small_spec().ground_points + small_spec().clutter_points);
}

TEST_CASE("surface point counts fall off with range") {
  SynthSpec spec;
  spec.area_half = 35.0;
  spec.n_per_class_min = 6;
  spec.n_per_class_max = 6;
  spec.size_jitter = 0.0;
  spec.ground_points = 0;
  spec.clutter_points = 0;
  spec.n_cameras = 1;
  Vocabulary cars;
  cars.base_classes = {{0, "car"}};

  std::vector<double> ranges, counts;
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    const SynthScene s = gen_scene(spec, cars, default_anchors(), seed, "s");
    REQUIRE(s.scene.base_gt.size() == 6);
    for (const Box3D& b : s.scene.base_gt) {
      int n = 0;
      for (std::size_t i = 0; i < s.scene.cloud.points.size(); ++i)
        if (refs::box_contains(b, s.scene.cloud.points[i])) ++n;
      ranges.push_back(b.center.norm());
      counts.push_back(static_cast<double>(n));
    }
  }
  CHECK(spearman(ranges, counts) <= -0.8);
}

TEST_CASE("clean detections trace the projected hull in the best camera") {
  SynthSpec spec = small_spec();
  spec.score_lo = 0.9;
  spec.score_hi = 0.9;
  const SynthScene s =
      gen_scene(spec, default_vocabulary(), default_anchors(), 37, "s");
  const auto boxes = all_gt(s.scene);

  std::vector<const Box3D*> visible;
  for (const Box3D& b : boxes)
    if (!visibility(s.scene, b).empty()) visible.push_back(&b);
  REQUIRE(s.detections.size() == visible.size());

  for (std::size_t i = 0; i < visible.size(); ++i) {
    const Box3D& gt = *visible[i];
    const Detection2D& det = s.detections[i];
    CHECK(det.class_id == gt.class_id);
    CHECK(det.score == 0.9);

    const auto cams = visibility(s.scene, gt);
    CHECK(std::find(cams.begin(), cams.end(), det.camera_id) != cams.end());

    const CameraModel& best = camera_by_id(s.scene, det.camera_id);
    const auto hull = project_box(best, gt);
    REQUIRE(hull.has_value());
    CHECK(det.box.u_min == hull->u_min);
    CHECK(det.box.u_max == hull->u_max);
    CHECK(det.box.v_min == hull->v_min);
    CHECK(det.box.v_max == hull->v_max);

    // No other camera offers a larger projection.
    for (const CameraModel& cam : s.scene.cameras) {
      const auto other = project_box(cam, gt);
      if (other) CHECK(area(*hull) >= area(*other));
    }
  }
}

TEST_CASE("detection corruption knobs behave") {
  SUBCASE("certain misses produce no detections") {
    SynthSpec spec = small_spec();
    spec.miss_prob = 1.0;
    const SynthScene s =
        gen_scene(spec, default_vocabulary(), default_anchors(), 41, "s");
    CHECK(s.detections.empty());
  }
  SUBCASE("certain misclassification always flips the label") {
    SynthSpec spec = small_spec();
    spec.misclass_prob = 1.0;
    const SynthScene s =
        gen_scene(spec, default_vocabulary(), default_anchors(), 43, "s");
    const auto boxes = all_gt(s.scene);
    std::vector<const Box3D*> visible;
    for (const Box3D& b : boxes)
      if (!visibility(s.scene, b).empty()) visible.push_back(&b);
    REQUIRE(s.detections.size() == visible.size());
    for (std::size_t i = 0; i < visible.size(); ++i) {
      CHECK(s.detections[i].class_id != visible[i]->class_id);
      CHECK(s.detections[i].class_id >= 0);
      CHECK(s.detections[i].class_id <= 5);
    }
  }
  SUBCASE("pixel jitter keeps boxes ordered and inside the image") {
    SynthSpec spec = small_spec();
    spec.jitter_px = 40.0;
    const SynthScene s =
        gen_scene(spec, default_vocabulary(), default_anchors(), 47, "s");
    REQUIRE(!s.detections.empty());
    for (const Detection2D& det : s.detections) {
      CHECK(det.box.u_min >= 0.0);
      CHECK(det.box.u_max <= spec.image_w);
      CHECK(det.box.v_min >= 0.0);
      CHECK(det.box.v_max <= spec.image_h);
      CHECK(det.box.u_min <= det.box.u_max);
      CHECK(det.box.v_min <= det.box.v_max);
    }
  }
}

TEST_CASE("a cramped arena exhausts placement") {
  SynthSpec spec;
  spec.area_half = 7.0;
  spec.min_range = 6.0;
  spec.n_per_class_min = 40;
  spec.n_per_class_max = 40;
  Vocabulary cars;
  cars.base_classes = {{0, "car"}};
  CHECK_THROWS_AS(gen_scene(spec, cars, default_anchors(), 1, "s"),
                  PlacementExhausted);
}

TEST_CASE("generation reports a class without an anchor") {
  Vocabulary v;
  v.base_classes = {{9, "zeppelin"}};
  CHECK_THROWS_AS(gen_scene(small_spec(), v, default_anchors(), 1, "s"),
                  MissingAnchor);
}

TEST_CASE("generated scenes survive the on-disk round trip") {
  TempDir tmp;
  SynthSpec spec = small_spec();
  spec.ground_points = 200;
  spec.clutter_points = 50;
  spec.point_density = 300.0;
  const SynthScene s =
      gen_scene(spec, default_vocabulary(), default_anchors(), 53, "rt");

  const auto scene_path = tmp.path / "rt.json";
  save_scene(scene_path, s.scene);
  const Scene loaded = load_scene(scene_path);
  CHECK(loaded.scene_id == "rt");
  REQUIRE(loaded.cameras.size() == s.scene.cameras.size());
  REQUIRE(loaded.cloud.points.size() == s.scene.cloud.points.size());
  for (std::size_t i = 0; i < loaded.cloud.points.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(loaded.cloud.points[i][k] ==
            static_cast<double>(static_cast<float>(s.scene.cloud.points[i][k])));
  REQUIRE(loaded.base_gt.size() == s.scene.base_gt.size());
  REQUIRE(loaded.novel_gt.size() == s.scene.novel_gt.size());
  for (std::size_t i = 0; i < loaded.base_gt.size(); ++i) {
    CHECK(loaded.base_gt[i].center.isApprox(s.scene.base_gt[i].center, 1e-12));
    CHECK(loaded.base_gt[i].yaw == doctest::Approx(s.scene.base_gt[i].yaw));
    CHECK(loaded.base_gt[i].class_id == s.scene.base_gt[i].class_id);
  }

  const auto det_path = tmp.path / "rt_dets.json";
  save_detections(det_path, s.detections);
  const auto dets = load_detections(det_path, loaded);
  REQUIRE(dets.size() == s.detections.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(dets[i].camera_id == s.detections[i].camera_id);
    CHECK(dets[i].class_id == s.detections[i].class_id);
    CHECK(dets[i].box.u_min == doctest::Approx(s.detections[i].box.u_min));
  }
}

TEST_CASE("visibility lists exactly the cameras that see the box") {
  Scene scene;
  scene.scene_id = "vis";
  scene.cameras.push_back(fixtures::forward_camera("cam_0", 800.0, 1600, 900));

  // Straight ahead: visible.
  const Box3D front = fixtures::grounded_box(10.0, 0.0, 2.0, 4.0, 1.6, 0.3, 0);
  CHECK(visibility(scene, front) == std::vector<std::string>{"cam_0"});

  // Fully behind the image plane: invisible.
  const Box3D behind = fixtures::grounded_box(-10.0, 0.0, 2.0, 4.0, 1.6, 0.0, 0);
  CHECK(visibility(scene, behind).empty());

  // In front but far off to the side: the hull clamps to a zero-area sliver.
  const Box3D sliver = fixtures::grounded_box(0.5, 50.0, 0.3, 0.3, 0.5, 0.0, 0);
  CHECK(visibility(scene, sliver).empty());

  // Cross-check a generated rig against the definition.
  const SynthScene s =
      gen_scene(small_spec(), default_vocabulary(), default_anchors(), 59, "s");
  for (const Box3D& b : all_gt(s.scene)) {
    const auto listed = visibility(s.scene, b);
    for (const CameraModel& cam : s.scene.cameras) {
      const auto proj = project_box(cam, b);
      const bool seen = proj.has_value() && area(*proj) > 0.0;
      const bool in_list =
          std::find(listed.begin(), listed.end(), cam.camera_id) != listed.end();
      CHECK(seen == in_list);
    }
  }
}
