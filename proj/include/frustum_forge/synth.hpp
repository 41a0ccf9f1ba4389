#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frustum_forge/geometry.hpp"
#include "frustum_forge/io.hpp"

namespace frustum_forge {

// Knobs for the synthetic scene generator. Flat JSON on disk; unknown keys
// are rejected.
struct SynthSpec {
  int n_per_class_min{1};   // objects drawn per vocabulary class
  int n_per_class_max{2};
  double area_half{40.0};   // placement square [-a, a] x [-a, a], meters
  double min_range{6.0};    // keep objects away from the sensor origin
  double size_jitter{0.05}; // multiplicative, per dimension, around anchors
  int max_place_attempts{200};

  double point_density{4000.0};  // points per m^2 of visible face at 1 m
  double falloff_exponent{2.0};  // face count ~ area * cos / range^exponent
  int max_points_per_object{2000};
  int ground_points{8000};
  int clutter_points{1000};
  double clutter_height{3.0};

  int n_cameras{6};        // evenly spaced 360 degree rig at the origin
  double focal{800.0};
  int image_w{1600};
  int image_h{900};
  double cam_height{1.6};

  double jitter_px{0.0};   // detection corruption
  double miss_prob{0.0};
  double misclass_prob{0.0};
  double score_lo{0.8};    // detection scores drawn uniformly from this range
  double score_hi{0.95};

  std::uint64_t seed{0};
};

SynthSpec load_synth_spec(const std::filesystem::path& path);
void save_synth_spec(const std::filesystem::path& path, const SynthSpec& spec);
void validate_synth_spec(const SynthSpec& spec);

// Six-class starter vocabulary: car/truck/bus annotated (base),
// pedestrian/motorcycle/traffic_cone open-vocabulary (novel).
Vocabulary default_vocabulary();

// Typical (w, l, h) sizes for the default vocabulary, meters.
AnchorTable default_anchors();

struct SynthScene {
  Scene scene;
  std::vector<Detection2D> detections;
  std::vector<int> point_labels;  // class id per point, -1 for ground/clutter
};

// Builds one deterministic scene: non-overlapping ground-truth boxes resting
// on the z = 0 plane, LiDAR-style points sampled on the faces visible from
// the origin (count proportional to area * cos(incidence) / range^exponent,
// pushed 5 mm inside the box), uniform ground and clutter points outside all
// boxes, and one corrupted 2D detection per ground-truth object, taken in the
// camera where its projection is largest. Throws PlacementExhausted when the
// arena cannot fit the requested objects.
SynthScene gen_scene(const SynthSpec& spec, const Vocabulary& vocab,
                     const AnchorTable& anchors, std::uint64_t seed,
                     const std::string& scene_id);

// Camera ids whose image the box projects into with positive area.
std::vector<std::string> visibility(const Scene& scene, const Box3D& box);

}  // namespace frustum_forge
