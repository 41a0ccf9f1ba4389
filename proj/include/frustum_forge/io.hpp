#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "frustum_forge/geometry.hpp"

namespace frustum_forge {

// One 2D detection from an open-vocabulary image detector.
struct Detection2D {
  std::string camera_id;
  int class_id{-1};
  double score{0.0};  // detector confidence in [0, 1]
  Box2D box;
};

// A single lidar sweep with its camera rig and annotations. `novel_gt` is
// evaluation-only ground truth; training-time labels are managed separately.
struct Scene {
  std::string scene_id;
  PointCloud cloud;
  std::vector<CameraModel> cameras;
  std::vector<Box3D> base_gt;
  std::vector<Box3D> novel_gt;

  const CameraModel* find_camera(const std::string& id) const;
};

struct ClassInfo {
  int id{-1};
  std::string name;
};

// Base classes have 3D supervision; novel classes are discovered. The two
// id sets are disjoint.
struct Vocabulary {
  std::vector<ClassInfo> base_classes;
  std::vector<ClassInfo> novel_classes;

  bool is_base(int class_id) const;
  bool is_novel(int class_id) const;
  const ClassInfo* find(int class_id) const;
};

// class_id -> prototype size (w, l, h).
struct AnchorTable {
  std::map<int, Vec3> sizes;
};

// Writes to a temp file in the target directory, then renames into place,
// so readers never observe partial output. Missing parent directories are
// created.
void atomic_write_text(const std::filesystem::path& path,
                       const std::string& content);
void atomic_write_binary(const std::filesystem::path& path, const void* data,
                         std::size_t size);

// Scene manifest (scene.json) plus a sibling binary points file holding
// little-endian float32 (x, y, z, intensity) records, densely packed.
Scene load_scene(const std::filesystem::path& manifest_path);
void save_scene(const std::filesystem::path& manifest_path, const Scene& scene);

// Detections reference the scene's cameras; an unknown camera_id raises
// ReferenceError.
std::vector<Detection2D> load_detections(const std::filesystem::path& path,
                                         const Scene& scene);
void save_detections(const std::filesystem::path& path,
                     const std::vector<Detection2D>& dets);

// Flat list of box records (proposals.json and friends).
std::vector<Box3D> load_boxes(const std::filesystem::path& path);
void save_boxes(const std::filesystem::path& path,
                const std::vector<Box3D>& boxes);

// Per-point class labels (labels.json), a plain JSON array with one integer
// per cloud point; -1 marks unlabeled points.
std::vector<int> load_point_labels(const std::filesystem::path& path);
void save_point_labels(const std::filesystem::path& path,
                       const std::vector<int>& labels);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v);

AnchorTable load_anchors(const std::filesystem::path& path);
void save_anchors(const std::filesystem::path& path, const AnchorTable& t);

// Validation helpers shared by the loaders.
void validate_box(const Box3D& box);
void validate_camera(const CameraModel& cam);

}  // namespace frustum_forge
