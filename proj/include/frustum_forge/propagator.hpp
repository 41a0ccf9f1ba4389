#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "frustum_forge/config.hpp"
#include "frustum_forge/io.hpp"

namespace frustum_forge {

// A discovered object: its box, the points it contained (in the box frame),
// and the confidence it was discovered with.
struct BankEntry {
  Box3D box;
  std::vector<Vec3> local_points;
  double confidence{0.0};
};

// Per-class queues of the most confident discoveries. Each queue stays
// sorted by descending confidence; equal confidences keep arrival order, and
// insertions beyond capacity evict from the tail. A full insert history
// therefore leaves exactly the top-k by confidence, stable by arrival.
class MemoryBank {
 public:
  explicit MemoryBank(int capacity = 60);

  int capacity() const { return capacity_; }
  const std::map<int, std::vector<BankEntry>>& queues() const { return queues_; }

  // Returns 1 when the insert displaced an entry, else 0.
  int insert(BankEntry entry);

  int size() const;
  double mean_confidence() const;  // 0 when empty

 private:
  int capacity_;
  std::map<int, std::vector<BankEntry>> queues_;
};

// Drops candidates whose best BEV IoU against any base box exceeds
// beta_overlap. An overlap of exactly beta_overlap survives.
std::vector<Box3D> filter_overlap_with_base(const std::vector<Box3D>& novel,
                                            const std::vector<Box3D>& base,
                                            double beta_overlap);

// Drops boxes holding fewer than cfg.min_points points or whose BEV center
// lies closer than cfg.min_ego_distance to the origin.
std::vector<Box3D> filter_quality(const std::vector<Box3D>& boxes,
                                  const PointCloud& cloud,
                                  const FilterConfig& cfg);

// Collects the proposal's points into the box frame; confidence is the
// proposal score.
BankEntry harvest(const PointCloud& cloud, const Box3D& proposal);

struct BankUpdateStats {
  int inserted{0};
  int rejected{0};  // failed the quality gate
  int evicted{0};
};

// Quality-gates the entries (point count, ego distance), then inserts them
// in order.
BankUpdateStats bank_update(MemoryBank& bank,
                            const std::vector<BankEntry>& entries,
                            const FilterConfig& cfg);

// With probability p_drop, removes N_drop ~ U{0..floor(N/2)} points, chosen
// uniformly without replacement; otherwise returns the input unchanged.
// Survivors keep their input order.
std::vector<Vec3> density_simulate(const std::vector<Vec3>& points,
                                   double p_drop, std::mt19937_64& rng);

struct AugmentResult {
  Scene scene;                 // input scene plus transplanted points; pasted
                               // boxes are appended to novel_gt
  std::vector<Box3D> pasted;
  int exhausted{0};            // pastes abandoned after max_place_attempts
};

// Pastes cfg.n_paste bank entries into the scene at Gaussian-perturbed poses
// (x, y, yaw; the bottom height is preserved), rejecting any placement that
// overlaps an existing or previously pasted box. Deterministic per seed.
AugmentResult geometry_simulate(const Scene& scene, const MemoryBank& bank,
                                const SimulatorConfig& cfg, std::uint64_t seed);

// Proposal merge used before each training round: seeker proposals and
// pseudo-labels are concatenated, cleaned against base boxes, deduplicated
// with NMS at cfg.nms_iou, then quality-filtered.
std::vector<Box3D> combine_sources(const std::vector<Box3D>& seeker_proposals,
                                   const std::vector<Box3D>& pseudo_labels,
                                   const std::vector<Box3D>& base_boxes,
                                   const PointCloud& cloud,
                                   const FilterConfig& cfg);

MemoryBank load_bank(const std::filesystem::path& path);
void save_bank(const std::filesystem::path& path, const MemoryBank& bank);

}  // namespace frustum_forge
