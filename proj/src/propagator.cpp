#include "frustum_forge/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

using nlohmann::json;

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw FormatError("bank capacity must be >= 1");
}

int MemoryBank::insert(BankEntry entry) {
  auto& queue = queues_[entry.box.class_id];
  auto pos = std::upper_bound(
      queue.begin(), queue.end(), entry.confidence,
      [](double c, const BankEntry& e) { return c > e.confidence; });
  queue.insert(pos, std::move(entry));
  if (static_cast<int>(queue.size()) > capacity_) {
    queue.pop_back();
    return 1;
  }
  return 0;
}

int MemoryBank::size() const {
  int n = 0;
  for (const auto& [cls, queue] : queues_) n += static_cast<int>(queue.size());
  return n;
}

double MemoryBank::mean_confidence() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [cls, queue] : queues_) {
    for (const auto& e : queue) {
      sum += e.confidence;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<Box3D> filter_overlap_with_base(const std::vector<Box3D>& novel,
                                            const std::vector<Box3D>& base,
                                            double beta_overlap) {
  std::vector<Box3D> kept;
  kept.reserve(novel.size());
  for (const Box3D& n : novel) {
    double worst = 0.0;
    for (const Box3D& b : base) {
      worst = std::max(worst, iou_bev(n, b));
    }
    if (!(worst > beta_overlap)) kept.push_back(n);
  }
  return kept;
}

std::vector<Box3D> filter_quality(const std::vector<Box3D>& boxes,
                                  const PointCloud& cloud,
                                  const FilterConfig& cfg) {
  std::vector<Box3D> kept;
  kept.reserve(boxes.size());
  for (const Box3D& b : boxes) {
    if (count_in_box(cloud, b) < cfg.min_points) continue;
    if (std::hypot(b.center.x(), b.center.y()) < cfg.min_ego_distance) continue;
    kept.push_back(b);
  }
  return kept;
}

BankEntry harvest(const PointCloud& cloud, const Box3D& proposal) {
  BankEntry entry;
  entry.box = proposal;
  entry.confidence = proposal.score;
  for (const Vec3& p : cloud.points) {
    if (in_box(p, proposal)) entry.local_points.push_back(to_local(p, proposal));
  }
  return entry;
}

BankUpdateStats bank_update(MemoryBank& bank,
                            const std::vector<BankEntry>& entries,
                            const FilterConfig& cfg) {
  BankUpdateStats stats;
  for (const BankEntry& e : entries) {
    const bool enough_points =
        static_cast<int>(e.local_points.size()) >= cfg.min_points;
    const bool far_enough =
        std::hypot(e.box.center.x(), e.box.center.y()) >= cfg.min_ego_distance;
    if (!enough_points || !far_enough) {
      ++stats.rejected;
      continue;
    }
    stats.evicted += bank.insert(e);
    ++stats.inserted;
  }
  return stats;
}

std::vector<Vec3> density_simulate(const std::vector<Vec3>& points,
                                   double p_drop, std::mt19937_64& rng) {
  const int n = static_cast<int>(points.size());
  if (n == 0) return points;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= p_drop) return points;

  std::uniform_int_distribution<int> count_dist(0, n / 2);
  const int n_drop = count_dist(rng);

  // Partial Fisher-Yates: the first n_drop slots of `order` become a uniform
  // sample without replacement.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n_drop; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<char> dropped(n, 0);
  for (int i = 0; i < n_drop; ++i) dropped[order[i]] = 1;

  std::vector<Vec3> kept;
  kept.reserve(n - n_drop);
  for (int i = 0; i < n; ++i) {
    if (!dropped[i]) kept.push_back(points[i]);
  }
  return kept;
}

AugmentResult geometry_simulate(const Scene& scene, const MemoryBank& bank,
                                const SimulatorConfig& cfg, std::uint64_t seed) {
  AugmentResult result;
  result.scene = scene;

  std::vector<int> classes;
  for (const auto& [cls, queue] : bank.queues()) {
    if (!queue.empty()) classes.push_back(cls);
  }
  if (classes.empty() || cfg.n_paste == 0) return result;

  std::vector<const Box3D*> obstacles;
  for (const Box3D& b : result.scene.base_gt) obstacles.push_back(&b);
  for (const Box3D& b : result.scene.novel_gt) obstacles.push_back(&b);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> class_pick(0, static_cast<int>(classes.size()) - 1);
  // Unit normal scaled by sigma keeps the draw count identical for every
  // sigma value and stays well defined at sigma exactly zero.
  std::normal_distribution<double> unit(0.0, 1.0);

  const bool has_intensity = !result.scene.cloud.intensity.empty();

  for (int p = 0; p < cfg.n_paste; ++p) {
    const int cls = classes[class_pick(rng)];
    const auto& queue = bank.queues().at(cls);
    std::uniform_int_distribution<int> entry_pick(0, static_cast<int>(queue.size()) - 1);
    const BankEntry& entry = queue[entry_pick(rng)];

    bool placed = false;
    Box3D candidate = entry.box;
    for (int attempt = 0; attempt < cfg.max_place_attempts; ++attempt) {
      candidate = entry.box;
      candidate.center.x() += cfg.sigma_xyz * unit(rng);
      candidate.center.y() += cfg.sigma_xyz * unit(rng);
      // z untouched: with the extents unchanged the box bottom stays at the
      // entry's original height.
      candidate.yaw = wrap_angle(entry.box.yaw + cfg.sigma_yaw * unit(rng));
      candidate.score = entry.confidence;

      bool collides = false;
      for (const Box3D* o : obstacles) {
        if (iou_bev(candidate, *o) > 0.0) {
          collides = true;
          break;
        }
      }
      if (!collides) {
        for (const Box3D& o : result.pasted) {
          if (iou_bev(candidate, o) > 0.0) {
            collides = true;
            break;
          }
        }
      }
      if (!collides) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      ++result.exhausted;
      continue;
    }

    std::vector<Vec3> local = entry.local_points;
    if (cfg.density_sim) local = density_simulate(local, cfg.p_drop, rng);

    const double c = std::cos(candidate.yaw);
    const double s = std::sin(candidate.yaw);
    for (const Vec3& q : local) {
      result.scene.cloud.points.emplace_back(
          c * q.x() - s * q.y() + candidate.center.x(),
          s * q.x() + c * q.y() + candidate.center.y(),
          q.z() + candidate.center.z());
      if (has_intensity) result.scene.cloud.intensity.push_back(0.0f);
    }
    result.pasted.push_back(candidate);
  }

  result.scene.novel_gt.insert(result.scene.novel_gt.end(),
                               result.pasted.begin(), result.pasted.end());
  return result;
}

std::vector<Box3D> combine_sources(const std::vector<Box3D>& seeker_proposals,
                                   const std::vector<Box3D>& pseudo_labels,
                                   const std::vector<Box3D>& base_boxes,
                                   const PointCloud& cloud,
                                   const FilterConfig& cfg) {
  std::vector<Box3D> merged = seeker_proposals;
  merged.insert(merged.end(), pseudo_labels.begin(), pseudo_labels.end());
  merged = filter_overlap_with_base(merged, base_boxes, cfg.beta_overlap);
  merged = nms(merged, cfg.nms_iou);
  return filter_quality(merged, cloud, cfg);
}

MemoryBank load_bank(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::string ctx = path.string();
  if (!j.is_object() || !j.contains("capacity") || !j.contains("queues")) {
    throw FormatError(ctx + ": bank needs 'capacity' and 'queues'");
  }
  if (!j["capacity"].is_number_integer()) {
    throw FormatError(ctx + ": 'capacity' must be an integer");
  }
  MemoryBank bank(j["capacity"].get<int>());
  if (!j["queues"].is_object()) throw FormatError(ctx + ": 'queues' must be an object");
  for (const auto& [key, arr] : j["queues"].items()) {
    if (!arr.is_array()) throw FormatError(ctx + ": queue '" + key + "' must be an array");
    for (const auto& ej : arr) {
      BankEntry entry;
      if (!ej.contains("box") || !ej.contains("confidence") ||
          !ej.contains("local_points")) {
        throw FormatError(ctx + ": bank entry needs box, confidence, local_points");
      }
      const auto& bj = ej["box"];
      Box3D b;
      b.class_id = bj.at("class_id").get<int>();
      b.score = bj.at("score").get<double>();
      const auto& ctr = bj.at("center");
      const auto& size = bj.at("size");
      if (!ctr.is_array() || ctr.size() != 3 || !size.is_array() || size.size() != 3) {
        throw FormatError(ctx + ": bank box center/size must hold 3 numbers");
      }
      b.center = Vec3(ctr[0].get<double>(), ctr[1].get<double>(), ctr[2].get<double>());
      b.w = size[0].get<double>();
      b.l = size[1].get<double>();
      b.h = size[2].get<double>();
      b.yaw = bj.at("yaw").get<double>();
      validate_box(b);
      entry.box = b;
      entry.confidence = ej["confidence"].get<double>();
      for (const auto& pj : ej["local_points"]) {
        if (!pj.is_array() || pj.size() != 3) {
          throw FormatError(ctx + ": bank local_points must hold [x, y, z] triples");
        }
        entry.local_points.emplace_back(pj[0].get<double>(), pj[1].get<double>(),
                                        pj[2].get<double>());
      }
      bank.insert(std::move(entry));
    }
  }
  return bank;
}

void save_bank(const std::filesystem::path& path, const MemoryBank& bank) {
  json queues = json::object();
  for (const auto& [cls, queue] : bank.queues()) {
    json arr = json::array();
    for (const BankEntry& e : queue) {
      json ej;
      json bj;
      bj["class_id"] = e.box.class_id;
      bj["score"] = e.box.score;
      bj["center"] = {e.box.center.x(), e.box.center.y(), e.box.center.z()};
      bj["size"] = {e.box.w, e.box.l, e.box.h};
      bj["yaw"] = e.box.yaw;
      ej["box"] = std::move(bj);
      ej["confidence"] = e.confidence;
      json pts = json::array();
      for (const Vec3& p : e.local_points) pts.push_back({p.x(), p.y(), p.z()});
      ej["local_points"] = std::move(pts);
      arr.push_back(std::move(ej));
    }
    queues[std::to_string(cls)] = std::move(arr);
  }
  json j;
  j["capacity"] = bank.capacity();
  j["queues"] = std::move(queues);
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace frustum_forge
