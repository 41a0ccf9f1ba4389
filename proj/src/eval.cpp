#include "frustum_forge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

namespace {

double bev_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.center.x() - b.center.x(), a.center.y() - b.center.y());
}

}  // namespace

MatchResult match_boxes(const std::vector<Box3D>& preds,
                        const std::vector<Box3D>& gts, double dist) {
  MatchResult r;
  r.pred_to_gt.assign(preds.size(), -1);
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a].score > preds[b].score;
  });
  std::vector<char> taken(gts.size(), 0);
  for (int pi : order) {
    const Box3D& p = preds[pi];
    int best = -1;
    double best_d = dist;
    for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
      if (taken[gi] || gts[gi].class_id != p.class_id) continue;
      double d = bev_distance(p, gts[gi]);
      if (d < best_d || (best < 0 && d <= best_d)) {
        best = gi;
        best_d = d;
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      r.pred_to_gt[pi] = best;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int>(gts.size()) - r.tp;
  return r;
}

namespace {

struct PooledDet {
  double score;
  bool tp;
};

// Match every frame at one threshold and pool the per-prediction outcomes.
// Pool order is (frame, prediction index), which keeps equal-score
// tie-breaking deterministic.
std::vector<PooledDet> pool_frames(const ClassFrames& frames, double dist,
                                   int* n_gt_total) {
  std::vector<PooledDet> pool;
  int n_gt = 0;
  for (size_t f = 0; f < frames.preds.size(); ++f) {
    const auto& preds = frames.preds[f];
    const auto& gts = frames.gts[f];
    n_gt += static_cast<int>(gts.size());
    MatchResult m = match_boxes(preds, gts, dist);
    for (size_t i = 0; i < preds.size(); ++i)
      pool.push_back({preds[i].score, m.pred_to_gt[i] >= 0});
  }
  *n_gt_total = n_gt;
  return pool;
}

std::vector<PrPoint> pr_curve_from_pool(std::vector<PooledDet> pool,
                                        int n_gt) {
  std::stable_sort(pool.begin(), pool.end(),
                   [](const PooledDet& a, const PooledDet& b) {
                     return a.score > b.score;
                   });
  std::vector<PrPoint> curve;
  curve.reserve(pool.size());
  int tp = 0, fp = 0;
  for (const PooledDet& d : pool) {
    d.tp ? ++tp : ++fp;
    PrPoint pt;
    pt.recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
    pt.precision = static_cast<double>(tp) / (tp + fp);
    pt.score = d.score;
    curve.push_back(pt);
  }
  return curve;
}

// Exact area under the precision envelope over [min_recall, 1], with
// segments whose envelope falls below min_precision contributing zero,
// normalized by (1 - min_recall). The envelope at recall r is the best
// precision achieved at recall >= r; past the final curve point it is zero.
double envelope_area(const std::vector<PrPoint>& curve,
                     const EvalConfig& cfg) {
  if (curve.empty()) return 0.0;
  std::vector<double> env(curve.size());
  double running = 0.0;
  for (int i = static_cast<int>(curve.size()) - 1; i >= 0; --i) {
    running = std::max(running, curve[i].precision);
    env[i] = running;
  }
  double area = 0.0;
  double prev_r = 0.0;
  for (size_t i = 0; i < curve.size(); ++i) {
    double r = curve[i].recall;
    if (r <= prev_r) continue;  // same recall level, envelope already counted
    double lo = std::max(prev_r, cfg.min_recall);
    double hi = std::min(r, 1.0);
    if (hi > lo && env[i] >= cfg.min_precision) area += env[i] * (hi - lo);
    prev_r = r;
  }
  double denom = 1.0 - cfg.min_recall;
  if (denom <= 0.0) return 0.0;
  return std::clamp(area / denom, 0.0, 1.0);
}

}  // namespace

double average_precision(const ClassFrames& frames, const EvalConfig& cfg) {
  if (frames.preds.size() != frames.gts.size())
    throw FormatError("average_precision: frame count mismatch");
  if (cfg.dist_thresholds.empty())
    throw FormatError("average_precision: no distance thresholds");
  double sum = 0.0;
  for (double dist : cfg.dist_thresholds) {
    int n_gt = 0;
    auto pool = pool_frames(frames, dist, &n_gt);
    if (n_gt == 0) continue;  // contributes 0
    auto curve = pr_curve_from_pool(std::move(pool), n_gt);
    sum += envelope_area(curve, cfg);
  }
  return sum / static_cast<double>(cfg.dist_thresholds.size());
}

double average_precision(const std::vector<Box3D>& preds,
                         const std::vector<Box3D>& gts,
                         const EvalConfig& cfg) {
  ClassFrames frames;
  frames.preds.push_back(preds);
  frames.gts.push_back(gts);
  return average_precision(frames, cfg);
}

EvalReport evaluate(const EvalInput& input, const Vocabulary& vocab,
                    const EvalConfig& cfg) {
  if (input.preds.size() != input.gts.size())
    throw FormatError("evaluate: prediction/GT scene count mismatch");
  if (vocab.base_classes.empty())
    throw EmptyClassSet("evaluate: vocabulary has no base classes");
  if (vocab.novel_classes.empty())
    throw EmptyClassSet("evaluate: vocabulary has no novel classes");
  if (cfg.dist_thresholds.empty())
    throw FormatError("evaluate: no distance thresholds");

  double largest = cfg.dist_thresholds.back();
  EvalReport report;
  double sum_all = 0.0, sum_base = 0.0, sum_novel = 0.0, sum_recall_novel = 0.0;

  auto score_class = [&](const ClassInfo& info, bool is_base) {
    ClassFrames frames;
    frames.preds.resize(input.preds.size());
    frames.gts.resize(input.gts.size());
    for (size_t s = 0; s < input.preds.size(); ++s) {
      for (const Box3D& b : input.preds[s])
        if (b.class_id == info.id) frames.preds[s].push_back(b);
      for (const Box3D& b : input.gts[s])
        if (b.class_id == info.id) frames.gts[s].push_back(b);
    }
    ClassReport cr;
    cr.class_id = info.id;
    cr.name = info.name;
    cr.is_base = is_base;
    cr.ap = average_precision(frames, cfg);
    int n_gt = 0;
    auto pool = pool_frames(frames, largest, &n_gt);
    cr.n_gt = n_gt;
    cr.n_pred = static_cast<int>(pool.size());
    for (size_t s = 0; s < frames.preds.size(); ++s) {
      MatchResult m = match_boxes(frames.preds[s], frames.gts[s], largest);
      cr.tp += m.tp;
      cr.fp += m.fp;
      cr.fn += m.fn;
    }
    // Recall at the largest threshold; 0 by convention when the class has
    // no ground truth anywhere.
    cr.recall_largest =
        n_gt > 0 ? static_cast<double>(cr.tp) / n_gt : 0.0;
    cr.pr_curve = pr_curve_from_pool(std::move(pool), n_gt);
    return cr;
  };

  for (const ClassInfo& info : vocab.base_classes) {
    ClassReport cr = score_class(info, true);
    sum_all += cr.ap;
    sum_base += cr.ap;
    report.per_class.push_back(std::move(cr));
  }
  for (const ClassInfo& info : vocab.novel_classes) {
    ClassReport cr = score_class(info, false);
    sum_all += cr.ap;
    sum_novel += cr.ap;
    sum_recall_novel += cr.recall_largest;
    report.per_class.push_back(std::move(cr));
  }

  double n_base = static_cast<double>(vocab.base_classes.size());
  double n_novel = static_cast<double>(vocab.novel_classes.size());
  report.ap_base = sum_base / n_base;
  report.ap_novel = sum_novel / n_novel;
  report.map = sum_all / (n_base + n_novel);
  report.ar_novel = sum_recall_novel / n_novel;
  return report;
}

void save_eval_report(const std::filesystem::path& path, const EvalReport& r) {
  nlohmann::json j;
  j["map"] = r.map;
  j["ap_base"] = r.ap_base;
  j["ap_novel"] = r.ap_novel;
  j["ar_novel"] = r.ar_novel;
  nlohmann::json per = nlohmann::json::array();
  for (const ClassReport& c : r.per_class) {
    nlohmann::json jc;
    jc["class_id"] = c.class_id;
    jc["name"] = c.name;
    jc["is_base"] = c.is_base;
    jc["ap"] = c.ap;
    jc["recall"] = c.recall_largest;
    jc["tp"] = c.tp;
    jc["fp"] = c.fp;
    jc["fn"] = c.fn;
    jc["n_gt"] = c.n_gt;
    jc["n_pred"] = c.n_pred;
    nlohmann::json curve = nlohmann::json::array();
    for (const PrPoint& p : c.pr_curve)
      curve.push_back({{"recall", p.recall},
                       {"precision", p.precision},
                       {"score", p.score}});
    jc["pr_curve"] = std::move(curve);
    per.push_back(std::move(jc));
  }
  j["per_class"] = std::move(per);
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace frustum_forge
