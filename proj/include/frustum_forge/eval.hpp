#pragma once

#include <filesystem>
#include <vector>

#include "frustum_forge/config.hpp"
#include "frustum_forge/io.hpp"

namespace frustum_forge {

struct MatchResult {
  std::vector<int> pred_to_gt;   // -1 for unmatched (false positive)
  int tp{0};
  int fp{0};
  int fn{0};
};

// Greedy matching in descending score order: each prediction takes the
// nearest unmatched ground-truth box of its class within `dist` (BEV center
// distance). Duplicates become false positives, leftover GT false negatives.
// Equal scores keep input order; equal distances take the lower GT index.
MatchResult match_boxes(const std::vector<Box3D>& preds,
                        const std::vector<Box3D>& gts, double dist);

struct PrPoint {
  double recall{0.0};
  double precision{0.0};
  double score{0.0};
};

// Predictions and ground truth for one class, grouped per scene so matching
// never crosses scene boundaries.
struct ClassFrames {
  std::vector<std::vector<Box3D>> preds;
  std::vector<std::vector<Box3D>> gts;
};

// Area under the interpolated precision envelope, restricted to
// recall >= min_recall and precision >= min_precision, normalized by
// (1 - min_recall); 0 when there is no ground truth. The result is the mean
// over cfg.dist_thresholds.
double average_precision(const ClassFrames& frames, const EvalConfig& cfg);

// Single-collection convenience overload.
double average_precision(const std::vector<Box3D>& preds,
                         const std::vector<Box3D>& gts, const EvalConfig& cfg);

struct ClassReport {
  int class_id{-1};
  std::string name;
  bool is_base{false};
  double ap{0.0};
  double recall_largest{0.0};  // recall at the largest distance threshold
  int tp{0};                   // counts at the largest threshold
  int fp{0};
  int fn{0};
  int n_gt{0};
  int n_pred{0};
  std::vector<PrPoint> pr_curve;  // at the largest threshold, for plots
};

struct EvalReport {
  std::vector<ClassReport> per_class;
  double map{0.0};       // mean AP over base and novel classes
  double ap_base{0.0};
  double ap_novel{0.0};
  double ar_novel{0.0};  // mean recall at the largest threshold, novel only
};

// Per-scene predictions and ground truth, parallel vectors.
struct EvalInput {
  std::vector<std::vector<Box3D>> preds;
  std::vector<std::vector<Box3D>> gts;
};

// Scores every vocabulary class and aggregates. Throws EmptyClassSet when
// the vocabulary's base or novel set is empty.
EvalReport evaluate(const EvalInput& input, const Vocabulary& vocab,
                    const EvalConfig& cfg);

void save_eval_report(const std::filesystem::path& path, const EvalReport& r);

}  // namespace frustum_forge
