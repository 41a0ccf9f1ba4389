#include "frustum_forge/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "frustum_forge/errors.hpp"
#include "frustum_forge/eval.hpp"
#include "frustum_forge/util.hpp"

namespace frustum_forge {

double normalized_loss(double loss_base, double loss_novel, double ema_base,
                       double ema_novel, double alpha) {
  if (alpha == 0.0) return loss_base;  // ratio unused, avoid 0 * inf
  double ratio = ema_base / ema_novel;
  return (loss_base + alpha * ratio * loss_novel) / (1.0 + alpha);
}

EmaLossNormalizer::EmaLossNormalizer(double alpha, double momentum)
    : alpha_(alpha), momentum_(momentum) {
  if (alpha < 0.0) throw FormatError("loss alpha must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw FormatError("ema momentum must be in [0, 1)");
}

double EmaLossNormalizer::update(double loss_base, double loss_novel) {
  if (!warmed_) {
    ema_base_ = loss_base;
    ema_novel_ = loss_novel;
    warmed_ = true;
  }
  if (ema_novel_ < 1e-12)
    throw DegenerateEma("novel loss EMA collapsed below 1e-12");
  double loss =
      normalized_loss(loss_base, loss_novel, ema_base_, ema_novel_, alpha_);
  ema_base_ = momentum_ * ema_base_ + (1.0 - momentum_) * loss_base;
  ema_novel_ = momentum_ * ema_novel_ + (1.0 - momentum_) * loss_novel;
  return loss;
}

NoisyOracleDetector::NoisyOracleDetector(double noise_sigma, double miss_rate,
                                         std::uint64_t seed)
    : sigma_(noise_sigma), miss_rate_(miss_rate), seed_(seed) {
  if (noise_sigma < 0.0) throw FormatError("noise sigma must be >= 0");
  if (miss_rate < 0.0 || miss_rate > 1.0)
    throw FormatError("miss rate must be in [0, 1]");
}

FitReport NoisyOracleDetector::fit(const std::vector<TrainingScene>& scenes) {
  ++generation_;
  FitReport report;
  int n_steps = std::max<int>(1, static_cast<int>(scenes.size()));
  // Synthetic curve: both losses decay with the step count accumulated over
  // generations, the novel loss from a higher start, both with a floor.
  for (int t = 0; t < n_steps; ++t) {
    double progress = (generation_ - 1) + static_cast<double>(t) / n_steps;
    TrainStep step;
    step.loss_base = 0.25 + 1.8 * std::exp(-0.5 * progress);
    step.loss_novel = 0.35 + 2.6 * std::exp(-0.4 * progress);
    report.steps.push_back(step);
  }
  return report;
}

std::vector<Box3D> NoisyOracleDetector::predict(const Scene& scene) const {
  std::uint64_t stream =
      mix_seed(mix_seed(seed_, fnv1a64(scene.scene_id)),
               static_cast<std::uint64_t>(generation_));
  std::mt19937_64 rng(stream);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<Box3D> out;
  auto emit = [&](const Box3D& gt) {
    // Fixed draw order per box: miss coin, dx, dy, dyaw.
    double c = coin(rng);
    double dx = unit(rng) * sigma_;
    double dy = unit(rng) * sigma_;
    double dyaw = unit(rng) * sigma_ * 0.5;
    if (c < miss_rate_) return;
    Box3D b = gt;
    b.center.x() += dx;
    b.center.y() += dy;
    b.yaw = wrap_angle(b.yaw + dyaw);
    b.score = std::clamp(1.0 - std::hypot(dx, dy) / 2.0, 0.0, 1.0);
    out.push_back(b);
  };
  for (const Box3D& gt : scene.base_gt) emit(gt);
  for (const Box3D& gt : scene.novel_gt) emit(gt);
  return out;
}

RoundReport run_round(const std::vector<Scene>& scenes,
                      const std::vector<std::vector<Box3D>>& seeker_proposals,
                      const Vocabulary& vocab, DetectorPort& detector,
                      SelfTrainState& state, const PipelineConfig& cfg,
                      std::uint64_t seed, int round_index) {
  if (scenes.size() != seeker_proposals.size())
    throw FormatError("run_round: scene/proposal count mismatch");
  if (state.pseudo_labels.size() != scenes.size())
    throw FormatError("run_round: state sized for a different scene count");

  RoundReport report;
  report.round = round_index;
  report.n_train_scenes = static_cast<int>(scenes.size());

  // 1. Build the training set: merged labels plus bank pastes.
  std::vector<TrainingScene> train;
  train.reserve(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    std::vector<Box3D> merged =
        combine_sources(seeker_proposals[i], state.pseudo_labels[i],
                        scenes[i].base_gt, scenes[i].cloud, cfg.filter);
    Scene work = scenes[i];
    work.novel_gt = merged;  // only merged labels are visible downstream
    std::uint64_t scene_seed =
        mix_seed(mix_seed(seed, static_cast<std::uint64_t>(round_index)),
                 static_cast<std::uint64_t>(i));
    AugmentResult aug =
        geometry_simulate(work, state.bank, cfg.sim, scene_seed);
    report.n_pasted += static_cast<int>(aug.pasted.size());
    report.n_paste_exhausted += aug.exhausted;

    TrainingScene ts;
    ts.base_labels = scenes[i].base_gt;
    ts.novel_labels = aug.scene.novel_gt;  // merged + pasted
    ts.scene = std::move(aug.scene);
    train.push_back(std::move(ts));
  }

  // 2. Fit, streaming the loss pairs through the running normalizer.
  FitReport fit = detector.fit(train);
  double loss_sum = 0.0;
  int loss_n = 0;
  for (const TrainStep& step : fit.steps) {
    double loss;
    if (cfg.round.enable_loss_norm) {
      loss = state.normalizer.update(step.loss_base, step.loss_novel);
    } else {
      double a = cfg.round.loss_alpha;
      loss = (step.loss_base + a * step.loss_novel) / (1.0 + a);
    }
    loss_sum += loss;
    ++loss_n;
  }
  report.mean_normalized_loss = loss_n > 0 ? loss_sum / loss_n : 0.0;

  // 3-6. Predict, threshold, clean, and harvest the next pseudo-label set.
  int tp = 0, n_pred = 0, n_gt = 0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    std::vector<Box3D> preds = detector.predict(scene);
    std::vector<Box3D> pseudo;
    for (const Box3D& b : preds) {
      if (!vocab.is_novel(b.class_id)) continue;
      if (b.score >= cfg.round.pseudo_score_threshold) pseudo.push_back(b);
    }
    pseudo = filter_overlap_with_base(pseudo, scene.base_gt,
                                      cfg.filter.beta_overlap);
    pseudo = filter_quality(pseudo, scene.cloud, cfg.filter);
    report.n_pseudo += static_cast<int>(pseudo.size());

    std::vector<BankEntry> entries;
    entries.reserve(pseudo.size());
    for (const Box3D& b : pseudo) entries.push_back(harvest(scene.cloud, b));
    BankUpdateStats stats = bank_update(state.bank, entries, cfg.filter);
    report.n_bank_evicted += stats.evicted;

    MatchResult m = match_boxes(pseudo, scene.novel_gt, 2.0);
    tp += m.tp;
    n_pred += static_cast<int>(pseudo.size());
    n_gt += static_cast<int>(scene.novel_gt.size());

    state.pseudo_labels[i] = std::move(pseudo);
  }
  if (n_gt > 0) {
    report.pseudo_precision =
        n_pred > 0 ? static_cast<double>(tp) / n_pred : 0.0;
    report.pseudo_recall = static_cast<double>(tp) / n_gt;
  }
  report.bank_size = state.bank.size();
  report.bank_mean_confidence = state.bank.mean_confidence();
  return report;
}

std::vector<RoundReport> run_selftrain(
    const std::vector<Scene>& scenes,
    const std::vector<std::vector<Box3D>>& seeker_proposals,
    const Vocabulary& vocab, DetectorPort& detector, SelfTrainState& state,
    const PipelineConfig& cfg, std::uint64_t seed) {
  std::vector<RoundReport> reports;
  reports.reserve(cfg.round.n_rounds);
  for (int r = 0; r < cfg.round.n_rounds; ++r)
    reports.push_back(run_round(scenes, seeker_proposals, vocab, detector,
                                state, cfg, seed, r));
  return reports;
}

}  // namespace frustum_forge
