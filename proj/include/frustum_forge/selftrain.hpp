#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "frustum_forge/io.hpp"
#include "frustum_forge/propagator.hpp"

namespace frustum_forge {

struct TrainStep {
  double loss_base{0.0};
  double loss_novel{0.0};
};

struct FitReport {
  std::vector<TrainStep> steps;
};

// A scene prepared for one training round: augmented cloud plus the label
// sets the detector may see. Evaluation ground truth never appears here.
struct TrainingScene {
  Scene scene;
  std::vector<Box3D> base_labels;
  std::vector<Box3D> novel_labels;
};

// Minimal surface a 3D detector must offer the round driver.
class DetectorPort {
 public:
  virtual ~DetectorPort() = default;
  virtual FitReport fit(const std::vector<TrainingScene>& scenes) = 0;
  virtual std::vector<Box3D> predict(const Scene& scene) const = 0;
};

// Combined loss L = (L_B + alpha * (ema_B / ema_N) * L_N) / (1 + alpha),
// evaluated with the given EMA state. Pure; no state update.
double normalized_loss(double loss_base, double loss_novel, double ema_base,
                       double ema_novel, double alpha);

// Streaming version: the first observation seeds both EMAs, each update
// computes the loss with the pre-update state and then folds the observation
// in with the configured momentum. Throws DegenerateEma when the novel EMA
// falls below 1e-12.
class EmaLossNormalizer {
 public:
  explicit EmaLossNormalizer(double alpha = 0.5, double momentum = 0.99);

  double update(double loss_base, double loss_novel);

  bool warmed() const { return warmed_; }
  double ema_base() const { return ema_base_; }
  double ema_novel() const { return ema_novel_; }

 private:
  double alpha_;
  double momentum_;
  bool warmed_{false};
  double ema_base_{0.0};
  double ema_novel_{0.0};
};

// Stand-in detector for desk-scale runs: predict returns the scene's ground
// truth under Gaussian pose noise with score 1 - |noise| / 2, each box
// independently dropped with miss_rate. fit trains nothing; it emits a
// synthetic, decaying loss stream. Deterministic given (seed, scene_id,
// fit generation).
class NoisyOracleDetector : public DetectorPort {
 public:
  NoisyOracleDetector(double noise_sigma, double miss_rate, std::uint64_t seed);

  FitReport fit(const std::vector<TrainingScene>& scenes) override;
  std::vector<Box3D> predict(const Scene& scene) const override;

 private:
  double sigma_;
  double miss_rate_;
  std::uint64_t seed_;
  int generation_{0};
};

struct RoundReport {
  int round{0};
  int n_train_scenes{0};
  int n_pasted{0};
  int n_paste_exhausted{0};
  int n_pseudo{0};
  int n_bank_evicted{0};
  double mean_normalized_loss{0.0};
  double pseudo_precision{-1.0};  // -1 when the dataset has no novel GT
  double pseudo_recall{-1.0};
  int bank_size{0};
  double bank_mean_confidence{0.0};
};

struct SelfTrainState {
  MemoryBank bank;
  EmaLossNormalizer normalizer;  // EMA state persists across rounds
  std::vector<std::vector<Box3D>> pseudo_labels;  // per scene, between rounds

  SelfTrainState(int bank_capacity, std::size_t n_scenes,
                 double loss_alpha = 0.5, double ema_momentum = 0.99)
      : bank(bank_capacity),
        normalizer(loss_alpha, ema_momentum),
        pseudo_labels(n_scenes) {}
};

// One self-training round:
//   1. per scene, merge seeker proposals with the previous round's
//      pseudo-labels (combine_sources) and paste bank objects
//      (geometry_simulate) to form the training set;
//   2. fit the detector, streaming (L_B, L_N) pairs through the normalizer;
//   3. predict on the original scenes;
//   4. keep novel-class predictions scoring >= pseudo_score_threshold;
//   5. clean them against base boxes and the quality gate;
//   6. harvest the survivors into the bank.
// Pseudo precision / recall are reported against novel_gt (match at 2 m BEV
// center distance) when any scene carries novel GT.
RoundReport run_round(const std::vector<Scene>& scenes,
                      const std::vector<std::vector<Box3D>>& seeker_proposals,
                      const Vocabulary& vocab, DetectorPort& detector,
                      SelfTrainState& state, const PipelineConfig& cfg,
                      std::uint64_t seed, int round_index);

// Runs cfg.round.n_rounds rounds and returns the per-round reports.
std::vector<RoundReport> run_selftrain(
    const std::vector<Scene>& scenes,
    const std::vector<std::vector<Box3D>>& seeker_proposals,
    const Vocabulary& vocab, DetectorPort& detector, SelfTrainState& state,
    const PipelineConfig& cfg, std::uint64_t seed);

}  // namespace frustum_forge
