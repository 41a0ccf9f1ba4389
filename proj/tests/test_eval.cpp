#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <json.hpp>

#include "frustum_forge/errors.hpp"
#include "frustum_forge/eval.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace frustum_forge;
namespace fs = std::filesystem;

namespace {

Box3D pred_at(double x, double y, double score, int class_id = 0) {
  Box3D b = fixtures::grounded_box(x, y, 1.0, 1.0, 1.0, 0.0, class_id, score);
  return b;
}

// Maximum matching size by brute force over GT assignment permutations.
int max_matching(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                 double dist) {
  const int np = static_cast<int>(preds.size());
  const int ng = static_cast<int>(gts.size());
  auto feasible = [&](int p, int g) {
    if (preds[p].class_id != gts[g].class_id) return false;
    return std::hypot(preds[p].center.x() - gts[g].center.x(),
                      preds[p].center.y() - gts[g].center.y()) <= dist;
  };
  int best = 0;
  // Each pred picks a distinct GT or none; search over assignments.
  std::vector<int> pick(np, -1);
  std::vector<char> used(ng, 0);
  std::function<void(int, int)> rec = [&](int p, int matched) {
    if (p == np) {
      best = std::max(best, matched);
      return;
    }
    rec(p + 1, matched);
    for (int g = 0; g < ng; ++g) {
      if (!used[g] && feasible(p, g)) {
        used[g] = 1;
        rec(p + 1, matched + 1);
        used[g] = 0;
      }
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_CASE("greedy matching walks predictions by descending score") {
  const std::vector<Box3D> gts = {pred_at(0, 0, 1.0), pred_at(10, 0, 1.0)};
  const std::vector<Box3D> preds = {pred_at(0.5, 0, 0.9), pred_at(9.8, 0, 0.8),
                                    pred_at(0.4, 0, 0.7)};
  const MatchResult m = match_boxes(preds, gts, 2.0);
  CHECK(m.pred_to_gt == std::vector<int>{0, 1, -1});
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.fn == 0);
}

TEST_CASE("duplicate hits on one box become false positives") {
  const std::vector<Box3D> gts = {pred_at(0, 0, 1.0)};
  const std::vector<Box3D> preds = {pred_at(0, 0, 0.9), pred_at(0.1, 0, 0.8)};
  const MatchResult m = match_boxes(preds, gts, 2.0);
  CHECK(m.pred_to_gt == std::vector<int>{0, -1});
  CHECK(m.tp == 1);
  CHECK(m.fp == 1);
  CHECK(m.fn == 0);
}

TEST_CASE("matching distance is inclusive and ties take the lower GT index") {
  SUBCASE("a hit at exactly the threshold counts") {
    const std::vector<Box3D> gts = {pred_at(2, 0, 1.0)};
    const std::vector<Box3D> preds = {pred_at(0, 0, 0.9)};
    const MatchResult m = match_boxes(preds, gts, 2.0);
    CHECK(m.tp == 1);
  }
  SUBCASE("just past the threshold misses") {
    const std::vector<Box3D> gts = {pred_at(2.0000001, 0, 1.0)};
    const std::vector<Box3D> preds = {pred_at(0, 0, 0.9)};
    CHECK(match_boxes(preds, gts, 2.0).tp == 0);
  }
  SUBCASE("equidistant ground truths resolve to the lower index") {
    const std::vector<Box3D> gts = {pred_at(-1, 0, 1.0), pred_at(1, 0, 1.0)};
    const std::vector<Box3D> preds = {pred_at(0, 0, 0.9)};
    const MatchResult m = match_boxes(preds, gts, 2.0);
    CHECK(m.pred_to_gt == std::vector<int>{0});
  }
  SUBCASE("equal scores keep prediction input order") {
    const std::vector<Box3D> gts = {pred_at(0, 0, 1.0)};
    const std::vector<Box3D> preds = {pred_at(0.5, 0, 0.5), pred_at(0.2, 0, 0.5)};
    const MatchResult m = match_boxes(preds, gts, 2.0);
    CHECK(m.pred_to_gt == std::vector<int>{0, -1});
  }
  SUBCASE("classes never cross-match") {
    const std::vector<Box3D> gts = {pred_at(0, 0, 1.0, 1)};
    const std::vector<Box3D> preds = {pred_at(0, 0, 0.9, 2)};
    const MatchResult m = match_boxes(preds, gts, 2.0);
    CHECK(m.tp == 0);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
  }
}

TEST_CASE("greedy matches are valid and never beat the optimum") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> pos(-6.0, 6.0);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Box3D> preds, gts;
    const int np = 1 + static_cast<int>(rng() % 5);
    const int ng = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < np; ++i)
      preds.push_back(pred_at(pos(rng), pos(rng), sc(rng), static_cast<int>(rng() % 2)));
    for (int i = 0; i < ng; ++i)
      gts.push_back(pred_at(pos(rng), pos(rng), 1.0, static_cast<int>(rng() % 2)));

    const double dist = 3.0;
    const MatchResult m = match_boxes(preds, gts, dist);

    // Valid: injective, class-consistent, within distance.
    std::vector<char> used(gts.size(), 0);
    int tp = 0;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      const int g = m.pred_to_gt[p];
      if (g < 0) continue;
      CHECK(!used[g]);
      used[g] = 1;
      CHECK(preds[p].class_id == gts[g].class_id);
      CHECK(std::hypot(preds[p].center.x() - gts[g].center.x(),
                       preds[p].center.y() - gts[g].center.y()) <= dist);
      ++tp;
    }
    CHECK(tp == m.tp);
    CHECK(m.tp + m.fp == np);
    CHECK(m.tp + m.fn == ng);
    CHECK(m.tp <= max_matching(preds, gts, dist));
  }
}

TEST_CASE("average precision reproduces a hand-computed envelope") {
  // 3 GT; hits at scores 0.9, 0.8, 0.5 with two false alarms between.
  const std::vector<Box3D> gts = {pred_at(0, 0, 1.0), pred_at(10, 0, 1.0),
                                  pred_at(20, 0, 1.0)};
  const std::vector<Box3D> preds = {pred_at(0, 0, 0.9), pred_at(10, 0, 0.8),
                                    pred_at(100, 0, 0.7), pred_at(110, 0, 0.6),
                                    pred_at(20, 0, 0.5)};
  EvalConfig cfg;
  cfg.dist_thresholds = {2.0};
  // Envelope: 1 over recall (0.1, 2/3], then 0.6 up to recall 1.
  // Area = 1 * (2/3 - 0.1) + 0.6 * 1/3 = 23/30, normalized by 0.9.
  CHECK(average_precision(preds, gts, cfg) ==
        doctest::Approx(23.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("perfect predictions score AP 1 and empty sets score 0") {
  const std::vector<Box3D> gts = {pred_at(0, 0, 1.0), pred_at(10, 0, 1.0),
                                  pred_at(20, 5, 1.0)};
  EvalConfig cfg;
  CHECK(average_precision(gts, gts, cfg) == doctest::Approx(1.0));
  CHECK(average_precision({}, gts, cfg) == 0.0);
  CHECK(average_precision(gts, {}, cfg) == 0.0);  // no ground truth anywhere
  CHECK(average_precision({}, {}, cfg) == 0.0);
}

TEST_CASE("appending a lowest-score hit never lowers AP") {
  std::mt19937_64 rng(72);
  std::uniform_real_distribution<double> pos(-8.0, 8.0);
  std::uniform_real_distribution<double> sc(0.1, 1.0);
  EvalConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Box3D> preds, gts;
    const int np = static_cast<int>(rng() % 6);
    const int ng = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < np; ++i) preds.push_back(pred_at(pos(rng), pos(rng), sc(rng)));
    for (int i = 0; i < ng; ++i) gts.push_back(pred_at(pos(rng), pos(rng), 1.0));
    // A guaranteed-free ground truth far from everything.
    gts.push_back(pred_at(100.0, 100.0, 1.0));

    const double ap0 = average_precision(preds, gts, cfg);
    double min_score = 1.0;
    for (const Box3D& p : preds) min_score = std::min(min_score, p.score);
    std::vector<Box3D> more = preds;
    more.push_back(pred_at(100.0, 100.0, min_score * 0.5));
    const double ap1 = average_precision(more, gts, cfg);
    CHECK(ap1 >= ap0 - 1e-12);
  }
}

TEST_CASE("AP averages over the distance thresholds") {
  // One GT, one pred 1.5 m away: a hit at thresholds 2 and 4, a miss at
  // 0.5 and 1. Each hit threshold contributes 1, so the mean is 0.5.
  const std::vector<Box3D> gts = {pred_at(0, 0, 1.0)};
  const std::vector<Box3D> preds = {pred_at(1.5, 0, 0.9)};
  EvalConfig cfg;  // thresholds {0.5, 1, 2, 4}
  CHECK(average_precision(preds, gts, cfg) == doctest::Approx(0.5));
}

TEST_CASE("matching never crosses scene boundaries") {
  // The prediction lives in scene 0; the only GT lives in scene 1 at the
  // same coordinates. Pooled per scene, the prediction must stay a false
  // positive.
  ClassFrames frames;
  frames.preds = {{pred_at(0, 0, 0.9)}, {}};
  frames.gts = {{}, {pred_at(0, 0, 1.0)}};
  EvalConfig cfg;
  CHECK(average_precision(frames, cfg) == 0.0);
}

TEST_CASE("evaluate aggregates per-class APs into plain means") {
  Vocabulary vocab;
  vocab.base_classes = {{0, "car"}};
  vocab.novel_classes = {{1, "pedestrian"}, {4, "motorcycle"}};

  EvalInput input;
  // Scene 0: class 0 perfect (AP 1); class 1 missed entirely (AP 0);
  // class 4 perfect.
  input.gts.push_back({pred_at(5, 0, 1.0, 0), pred_at(-5, 0, 1.0, 1),
                       pred_at(0, 5, 1.0, 4)});
  input.preds.push_back({pred_at(5, 0, 0.9, 0), pred_at(0, 5, 0.8, 4)});

  EvalConfig cfg;
  const EvalReport r = evaluate(input, vocab, cfg);
  REQUIRE(r.per_class.size() == 3);
  CHECK(r.per_class[0].class_id == 0);
  CHECK(r.per_class[0].is_base);
  CHECK(r.per_class[0].ap == doctest::Approx(1.0));
  CHECK(r.per_class[1].class_id == 1);
  CHECK_FALSE(r.per_class[1].is_base);
  CHECK(r.per_class[1].ap == 0.0);
  CHECK(r.per_class[2].ap == doctest::Approx(1.0));

  CHECK(r.ap_base == doctest::Approx(1.0));
  CHECK(r.ap_novel == doctest::Approx(0.5));
  CHECK(r.map == doctest::Approx((1.0 + 0.0 + 1.0) / 3.0).epsilon(1e-12));
  CHECK(r.ar_novel == doctest::Approx(0.5));  // recall 0 and 1, averaged

  CHECK(r.per_class[1].fn == 1);
  CHECK(r.per_class[1].n_gt == 1);
  CHECK(r.per_class[1].n_pred == 0);
  CHECK(r.per_class[0].tp == 1);

  SUBCASE("stray-class predictions are ignored") {
    EvalInput noisy = input;
    noisy.preds[0].push_back(pred_at(1, 1, 0.9, 9));
    const EvalReport r2 = evaluate(noisy, vocab, cfg);
    CHECK(r2.map == r.map);
  }
  SUBCASE("empty class sets are rejected") {
    Vocabulary no_novel;
    no_novel.base_classes = {{0, "car"}};
    CHECK_THROWS_AS(evaluate(input, no_novel, cfg), EmptyClassSet);
    Vocabulary no_base;
    no_base.novel_classes = {{1, "pedestrian"}};
    CHECK_THROWS_AS(evaluate(input, no_base, cfg), EmptyClassSet);
  }
  SUBCASE("scene count mismatch is rejected") {
    EvalInput bad = input;
    bad.preds.push_back({});
    CHECK_THROWS_AS(evaluate(bad, vocab, cfg), FormatError);
  }
}

TEST_CASE("eval report serializes the aggregate numbers") {
  Vocabulary vocab;
  vocab.base_classes = {{0, "car"}};
  vocab.novel_classes = {{1, "pedestrian"}};
  EvalInput input;
  input.gts.push_back({pred_at(5, 0, 1.0, 0), pred_at(-5, 0, 1.0, 1)});
  input.preds.push_back({pred_at(5, 0, 0.9, 0), pred_at(-5, 0, 0.8, 1)});
  EvalConfig cfg;
  const EvalReport r = evaluate(input, vocab, cfg);

  const fs::path path =
      fs::temp_directory_path() /
      ("frustum_forge_eval_" + std::to_string(std::random_device{}()) + ".json");
  save_eval_report(path, r);
  std::ifstream f(path);
  REQUIRE(f.good());
  const nlohmann::json j = nlohmann::json::parse(f);
  fs::remove(path);

  CHECK(j.at("map").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("ap_base").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("ap_novel").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("ar_novel").get<double>() == doctest::Approx(1.0));
  REQUIRE(j.at("per_class").size() == 2);
  CHECK(j["per_class"][0].at("name").get<std::string>() == "car");
  CHECK(j["per_class"][0].at("tp").get<int>() == 1);
  CHECK(j["per_class"][1].at("pr_curve").size() == 1);
}
