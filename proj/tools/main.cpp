// Command-line front end: each subcommand wires the library stages into a
// reproducible batch step. Exit codes: 0 success, 2 configuration error,
// 3 data error. Diagnostics go to stderr; every output file is written
// atomically by the io layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "frustum_forge/baselines.hpp"
#include "frustum_forge/config.hpp"
#include "frustum_forge/errors.hpp"
#include "frustum_forge/eval.hpp"
#include "frustum_forge/geometry.hpp"
#include "frustum_forge/io.hpp"
#include "frustum_forge/oracle.hpp"
#include "frustum_forge/propagator.hpp"
#include "frustum_forge/report.hpp"
#include "frustum_forge/seeker.hpp"
#include "frustum_forge/selftrain.hpp"
#include "frustum_forge/synth.hpp"
#include "frustum_forge/types.hpp"
#include "frustum_forge/util.hpp"

namespace ff = frustum_forge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

std::string scene_name(int index) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

// ---------------------------------------------------------------------------
// Shared option plumbing

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed{0};
  int threads{0};
  std::string report_path;
};

void add_common(CLI::App* sub, CommonOpts& o, bool with_seed = true) {
  sub->add_option("--config", o.config_path, "pipeline config JSON");
  if (with_seed) sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--threads", o.threads,
                  "worker threads (0 = FRUSTUM_FORGE_THREADS or hardware)");
  sub->add_option("--report", o.report_path, "run report JSON path");
}

ff::PipelineConfig resolve_config(const std::string& path) {
  if (path.empty()) return ff::PipelineConfig{};
  return ff::load_config(path);
}

// Runs `body` under the data-error contract after `configure` resolved the
// configuration. Maps the two phases to exit codes 2 and 3.
template <class Configure, class Body>
int run_phases(Configure&& configure, Body&& body) {
  try {
    configure();
  } catch (const ff::Error& e) {
    log_line(std::string("config error: ") + e.what());
    return 2;
  }
  try {
    body();
    return 0;
  } catch (const ff::Error& e) {
    log_line(std::string("data error: ") + e.what());
    return 3;
  }
}

// ---------------------------------------------------------------------------
// Dataset loading shared by selftrain / pipeline / eval

struct Dataset {
  ff::Vocabulary vocab;
  ff::AnchorTable anchors;
  std::vector<std::string> names;
  std::vector<ff::Scene> scenes;
  std::vector<std::vector<ff::Detection2D>> detections;
};

std::vector<fs::path> scene_dirs(const fs::path& root) {
  if (!fs::is_directory(root))
    throw ff::IoError(root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "scene.json"))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty())
    throw ff::FormatError(root.string() + ": no scene_*/scene.json found");
  return dirs;
}

Dataset load_dataset(const fs::path& scene_root, const fs::path& det_root,
                     bool with_detections) {
  Dataset ds;
  ds.vocab = ff::load_vocabulary(scene_root / "vocab.json");
  ds.anchors = ff::load_anchors(scene_root / "anchors.json");
  for (const fs::path& dir : scene_dirs(scene_root)) {
    ds.names.push_back(dir.filename().string());
    ds.scenes.push_back(ff::load_scene(dir / "scene.json"));
    if (with_detections) {
      fs::path det_path = det_root / dir.filename() / "detections.json";
      ds.detections.push_back(ff::load_detections(det_path, ds.scenes.back()));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Stage helpers

struct SynthStats {
  std::int64_t objects{0};
  std::int64_t points{0};
  std::int64_t detections{0};
};

SynthStats synth_dataset(const ff::SynthSpec& spec, int n_scenes,
                         const fs::path& out_dir, Dataset* collect) {
  const ff::Vocabulary vocab = ff::default_vocabulary();
  const ff::AnchorTable anchors = ff::default_anchors();
  fs::create_directories(out_dir);
  ff::save_vocabulary(out_dir / "vocab.json", vocab);
  ff::save_anchors(out_dir / "anchors.json", anchors);
  ff::save_synth_spec(out_dir / "synth_spec.json", spec);

  SynthStats stats;
  if (collect) {
    collect->vocab = vocab;
    collect->anchors = anchors;
  }
  for (int i = 0; i < n_scenes; ++i) {
    const std::string name = scene_name(i);
    ff::SynthScene s =
        ff::gen_scene(spec, vocab, anchors, ff::mix_seed(spec.seed, i), name);
    const fs::path dir = out_dir / name;
    fs::create_directories(dir);
    ff::save_scene(dir / "scene.json", s.scene);
    ff::save_detections(dir / "detections.json", s.detections);
    ff::save_point_labels(dir / "labels.json", s.point_labels);
    stats.objects += static_cast<std::int64_t>(s.scene.base_gt.size() +
                                               s.scene.novel_gt.size());
    stats.points += s.scene.cloud.size();
    stats.detections += static_cast<std::int64_t>(s.detections.size());
    if (collect) {
      collect->names.push_back(name);
      collect->scenes.push_back(std::move(s.scene));
      collect->detections.push_back(std::move(s.detections));
    }
  }
  return stats;
}

struct SeekRankStats {
  std::vector<std::vector<ff::CandidateSet>> sets;  // per scene
  std::vector<std::vector<ff::Box3D>> proposals;    // per scene
  std::int64_t frustums{0};
  std::int64_t empty_frustums{0};
  std::int64_t candidates{0};
  std::int64_t rejected{0};
};

SeekRankStats seek_rank_all(const Dataset& ds, const ff::PipelineConfig& cfg,
                            int threads) {
  const int n = static_cast<int>(ds.scenes.size());
  SeekRankStats out;
  out.sets.resize(n);
  out.proposals.resize(n);
  std::vector<int> empties(n, 0), rejects(n, 0);
  ff::parallel_for(n, threads, [&](int i) {
    ff::SeekResult sr = ff::seek_scene(ds.scenes[i], ds.detections[i],
                                       ds.anchors, cfg.search);
    ff::RankResult rr = ff::rank_scene(ds.scenes[i], sr.sets, cfg.oracle);
    empties[i] = sr.n_empty_frustums;
    rejects[i] = rr.n_rejected;
    out.sets[i] = std::move(sr.sets);
    out.proposals[i] = std::move(rr.proposals);
  });
  for (int i = 0; i < n; ++i) {  // fixed-order reduction
    out.frustums += static_cast<std::int64_t>(out.sets[i].size());
    out.empty_frustums += empties[i];
    for (const auto& set : out.sets[i])
      out.candidates += static_cast<std::int64_t>(set.candidates.size());
    out.rejected += rejects[i];
  }
  return out;
}

// Fraction of ground-truth objects with a same-class proposal within 2 m BEV
// center distance. Plot-data proxy for proposal recall.
double matched_fraction(const Dataset& ds,
                        const std::vector<std::vector<ff::Box3D>>& proposals) {
  int total = 0, matched = 0;
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    std::vector<ff::Box3D> gts = ds.scenes[s].base_gt;
    gts.insert(gts.end(), ds.scenes[s].novel_gt.begin(),
               ds.scenes[s].novel_gt.end());
    for (const ff::Box3D& gt : gts) {
      ++total;
      for (const ff::Box3D& p : proposals[s]) {
        if (p.class_id != gt.class_id) continue;
        if (std::hypot(p.center.x() - gt.center.x(),
                       p.center.y() - gt.center.y()) <= 2.0) {
          ++matched;
          break;
        }
      }
    }
  }
  return total > 0 ? static_cast<double>(matched) / total : 0.0;
}

json round_to_json(const ff::RoundReport& r) {
  json j;
  j["round"] = r.round;
  j["n_train_scenes"] = r.n_train_scenes;
  j["n_pasted"] = r.n_pasted;
  j["n_paste_exhausted"] = r.n_paste_exhausted;
  j["n_pseudo"] = r.n_pseudo;
  j["n_bank_evicted"] = r.n_bank_evicted;
  j["mean_normalized_loss"] = r.mean_normalized_loss;
  j["pseudo_precision"] = r.pseudo_precision;
  j["pseudo_recall"] = r.pseudo_recall;
  j["bank_size"] = r.bank_size;
  j["bank_mean_confidence"] = r.bank_mean_confidence;
  return j;
}

void write_pr_csvs(const ff::EvalReport& report, const fs::path& dir,
                   const std::string& prefix) {
  fs::create_directories(dir);
  for (const ff::ClassReport& c : report.per_class) {
    std::ostringstream os;
    os << "recall,precision,score\n";
    for (const ff::PrPoint& p : c.pr_curve)
      os << p.recall << "," << p.precision << "," << p.score << "\n";
    ff::atomic_write_text(dir / (prefix + "pr_" + c.name + ".csv"), os.str());
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthOpts : CommonOpts {
  std::string spec_path;
  std::string out_dir;
  int n_scenes{10};
  bool seed_set{false};
};

int run_synth(const SynthOpts& o) {
  ff::SynthSpec spec;
  return run_phases(
      [&] {
        if (!o.spec_path.empty()) spec = ff::load_synth_spec(o.spec_path);
        if (o.seed_set) spec.seed = o.seed;  // flag beats the spec file
        ff::validate_synth_spec(spec);
        if (o.n_scenes < 1) throw ff::FormatError("--n must be >= 1");
      },
      [&] {
        ff::Timer timer;
        SynthStats stats = synth_dataset(spec, o.n_scenes, o.out_dir, nullptr);
        ff::RunReport report;
        report.subcommand = "synth";
        report.seed = spec.seed;
        report.counts["scenes"] = o.n_scenes;
        report.counts["objects"] = stats.objects;
        report.counts["points"] = stats.points;
        report.counts["detections"] = stats.detections;
        report.timings_ms["synth"] = timer.elapsed_ms();
        fs::path report_path = o.report_path.empty()
                                   ? fs::path(o.out_dir) / "run_report.json"
                                   : fs::path(o.report_path);
        ff::save_run_report(report_path, report);
        log_line("synth: " + std::to_string(o.n_scenes) + " scenes, " +
                 std::to_string(stats.points) + " points in " +
                 std::to_string(timer.elapsed_ms()) + " ms");
      });
}

struct SeekOpts : CommonOpts {
  std::string scene_path;
  std::string det_path;
  std::string anchors_path;
  std::string out_path;
};

int run_seek(const SeekOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases([&] { cfg = resolve_config(o.config_path); },
                    [&] {
                      ff::Scene scene = ff::load_scene(o.scene_path);
                      auto dets = ff::load_detections(o.det_path, scene);
                      ff::AnchorTable anchors = ff::load_anchors(o.anchors_path);
                      ff::Timer timer;
                      ff::SeekResult r =
                          ff::seek_scene(scene, dets, anchors, cfg.search);
                      ff::save_candidates(o.out_path, r.sets);
                      std::int64_t cands = 0;
                      for (const auto& s : r.sets)
                        cands += static_cast<std::int64_t>(s.candidates.size());
                      ff::RunReport report;
                      report.subcommand = "seek";
                      report.seed = o.seed;
                      report.config = cfg;
                      report.counts["detections"] =
                          static_cast<std::int64_t>(dets.size());
                      report.counts["frustums"] =
                          static_cast<std::int64_t>(r.sets.size());
                      report.counts["empty_frustums"] = r.n_empty_frustums;
                      report.counts["candidates"] = cands;
                      report.timings_ms["seek"] = timer.elapsed_ms();
                      if (!o.report_path.empty())
                        ff::save_run_report(o.report_path, report);
                      log_line("seek: " + std::to_string(r.sets.size()) +
                               " frustums, " + std::to_string(cands) +
                               " candidates");
                    });
}

struct RankOpts : CommonOpts {
  std::string scene_path;
  std::string candidates_path;
  std::string out_path;
  std::string bank_out;
  double alpha_iou{std::numeric_limits<double>::quiet_NaN()};
};

int run_rank(const RankOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] {
        cfg = resolve_config(o.config_path);
        if (!std::isnan(o.alpha_iou)) {
          cfg.oracle.alpha_iou = o.alpha_iou;
          ff::validate_config(cfg);
        }
      },
      [&] {
        ff::Scene scene = ff::load_scene(o.scene_path);
        auto sets = ff::load_candidates(o.candidates_path, scene);
        ff::Timer timer;
        ff::RankResult r = ff::rank_scene(scene, sets, cfg.oracle);
        ff::save_boxes(o.out_path, r.proposals);
        ff::RunReport report;
        report.subcommand = "rank";
        report.seed = o.seed;
        report.config = cfg;
        report.counts["candidate_sets"] =
            static_cast<std::int64_t>(sets.size());
        report.counts["proposals"] =
            static_cast<std::int64_t>(r.proposals.size());
        report.counts["rejected"] = r.n_rejected;
        if (!o.bank_out.empty()) {
          ff::MemoryBank bank(cfg.bank_capacity);
          std::vector<ff::BankEntry> entries;
          for (const ff::Box3D& p : r.proposals)
            entries.push_back(ff::harvest(scene.cloud, p));
          ff::BankUpdateStats stats =
              ff::bank_update(bank, entries, cfg.filter);
          ff::save_bank(o.bank_out, bank);
          report.counts["bank_size"] = bank.size();
          report.counts["bank_rejected"] = stats.rejected;
        }
        report.timings_ms["rank"] = timer.elapsed_ms();
        if (!o.report_path.empty()) ff::save_run_report(o.report_path, report);
        log_line("rank: " + std::to_string(r.proposals.size()) +
                 " proposals, " + std::to_string(r.n_rejected) + " rejected");
      });
}

struct PropagateOpts : CommonOpts {
  std::string scene_path;
  std::string bank_path;
  std::string out_path;
};

int run_propagate(const PropagateOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] { cfg = resolve_config(o.config_path); },
      [&] {
        ff::Scene scene = ff::load_scene(o.scene_path);
        ff::MemoryBank bank = ff::load_bank(o.bank_path);
        ff::Timer timer;
        ff::AugmentResult r = ff::geometry_simulate(scene, bank, cfg.sim, o.seed);
        ff::save_scene(o.out_path, r.scene);
        ff::RunReport report;
        report.subcommand = "propagate";
        report.seed = o.seed;
        report.config = cfg;
        report.counts["pasted"] = static_cast<std::int64_t>(r.pasted.size());
        report.counts["exhausted"] = r.exhausted;
        report.counts["points_added"] =
            r.scene.cloud.size() - scene.cloud.size();
        report.timings_ms["propagate"] = timer.elapsed_ms();
        if (!o.report_path.empty()) ff::save_run_report(o.report_path, report);
        log_line("propagate: " + std::to_string(r.pasted.size()) +
                 " pasted, " + std::to_string(r.exhausted) + " exhausted");
      });
}

struct SelftrainOpts : CommonOpts {
  std::string dataset_dir;
  std::string detections_dir;
  std::string bank_out;
  int rounds{-1};
};

int run_selftrain_cmd(const SelftrainOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] {
        cfg = resolve_config(o.config_path);
        if (o.rounds >= 0) {
          cfg.round.n_rounds = o.rounds;
          ff::validate_config(cfg);
        }
      },
      [&] {
        fs::path det_root =
            o.detections_dir.empty() ? o.dataset_dir : o.detections_dir;
        Dataset ds = load_dataset(o.dataset_dir, det_root, true);
        ff::Timer timer;
        SeekRankStats sr = seek_rank_all(ds, cfg, o.threads);
        double seek_ms = timer.elapsed_ms();

        ff::SelfTrainState state(cfg.bank_capacity, ds.scenes.size(),
                                 cfg.round.loss_alpha, cfg.round.ema_momentum);
        ff::NoisyOracleDetector detector(cfg.round.detector_sigma,
                                         cfg.round.detector_miss_rate, o.seed);
        std::vector<ff::RoundReport> rounds = ff::run_selftrain(
            ds.scenes, sr.proposals, ds.vocab, detector, state, cfg, o.seed);

        if (!o.bank_out.empty()) ff::save_bank(o.bank_out, state.bank);

        json j;
        j["subcommand"] = "selftrain";
        j["seed"] = o.seed;
        j["config"] = ff::config_to_json(cfg);
        json jr = json::array();
        for (const auto& r : rounds) jr.push_back(round_to_json(r));
        j["rounds"] = std::move(jr);
        j["counts"] = {{"scenes", ds.scenes.size()},
                       {"frustums", sr.frustums},
                       {"candidates", sr.candidates},
                       {"proposals_rejected", sr.rejected}};
        fs::path report_path = o.report_path.empty()
                                   ? fs::path(o.dataset_dir) / "selftrain.json"
                                   : fs::path(o.report_path);
        ff::atomic_write_text(report_path, j.dump(2) + "\n");
        log_line("selftrain: " + std::to_string(rounds.size()) +
                 " rounds (seek " + std::to_string(seek_ms) + " ms, total " +
                 std::to_string(timer.elapsed_ms()) + " ms)");
        if (!rounds.empty()) {
          const auto& last = rounds.back();
          log_line("selftrain: final recall " +
                   std::to_string(last.pseudo_recall) + ", bank " +
                   std::to_string(last.bank_size));
        }
      });
}

struct FuseOpts : CommonOpts {
  std::string pred3d_path;
  std::string vlm_path;
  std::string out_path;
  double gamma{std::numeric_limits<double>::quiet_NaN()};
};

int run_fuse(const FuseOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] {
        cfg = resolve_config(o.config_path);
        if (!std::isnan(o.gamma)) {
          cfg.gamma_fuse = o.gamma;
          ff::validate_config(cfg);
        }
      },
      [&] {
        std::vector<ff::Box3D> boxes = ff::load_boxes(o.pred3d_path);
        std::ifstream in(o.vlm_path);
        if (!in) throw ff::IoError("cannot open " + o.vlm_path);
        json j;
        try {
          in >> j;
        } catch (const json::exception& e) {
          throw ff::FormatError(o.vlm_path + ": " + e.what());
        }
        if (!j.is_array())
          throw ff::FormatError(o.vlm_path + ": expected a JSON array");
        if (j.size() != boxes.size())
          throw ff::FormatError("fuse: " + std::to_string(boxes.size()) +
                                " 3D predictions vs " +
                                std::to_string(j.size()) + " image labels");
        int flipped = 0;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          const json& vj = j[i];
          if (!vj.is_object() || !vj.contains("class_id") ||
              !vj.contains("score"))
            throw ff::FormatError(o.vlm_path +
                                  ": entries need class_id and score");
          ff::FusionInput input;
          input.label_3d = boxes[i].class_id;
          input.label_vlm = vj["class_id"].get<int>();
          input.p_vlm = vj["score"].get<double>();
          input.gamma_fuse = cfg.gamma_fuse;
          int fused = ff::logit_fuse(input);
          if (fused != boxes[i].class_id) ++flipped;
          boxes[i].class_id = fused;
        }
        ff::save_boxes(o.out_path, boxes);
        ff::RunReport report;
        report.subcommand = "fuse";
        report.config = cfg;
        report.counts["boxes"] = static_cast<std::int64_t>(boxes.size());
        report.counts["relabeled"] = flipped;
        if (!o.report_path.empty()) ff::save_run_report(o.report_path, report);
        log_line("fuse: relabeled " + std::to_string(flipped) + " of " +
                 std::to_string(boxes.size()));
      });
}

struct ClusterOpts : CommonOpts {
  std::string scene_path;
  std::string labels_path;
  std::string out_path;
  double eps{std::numeric_limits<double>::quiet_NaN()};
  int min_pts{-1};
};

int run_cluster(const ClusterOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] {
        cfg = resolve_config(o.config_path);
        if (!std::isnan(o.eps)) cfg.cluster.eps = o.eps;
        if (o.min_pts >= 0) cfg.cluster.min_pts = o.min_pts;
        ff::validate_config(cfg);
      },
      [&] {
        ff::Scene scene = ff::load_scene(o.scene_path);
        std::vector<int> labels = ff::load_point_labels(o.labels_path);
        ff::Timer timer;
        std::vector<ff::Box3D> proposals =
            ff::cluster_proposals(scene.cloud, labels, cfg.cluster);
        ff::save_boxes(o.out_path, proposals);
        ff::RunReport report;
        report.subcommand = "cluster";
        report.config = cfg;
        report.counts["points"] = scene.cloud.size();
        report.counts["proposals"] =
            static_cast<std::int64_t>(proposals.size());
        report.timings_ms["cluster"] = timer.elapsed_ms();
        if (!o.report_path.empty()) ff::save_run_report(o.report_path, report);
        log_line("cluster: " + std::to_string(proposals.size()) +
                 " proposals from " + std::to_string(scene.cloud.size()) +
                 " points");
      });
}

struct EvalOpts : CommonOpts {
  std::string pred_path;
  std::string gt_path;
  std::string vocab_path;
  std::string out_path;
  std::string plot_dir;
};

int run_eval(const EvalOpts& o) {
  ff::PipelineConfig cfg;
  return run_phases(
      [&] { cfg = resolve_config(o.config_path); },
      [&] {
        ff::Vocabulary vocab = ff::load_vocabulary(o.vocab_path);
        ff::EvalInput input;
        if (fs::is_directory(o.gt_path)) {
          // Dataset layout: ground truth under <gt>/scene_*/scene.json,
          // predictions as flat <pred>/<scene name>.json files.
          for (const fs::path& dir : scene_dirs(o.gt_path)) {
            ff::Scene scene = ff::load_scene(dir / "scene.json");
            std::vector<ff::Box3D> gts = scene.base_gt;
            gts.insert(gts.end(), scene.novel_gt.begin(),
                       scene.novel_gt.end());
            input.gts.push_back(std::move(gts));
            fs::path pred =
                fs::path(o.pred_path) / (dir.filename().string() + ".json");
            input.preds.push_back(ff::load_boxes(pred));
          }
        } else {
          ff::Scene scene = ff::load_scene(o.gt_path);
          std::vector<ff::Box3D> gts = scene.base_gt;
          gts.insert(gts.end(), scene.novel_gt.begin(), scene.novel_gt.end());
          input.gts.push_back(std::move(gts));
          input.preds.push_back(ff::load_boxes(o.pred_path));
        }
        ff::EvalReport report = ff::evaluate(input, vocab, cfg.eval);
        ff::save_eval_report(o.out_path, report);
        if (!o.plot_dir.empty()) write_pr_csvs(report, o.plot_dir, "");
        std::ostringstream os;
        os << "eval: mAP " << report.map << ", AP_B " << report.ap_base
           << ", AP_N " << report.ap_novel << ", AR_N " << report.ar_novel;
        log_line(os.str());
      });
}

struct PipelineOpts : CommonOpts {
  std::string out_dir;
  std::string dataset_dir;
  std::string spec_path;
  int n_scenes{10};
  bool plot_data{false};
};

int run_pipeline(const PipelineOpts& o) {
  ff::PipelineConfig cfg;
  ff::SynthSpec spec;
  return run_phases(
      [&] {
        cfg = resolve_config(o.config_path);
        if (!o.spec_path.empty()) spec = ff::load_synth_spec(o.spec_path);
        if (o.n_scenes < 1) throw ff::FormatError("--n must be >= 1");
      },
      [&] {
        fs::path out(o.out_dir);
        fs::create_directories(out);
        ff::RunReport report;
        report.subcommand = "pipeline";
        report.seed = o.seed;
        report.config = cfg;
        ff::Timer total;

        // Stage 1: synthesize or load the dataset.
        ff::Timer timer;
        Dataset ds;
        if (o.dataset_dir.empty()) {
          spec.seed = o.seed;  // the run seed drives generation
          SynthStats stats =
              synth_dataset(spec, o.n_scenes, out / "dataset", &ds);
          report.counts["objects"] = stats.objects;
          report.counts["points"] = stats.points;
        } else {
          ds = load_dataset(o.dataset_dir, o.dataset_dir, true);
        }
        report.counts["scenes"] = static_cast<std::int64_t>(ds.scenes.size());
        std::int64_t n_dets = 0;
        for (const auto& d : ds.detections)
          n_dets += static_cast<std::int64_t>(d.size());
        report.counts["detections"] = n_dets;
        report.timings_ms["dataset"] = timer.elapsed_ms();

        // Stage 2: seek + rank every scene.
        timer = ff::Timer();
        SeekRankStats sr = seek_rank_all(ds, cfg, o.threads);
        fs::create_directories(out / "proposals");
        for (std::size_t i = 0; i < ds.names.size(); ++i)
          ff::save_boxes(out / "proposals" / (ds.names[i] + ".json"),
                         sr.proposals[i]);
        report.counts["frustums"] = sr.frustums;
        report.counts["empty_frustums"] = sr.empty_frustums;
        report.counts["candidates"] = sr.candidates;
        std::int64_t n_props = 0;
        for (const auto& p : sr.proposals)
          n_props += static_cast<std::int64_t>(p.size());
        report.counts["proposals"] = n_props;
        report.timings_ms["seek_rank"] = timer.elapsed_ms();

        // Stage 3: bootstrap the memory bank from novel-class proposals,
        // then run the propagation + self-training rounds.
        timer = ff::Timer();
        ff::SelfTrainState state(cfg.bank_capacity, ds.scenes.size(),
                                 cfg.round.loss_alpha, cfg.round.ema_momentum);
        for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
          std::vector<ff::BankEntry> entries;
          for (const ff::Box3D& p : sr.proposals[i])
            if (ds.vocab.is_novel(p.class_id))
              entries.push_back(ff::harvest(ds.scenes[i].cloud, p));
          ff::bank_update(state.bank, entries, cfg.filter);
        }
        report.counts["bank_bootstrap"] = state.bank.size();

        ff::NoisyOracleDetector detector(cfg.round.detector_sigma,
                                         cfg.round.detector_miss_rate, o.seed);
        std::vector<ff::RoundReport> rounds = ff::run_selftrain(
            ds.scenes, sr.proposals, ds.vocab, detector, state, cfg, o.seed);
        ff::save_bank(out / "bank.json", state.bank);
        {
          json j;
          j["rounds"] = json::array();
          for (const auto& r : rounds) j["rounds"].push_back(round_to_json(r));
          ff::atomic_write_text(out / "selftrain_report.json",
                                j.dump(2) + "\n");
        }
        if (!rounds.empty()) {
          const auto& last = rounds.back();
          report.counts["pasted"] = last.n_pasted;
          report.counts["pseudo_labels"] = last.n_pseudo;
          report.counts["bank_size"] = last.bank_size;
          report.metrics["pseudo_recall"] = last.pseudo_recall;
          report.metrics["pseudo_precision"] = last.pseudo_precision;
          report.metrics["mean_normalized_loss"] = last.mean_normalized_loss;
          report.metrics["bank_mean_confidence"] = last.bank_mean_confidence;
        }
        report.timings_ms["selftrain"] = timer.elapsed_ms();

        // Stage 4: evaluate the final detector on the original scenes.
        timer = ff::Timer();
        ff::EvalInput eval_input;
        for (const ff::Scene& scene : ds.scenes) {
          std::vector<ff::Box3D> gts = scene.base_gt;
          gts.insert(gts.end(), scene.novel_gt.begin(), scene.novel_gt.end());
          eval_input.gts.push_back(std::move(gts));
          eval_input.preds.push_back(detector.predict(scene));
        }
        ff::EvalReport eval_report = ff::evaluate(eval_input, ds.vocab, cfg.eval);
        ff::save_eval_report(out / "eval_report.json", eval_report);
        report.metrics["map"] = eval_report.map;
        report.metrics["ap_base"] = eval_report.ap_base;
        report.metrics["ap_novel"] = eval_report.ap_novel;
        report.metrics["ar_novel"] = eval_report.ar_novel;
        report.timings_ms["eval"] = timer.elapsed_ms();

        // Stage 5 (optional): plot series. PR curves come from the eval
        // report; the sweeps rerun ranking with modified knobs.
        if (o.plot_data) {
          timer = ff::Timer();
          fs::path plots = out / "plots";
          write_pr_csvs(eval_report, plots, "");

          std::ostringstream alpha_csv;
          alpha_csv << "alpha_iou,matched_fraction\n";
          for (double alpha : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            std::vector<std::vector<ff::Box3D>> props(ds.scenes.size());
            for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
              for (const auto& set : sr.sets[i]) {
                const ff::CameraModel* cam =
                    ds.scenes[i].find_camera(set.frustum.camera_id);
                if (!cam) continue;
                auto best = ff::select_best_weighted(
                    ds.scenes[i].cloud, set, *cam, 1.0, alpha,
                    cfg.oracle.min_composite);
                if (best) props[i].push_back(best->box);
              }
            }
            alpha_csv << alpha << "," << matched_fraction(ds, props) << "\n";
          }
          ff::atomic_write_text(plots / "ablation_alpha.csv", alpha_csv.str());

          std::ostringstream grid_csv;
          grid_csv << "k_d,k_o,k_s,candidates,matched_fraction\n";
          const int grid[][3] = {{2, 3, 1}, {3, 5, 2}, {4, 10, 4}};
          for (const auto& k : grid) {
            ff::PipelineConfig swept = cfg;
            swept.search.k_d = k[0];
            swept.search.k_o = k[1];
            swept.search.k_s = k[2];
            SeekRankStats sweep = seek_rank_all(ds, swept, o.threads);
            grid_csv << k[0] << "," << k[1] << "," << k[2] << ","
                     << sweep.candidates << ","
                     << matched_fraction(ds, sweep.proposals) << "\n";
          }
          ff::atomic_write_text(plots / "ablation_grid.csv", grid_csv.str());
          report.timings_ms["plot_data"] = timer.elapsed_ms();
        }

        report.timings_ms["total"] = total.elapsed_ms();
        fs::path report_path = o.report_path.empty()
                                   ? out / "run_report.json"
                                   : fs::path(o.report_path);
        ff::save_run_report(report_path, report);
        std::ostringstream os;
        os << "pipeline: mAP " << eval_report.map << ", AR_N "
           << eval_report.ar_novel << " (" << total.elapsed_ms() << " ms)";
        log_line(os.str());
      });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frustum-based open-vocabulary 3D proposal pipeline"};
  app.require_subcommand(1);

  SynthOpts synth_o;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--spec", synth_o.spec_path, "synth spec JSON");
  synth_cmd->add_option("--n", synth_o.n_scenes, "number of scenes");
  synth_cmd->add_option("--out", synth_o.out_dir, "output directory")
      ->required();
  auto* synth_seed = synth_cmd->add_option("--seed", synth_o.seed,
                                           "seed (overrides the spec)");
  synth_cmd->add_option("--report", synth_o.report_path, "run report path");

  SeekOpts seek_o;
  auto* seek_cmd =
      app.add_subcommand("seek", "lift 2D detections into box candidates");
  seek_cmd->add_option("--scene", seek_o.scene_path, "scene manifest")
      ->required();
  seek_cmd->add_option("--detections", seek_o.det_path, "detections JSON")
      ->required();
  seek_cmd->add_option("--anchors", seek_o.anchors_path, "anchor table JSON")
      ->required();
  seek_cmd->add_option("--out", seek_o.out_path, "candidates JSON")
      ->required();
  add_common(seek_cmd, seek_o);

  RankOpts rank_o;
  auto* rank_cmd =
      app.add_subcommand("rank", "score candidates and pick proposals");
  rank_cmd->add_option("--scene", rank_o.scene_path, "scene manifest")
      ->required();
  rank_cmd->add_option("--candidates", rank_o.candidates_path,
                       "candidates JSON")
      ->required();
  rank_cmd->add_option("--out", rank_o.out_path, "proposals JSON")->required();
  rank_cmd->add_option("--alpha-iou", rank_o.alpha_iou,
                       "alignment weight override");
  rank_cmd->add_option("--bank-out", rank_o.bank_out,
                       "also harvest proposals into a fresh bank");
  add_common(rank_cmd, rank_o);

  PropagateOpts prop_o;
  auto* prop_cmd = app.add_subcommand(
      "propagate", "paste banked objects into a scene");
  prop_cmd->add_option("--scene", prop_o.scene_path, "scene manifest")
      ->required();
  prop_cmd->add_option("--bank", prop_o.bank_path, "memory bank JSON")
      ->required();
  prop_cmd->add_option("--out", prop_o.out_path, "augmented scene manifest")
      ->required();
  add_common(prop_cmd, prop_o);

  SelftrainOpts st_o;
  auto* st_cmd = app.add_subcommand(
      "selftrain", "iterative pseudo-label rounds over a dataset");
  st_cmd->add_option("--dataset", st_o.dataset_dir, "dataset directory")
      ->required();
  st_cmd->add_option("--detections", st_o.detections_dir,
                     "detections directory (defaults to the dataset)");
  st_cmd->add_option("--rounds", st_o.rounds, "round count override");
  st_cmd->add_option("--bank-out", st_o.bank_out, "final bank JSON");
  add_common(st_cmd, st_o);

  FuseOpts fuse_o;
  auto* fuse_cmd = app.add_subcommand(
      "fuse", "merge 3D and image classifier labels");
  fuse_cmd->add_option("--pred3d", fuse_o.pred3d_path, "3D predictions JSON")
      ->required();
  fuse_cmd->add_option("--vlm", fuse_o.vlm_path,
                       "image labels JSON [{class_id, score}, ...]")
      ->required();
  fuse_cmd->add_option("--out", fuse_o.out_path, "fused boxes JSON")
      ->required();
  fuse_cmd->add_option("--gamma", fuse_o.gamma, "confidence threshold");
  add_common(fuse_cmd, fuse_o, false);

  ClusterOpts cl_o;
  auto* cl_cmd = app.add_subcommand(
      "cluster", "label-aware density clustering proposals");
  cl_cmd->add_option("--scene", cl_o.scene_path, "scene manifest")->required();
  cl_cmd->add_option("--labels", cl_o.labels_path, "per-point labels JSON")
      ->required();
  cl_cmd->add_option("--out", cl_o.out_path, "proposals JSON")->required();
  cl_cmd->add_option("--eps", cl_o.eps, "neighborhood radius");
  cl_cmd->add_option("--min-pts", cl_o.min_pts, "core point threshold");
  add_common(cl_cmd, cl_o, false);

  EvalOpts eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "detection metrics");
  eval_cmd->add_option("--pred", eval_o.pred_path,
                       "predictions JSON or directory")
      ->required();
  eval_cmd->add_option("--gt", eval_o.gt_path,
                       "scene manifest or dataset directory")
      ->required();
  eval_cmd->add_option("--vocab", eval_o.vocab_path, "vocabulary JSON")
      ->required();
  eval_cmd->add_option("--out", eval_o.out_path, "eval report JSON")
      ->required();
  eval_cmd->add_option("--plot-data", eval_o.plot_dir,
                       "directory for PR curve CSVs");
  add_common(eval_cmd, eval_o, false);

  PipelineOpts pipe_o;
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "synth-or-load, seek, rank, propagate, selftrain, eval");
  pipe_cmd->add_option("--out", pipe_o.out_dir, "output directory")
      ->required();
  pipe_cmd->add_option("--dataset", pipe_o.dataset_dir,
                       "existing dataset (skips synthesis)");
  pipe_cmd->add_option("--spec", pipe_o.spec_path, "synth spec JSON");
  pipe_cmd->add_option("--n", pipe_o.n_scenes, "scenes to synthesize");
  pipe_cmd->add_flag("--plot-data", pipe_o.plot_data,
                     "emit PR curve and ablation sweep CSVs");
  add_common(pipe_cmd, pipe_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad flags are configuration errors
  }

  try {
    if (synth_cmd->parsed()) {
      synth_o.seed_set = synth_seed->count() > 0;
      return run_synth(synth_o);
    }
    if (seek_cmd->parsed()) return run_seek(seek_o);
    if (rank_cmd->parsed()) return run_rank(rank_o);
    if (prop_cmd->parsed()) return run_propagate(prop_o);
    if (st_cmd->parsed()) return run_selftrain_cmd(st_o);
    if (fuse_cmd->parsed()) return run_fuse(fuse_o);
    if (cl_cmd->parsed()) return run_cluster(cl_o);
    if (eval_cmd->parsed()) return run_eval(eval_o);
    if (pipe_cmd->parsed()) return run_pipeline(pipe_o);
  } catch (const std::exception& e) {
    log_line(std::string("fatal: ") + e.what());
    return 1;
  }
  return 2;
}
