#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zole/adapt.hpp"
#include "zole/core.hpp"
#include "zole/datagen.hpp"
#include "zole/eval.hpp"
#include "zole/imgio.hpp"
#include "zole/model.hpp"

namespace zole {

enum class DatasetRole { domain, synthetic, val, test };

inline DatasetRole parse_role(const std::string& s) {
  if (s == "domain") return DatasetRole::domain;
  if (s == "synthetic") return DatasetRole::synthetic;
  if (s == "val") return DatasetRole::val;
  if (s == "test") return DatasetRole::test;
  throw std::invalid_argument("unknown dataset role '" + s +
                              "' (expected domain, synthetic, val, or test)");
}

inline const char* role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::domain: return "domain";
    case DatasetRole::synthetic: return "synthetic";
    case DatasetRole::val: return "val";
    case DatasetRole::test: return "test";
  }
  return "?";
}

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline std::string pair_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%04d", index);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config parsing. Keys mirror the struct field names; anything unrecognized
// is rejected so a typo cannot silently fall back to a default.
// ---------------------------------------------------------------------------

inline LossWeights parse_loss_weights(const nlohmann::json& j) {
  detail::check_keys(j, {"tau", "lambdaAgg", "wLeft", "wCurr", "wFine", "alpha", "patchSide"},
                     "weights");
  LossWeights w;
  detail::read_key(j, "tau", w.tau, "weights");
  detail::read_key(j, "lambdaAgg", w.lambda_agg, "weights");
  detail::read_key(j, "wLeft", w.w_left, "weights");
  detail::read_key(j, "wCurr", w.w_curr, "weights");
  detail::read_key(j, "wFine", w.w_fine, "weights");
  detail::read_key(j, "alpha", w.alpha, "weights");
  detail::read_key(j, "patchSide", w.patch_side, "weights");
  return w;
}

inline AdaptConfig parse_adapt_config(const nlohmann::json& j) {
  detail::check_keys(
      j, {"r", "batchSize", "lr", "kMax", "validateEvery", "seed", "cropSize", "weights"},
      "config");
  AdaptConfig cfg;
  detail::read_key(j, "r", cfg.r, "config");
  detail::read_key(j, "batchSize", cfg.batch_size, "config");
  detail::read_key(j, "lr", cfg.lr, "config");
  detail::read_key(j, "kMax", cfg.k_max, "config");
  detail::read_key(j, "validateEvery", cfg.validate_every, "config");
  detail::read_key(j, "seed", cfg.seed, "config");
  detail::read_key(j, "cropSize", cfg.crop_size, "config");
  if (j.contains("weights")) cfg.weights = parse_loss_weights(j.at("weights"));
  return cfg;
}

inline AdaptConfig load_adapt_config(const std::string& path) {
  return parse_adapt_config(detail::parse_json_file(path));
}

inline SceneSpec parse_scene_spec(const nlohmann::json& j) {
  detail::check_keys(
      j, {"height", "width", "numShapes", "dispRange", "textureScale", "seed"}, "spec");
  SceneSpec spec;
  detail::read_key(j, "height", spec.height, "spec");
  detail::read_key(j, "width", spec.width, "spec");
  detail::read_key(j, "numShapes", spec.num_shapes, "spec");
  if (j.contains("dispRange")) {
    std::vector<double> range;
    detail::read_key(j, "dispRange", range, "spec");
    if (range.size() != 2)
      throw std::invalid_argument("spec: dispRange must hold exactly [lo, hi]");
    spec.disp_lo = range[0];
    spec.disp_hi = range[1];
  }
  detail::read_key(j, "textureScale", spec.texture_scale, "spec");
  detail::read_key(j, "seed", spec.seed, "spec");
  return spec;
}

inline SceneSpec load_scene_spec(const std::string& path) {
  return parse_scene_spec(detail::parse_json_file(path));
}

// ---------------------------------------------------------------------------
// Dataset directories. A dataset is a flat directory of pair_%04d folders
// holding left.ppm and right.ppm, plus gt.pfm and occlusion.pgm where the
// role keeps them, described by a manifest.json with every seed used.
// ---------------------------------------------------------------------------

inline void generate_dataset(const std::string& out_dir, int count, DatasetRole role,
                             const SceneSpec& spec,
                             const DomainDegradation& deg = DomainDegradation{}) {
  if (count < 1) throw std::invalid_argument("gen-data: count must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const bool degraded = role != DatasetRole::synthetic;
  const bool keep_gt = role != DatasetRole::domain;

  nlohmann::ordered_json manifest;
  manifest["role"] = role_name(role);
  manifest["spec"] = {{"height", spec.height},
                      {"width", spec.width},
                      {"numShapes", spec.num_shapes},
                      {"dispRange", {spec.disp_lo, spec.disp_hi}},
                      {"textureScale", spec.texture_scale},
                      {"seed", spec.seed}};
  manifest["pairs"] = nlohmann::ordered_json::array();

  for (int i = 0; i < count; ++i) {
    SceneSpec local = spec;
    local.seed = spec.seed + static_cast<uint64_t>(i);
    const SceneSample sample = generate_scene(local);

    const std::string name = detail::pair_dir_name(i);
    const fs::path dir = fs::path(out_dir) / name;
    fs::create_directories(dir);

    nlohmann::ordered_json entry;
    entry["dir"] = name;
    entry["seed"] = local.seed;

    StereoPair views = sample.pair;
    if (degraded) {
      const uint64_t deg_seed = local.seed + (1ull << 32);
      Rng rng(deg_seed);
      views = apply_degradation(sample.pair, deg, rng);
      entry["degradationSeed"] = deg_seed;
    }

    std::vector<std::string> files;
    write_ppm((dir / "left.ppm").string(), views.left);
    files.push_back("left.ppm");
    write_ppm((dir / "right.ppm").string(), views.right);
    files.push_back("right.ppm");
    if (keep_gt) {
      write_pfm((dir / "gt.pfm").string(), *sample.pair.ground_truth);
      files.push_back("gt.pfm");
    }
    Image occ(sample.occlusion.height, sample.occlusion.width, 1);
    for (size_t p = 0; p < occ.data.size(); ++p)
      occ.data[p] = sample.occlusion.data[p] != 0.0 ? 255.0 : 0.0;
    write_pgm((dir / "occlusion.pgm").string(), occ);
    files.push_back("occlusion.pgm");

    entry["files"] = files;
    manifest["pairs"].push_back(std::move(entry));
  }

  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw std::runtime_error(out_dir + ": cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

inline std::vector<std::string> list_pair_dirs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::invalid_argument(dir + ": not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("pair_", 0) == 0)
      out.push_back(e.path().string());
  if (out.empty()) throw std::invalid_argument(dir + ": contains no pair_* directories");
  std::sort(out.begin(), out.end());
  return out;
}

inline StereoPair load_domain_pair(const std::string& pair_dir) {
  namespace fs = std::filesystem;
  return StereoPair::domain(read_ppm((fs::path(pair_dir) / "left.ppm").string()),
                            read_ppm((fs::path(pair_dir) / "right.ppm").string()));
}

inline StereoPair load_synthetic_pair(const std::string& pair_dir) {
  namespace fs = std::filesystem;
  const fs::path gt_path = fs::path(pair_dir) / "gt.pfm";
  if (!fs::exists(gt_path))
    throw std::invalid_argument(pair_dir + ": missing gt.pfm (synthetic pairs need ground truth)");
  return StereoPair::synthetic(read_ppm((fs::path(pair_dir) / "left.ppm").string()),
                               read_ppm((fs::path(pair_dir) / "right.ppm").string()),
                               read_pfm(gt_path.string()).as_map());
}

// Evaluation needs degraded views plus the held-out ground truth, so the two
// travel side by side without tagging the pair as synthetic.
struct LabeledPair {
  StereoPair pair;
  Map2D gt;
};

inline LabeledPair load_labeled_pair(const std::string& pair_dir) {
  namespace fs = std::filesystem;
  const fs::path gt_path = fs::path(pair_dir) / "gt.pfm";
  if (!fs::exists(gt_path))
    throw std::invalid_argument(pair_dir + ": missing gt.pfm (evaluation needs ground truth)");
  LabeledPair lp{load_domain_pair(pair_dir), read_pfm(gt_path.string()).as_map()};
  if (lp.gt.height != lp.pair.height() || lp.gt.width != lp.pair.width())
    throw std::invalid_argument(pair_dir + ": ground truth dims differ from the views");
  return lp;
}

inline std::vector<StereoPair> load_domain_dir(const std::string& dir) {
  std::vector<StereoPair> out;
  for (const std::string& d : list_pair_dirs(dir)) out.push_back(load_domain_pair(d));
  return out;
}

inline std::vector<StereoPair> load_synthetic_dir(const std::string& dir) {
  std::vector<StereoPair> out;
  for (const std::string& d : list_pair_dirs(dir)) out.push_back(load_synthetic_pair(d));
  return out;
}

inline std::vector<LabeledPair> load_labeled_dir(const std::string& dir) {
  std::vector<LabeledPair> out;
  for (const std::string& d : list_pair_dirs(dir)) out.push_back(load_labeled_pair(d));
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration used by the CLI and the end-to-end tests.
// ---------------------------------------------------------------------------

// Supervised pretraining is the adaptation loop run without domain examples
// or the regularizer; validation scores the synthetic pairs themselves by
// reconstruction PSNR.
inline AdaptResult pretrain(const ToyStereoModel& model,
                            const std::vector<StereoPair>& synth_pairs, AdaptConfig cfg,
                            std::ostream* log = nullptr) {
  if (synth_pairs.empty()) throw std::invalid_argument("pretrain: no synthetic pairs");
  Rng init_rng(cfg.seed);
  const ModelParams theta0 = model.init_params(init_rng);
  cfg.weights.lambda_agg = 0.0;
  return adapt(model, theta0, {}, synth_pairs, synth_pairs, cfg, log);
}

struct EvalRecord {
  double epe = 0.0;
  double three_er = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

inline EvalRecord evaluate_pair(const StereoModel& model, const ModelParams& theta,
                                const LabeledPair& lp) {
  const Map2D pred = model.forward(lp.pair, theta);
  EvalRecord rec;
  rec.epe = epe(pred, lp.gt);
  rec.three_er = three_pixel_error(pred, lp.gt);
  const WarpResult warped = warp_right_to_left(lp.pair.right, pred);
  rec.psnr = psnr(lp.pair.left, warped.image, &warped.mask);
  rec.ssim = ssim(lp.pair.left, warped.image);
  return rec;
}

}  // namespace zole
