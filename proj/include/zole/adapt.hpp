#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zole/core.hpp"
#include "zole/datagen.hpp"
#include "zole/eval.hpp"
#include "zole/imgio.hpp"
#include "zole/loss.hpp"
#include "zole/model.hpp"

namespace zole {

struct AdaptConfig {
  double r = 1.5;           // zoom ratio for target generation
  int batch_size = 6;       // examples per gradient step
  double lr = 5e-5;
  int k_max = 10000;        // gradient steps
  int validate_every = 500;
  LossWeights weights;
  uint64_t seed = 1;
  int crop_size = 160;      // training crop, must tile by weights.patch_side
};

// Finer-grain pseudo label: run the model on the pair up-sampled by r, bring
// the prediction back to the original grid, and divide the values by r so
// disparities are expressed in original-resolution pixels again.
//
// The up-sampled dims are round(r*(dim-1))+1 rather than round(r*dim): with
// corner-aligned resampling the coordinate scale is (out-1)/(in-1), and this
// choice makes that scale exactly r whenever r*(dim-1) is whole, so content
// shifts grow by exactly r and the 1/r factor cancels them without residue.
inline Map2D zoom_target(const StereoModel& model, const ModelParams& theta,
                         const StereoPair& pair, double r) {
  if (!(r >= 1.0)) throw std::invalid_argument("zoom_target: zoom factor must be >= 1");
  const int uh = static_cast<int>(std::lround(r * (pair.height() - 1))) + 1;
  const int uw = static_cast<int>(std::lround(r * (pair.width() - 1))) + 1;
  StereoPair up = StereoPair::domain(resize_to(pair.left, uh, uw), resize_to(pair.right, uh, uw));
  const Map2D pred = model.forward(up, theta);
  Map2D down = resize_to(pred, pair.height(), pair.width());
  const double inv_r = 1.0 / r;
  for (double& v : down.data) v *= inv_r;
  return down;
}

// Mean left-view reconstruction PSNR over the validation pairs: predict,
// warp the right view to the left with the prediction, score against the
// real left view on the in-bounds mask.
inline double validate(const StereoModel& model, const ModelParams& theta,
                       const std::vector<StereoPair>& val_pairs) {
  if (val_pairs.empty()) throw std::invalid_argument("validate: empty validation set");
  double acc = 0.0;
  for (const StereoPair& pair : val_pairs)
    acc += warp_psnr(pair, model.forward(pair, theta));
  return acc / static_cast<double>(val_pairs.size());
}

// Shuffled pass over example indices; when one pass is exhausted the order
// is reshuffled from the same random stream and a new pass begins.
class ExampleSampler {
 public:
  ExampleSampler(int count, Rng& rng) : order_(shuffled_indices(count, rng)) {
    if (count <= 0) throw std::invalid_argument("ExampleSampler: empty example set");
  }

  int next(Rng& rng) {
    if (cursor_ == order_.size()) {
      shuffle_in_place(order_, rng);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  const std::vector<int>& order() const { return order_; }
  size_t cursor() const { return cursor_; }

 private:
  std::vector<int> order_;
  size_t cursor_ = 0;
};

struct AdaptResult {
  ModelParams best_theta;
  double best_psnr = 0.0;
  ModelParams final_theta;
};

namespace detail {

inline void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << "\n";
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Self-adaptation loop. Every iteration draws batch_size examples from the
// shuffled pool of domain and synthetic pairs (random crop per draw,
// synthetic draws additionally augmented). Domain examples are scored
// against their own zoom target under the graph regularizer, synthetic ones
// against ground truth; one SGD step is taken on the batch-mean parameter
// gradient. Validation runs once before training and every validate_every
// iterations, tracking the best-PSNR parameters, which are returned.
//
// All random draws happen on a single stream in example order, and the
// per-example gradients are reduced in that same order, so results are
// bit-identical for any worker count.
inline AdaptResult adapt(const StereoModel& model, const ModelParams& theta0,
                         const std::vector<StereoPair>& domain_pairs,
                         const std::vector<StereoPair>& synth_pairs,
                         const std::vector<StereoPair>& val_pairs, const AdaptConfig& cfg,
                         std::ostream* log = nullptr) {
  if (!(cfg.r > 1.0)) throw std::invalid_argument("adapt: zoom ratio must exceed 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("adapt: batch size must be >= 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adapt: learning rate must be positive");
  if (cfg.k_max < 0) throw std::invalid_argument("adapt: negative iteration count");
  if (cfg.validate_every < 1) throw std::invalid_argument("adapt: validate_every must be >= 1");
  if (cfg.weights.patch_side < 1 || cfg.crop_size < cfg.weights.patch_side ||
      cfg.crop_size % cfg.weights.patch_side != 0)
    throw std::invalid_argument("adapt: crop size must be a positive multiple of the patch side");
  if (domain_pairs.empty() && synth_pairs.empty())
    throw std::invalid_argument("adapt: no training examples");
  for (const StereoPair& p : domain_pairs)
    if (p.origin != Origin::domain) throw std::invalid_argument("adapt: mis-tagged domain pair");
  for (const StereoPair& p : synth_pairs)
    if (p.origin != Origin::synthetic)
      throw std::invalid_argument("adapt: mis-tagged synthetic pair");

  const int n_dom = static_cast<int>(domain_pairs.size());
  const int n_total = n_dom + static_cast<int>(synth_pairs.size());

  Rng rng(cfg.seed);
  ExampleSampler sampler(n_total, rng);

  ModelParams theta = theta0;
  AdaptResult result;
  result.best_psnr = validate(model, theta, val_pairs);
  result.best_theta = theta;
  detail::log_line(log, std::string("{\"event\":\"val\",\"iter\":0,\"psnr\":") +
                            detail::num(result.best_psnr) + "}");

  struct WorkItem {
    StereoPair pair;
    bool is_domain = false;
  };

  for (int k = 1; k <= cfg.k_max; ++k) {
    std::vector<WorkItem> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = sampler.next(rng);
      const bool is_domain = idx < n_dom;
      const StereoPair& src =
          is_domain ? domain_pairs[static_cast<size_t>(idx)]
                    : synth_pairs[static_cast<size_t>(idx - n_dom)];
      if (src.height() < cfg.crop_size || src.width() < cfg.crop_size)
        throw std::invalid_argument("adapt: pair smaller than the training crop");
      const int y0 = rng.next_int(0, src.height() - cfg.crop_size);
      const int x0 = rng.next_int(0, src.width() - cfg.crop_size);
      StereoPair cropped = crop_pair(src, y0, x0, cfg.crop_size, cfg.crop_size);
      if (!is_domain) cropped = augment_synthetic(cropped, rng);
      batch.push_back({std::move(cropped), is_domain});
    }

    ParamGrad batch_grad;
    batch_grad.values.assign(theta.values.size(), 0.0);
    double sum_l1_dom = 0.0, sum_l1_syn = 0.0, sum_reg = 0.0, sum_total = 0.0;
    int count_dom = 0, count_syn = 0;
    for (const WorkItem& item : batch) {
      const auto pass = model.run(item.pair, theta);
      const Map2D& pred = pass->prediction();
      ExampleLossReport report;
      if (item.is_domain) {
        const Map2D target = zoom_target(model, theta, item.pair, cfg.r);
        std::vector<PatchGraph> graphs;
        if (cfg.weights.lambda_agg != 0.0)
          graphs = build_patch_graphs(item.pair.left, pred, target, cfg.weights);
        report = composite_loss(pred, item.pair, &target,
                                cfg.weights.lambda_agg != 0.0 ? &graphs : nullptr, cfg.weights);
        sum_l1_dom += report.l1;
        sum_reg += report.reg_mean;
        ++count_dom;
      } else {
        report = composite_loss(pred, item.pair, nullptr, nullptr, cfg.weights);
        sum_l1_syn += report.l1;
        ++count_syn;
      }
      if (!std::isfinite(report.total))
        throw std::runtime_error("adapt: non-finite loss at iteration " + std::to_string(k));
      sum_total += report.total;
      const ParamGrad g = pass->backward(report.cotangent);
      for (size_t i = 0; i < batch_grad.values.size(); ++i) batch_grad.values[i] += g.values[i];
    }
    const double inv_n = 1.0 / static_cast<double>(cfg.batch_size);
    for (double& v : batch_grad.values) v *= inv_n;
    sgd_step(theta, batch_grad, cfg.lr);

    detail::log_line(
        log, std::string("{\"iter\":") + std::to_string(k) +
                 ",\"l1_dom\":" + detail::num(count_dom ? sum_l1_dom / count_dom : 0.0) +
                 ",\"l1_syn\":" + detail::num(count_syn ? sum_l1_syn / count_syn : 0.0) +
                 ",\"reg\":" + detail::num(count_dom ? sum_reg / count_dom : 0.0) +
                 ",\"total\":" + detail::num(sum_total * inv_n) + "}");

    if (k % cfg.validate_every == 0) {
      const double psnr = validate(model, theta, val_pairs);
      detail::log_line(log, std::string("{\"event\":\"val\",\"iter\":") + std::to_string(k) +
                                ",\"psnr\":" + detail::num(psnr) + "}");
      if (psnr > result.best_psnr) {
        result.best_psnr = psnr;
        result.best_theta = theta;
      }
    }
  }
  result.final_theta = std::move(theta);
  return result;
}

}  // namespace zole
