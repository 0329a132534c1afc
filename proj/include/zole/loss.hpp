#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "zole/core.hpp"
#include "zole/graph.hpp"

namespace zole {

struct LossWeights {
  double tau = 1.2;         // synthetic L1 weight
  double lambda_agg = 1.5;  // weight of the mean per-patch regularizer
  double w_left = 0.3;      // exemplar scale: gray left-view intensities
  double w_curr = 1.0;      // exemplar scale: current prediction
  double w_fine = 0.8;      // exemplar scale: zoomed target
  double alpha = 0.2;       // spatial term inside graph distances
  int patch_side = 20;
};

// Mean absolute difference and its subgradient; sign(0) is taken as 0.
struct L1Loss {
  double value = 0.0;
  Map2D cotangent;
};

inline L1Loss l1_loss(const Map2D& pred, const Map2D& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("l1_loss: shape mismatch");
  L1Loss out;
  out.cotangent = Map2D(pred.height, pred.width);
  const double inv_n = 1.0 / static_cast<double>(pred.data.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += std::abs(d);
    if (d > 0.0) out.cotangent.data[i] = inv_n;
    else if (d < 0.0) out.cotangent.data[i] = -inv_n;
  }
  out.value = acc * inv_n;
  return out;
}

// Exemplar features for one patch, in the fixed order (left, curr, fine),
// each scaled by its weight. The scales set how much say each cue has in the
// graph's edge structure.
inline ExemplarSet build_exemplars(const Map2D& left_gray, const Map2D& current,
                                   const Map2D& fine, const PatchGrid& grid, int j,
                                   const LossWeights& w) {
  if (!left_gray.same_shape(current) || !left_gray.same_shape(fine))
    throw std::invalid_argument("build_exemplars: shape mismatch");
  auto scaled = [&](const Map2D& src, double s) {
    std::vector<double> v = extract_patch(src, grid, j);
    for (double& x : v) x *= s;
    return v;
  };
  ExemplarSet ex;
  ex.rows = grid.patch_side;
  ex.cols = grid.patch_side;
  ex.features.push_back(scaled(left_gray, w.w_left));
  ex.features.push_back(scaled(current, w.w_curr));
  ex.features.push_back(scaled(fine, w.w_fine));
  return ex;
}

inline std::vector<PatchGraph> build_patch_graphs(const Image& left, const Map2D& current,
                                                  const Map2D& fine, const LossWeights& w) {
  if (left.height != current.height || left.width != current.width)
    throw std::invalid_argument("build_patch_graphs: left view and prediction shapes differ");
  const Map2D gray = to_gray(left);
  const PatchGrid grid = make_patch_grid(current.height, current.width, w.patch_side);
  std::vector<PatchGraph> graphs(static_cast<size_t>(grid.patch_count()));
#pragma omp parallel for schedule(static)
  for (int j = 0; j < grid.patch_count(); ++j)
    graphs[static_cast<size_t>(j)] =
        build_graph(build_exemplars(gray, current, fine, grid, j, w), w.alpha);
  return graphs;
}

// Mean per-patch quadratic form (1/M) sum_j s_j^T L_j s_j over the tiling,
// with the matching cotangent (1/M) * 2 L_j s_j scattered back. Any overall
// weight is the caller's to apply. The graphs are constants here; their own
// dependence on the prediction is deliberately not differentiated.
struct GraphLoss {
  double value = 0.0;
  Map2D cotangent;
};

inline GraphLoss graph_loss(const Map2D& pred, const std::vector<PatchGraph>& graphs,
                            const PatchGrid& grid) {
  if (pred.height != grid.rows * grid.patch_side || pred.width != grid.cols * grid.patch_side)
    throw std::invalid_argument("graph_loss: prediction does not match the patch grid");
  if (graphs.size() != static_cast<size_t>(grid.patch_count()))
    throw std::invalid_argument("graph_loss: expected " + std::to_string(grid.patch_count()) +
                                " patch graphs, got " + std::to_string(graphs.size()));
  GraphLoss out;
  out.cotangent = Map2D(pred.height, pred.width);
  const double inv_m = 1.0 / static_cast<double>(grid.patch_count());
  std::vector<double> parts(static_cast<size_t>(grid.patch_count()), 0.0);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < grid.patch_count(); ++j) {
    const std::vector<double> s = extract_patch(pred, grid, j);
    const PatchGraph& g = graphs[static_cast<size_t>(j)];
    parts[static_cast<size_t>(j)] = regularizer_value(g, s);
    std::vector<double> gs = regularizer_grad(g, s);
    for (double& v : gs) v *= inv_m;
    scatter_patch_add(out.cotangent, grid, j, gs);
  }
  double acc = 0.0;
  for (double v : parts) acc += v;
  out.value = acc * inv_m;
  return out;
}

// Per-example objective:
//   synthetic: total = tau * L1(pred, gt)
//   domain:    total = L1(pred, zoom_target) + lambda_agg * graph_loss
struct ExampleLossReport {
  Origin origin = Origin::synthetic;
  double l1 = 0.0;
  double reg_mean = 0.0;
  double total = 0.0;
  Map2D cotangent;
};

inline ExampleLossReport composite_loss(const Map2D& pred, const StereoPair& example,
                                        const Map2D* zoom_target,
                                        const std::vector<PatchGraph>* graphs,
                                        const LossWeights& w) {
  if (pred.height != example.height() || pred.width != example.width())
    throw std::invalid_argument("composite_loss: prediction shape differs from example");
  ExampleLossReport r;
  r.origin = example.origin;

  if (example.origin == Origin::synthetic) {
    L1Loss l1 = l1_loss(pred, *example.ground_truth);
    r.l1 = l1.value;
    r.total = w.tau * l1.value;
    for (double& v : l1.cotangent.data) v *= w.tau;
    r.cotangent = std::move(l1.cotangent);
    return r;
  }

  if (zoom_target == nullptr)
    throw std::invalid_argument("composite_loss: domain example needs a zoom target");
  L1Loss l1 = l1_loss(pred, *zoom_target);
  r.l1 = l1.value;
  r.total = l1.value;
  r.cotangent = std::move(l1.cotangent);
  if (w.lambda_agg == 0.0) return r;

  if (graphs == nullptr)
    throw std::invalid_argument("composite_loss: domain example needs patch graphs");
  const PatchGrid grid = make_patch_grid(pred.height, pred.width, w.patch_side);
  const GraphLoss gl = graph_loss(pred, *graphs, grid);
  r.reg_mean = gl.value;
  r.total += w.lambda_agg * gl.value;
  for (size_t i = 0; i < r.cotangent.data.size(); ++i)
    r.cotangent.data[i] += w.lambda_agg * gl.cotangent.data[i];
  return r;
}

}  // namespace zole
