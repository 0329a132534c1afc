#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "zole/core.hpp"
#include "zole/graph.hpp"

namespace {

using zole::ExemplarSet;
using zole::GraphEdge;
using zole::PatchGraph;
using zole::Rng;

ExemplarSet constant_exemplars(int rows, int cols, int k, double value) {
  ExemplarSet ex;
  ex.rows = rows;
  ex.cols = cols;
  ex.features.assign(static_cast<size_t>(k),
                     std::vector<double>(static_cast<size_t>(rows * cols), value));
  return ex;
}

ExemplarSet random_exemplars(int rows, int cols, int k, Rng& rng, double scale) {
  ExemplarSet ex;
  ex.rows = rows;
  ex.cols = cols;
  ex.features.resize(static_cast<size_t>(k));
  for (auto& f : ex.features) {
    f.resize(static_cast<size_t>(rows * cols));
    for (double& v : f) v = scale * rng.next_gaussian();
  }
  return ex;
}

std::vector<double> random_signal(int m, Rng& rng, double scale) {
  std::vector<double> s(static_cast<size_t>(m));
  for (double& v : s) v = scale * rng.next_gaussian();
  return s;
}

// Straight-line reimplementation of the graph construction: dense distance
// table, full sort per row for the threshold, then an unordered pairwise sum.
// Shares no code with build_graph beyond the exemplar container.
double oracle_regularizer(const ExemplarSet& ex, double alpha, const std::vector<double>& s) {
  const int m = ex.m();
  std::vector<std::vector<double>> d2(static_cast<size_t>(m),
                                      std::vector<double>(static_cast<size_t>(m), 0.0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (const auto& f : ex.features) {
        const double diff = f[static_cast<size_t>(i)] - f[static_cast<size_t>(j)];
        acc += diff * diff;
      }
      const double dy = i / ex.cols - j / ex.cols;
      const double dx = i % ex.cols - j % ex.cols;
      d2[static_cast<size_t>(i)][static_cast<size_t>(j)] = acc + alpha * (dy * dy + dx * dx);
    }

  double eps_sq;
  if (m - 1 <= 4) {
    eps_sq = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        eps_sq = std::max(eps_sq, d2[static_cast<size_t>(i)][static_cast<size_t>(j)]);
  } else {
    eps_sq = 0.0;
    for (int i = 0; i < m; ++i) {
      std::vector<double> row;
      for (int j = 0; j < m; ++j)
        if (j != i) row.push_back(d2[static_cast<size_t>(i)][static_cast<size_t>(j)]);
      std::sort(row.begin(), row.end());
      eps_sq = std::max(eps_sq, row[3]);
    }
  }

  double value = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double d = d2[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (d <= eps_sq) {
        const double diff = s[static_cast<size_t>(i)] - s[static_cast<size_t>(j)];
        value += std::exp(-d) * diff * diff;
      }
    }
  return value;
}

std::vector<int> degree_counts(const PatchGraph& g) {
  std::vector<int> counts(static_cast<size_t>(g.m), 0);
  for (const GraphEdge& e : g.edges) {
    ++counts[static_cast<size_t>(e.i)];
    ++counts[static_cast<size_t>(e.j)];
  }
  return counts;
}

TEST(PixelDistance, HandComputedCase) {
  // Two pixels side by side, two exemplars. Feature gaps 2 and 2, spatial
  // offset 1 pixel at alpha = 0.2: 4 + 4 + 0.2 = 8.2.
  ExemplarSet ex;
  ex.rows = 1;
  ex.cols = 2;
  ex.features = {{1.0, 3.0}, {2.0, 0.0}};
  EXPECT_DOUBLE_EQ(zole::pixel_distance_sq(ex, 0, 1, 0.2), 8.2);
  EXPECT_DOUBLE_EQ(zole::pixel_distance_sq(ex, 1, 0, 0.2), 8.2);
  EXPECT_DOUBLE_EQ(zole::pixel_distance_sq(ex, 0, 0, 0.2), 0.0);
}

TEST(PixelDistance, IndexOutOfRangeThrows) {
  ExemplarSet ex = constant_exemplars(2, 2, 1, 0.0);
  EXPECT_THROW(zole::pixel_distance_sq(ex, 0, 4, 0.2), std::invalid_argument);
  EXPECT_THROW(zole::pixel_distance_sq(ex, -1, 0, 0.2), std::invalid_argument);
}

TEST(ExemplarChecks, RejectBadInputs) {
  EXPECT_THROW(zole::build_graph(constant_exemplars(1, 1, 2, 0.0), 0.2), std::invalid_argument);

  ExemplarSet short_feature = constant_exemplars(2, 3, 2, 1.0);
  short_feature.features[1].pop_back();
  EXPECT_THROW(zole::build_graph(short_feature, 0.2), std::invalid_argument);

  ExemplarSet with_nan = constant_exemplars(2, 3, 2, 1.0);
  with_nan.features[0][2] = std::nan("");
  EXPECT_THROW(zole::build_graph(with_nan, 0.2), std::invalid_argument);
}

TEST(EpsilonSelection, ValidatesTable) {
  EXPECT_THROW(zole::select_epsilon_sq({0.0}, 1), std::invalid_argument);
  EXPECT_THROW(zole::select_epsilon_sq({0.0, 1.0, 1.0}, 2), std::invalid_argument);
}

// With constant exemplars every distance is purely spatial, so the threshold
// and edge set can be enumerated by hand. On a 3x3 patch the 4th-smallest
// squared offset seen from a corner is 4, the worst over all vertices, so
// eps^2 = alpha * 4 and pairs up to two pixels apart in a line survive.
TEST(BuildGraph, ThreeByThreeConstantPatch) {
  const double alpha = 0.2;
  PatchGraph g = zole::build_graph(constant_exemplars(3, 3, 3, 7.0), alpha);
  EXPECT_EQ(g.m, 9);
  EXPECT_NEAR(g.epsilon, std::sqrt(alpha * 4.0), 1e-15);

  for (const GraphEdge& e : g.edges) {
    const double dy = e.i / 3 - e.j / 3;
    const double dx = e.i % 3 - e.j % 3;
    const double l2 = dy * dy + dx * dx;
    EXPECT_LE(l2, 4.0);
    EXPECT_NEAR(e.w, std::exp(-alpha * l2), 1e-15);
  }

  // 12 side pairs, 8 diagonal pairs, 6 two-apart pairs; nothing at l^2 = 5, 8.
  EXPECT_EQ(g.edges.size(), 26u);
  const std::vector<int> counts = degree_counts(g);
  EXPECT_EQ(*std::min_element(counts.begin(), counts.end()), 5);
}

TEST(BuildGraph, TwoByTwoFallsBackToCompleteGraph) {
  PatchGraph g = zole::build_graph(constant_exemplars(2, 2, 3, 1.0), 0.2);
  EXPECT_EQ(g.m, 4);
  ASSERT_EQ(g.edges.size(), 6u);
  for (const GraphEdge& e : g.edges) {
    const bool diagonal = (e.i == 0 && e.j == 3) || (e.i == 1 && e.j == 2);
    EXPECT_NEAR(e.w, diagonal ? std::exp(-0.4) : std::exp(-0.2), 1e-15);
  }
  EXPECT_NEAR(std::exp(-0.2), 0.8187, 5e-5);
  EXPECT_NEAR(std::exp(-0.4), 0.6703, 5e-5);
}

TEST(BuildGraph, ThreeVertexLineIsComplete) {
  PatchGraph g = zole::build_graph(constant_exemplars(1, 3, 2, 0.5), 0.2);
  EXPECT_EQ(g.m, 3);
  EXPECT_EQ(g.edges.size(), 3u);
  for (int c : degree_counts(g)) EXPECT_EQ(c, 2);
}

TEST(BuildGraph, InvariantsHoldOnRandomPatches) {
  Rng rng(901);
  const int sides[] = {2, 3, 5, 8};
  for (int trial = 0; trial < 40; ++trial) {
    const int p = sides[trial % 4];
    ExemplarSet ex = random_exemplars(p, p, 3, rng, 4.0);
    PatchGraph g = zole::build_graph(ex, 0.2);
    const int m = g.m;
    ASSERT_EQ(m, p * p);

    int prev_i = -1, prev_j = -1;
    for (const GraphEdge& e : g.edges) {
      ASSERT_LT(e.i, e.j);
      ASSERT_TRUE(e.i > prev_i || (e.i == prev_i && e.j > prev_j));
      prev_i = e.i;
      prev_j = e.j;
      ASSERT_GT(e.w, 0.0);
      ASSERT_LE(e.w, 1.0);
    }

    const std::vector<int> counts = degree_counts(g);
    const int need = std::min(4, m - 1);
    for (int c : counts) ASSERT_GE(c, need);

    // Constants are annihilated and quadratic forms stay nonnegative.
    std::vector<double> ones(static_cast<size_t>(m), 1.0), out(static_cast<size_t>(m));
    g.apply_laplacian(ones, out);
    for (double v : out) ASSERT_LE(std::abs(v), 1e-12);

    for (int q = 0; q < 20; ++q) {
      std::vector<double> x = random_signal(m, rng, 3.0);
      g.apply_laplacian(x, out);
      const double quad = std::inner_product(x.begin(), x.end(), out.begin(), 0.0);
      ASSERT_GE(quad, -1e-12);
      const double via_edges = zole::regularizer_value(g, x);
      ASSERT_NEAR(quad, via_edges, 1e-9 * std::max(1.0, std::abs(via_edges)));
    }
  }
}

TEST(Regularizer, MatchesPairwiseOracle) {
  Rng rng(777);
  const int sides[] = {2, 3, 5, 8};
  for (int trial = 0; trial < 40; ++trial) {
    const int p = sides[trial % 4];
    ExemplarSet ex = random_exemplars(p, p, 3, rng, 2.5);
    std::vector<double> s = random_signal(p * p, rng, 5.0);
    PatchGraph g = zole::build_graph(ex, 0.2);
    const double got = zole::regularizer_value(g, s);
    const double want = oracle_regularizer(ex, 0.2, s);
    ASSERT_NEAR(got, want, 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST(Regularizer, UniformCompleteGraphHandValue) {
  // alpha = 0 with constant exemplars puts every pairwise distance at zero:
  // all six weights are exactly 1. The four cross pairs contribute 100 each.
  PatchGraph g = zole::build_graph(constant_exemplars(2, 2, 3, 9.0), 0.0);
  ASSERT_EQ(g.edges.size(), 6u);
  for (const GraphEdge& e : g.edges) EXPECT_EQ(e.w, 1.0);
  const std::vector<double> s = {0.0, 0.0, 10.0, 10.0};
  EXPECT_DOUBLE_EQ(zole::regularizer_value(g, s), 400.0);
}

TEST(Regularizer, ConstantSignalGivesZero) {
  Rng rng(31);
  ExemplarSet ex = random_exemplars(5, 5, 3, rng, 2.0);
  PatchGraph g = zole::build_graph(ex, 0.2);
  std::vector<double> s(25, 4.25);
  EXPECT_DOUBLE_EQ(zole::regularizer_value(g, s), 0.0);
  for (double v : zole::regularizer_grad(g, s)) EXPECT_LE(std::abs(v), 1e-12);
}

TEST(Regularizer, SignalLengthMismatchThrows) {
  PatchGraph g = zole::build_graph(constant_exemplars(2, 2, 1, 0.0), 0.2);
  std::vector<double> s(3, 0.0);
  EXPECT_THROW(zole::regularizer_value(g, s), std::invalid_argument);
  std::vector<double> out(5);
  std::vector<double> s4(4, 0.0);
  EXPECT_THROW(g.apply_laplacian(s4, out), std::invalid_argument);
}

TEST(RegularizerGrad, MatchesCentralDifferences) {
  Rng rng(555);
  for (int trial = 0; trial < 10; ++trial) {
    const int p = 3 + trial % 3;
    ExemplarSet ex = random_exemplars(p, p, 3, rng, 2.0);
    PatchGraph g = zole::build_graph(ex, 0.2);
    std::vector<double> s = random_signal(p * p, rng, 3.0);
    const std::vector<double> grad = zole::regularizer_grad(g, s);

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      std::vector<double> plus = s, minus = s;
      plus[i] += h;
      minus[i] -= h;
      const double fd =
          (zole::regularizer_value(g, plus) - zole::regularizer_value(g, minus)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
    }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(RegularizerGrad, BasisPerturbationReadsLaplacianColumn) {
  Rng rng(212);
  ExemplarSet ex = random_exemplars(4, 4, 3, rng, 1.5);
  PatchGraph g = zole::build_graph(ex, 0.2);
  const int m = g.m;
  const double t = 3.5;
  for (int i = 0; i < m; ++i) {
    std::vector<double> s(static_cast<size_t>(m), 2.0);
    s[static_cast<size_t>(i)] += t;

    std::vector<double> basis(static_cast<size_t>(m), 0.0), column(static_cast<size_t>(m));
    basis[static_cast<size_t>(i)] = 1.0;
    g.apply_laplacian(basis, column);

    const std::vector<double> grad = zole::regularizer_grad(g, s);
    for (int j = 0; j < m; ++j)
      ASSERT_NEAR(grad[static_cast<size_t>(j)], 2.0 * t * column[static_cast<size_t>(j)], 1e-12);
  }
}

TEST(GraphDump, RoundTripPreservesEverything) {
  Rng rng(404);
  ExemplarSet ex = random_exemplars(5, 5, 3, rng, 2.0);
  PatchGraph g = zole::build_graph(ex, 0.2);
  PatchGraph back = zole::parse_graph_dump(zole::dump_graph(g));

  EXPECT_EQ(back.m, g.m);
  EXPECT_EQ(back.epsilon, g.epsilon);
  ASSERT_EQ(back.edges.size(), g.edges.size());
  for (size_t i = 0; i < g.edges.size(); ++i) {
    EXPECT_EQ(back.edges[i].i, g.edges[i].i);
    EXPECT_EQ(back.edges[i].j, g.edges[i].j);
    EXPECT_EQ(back.edges[i].w, g.edges[i].w);
  }
  ASSERT_EQ(back.degree.size(), g.degree.size());
  for (size_t i = 0; i < g.degree.size(); ++i) EXPECT_EQ(back.degree[i], g.degree[i]);
}

TEST(GraphDump, RejectsMalformedText) {
  EXPECT_THROW(zole::parse_graph_dump(""), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("edges=4\n"), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("m=1 eps=0\n"), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("m=4 eps=1\n0 1\n"), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("m=4 eps=1\n1 0 0.5\n"), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("m=4 eps=1\n0 4 0.5\n"), std::runtime_error);
  EXPECT_THROW(zole::parse_graph_dump("m=4 eps=1\n0 2 0.5\n0 1 0.5\n"), std::runtime_error);
}

// Conjugate gradient for (I + lambda L) s = d, written against apply_laplacian
// only. The system is symmetric positive definite for any lambda >= 0.
std::vector<double> solve_regularized(const PatchGraph& g, const std::vector<double>& d,
                                      double lambda) {
  const size_t m = d.size();
  auto apply = [&](const std::vector<double>& x, std::vector<double>& out) {
    g.apply_laplacian(x, out);
    for (size_t i = 0; i < m; ++i) out[i] = x[i] + lambda * out[i];
  };

  std::vector<double> s(m, 0.0), r = d, p = d, ap(m);
  double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  for (size_t iter = 0; iter < 4 * m && rr > 1e-24; ++iter) {
    apply(p, ap);
    const double pap = std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
    const double alpha = rr / pap;
    for (size_t i = 0; i < m; ++i) {
      s[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_next = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    for (size_t i = 0; i < m; ++i) p[i] = r[i] + (rr_next / rr) * p[i];
    rr = rr_next;
  }
  return s;
}

// Mean value of the right half minus the left half of a p x p signal with a
// vertical boundary down the middle.
double step_contrast(const std::vector<double>& s, int p) {
  double left = 0.0, right = 0.0;
  int nl = 0, nr = 0;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double v = s[static_cast<size_t>(y * p + x)];
      if (x < p / 2) {
        left += v;
        ++nl;
      } else {
        right += v;
        ++nr;
      }
    }
  return right / nr - left / nl;
}

ExemplarSet step_and_flat_exemplars(int p, double left_step, double curr_step, double fine_step) {
  ExemplarSet ex;
  ex.rows = p;
  ex.cols = p;
  ex.features.assign(3, std::vector<double>(static_cast<size_t>(p * p), 0.0));
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const size_t i = static_cast<size_t>(y * p + x);
      const bool right = x >= p / 2;
      ex.features[0][i] = 12.0 + (right ? left_step : 0.0);
      ex.features[1][i] = 5.0 + (right ? curr_step : 0.0);
      ex.features[2][i] = 1.6 + (right ? fine_step : 0.0);
    }
  return ex;
}

// When the reference view and the zoomed target both see the discontinuity,
// the graph drops every edge across it and the quadratic smoother leaves the
// step in the data term standing.
TEST(EdgeBehaviour, StepSharedByImageAndTargetSurvivesSmoothing) {
  const int p = 8;
  ExemplarSet ex = step_and_flat_exemplars(p, 30.0, 0.0, 6.4);
  PatchGraph g = zole::build_graph(ex, 0.2);

  std::vector<double> d(static_cast<size_t>(p * p));
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) d[static_cast<size_t>(y * p + x)] = x < p / 2 ? 2.0 : 10.0;

  const std::vector<double> s = solve_regularized(g, d, 1.0);
  const double before = step_contrast(d, p);
  const double after = step_contrast(s, p);
  EXPECT_GE(after, 0.8 * before);
}

// A pattern only the current prediction believes in must not be pushed into
// the output: smoothing a flat signal stays flat.
TEST(EdgeBehaviour, PatternOnlyInPredictionIsNotImprinted) {
  const int p = 8;
  const double curr_step = 8.0;
  ExemplarSet ex = step_and_flat_exemplars(p, 0.0, curr_step, 0.0);
  PatchGraph g = zole::build_graph(ex, 0.2);

  std::vector<double> d(static_cast<size_t>(p * p), 5.0);
  const std::vector<double> s = solve_regularized(g, d, 1.0);

  double lo = s[0], hi = s[0];
  for (double v : s) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LE(hi - lo, 0.05 * curr_step);
  EXPECT_LE(std::abs(step_contrast(s, p)), 0.05 * curr_step);
}

}  // namespace
