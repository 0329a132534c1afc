#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "zole/core.hpp"

namespace zole {

// Per-patch exemplar stack: K feature vectors over the same rows x cols pixel
// lattice, already multiplied by their relevance weights.
struct ExemplarSet {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<double>> features;

  int m() const { return rows * cols; }
};

inline void check_exemplars(const ExemplarSet& ex) {
  const int m = ex.m();
  if (ex.rows <= 0 || ex.cols <= 0 || m < 2)
    throw std::invalid_argument("graph: patch must hold at least 2 pixels");
  for (const auto& f : ex.features) {
    if (static_cast<int>(f.size()) != m)
      throw std::invalid_argument("graph: exemplar length " + std::to_string(f.size()) +
                                  " differs from patch size " + std::to_string(m));
    for (double v : f)
      if (!std::isfinite(v)) throw std::invalid_argument("graph: non-finite exemplar value");
  }
}

// Squared vertex distance: sum of squared exemplar differences plus
// alpha * squared spatial offset on the patch lattice.
inline double pixel_distance_sq(const ExemplarSet& ex, int i, int j, double alpha) {
  const int m = ex.m();
  if (i < 0 || j < 0 || i >= m || j >= m)
    throw std::invalid_argument("pixel_distance_sq: vertex index out of range");
  double d = 0.0;
  for (const auto& f : ex.features) {
    const double diff = f[static_cast<size_t>(i)] - f[static_cast<size_t>(j)];
    d += diff * diff;
  }
  const double dy = static_cast<double>(i / ex.cols - j / ex.cols);
  const double dx = static_cast<double>(i % ex.cols - j % ex.cols);
  return d + alpha * (dy * dy + dx * dx);
}

// Smallest threshold that leaves every vertex with at least 4 edges: the
// maximum over vertices of the 4th-smallest distance to the others. Patches
// with m-1 <= 4 fall back to the complete graph. Works on squared distances
// throughout; callers compare d^2 against the returned value squared.
inline double select_epsilon_sq(const std::vector<double>& dist_sq, int m) {
  if (m < 2) throw std::invalid_argument("select_epsilon: need at least 2 vertices");
  if (dist_sq.size() != static_cast<size_t>(m) * m)
    throw std::invalid_argument("select_epsilon: expected a dense m*m distance table");
  if (m - 1 <= 4) {
    double mx = 0.0;
    for (double v : dist_sq) mx = std::max(mx, v);
    return mx;
  }
  double eps_sq = 0.0;
  std::vector<double> row(static_cast<size_t>(m) - 1);
  for (int i = 0; i < m; ++i) {
    size_t k = 0;
    for (int j = 0; j < m; ++j)
      if (j != i) row[k++] = dist_sq[static_cast<size_t>(i) * m + j];
    std::nth_element(row.begin(), row.begin() + 3, row.end());
    eps_sq = std::max(eps_sq, row[3]);
  }
  return eps_sq;
}

inline double select_epsilon(const std::vector<double>& dist_sq, int m) {
  return std::sqrt(select_epsilon_sq(dist_sq, m));
}

struct GraphEdge {
  int i = 0;
  int j = 0;  // i < j
  double w = 0.0;
};

// Sparse combinatorial Laplacian L = Degree - Adjacency of one patch graph.
struct PatchGraph {
  int m = 0;
  double epsilon = 0.0;
  std::vector<GraphEdge> edges;  // sorted by (i, j)
  std::vector<double> degree;

  void apply_laplacian(std::span<const double> s, std::span<double> out) const {
    if (s.size() != static_cast<size_t>(m) || out.size() != static_cast<size_t>(m))
      throw std::invalid_argument("apply_laplacian: signal length differs from vertex count");
    for (int i = 0; i < m; ++i) out[static_cast<size_t>(i)] = degree[static_cast<size_t>(i)] * s[static_cast<size_t>(i)];
    for (const GraphEdge& e : edges) {
      out[static_cast<size_t>(e.i)] -= e.w * s[static_cast<size_t>(e.j)];
      out[static_cast<size_t>(e.j)] -= e.w * s[static_cast<size_t>(e.i)];
    }
  }
};

inline PatchGraph build_graph(const ExemplarSet& ex, double alpha) {
  check_exemplars(ex);
  const int m = ex.m();
  std::vector<double> dist_sq(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double d = pixel_distance_sq(ex, i, j, alpha);
      dist_sq[static_cast<size_t>(i) * m + j] = d;
      dist_sq[static_cast<size_t>(j) * m + i] = d;
    }
  const double eps_sq = select_epsilon_sq(dist_sq, m);

  PatchGraph g;
  g.m = m;
  g.epsilon = std::sqrt(eps_sq);
  g.degree.assign(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double d = dist_sq[static_cast<size_t>(i) * m + j];
      if (d <= eps_sq) {
        const double w = std::exp(-d);
        g.edges.push_back(GraphEdge{i, j, w});
        g.degree[static_cast<size_t>(i)] += w;
        g.degree[static_cast<size_t>(j)] += w;
      }
    }
  return g;
}

// s^T L s, accumulated over edges: sum of w_ij (s_i - s_j)^2.
inline double regularizer_value(const PatchGraph& g, std::span<const double> s) {
  if (s.size() != static_cast<size_t>(g.m))
    throw std::invalid_argument("regularizer_value: signal length differs from vertex count");
  double acc = 0.0;
  for (const GraphEdge& e : g.edges) {
    const double d = s[static_cast<size_t>(e.i)] - s[static_cast<size_t>(e.j)];
    acc += e.w * d * d;
  }
  return acc;
}

// Gradient of s^T L s, which is 2 L s.
inline std::vector<double> regularizer_grad(const PatchGraph& g, std::span<const double> s) {
  std::vector<double> out(static_cast<size_t>(g.m));
  g.apply_laplacian(s, out);
  for (double& v : out) v *= 2.0;
  return out;
}

// Text form used by the graph-dump subcommand: a header line "m=<m> eps=<eps>"
// followed by one "i j w" line per edge in (i, j) order.
inline std::string dump_graph(const PatchGraph& g) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "m=%d eps=%.17g\n", g.m, g.epsilon);
  out += buf;
  for (const GraphEdge& e : g.edges) {
    std::snprintf(buf, sizeof buf, "%d %d %.17g\n", e.i, e.j, e.w);
    out += buf;
  }
  return out;
}

inline PatchGraph parse_graph_dump(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("graph dump: empty input");
  PatchGraph g;
  if (std::sscanf(header.c_str(), "m=%d eps=%lg", &g.m, &g.epsilon) != 2 || g.m < 2)
    throw std::runtime_error("graph dump: malformed header '" + header + "'");
  g.degree.assign(static_cast<size_t>(g.m), 0.0);
  std::string line;
  int prev_i = -1, prev_j = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GraphEdge e;
    if (std::sscanf(line.c_str(), "%d %d %lg", &e.i, &e.j, &e.w) != 3)
      throw std::runtime_error("graph dump: malformed edge line '" + line + "'");
    if (e.i < 0 || e.j <= e.i || e.j >= g.m)
      throw std::runtime_error("graph dump: edge endpoints out of order or range in '" + line + "'");
    if (e.i < prev_i || (e.i == prev_i && e.j <= prev_j))
      throw std::runtime_error("graph dump: edges not sorted by (i, j)");
    prev_i = e.i;
    prev_j = e.j;
    g.degree[static_cast<size_t>(e.i)] += e.w;
    g.degree[static_cast<size_t>(e.j)] += e.w;
    g.edges.push_back(e);
  }
  return g;
}

}  // namespace zole
