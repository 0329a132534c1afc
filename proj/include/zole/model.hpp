#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zole/core.hpp"

namespace zole {

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;
  size_t count = 0;
};

struct ParamLayout {
  std::vector<TensorSpec> tensors;
  size_t total = 0;

  const TensorSpec& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw std::invalid_argument("param layout: no tensor named '" + name + "'");
  }
};

// Flat parameter vector; the layout names the slices. Gradients share the
// same flat ordering.
struct ModelParams {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;
};

struct ParamGrad {
  std::vector<double> values;
};

inline void sgd_step(ModelParams& params, const ParamGrad& grad, double lr) {
  if (grad.values.size() != params.values.size())
    throw std::invalid_argument("sgd_step: gradient length differs from parameter length");
  for (size_t i = 0; i < params.values.size(); ++i) {
    if (!std::isfinite(grad.values[i]))
      throw std::runtime_error("sgd_step: non-finite gradient component");
    params.values[i] -= lr * grad.values[i];
  }
}

// One forward evaluation that can later be pulled back: backward(cot) returns
// d<cot, prediction>/dTheta exactly for the computation that produced
// prediction(). Keeping the pair decouples training-loop structure from any
// specific network.
class ForwardPass {
 public:
  virtual ~ForwardPass() = default;
  virtual const Map2D& prediction() const = 0;
  virtual ParamGrad backward(const Map2D& cotangent) const = 0;
};

class StereoModel {
 public:
  virtual ~StereoModel() = default;
  virtual std::unique_ptr<ForwardPass> run(const StereoPair& pair, const ModelParams& theta) const = 0;
  virtual double max_disparity() const = 0;

  Map2D forward(const StereoPair& pair, const ModelParams& theta) const {
    return run(pair, theta)->prediction();
  }
  ParamGrad backward(const StereoPair& pair, const ModelParams& theta, const Map2D& cotangent) const {
    return run(pair, theta)->backward(cotangent);
  }
};

namespace detail {

struct PlaneSet {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  PlaneSet() = default;
  PlaneSet(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}
  double* plane(int i) { return v.data() + static_cast<size_t>(i) * h * w; }
  const double* plane(int i) const { return v.data() + static_cast<size_t>(i) * h * w; }
};

// out[o] += conv(in, w[o]) over a 3x3 window with zero padding; out must hold
// the bias before the call. Zero padding is realized by clipping the
// accumulation ranges instead of testing per pixel.
inline void conv3x3_accumulate(const PlaneSet& in, const double* w, PlaneSet& out) {
  const int h = in.h, wd = in.w, ic = in.c, oc = out.c;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < oc; ++o) {
    double* dst_plane = out.plane(o);
    for (int c = 0; c < ic; ++c) {
      const double* src_plane = in.plane(c);
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[((static_cast<size_t>(o) * ic + c) * 3 + ky) * 3 + kx];
          const int x0 = std::max(0, 1 - kx), x1 = std::min(wd, wd + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            double* dst = dst_plane + static_cast<size_t>(y) * wd;
            const double* src = src_plane + static_cast<size_t>(y + ky - 1) * wd + (kx - 1);
            for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

inline void conv3x3_weight_grad(const PlaneSet& in, const PlaneSet& dout, double* dw, double* db) {
  const int h = in.h, wd = in.w, ic = in.c, oc = dout.c;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < oc; ++o) {
    const double* dplane = dout.plane(o);
    for (int c = 0; c < ic; ++c) {
      const double* splane = in.plane(c);
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const int x0 = std::max(0, 1 - kx), x1 = std::min(wd, wd + 1 - kx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* d = dplane + static_cast<size_t>(y) * wd;
            const double* s = splane + static_cast<size_t>(y + ky - 1) * wd + (kx - 1);
            for (int x = x0; x < x1; ++x) acc += d[x] * s[x];
          }
          dw[((static_cast<size_t>(o) * ic + c) * 3 + ky) * 3 + kx] += acc;
        }
      }
    }
    double bacc = 0.0;
    const size_t n = static_cast<size_t>(h) * wd;
    for (size_t i = 0; i < n; ++i) bacc += dplane[i];
    db[o] += bacc;
  }
}

inline void conv3x3_input_grad(const double* w, const PlaneSet& dout, PlaneSet& din) {
  const int h = din.h, wd = din.w, ic = din.c, oc = dout.c;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ic; ++c) {
    double* dplane = din.plane(c);
    for (int o = 0; o < oc; ++o) {
      const double* gplane = dout.plane(o);
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[((static_cast<size_t>(o) * ic + c) * 3 + ky) * 3 + kx];
          const int x0 = std::max(0, 1 - kx), x1 = std::min(wd, wd + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            const double* g = gplane + static_cast<size_t>(y) * wd;
            double* d = dplane + static_cast<size_t>(y + ky - 1) * wd + (kx - 1);
            for (int x = x0; x < x1; ++x) d[x] += wv * g[x];
          }
        }
      }
    }
  }
}

// softplus(x) = max(x,0) + log1p(exp(-|x|)); the matching sigmoid comes out
// of the same exp, so the backward pass needs no further transcendentals.
inline void softplus_forward(PlaneSet& act, PlaneSet& sig) {
  const size_t n = act.v.size();
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double x = act.v[static_cast<size_t>(i)];
    const double e = std::exp(-std::abs(x));
    act.v[static_cast<size_t>(i)] = std::max(x, 0.0) + std::log1p(e);
    sig.v[static_cast<size_t>(i)] = x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
}

inline void check_finite(const double* v, size_t n, const char* stage) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(v[i]))
      throw std::runtime_error(std::string("model: non-finite activation in ") + stage);
}

}  // namespace detail

// Reference stereo network, fully differentiable and intentionally small:
// a shared two-layer 3x3 conv feature extractor (8 channels each, softplus),
// a correlation cost volume over d in {0..d_max} where out-of-bounds right
// samples take the worst cost among that pixel's in-bounds candidates, and a
// soft-argmin readout with learnable sharpness beta = exp(beta_log).
// Intensities are standardized to [-1,1] before the first convolution so the
// correlation stays in soft-argmin's responsive range at beta = 1.
class ToyStereoModel : public StereoModel {
 public:
  static constexpr int kFeat = 8;

  ToyStereoModel(int channels, int max_disparity) : channels_(channels), max_disp_(max_disparity) {
    if (channels != 1 && channels != 3)
      throw std::invalid_argument("ToyStereoModel: channels must be 1 or 3");
    if (max_disparity < 1) throw std::invalid_argument("ToyStereoModel: max disparity must be >= 1");
    auto lay = std::make_shared<ParamLayout>();
    auto add = [&lay](const std::string& name, std::vector<int> shape) {
      TensorSpec t;
      t.name = name;
      t.shape = std::move(shape);
      t.count = 1;
      for (int d : t.shape) t.count *= static_cast<size_t>(d);
      t.offset = lay->total;
      lay->total += t.count;
      lay->tensors.push_back(std::move(t));
    };
    add("conv1.weight", {kFeat, channels, 3, 3});
    add("conv1.bias", {kFeat});
    add("conv2.weight", {kFeat, kFeat, 3, 3});
    add("conv2.bias", {kFeat});
    add("beta_log", {1});
    layout_ = std::move(lay);
  }

  int channels() const { return channels_; }
  double max_disparity() const override { return static_cast<double>(max_disp_); }
  int max_disparity_int() const { return max_disp_; }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }

  // Conv weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero,
  // beta_log zero so beta starts at 1.
  ModelParams init_params(Rng& rng) const {
    ModelParams p;
    p.layout = layout_;
    p.values.assign(layout_->total, 0.0);
    auto fill_uniform = [&](const TensorSpec& t, double limit) {
      for (size_t i = 0; i < t.count; ++i)
        p.values[t.offset + i] = (2.0 * rng.next_double() - 1.0) * limit;
    };
    const double lim1 = std::sqrt(6.0 / (channels_ * 9.0 + kFeat * 9.0));
    const double lim2 = std::sqrt(6.0 / (kFeat * 9.0 + kFeat * 9.0));
    fill_uniform(layout_->find("conv1.weight"), lim1);
    fill_uniform(layout_->find("conv2.weight"), lim2);
    return p;
  }

  std::unique_ptr<ForwardPass> run(const StereoPair& pair, const ModelParams& theta) const override;

 private:
  int channels_;
  int max_disp_;
  std::shared_ptr<const ParamLayout> layout_;

  friend class ToyForwardPass;
};

class ToyForwardPass : public ForwardPass {
 public:
  ToyForwardPass(const ToyStereoModel& model, const StereoPair& pair, const ModelParams& theta)
      : model_(model), h_(pair.height()), w_(pair.width()), theta_(theta.values) {
    if (theta.values.size() != model.layout()->total)
      throw std::invalid_argument("model: parameter vector length differs from layout");
    if (pair.left.channels != model.channels_)
      throw std::invalid_argument("model: pair has " + std::to_string(pair.left.channels) +
                                  " channels, model expects " + std::to_string(model.channels_));
    const auto& lay = *model.layout();
    w1_ = theta_.data() + lay.find("conv1.weight").offset;
    b1_ = theta_.data() + lay.find("conv1.bias").offset;
    w2_ = theta_.data() + lay.find("conv2.weight").offset;
    b2_ = theta_.data() + lay.find("conv2.bias").offset;
    beta_ = std::exp(theta_[lay.find("beta_log").offset]);

    extract_features(pair.left, inL_, act1L_, sig1L_, act2L_, sig2L_, featL_);
    extract_features(pair.right, inR_, act1R_, sig1R_, act2R_, sig2R_, featR_);
    build_cost_volume();
    soft_argmin();
  }

  const Map2D& prediction() const override { return pred_; }
  ParamGrad backward(const Map2D& cotangent) const override;

 private:
  static constexpr int F = ToyStereoModel::kFeat;

  const ToyStereoModel& model_;
  int h_, w_;
  std::vector<double> theta_;
  const double *w1_, *b1_, *w2_, *b2_;
  double beta_ = 1.0;

  detail::PlaneSet inL_, act1L_, sig1L_, act2L_, sig2L_;
  detail::PlaneSet inR_, act1R_, sig1R_, act2R_, sig2R_;
  std::vector<double> featL_, featR_;  // [y][x][o]
  std::vector<double> cost_, prob_;    // [y][x][d]
  std::vector<int32_t> worst_idx_;     // argmax of the valid costs, -1 if all valid
  Map2D pred_;

  void extract_features(const Image& view, detail::PlaneSet& in, detail::PlaneSet& act1,
                        detail::PlaneSet& sig1, detail::PlaneSet& act2, detail::PlaneSet& sig2,
                        std::vector<double>& feat) const {
    const int c = model_.channels_;
    in = detail::PlaneSet(c, h_, w_);
    for (int ci = 0; ci < c; ++ci) {
      double* plane = in.plane(ci);
      for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x)
          plane[static_cast<size_t>(y) * w_ + x] = (view.at(y, x, ci) - 127.5) / 127.5;
    }
    act1 = detail::PlaneSet(F, h_, w_);
    sig1 = detail::PlaneSet(F, h_, w_);
    for (int o = 0; o < F; ++o)
      std::fill_n(act1.plane(o), static_cast<size_t>(h_) * w_, b1_[o]);
    detail::conv3x3_accumulate(in, w1_, act1);
    detail::softplus_forward(act1, sig1);
    detail::check_finite(act1.v.data(), act1.v.size(), "conv1");

    act2 = detail::PlaneSet(F, h_, w_);
    sig2 = detail::PlaneSet(F, h_, w_);
    for (int o = 0; o < F; ++o)
      std::fill_n(act2.plane(o), static_cast<size_t>(h_) * w_, b2_[o]);
    detail::conv3x3_accumulate(act1, w2_, act2);
    detail::softplus_forward(act2, sig2);
    detail::check_finite(act2.v.data(), act2.v.size(), "conv2");

    feat.resize(static_cast<size_t>(h_) * w_ * F);
    for (int o = 0; o < F; ++o) {
      const double* plane = act2.plane(o);
      for (size_t i = 0; i < static_cast<size_t>(h_) * w_; ++i) feat[i * F + o] = plane[i];
    }
  }

  void build_cost_volume() {
    const int dmax = model_.max_disp_;
    const int nd = dmax + 1;
    cost_.assign(static_cast<size_t>(h_) * w_ * nd, 0.0);
    worst_idx_.assign(static_cast<size_t>(h_) * w_, -1);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const size_t px = static_cast<size_t>(y) * w_ + x;
        const double* fl = featL_.data() + px * F;
        double* cc = cost_.data() + px * nd;
        const int dv = std::min(dmax, x);
        for (int d = 0; d <= dv; ++d) {
          const double* fr = featR_.data() + (px - static_cast<size_t>(d)) * F;
          double acc = 0.0;
          for (int o = 0; o < F; ++o) acc += fl[o] * fr[o];
          cc[d] = -acc;
        }
        if (dv < dmax) {
          int wi = 0;
          for (int d = 1; d <= dv; ++d)
            if (cc[d] > cc[wi]) wi = d;
          for (int d = dv + 1; d <= dmax; ++d) cc[d] = cc[wi];
          worst_idx_[px] = wi;
        }
      }
    }
    detail::check_finite(cost_.data(), cost_.size(), "cost volume");
  }

  void soft_argmin() {
    const int nd = model_.max_disp_ + 1;
    prob_.assign(cost_.size(), 0.0);
    pred_ = Map2D(h_, w_);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const size_t px = static_cast<size_t>(y) * w_ + x;
        const double* cc = cost_.data() + px * nd;
        double* pp = prob_.data() + px * nd;
        double amax = -beta_ * cc[0];
        for (int d = 1; d < nd; ++d) amax = std::max(amax, -beta_ * cc[d]);
        double z = 0.0;
        for (int d = 0; d < nd; ++d) {
          const double e = std::exp(-beta_ * cc[d] - amax);
          pp[d] = e;
          z += e;
        }
        double dv = 0.0;
        for (int d = 0; d < nd; ++d) {
          pp[d] /= z;
          dv += d * pp[d];
        }
        pred_.at(y, x) = std::clamp(dv, 0.0, static_cast<double>(nd - 1));
      }
    }
    detail::check_finite(pred_.data.data(), pred_.data.size(), "soft-argmin");
  }
};

inline ParamGrad ToyForwardPass::backward(const Map2D& cotangent) const {
  if (cotangent.height != h_ || cotangent.width != w_)
    throw std::invalid_argument("model backward: cotangent dims differ from prediction");
  const int dmax = model_.max_disp_;
  const int nd = dmax + 1;
  const auto& lay = *model_.layout();
  ParamGrad grad;
  grad.values.assign(lay.total, 0.0);
  double* dw1 = grad.values.data() + lay.find("conv1.weight").offset;
  double* db1 = grad.values.data() + lay.find("conv1.bias").offset;
  double* dw2 = grad.values.data() + lay.find("conv2.weight").offset;
  double* db2 = grad.values.data() + lay.find("conv2.bias").offset;

  // Soft-argmin and cost-volume pullback; invalid candidates hand their
  // gradient to the valid cost they copied.
  std::vector<double> dcost(cost_.size(), 0.0);
  std::vector<double> dbeta_rows(static_cast<size_t>(h_), 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h_; ++y) {
    double acc_beta = 0.0;
    for (int x = 0; x < w_; ++x) {
      const size_t px = static_cast<size_t>(y) * w_ + x;
      const double g = cotangent.at(y, x);
      const double dv = pred_.at(y, x);
      const double* pp = prob_.data() + px * nd;
      const double* cc = cost_.data() + px * nd;
      double* dc = dcost.data() + px * nd;
      for (int d = 0; d < nd; ++d) {
        const double da = g * pp[d] * (d - dv);
        dc[d] = -beta_ * da;
        acc_beta -= da * cc[d];
      }
      const int wi = worst_idx_[px];
      if (wi >= 0) {
        const int dvld = std::min(dmax, x);
        for (int d = dvld + 1; d <= dmax; ++d) dc[wi] += dc[d];
      }
    }
    dbeta_rows[static_cast<size_t>(y)] = acc_beta;
  }
  double dbeta = 0.0;
  for (double v : dbeta_rows) dbeta += v;
  grad.values[lay.find("beta_log").offset] = dbeta * beta_;

  // Correlation pullback into both feature stacks; same-row writes only, so
  // rows parallelize without races.
  std::vector<double> dfeatL(featL_.size(), 0.0), dfeatR(featR_.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h_; ++y) {
    for (int x = 0; x < w_; ++x) {
      const size_t px = static_cast<size_t>(y) * w_ + x;
      const double* dc = dcost.data() + px * nd;
      const double* fl = featL_.data() + px * F;
      double* dfl = dfeatL.data() + px * F;
      const int dvld = std::min(dmax, x);
      for (int d = 0; d <= dvld; ++d) {
        const double wv = dc[d];
        if (wv == 0.0) continue;
        const double* fr = featR_.data() + (px - static_cast<size_t>(d)) * F;
        double* dfr = dfeatR.data() + (px - static_cast<size_t>(d)) * F;
        for (int o = 0; o < F; ++o) {
          dfl[o] -= wv * fr[o];
          dfr[o] -= wv * fl[o];
        }
      }
    }
  }

  // Shared extractor: both views accumulate into the same weight gradients.
  auto backprop_view = [&](const std::vector<double>& dfeat, const detail::PlaneSet& in,
                           const detail::PlaneSet& act1, const detail::PlaneSet& sig1,
                           const detail::PlaneSet& sig2) {
    detail::PlaneSet dpre2(F, h_, w_);
    for (int o = 0; o < F; ++o) {
      double* dst = dpre2.plane(o);
      const double* sg = sig2.plane(o);
      for (size_t i = 0; i < static_cast<size_t>(h_) * w_; ++i)
        dst[i] = dfeat[i * F + o] * sg[i];
    }
    detail::conv3x3_weight_grad(act1, dpre2, dw2, db2);
    detail::PlaneSet dact1(F, h_, w_);
    detail::conv3x3_input_grad(w2_, dpre2, dact1);
    const size_t n = static_cast<size_t>(h_) * w_;
#pragma omp parallel for schedule(static)
    for (int o = 0; o < F; ++o) {
      double* d = dact1.plane(o);
      const double* sg = sig1.plane(o);
      for (size_t i = 0; i < n; ++i) d[i] *= sg[i];
    }
    detail::conv3x3_weight_grad(in, dact1, dw1, db1);
  };
  backprop_view(dfeatL, inL_, act1L_, sig1L_, sig2L_);
  backprop_view(dfeatR, inR_, act1R_, sig1R_, sig2R_);
  for (double v : grad.values)
    if (!std::isfinite(v)) throw std::runtime_error("model backward: non-finite gradient");
  return grad;
}

inline std::unique_ptr<ForwardPass> ToyStereoModel::run(const StereoPair& pair,
                                                        const ModelParams& theta) const {
  return std::make_unique<ToyForwardPass>(*this, pair, theta);
}

// ---------------------------------------------------------------------------
// Checkpoints: a magic line, a plain-text layout descriptor, then the raw
// parameter vector as 64-bit little-endian doubles.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const ToyStereoModel& model,
                            const ModelParams& params) {
  if (params.values.size() != model.layout()->total)
    throw std::invalid_argument("save_checkpoint: parameter length differs from model layout");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "ZOLECKPT1\n";
  out << "channels " << model.channels() << "\n";
  out << "maxDisparity " << model.max_disparity_int() << "\n";
  for (const auto& t : model.layout()->tensors) {
    out << "tensor " << t.name << " " << t.shape.size();
    for (int d : t.shape) out << " " << d;
    out << "\n";
  }
  out << "data\n";
  static_assert(sizeof(double) == 8);
  if (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(params.values.size() * 8));
  } else {
    for (double v : params.values) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
      out.write(b, 8);
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline std::pair<ToyStereoModel, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "ZOLECKPT1")
    throw std::runtime_error(path + ": not a checkpoint file");
  int channels = -1, max_disp = -1;
  std::vector<std::pair<std::string, std::vector<int>>> tensors;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "channels") ls >> channels;
    else if (key == "maxDisparity") ls >> max_disp;
    else if (key == "tensor") {
      std::string name;
      int nd = 0;
      ls >> name >> nd;
      std::vector<int> shape(static_cast<size_t>(nd));
      for (int i = 0; i < nd; ++i) ls >> shape[static_cast<size_t>(i)];
      tensors.emplace_back(name, std::move(shape));
    } else {
      throw std::runtime_error(path + ": unknown checkpoint field '" + key + "'");
    }
    if (!ls) throw std::runtime_error(path + ": malformed checkpoint line '" + line + "'");
  }
  if (line != "data") throw std::runtime_error(path + ": missing data section");
  if (channels < 0 || max_disp < 0) throw std::runtime_error(path + ": missing model config");

  ToyStereoModel model(channels, max_disp);
  const auto& lay = *model.layout();
  if (tensors.size() != lay.tensors.size())
    throw std::runtime_error(path + ": checkpoint layout mismatch (tensor count)");
  for (size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].first != lay.tensors[i].name || tensors[i].second != lay.tensors[i].shape)
      throw std::runtime_error(path + ": checkpoint layout mismatch at tensor '" +
                               tensors[i].first + "'");

  ModelParams params;
  params.layout = model.layout();
  params.values.resize(lay.total);
  in.read(reinterpret_cast<char*>(params.values.data()),
          static_cast<std::streamsize>(lay.total * 8));
  if (static_cast<size_t>(in.gcount()) != lay.total * 8)
    throw std::runtime_error(path + ": truncated parameter payload");
  if (std::endian::native != std::endian::little) {
    for (double& v : params.values) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      uint64_t sw = 0;
      for (int i = 0; i < 8; ++i) sw = (sw << 8) | ((bits >> (8 * i)) & 0xFF);
      std::memcpy(&v, &sw, 8);
    }
  }
  for (double v : params.values)
    if (!std::isfinite(v)) throw std::runtime_error(path + ": non-finite parameter value");
  return {std::move(model), std::move(params)};
}

}  // namespace zole
