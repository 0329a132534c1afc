#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "zole/adapt.hpp"

namespace {

using zole::AdaptConfig;
using zole::AdaptResult;
using zole::ExampleSampler;
using zole::Image;
using zole::Map2D;
using zole::ModelParams;
using zole::ParamGrad;
using zole::Rng;
using zole::SceneSample;
using zole::SceneSpec;
using zole::StereoModel;
using zole::StereoPair;
using zole::ToyStereoModel;

class MockPass : public zole::ForwardPass {
 public:
  explicit MockPass(Map2D pred) : pred_(std::move(pred)) {}
  const Map2D& prediction() const override { return pred_; }
  ParamGrad backward(const Map2D&) const override { return {}; }

 private:
  Map2D pred_;
};

class ConstantModel : public StereoModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  std::unique_ptr<zole::ForwardPass> run(const StereoPair& pair,
                                         const ModelParams&) const override {
    return std::make_unique<MockPass>(Map2D(pair.height(), pair.width(), value_));
  }
  double max_disparity() const override { return 64.0; }

 private:
  double value_;
};

// Reads the horizontal shift between the views off a linear ramp: the view
// difference divided by the ramp slope. Up-sampling the pair stretches the
// ramp, so the reported shift grows by exactly the zoom factor.
class RampReadingModel : public StereoModel {
 public:
  explicit RampReadingModel(std::shared_ptr<std::vector<std::pair<int, int>>> dims = nullptr)
      : dims_(std::move(dims)) {}

  std::unique_ptr<zole::ForwardPass> run(const StereoPair& pair,
                                         const ModelParams&) const override {
    if (dims_) dims_->emplace_back(pair.height(), pair.width());
    const double slope = pair.left.at(0, 1, 0) - pair.left.at(0, 0, 0);
    Map2D pred(pair.height(), pair.width());
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x)
        pred.at(y, x) = (pair.right.at(y, x, 0) - pair.left.at(y, x, 0)) / slope;
    return std::make_unique<MockPass>(std::move(pred));
  }
  double max_disparity() const override { return 100.0; }

 private:
  std::shared_ptr<std::vector<std::pair<int, int>>> dims_;
};

class ZeroModel : public StereoModel {
 public:
  std::unique_ptr<zole::ForwardPass> run(const StereoPair& pair,
                                         const ModelParams&) const override {
    return std::make_unique<MockPass>(Map2D(pair.height(), pair.width(), 0.0));
  }
  double max_disparity() const override { return 16.0; }
};

// Predicts zero on full-size pairs but NaN on training crops, so validation
// works while the first gradient step trips the loss check.
class CropPoisonedModel : public StereoModel {
 public:
  explicit CropPoisonedModel(int poisoned_width) : poisoned_(poisoned_width) {}
  std::unique_ptr<zole::ForwardPass> run(const StereoPair& pair,
                                         const ModelParams&) const override {
    const double v =
        pair.width() == poisoned_ ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    return std::make_unique<MockPass>(Map2D(pair.height(), pair.width(), v));
  }
  double max_disparity() const override { return 16.0; }

 private:
  int poisoned_;
};

StereoPair ramp_pair(int h, int w, double slope, double shift) {
  Image left(h, w, 1), right(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      left.at(y, x, 0) = slope * x + 10.0;
      right.at(y, x, 0) = slope * x + 10.0 + slope * shift;
    }
  return StereoPair::domain(std::move(left), std::move(right));
}

TEST(ZoomTarget, ConstantPredictionScalesExactly) {
  ConstantModel model(12.0);
  Rng rng(1);
  Image l(10, 12, 1), r(10, 12, 1);
  for (double& v : l.data) v = rng.next_int(0, 255);
  for (double& v : r.data) v = rng.next_int(0, 255);
  StereoPair pair = StereoPair::domain(std::move(l), std::move(r));

  Map2D half = zole::zoom_target(model, ModelParams{}, pair, 2.0);
  ASSERT_EQ(half.height, 10);
  ASSERT_EQ(half.width, 12);
  for (double v : half.data) ASSERT_EQ(v, 6.0);

  Map2D two_thirds = zole::zoom_target(model, ModelParams{}, pair, 1.5);
  for (double v : two_thirds.data) ASSERT_DOUBLE_EQ(v, 8.0);
}

TEST(ZoomTarget, ScaleEquivariantModelRoundTripsToIdentity) {
  auto dims = std::make_shared<std::vector<std::pair<int, int>>>();
  RampReadingModel model(dims);
  StereoPair pair = ramp_pair(21, 21, 3.0, 4.0);

  const Map2D direct = model.forward(pair, ModelParams{});
  for (double v : direct.data) ASSERT_NEAR(v, 4.0, 1e-9);

  dims->clear();
  const Map2D target = zole::zoom_target(model, ModelParams{}, pair, 1.5);
  ASSERT_EQ(dims->size(), 1u);
  EXPECT_EQ(dims->front(), std::make_pair(31, 31));

  ASSERT_EQ(target.height, 21);
  ASSERT_EQ(target.width, 21);
  for (size_t i = 0; i < target.data.size(); ++i)
    ASSERT_NEAR(target.data[i], direct.data[i], 1e-6);
}

TEST(ZoomTarget, UnitZoomEqualsDirectForward) {
  RampReadingModel model;
  StereoPair pair = ramp_pair(9, 13, 2.0, 3.0);
  const Map2D direct = model.forward(pair, ModelParams{});
  const Map2D target = zole::zoom_target(model, ModelParams{}, pair, 1.0);
  ASSERT_EQ(target.data, direct.data);

  EXPECT_THROW(zole::zoom_target(model, ModelParams{}, pair, 0.5), std::invalid_argument);
}

TEST(Validate, AveragesWarpPsnrOverPairs) {
  ZeroModel model;
  Rng rng(4);
  Image view(8, 8, 1);
  for (double& v : view.data) v = rng.next_int(0, 255);
  StereoPair perfect = StereoPair::domain(view, view);
  StereoPair offset = StereoPair::domain(Image(8, 8, 1, 116.0), Image(8, 8, 1, 100.0));

  const double got = zole::validate(model, ModelParams{}, {perfect, offset});
  const double offset_psnr = 10.0 * std::log10(255.0 * 255.0 / 256.0);
  EXPECT_NEAR(got, (99.0 + offset_psnr) / 2.0, 1e-12);

  EXPECT_THROW(zole::validate(model, ModelParams{}, {}), std::invalid_argument);
}

TEST(Sampler, WalksShuffledEpochs) {
  Rng rng(11);
  ExampleSampler sampler(7, rng);
  EXPECT_EQ(sampler.order().size(), 7u);
  EXPECT_EQ(sampler.cursor(), 0u);

  std::vector<int> first, second;
  for (int i = 0; i < 7; ++i) first.push_back(sampler.next(rng));
  for (int i = 0; i < 7; ++i) second.push_back(sampler.next(rng));

  auto is_permutation_of_iota = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    for (int i = 0; i < static_cast<int>(v.size()); ++i)
      if (v[static_cast<size_t>(i)] != i) return false;
    return true;
  };
  EXPECT_TRUE(is_permutation_of_iota(first));
  EXPECT_TRUE(is_permutation_of_iota(second));

  Rng other(12);
  EXPECT_THROW(ExampleSampler(0, other), std::invalid_argument);
}

struct TinySetup {
  ToyStereoModel model{3, 4};
  ModelParams theta0;
  std::vector<StereoPair> domain;
  std::vector<StereoPair> synth;
  std::vector<StereoPair> val;
  AdaptConfig cfg;

  TinySetup() {
    Rng init(31);
    theta0 = model.init_params(init);

    SceneSpec spec;
    spec.height = 12;
    spec.width = 12;
    spec.num_shapes = 2;
    spec.disp_lo = 1.0;
    spec.disp_hi = 3.0;
    spec.texture_scale = 6.0;
    for (uint64_t s = 0; s < 2; ++s) {
      spec.seed = 100 + s;
      SceneSample sample = zole::generate_scene(spec);
      Rng deg_rng(200 + s);
      domain.push_back(zole::apply_degradation(sample.pair, zole::DomainDegradation{}, deg_rng));
      spec.seed = 300 + s;
      synth.push_back(zole::generate_scene(spec).pair);
      spec.seed = 400 + s;
      val.push_back(zole::generate_scene(spec).pair);
    }

    cfg.r = 1.5;
    cfg.batch_size = 2;
    cfg.lr = 1e-4;
    cfg.k_max = 3;
    cfg.validate_every = 2;
    cfg.seed = 5;
    cfg.crop_size = 8;
    cfg.weights.patch_side = 4;
  }
};

TEST(Adapt, ZeroIterationsReturnTheSeedParameters) {
  TinySetup s;
  s.cfg.k_max = 0;
  AdaptResult result = zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, s.cfg);
  EXPECT_EQ(result.final_theta.values, s.theta0.values);
  EXPECT_EQ(result.best_theta.values, s.theta0.values);
  EXPECT_EQ(result.best_psnr, zole::validate(s.model, s.theta0, s.val));
}

TEST(Adapt, BitReproducibleAcrossRunsAndWorkerCounts) {
  TinySetup s;
  std::ostringstream log_a, log_b;
  AdaptResult a = zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, s.cfg, &log_a);
  AdaptResult b = zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, s.cfg, &log_b);
  EXPECT_EQ(a.final_theta.values, b.final_theta.values);
  EXPECT_EQ(a.best_theta.values, b.best_theta.values);
  EXPECT_EQ(a.best_psnr, b.best_psnr);
  EXPECT_EQ(log_a.str(), log_b.str());

  EXPECT_NE(a.final_theta.values, s.theta0.values);

#ifdef _OPENMP
  const int before = omp_get_max_threads();
  omp_set_num_threads(2);
  std::ostringstream log_c;
  AdaptResult c = zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, s.cfg, &log_c);
  omp_set_num_threads(before);
  EXPECT_EQ(c.final_theta.values, a.final_theta.values);
  EXPECT_EQ(log_c.str(), log_a.str());
#endif
}

TEST(Adapt, LogCarriesIterationAndValidationRecords) {
  TinySetup s;
  s.cfg.k_max = 4;
  s.cfg.validate_every = 1;
  std::ostringstream log;
  AdaptResult result = zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, s.cfg, &log);

  std::istringstream lines(log.str());
  std::string line;
  int iter_lines = 0;
  double best_seen = -1.0;
  while (std::getline(lines, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("event")) {
      ASSERT_EQ(j["event"], "val");
      best_seen = std::max(best_seen, j["psnr"].get<double>());
    } else {
      ASSERT_TRUE(j.contains("iter"));
      ASSERT_TRUE(j.contains("l1_dom"));
      ASSERT_TRUE(j.contains("l1_syn"));
      ASSERT_TRUE(j.contains("reg"));
      ASSERT_TRUE(j.contains("total"));
      ASSERT_TRUE(std::isfinite(j["total"].get<double>()));
      ++iter_lines;
    }
  }
  EXPECT_EQ(iter_lines, 4);

  EXPECT_EQ(result.best_psnr, best_seen);
  EXPECT_EQ(zole::validate(s.model, result.best_theta, s.val), result.best_psnr);
}

TEST(Adapt, RunsWithoutEitherExampleKind) {
  TinySetup s;
  s.cfg.k_max = 1;

  AdaptConfig domain_only = s.cfg;
  domain_only.weights.lambda_agg = 0.0;
  EXPECT_NO_THROW(zole::adapt(s.model, s.theta0, s.domain, {}, s.val, domain_only));

  EXPECT_NO_THROW(zole::adapt(s.model, s.theta0, {}, s.synth, s.val, s.cfg));
}

TEST(Adapt, NonFiniteLossNamesTheIteration) {
  CropPoisonedModel model(20);
  SceneSpec spec;
  spec.height = 40;
  spec.width = 40;
  spec.num_shapes = 2;
  spec.disp_lo = 1.0;
  spec.disp_hi = 4.0;
  spec.seed = 9;
  std::vector<StereoPair> synth = {zole::generate_scene(spec).pair};
  std::vector<StereoPair> val = synth;

  AdaptConfig cfg;
  cfg.k_max = 1;
  cfg.batch_size = 1;
  cfg.crop_size = 20;
  cfg.weights.patch_side = 20;

  try {
    zole::adapt(model, ModelParams{}, {}, synth, val, cfg);
    FAIL() << "expected the poisoned crop to abort the run";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(Adapt, ValidatesConfigAndInputs) {
  TinySetup s;

  AdaptConfig bad = s.cfg;
  bad.r = 1.0;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  bad = s.cfg;
  bad.batch_size = 0;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  bad = s.cfg;
  bad.lr = 0.0;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  bad = s.cfg;
  bad.k_max = -1;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  bad = s.cfg;
  bad.validate_every = 0;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  bad = s.cfg;
  bad.crop_size = 10;
  bad.weights.patch_side = 4;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, bad),
               std::invalid_argument);

  EXPECT_THROW(zole::adapt(s.model, s.theta0, {}, {}, s.val, s.cfg), std::invalid_argument);

  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.synth, {}, s.val, s.cfg),
               std::invalid_argument);
  EXPECT_THROW(zole::adapt(s.model, s.theta0, {}, s.domain, s.val, s.cfg),
               std::invalid_argument);

  AdaptConfig big_crop = s.cfg;
  big_crop.crop_size = 20;
  big_crop.weights.patch_side = 20;
  EXPECT_THROW(zole::adapt(s.model, s.theta0, s.domain, s.synth, s.val, big_crop),
               std::invalid_argument);
}

}  // namespace
