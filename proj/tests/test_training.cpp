#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "symdec/sapg.hpp"
#include "symdec/training.hpp"
#include "test_util.hpp"

namespace symdec {
namespace {

using train::FocalConfig;

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder = EncoderConfig{16, 4, 8, 1, 2, 2};
  m.decoder = testing::micro_decoder(4);
  m.decoder.token_dim = 8;
  return m;
}

Tensor<float> tiny_text(const ModelConfig& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor<float>({Index(m.decoder.prompts), Index(m.decoder.text_dim)}, rng);
}

/// Image with a bright vertical bar and the matching axis target.
train::Example bar_example(Index size, Index col) {
  train::Example ex{Tensor<float>({3, size, size}), Tensor<float>({size, size})};
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < size; ++r) ex.image(c, r, col) = 1.0f;
  for (Index r = 0; r < size; ++r) ex.target(r, col) = 1.0f;
  return ex;
}

TEST(Focal, MatchesHandComputedTerms) {
  Tensor<double> pred({2}), gt({2});
  pred[0] = 0.7;
  gt[0] = 1.0;
  pred[1] = 0.3;
  gt[1] = 0.0;
  // -0.85 * 0.3^2 * ln 0.7  and  -0.15 * 0.3^2 * ln 0.7
  const double expected = -(0.85 + 0.15) * 0.09 * std::log(0.7);
  EXPECT_NEAR(train::focal_loss(pred, gt, FocalConfig{}), expected, 1e-12);
}

TEST(Focal, SinglePixelAtHalfConfidence) {
  Tensor<double> pred({1}), gt({1});
  pred[0] = 0.5;
  gt[0] = 1.0;
  EXPECT_NEAR(train::focal_loss(pred, gt, FocalConfig{}), 0.85 * 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(train::focal_loss(pred, gt, FocalConfig{}), 0.1472938, 1e-7);
}

TEST(Focal, LambdaZeroIsWeightedCrossEntropy) {
  std::mt19937_64 rng(3);
  Tensor<double> pred({50}), gt({50});
  std::uniform_real_distribution<double> u(0.01, 0.99);
  double ce = 0.0;
  for (Index i = 0; i < 50; ++i) {
    pred[i] = u(rng);
    gt[i] = double(i % 3 == 0);
    ce += gt[i] == 1.0 ? -0.6 * std::log(pred[i]) : -0.4 * std::log(1 - pred[i]);
  }
  EXPECT_NEAR(train::focal_loss(pred, gt, FocalConfig{0.6, 0.0, 1e-7}), ce, 1e-10);
}

TEST(Focal, ClampsSaturatedPredictions) {
  Tensor<double> pred({1}), gt({1});
  gt[0] = 1.0;
  const double v = train::focal_loss(pred, gt, FocalConfig{});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -0.85 * std::pow(1 - 1e-7, 2) * std::log(1e-7), 1e-9);
}

TEST(Focal, AgreesWithLogitOp) {
  std::mt19937_64 rng(5);
  const auto logits = testing::random_tensor<double>({6, 6}, rng, 2.0);
  Tensor<double> gt({6, 6}), prob({6, 6});
  for (Index i = 0; i < 36; ++i) {
    gt[i] = double(i % 5 == 0);
    prob[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  }
  const auto op = ops::focal_loss_logits(ad::Var<double>::constant(logits), gt, 0.85, 2.0, 1e-7);
  EXPECT_NEAR(op.value()[0], train::focal_loss(prob, gt, FocalConfig{}), 1e-9);
}

TEST(Focal, RejectsNonBinaryTargetAndBadConfig) {
  Tensor<double> pred({1}), gt({1});
  gt[0] = 0.5;
  EXPECT_THROW(train::focal_loss(pred, gt, FocalConfig{}), ConfigError);
  gt[0] = 1.0;
  EXPECT_THROW(train::focal_loss(pred, gt, FocalConfig{1.0, 2.0, 1e-7}), ConfigError);
  EXPECT_THROW(train::focal_loss(pred, Tensor<double>({2}), FocalConfig{}), ShapeError);
  EXPECT_DOUBLE_EQ(FocalConfig::default_alpha(synth::Task::reflection), 0.85);
  EXPECT_DOUBLE_EQ(FocalConfig::default_alpha(synth::Task::rotation), 0.95);
}

TEST(Schedule, ConstantAndExponential) {
  train::OptimConfig c;
  c.lr = 1e-3;
  EXPECT_DOUBLE_EQ(train::learning_rate(c, 50, 100), 1e-3);
  c.schedule = train::Schedule::exponential;
  c.decay_rate = 0.1;
  EXPECT_DOUBLE_EQ(train::learning_rate(c, 0, 100), 1e-3);
  EXPECT_NEAR(train::learning_rate(c, 50, 100), 1e-3 * std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(train::learning_rate(c, 100, 100), 1e-4, 1e-15);
  EXPECT_EQ(train::parse_schedule("exponential"), train::Schedule::exponential);
  EXPECT_THROW(train::parse_schedule("cosine"), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet<float> p;
  p.emplace("w", Tensor<float>({3}));
  ParamSet<float> g;
  g.emplace("w", Tensor<float>({3}));
  g.at("w")[0] = 4.0f;
  g.at("w")[1] = -0.01f;
  auto st = train::init_optim(p);
  train::OptimConfig c;
  train::adam_update(p, g, st, c, 0.1);
  // Bias-corrected first step is lr · sign(g) up to eps.
  EXPECT_NEAR(p.at("w")[0], -0.1f, 1e-6);
  EXPECT_NEAR(p.at("w")[1], 0.1f, 1e-4);
  EXPECT_EQ(p.at("w")[2], 0.0f);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, NonFiniteGradientRaises) {
  ParamSet<float> p, g;
  p.emplace("w", Tensor<float>({1}));
  g.emplace("w", Tensor<float>({1}));
  g.at("w")[0] = std::nanf("");
  auto st = train::init_optim(p);
  EXPECT_THROW(train::adam_update(p, g, st, train::OptimConfig{}, 0.1), NumericError);
}

TEST(Training, BatchGradientIndependentOfThreadCount) {
  const auto m = tiny_model();
  const auto params = init_model<float>(m, tiny_text(m, 1), 2);
  std::vector<train::Example> batch{bar_example(16, 3), bar_example(16, 8), bar_example(16, 12)};
  ParamSet<float> g1, g3;
  const double l1 = train::batch_gradient(batch, params, m, FocalConfig{}, 1, g1);
  const double l3 = train::batch_gradient(batch, params, m, FocalConfig{}, 3, g3);
  EXPECT_EQ(l1, l3);
  for (const auto& [name, t] : g1) EXPECT_EQ(t.vec(), g3.at(name).vec()) << name;
  EXPECT_TRUE(g1.count(kTextTokens));
}

TEST(Training, OverfitsSingleBatch) {
  const auto m = tiny_model();
  auto params = init_model<float>(m, tiny_text(m, 1), 2);
  std::vector<train::Example> batch{bar_example(16, 5), bar_example(16, 10)};
  auto st = train::init_optim(params);
  train::OptimConfig oc;
  const double first = train::train_step(batch, params, st, m, FocalConfig{}, oc, 1e-2, 2);
  double last = first;
  for (int i = 0; i < 200; ++i) last = train::train_step(batch, params, st, m, FocalConfig{}, oc, 1e-2, 2);
  EXPECT_LT(last, first / 10.0) << "first " << first << " last " << last;
}

TEST(Augment, QuarterTurnMovesImageAndAnnotationTogether) {
  std::mt19937_64 rng(9);
  synth::Annotation ann;
  ann.axes.push_back({{3, 0}, {3, 15}});
  const auto ex = bar_example(16, 3);
  train::AugmentConfig cfg;
  cfg.small_rotation = 0;
  cfg.brightness = 0;
  cfg.contrast = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto a = train::augment(ex.image, ann, cfg, rng);
    const auto target = synth::rasterize(a.annotation, 16, 16, synth::Task::reflection, synth::RasterOptions{1, 3, true}).heatmap;
    for (Index r = 0; r < 16; ++r)
      for (Index c = 0; c < 16; ++c) EXPECT_EQ(a.image(0, r, c), target(r, c));
  }
}

TEST(Augment, DisabledIsIdentityAndJitterStaysInRange) {
  std::mt19937_64 rng(1);
  const auto img = testing::random_tensor<float>({3, 8, 8}, rng, 0.3);
  train::AugmentConfig off;
  off.enabled = false;
  EXPECT_EQ(train::augment(img, {}, off, rng).image.vec(), img.vec());
  train::AugmentConfig on;
  on.brightness = 0.5;
  const auto a = train::augment(img, {}, on, rng);
  EXPECT_GE(a.image.vec().minCoeff(), 0.0f);
  EXPECT_LE(a.image.vec().maxCoeff(), 1.0f);
}

std::vector<synth::Sample> tiny_data(int count) {
  synth::SceneSpec spec;
  spec.image_size = 16;
  spec.min_radius = 0.25;
  spec.max_radius = 0.4;
  std::vector<synth::Sample> out;
  for (int i = 0; i < count; ++i) {
    auto scene = synth::generate_scene(spec, std::uint64_t(100 + i));
    out.push_back({std::to_string(i), scene.image, scene.annotation});
  }
  return out;
}

train::TrainSetup tiny_setup() {
  train::TrainSetup s;
  s.model = tiny_model();
  s.optim.batch_size = 2;
  s.optim.epochs = 3;
  s.optim.lr = 1e-2;
  s.seed = 42;
  s.threads = 2;
  return s;
}

TEST(Training, EpochBatchesAreReproducible) {
  const auto data = tiny_data(5);
  const auto s = tiny_setup();
  const auto a = train::epoch_batches(data, s, 1);
  const auto b = train::epoch_batches(data, s, 1);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a.back().size(), 1u);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      EXPECT_EQ(a[i][j].image.vec(), b[i][j].image.vec());
      EXPECT_EQ(a[i][j].target.vec(), b[i][j].target.vec());
    }
}

TEST(Checkpoint, ResumeIsBitExact) {
  const auto data = tiny_data(4);
  const auto s = tiny_setup();
  const auto dir = std::filesystem::temp_directory_path() / "symdec_ckpt_test";
  std::filesystem::remove_all(dir);

  train::TrainState straight{init_model<float>(s.model, tiny_text(s.model, 1), 2), {}, 0};
  straight.optim = train::init_optim(straight.params);
  train::TrainState resumed = straight;
  for (int e = 0; e < 2; ++e) train::train_epoch(straight, data, s, {});

  train::train_epoch(resumed, data, s, {});
  train::save_checkpoint(dir, resumed, R"({"seed": 42})");
  auto ck = train::load_checkpoint(dir);
  EXPECT_EQ(ck.state.epoch, 1);
  EXPECT_EQ(ck.state.optim.step, resumed.optim.step);
  EXPECT_NE(ck.config_text.find("42"), std::string::npos);
  train::train_epoch(ck.state, data, s, {});
  for (const auto& [name, t] : straight.params) EXPECT_EQ(t.vec(), ck.state.params.at(name).vec()) << name;
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptManifestIsFormatError) {
  const auto dir = std::filesystem::temp_directory_path() / "symdec_ckpt_bad";
  std::filesystem::remove_all(dir);
  EXPECT_THROW(train::load_checkpoint(dir), IoError);
  std::filesystem::create_directories(dir);
  { std::ofstream(dir / "manifest.json") << "{\"format\": \"other\"}"; }
  EXPECT_THROW(train::load_checkpoint(dir), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(FilmFit, OffsetIsRemovedDownToNoiseFloor) {
  const auto r = train::film_offset_fit(train::FilmFitConfig{});
  EXPECT_NEAR(r.film_mse / r.noise_variance, 1.0, 0.1) << "film " << r.film_mse;
  EXPECT_GT(r.baseline_mse, 10 * r.film_mse);
}

}  // namespace
}  // namespace symdec
