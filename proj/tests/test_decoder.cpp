#include <gtest/gtest.h>

#include "test_util.hpp"

namespace symdec {
namespace {

using testing::act_on_group_map;
using testing::random_decoder_case;
using testing::random_tensor;
using testing::rotate_token_rows;

class DecoderRotation : public ::testing::TestWithParam<int> {};

TEST_P(DecoderRotation, RotatingTokensRotatesHeatmapDouble) {
  DecoderConfig cfg = testing::micro_decoder(GetParam());
  auto c = random_decoder_case<double>(cfg, 5, 4, 11);
  const auto base = decode(c.tokens, c.text, c.params, cfg);
  for (int k = 1; k < 4; ++k) {
    const auto turned = decode(token_rotate(c.tokens, k), c.text, c.params, cfg);
    EXPECT_LT(max_abs_diff(turned, grid::rotate90(base, k)), 1e-10) << "k=" << k;
  }
}

TEST_P(DecoderRotation, RotatingTokensRotatesHeatmapFloat) {
  DecoderConfig cfg = testing::micro_decoder(GetParam());
  auto c = random_decoder_case<float>(cfg, 6, 2, 5);
  const auto base = decode(c.tokens, c.text, c.params, cfg);
  for (int k = 1; k < 4; ++k) {
    const auto turned = decode(token_rotate(c.tokens, k), c.text, c.params, cfg);
    EXPECT_LT(max_abs_diff(turned, grid::rotate90(base, k)), 1e-5) << "k=" << k;
  }
}

INSTANTIATE_TEST_SUITE_P(Slots, DecoderRotation, ::testing::Values(4, 8));

TEST(Decoder, GconvCommutesWithGroupAction) {
  for (int n : {4, 8, 12}) {
    std::mt19937_64 rng(n);
    const auto x = random_tensor<double>({n, 3, 6, 6}, rng);
    const auto w = random_tensor<double>({2, 3, n, 3, 3}, rng);
    const auto b = random_tensor<double>({2}, rng);
    auto conv = [&](const Tensor<double>& in) {
      return ops::gconv(ad::Var<double>::constant(in), ad::Var<double>::constant(w), ad::Var<double>::constant(b), n)
          .value();
    };
    for (int k = 1; k < 4; ++k) {
      EXPECT_LT(max_abs_diff(conv(act_on_group_map(x, k)), act_on_group_map(conv(x), k)), 1e-12) << n << " " << k;
    }
  }
}

TEST(Decoder, FilmWorkedExample) {
  // d = 2, z_p = (1, 2), γ = (2, 3), β = (1, -1).
  ParamSet<double> p;
  p["dec.film.gamma.w"] = Tensor<double>({1, 2}, {0.0, 0.0});
  p["dec.film.gamma.b"] = Tensor<double>({2}, {2.0, 3.0});
  p["dec.film.beta.w"] = Tensor<double>({1, 2}, {0.0, 0.0});
  p["dec.film.beta.b"] = Tensor<double>({2}, {1.0, -1.0});
  const auto vars = as_constants(p);
  const auto out = film(vars, ad::Var<double>::constant(Tensor<double>({1, 1}, {0.7})), 0,
                        ad::Var<double>::constant(Tensor<double>({1, 2}, {1.0, 2.0})));
  EXPECT_EQ(out.value()(0, 0), 3.0);
  EXPECT_EQ(out.value()(0, 1), 5.0);
}

TEST(Decoder, FilmIdentityModulation) {
  std::mt19937_64 rng(3);
  ParamSet<double> p;
  p["dec.film.gamma.w"] = Tensor<double>({4, 3});
  p["dec.film.gamma.b"] = Tensor<double>({3}, 1.0);
  p["dec.film.beta.w"] = Tensor<double>({4, 3});
  p["dec.film.beta.b"] = Tensor<double>({3});
  const auto zp = random_tensor<double>({9, 3}, rng);
  const auto out = film(as_constants(p), ad::Var<double>::constant(random_tensor<double>({2, 4}, rng)), 1,
                        ad::Var<double>::constant(zp));
  EXPECT_EQ(out.value(), zp);
}

TEST(Decoder, TransformerBlockIsPermutationEquivariant) {
  DecoderConfig cfg = testing::micro_decoder();
  std::mt19937_64 rng(9);
  const auto params = init_decoder<double>(cfg, rng);
  const auto vars = as_constants(params);
  const auto x = random_tensor<double>({16, Index(cfg.dim)}, rng);
  std::vector<Index> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> px(x.shape());
  for (Index i = 0; i < 16; ++i) px.matrix().row(i) = x.matrix().row(perm[i]);
  const auto y = transformer_block(vars, cfg, ad::Var<double>::constant(x)).value();
  const auto py = transformer_block(vars, cfg, ad::Var<double>::constant(px)).value();
  for (Index i = 0; i < 16; ++i) {
    EXPECT_LT((py.matrix().row(i) - y.matrix().row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Decoder, PositionalHookBreaksPermutationEquivariance) {
  DecoderConfig cfg = testing::micro_decoder();
  cfg.inject_positional_encoding = true;
  std::mt19937_64 rng(9);
  const auto vars = as_constants(init_decoder<double>(cfg, rng));
  const auto x = random_tensor<double>({16, Index(cfg.dim)}, rng);
  const auto y = transformer_block(vars, cfg, ad::Var<double>::constant(x)).value();
  const auto ry = transformer_block(vars, cfg, ad::Var<double>::constant(rotate_token_rows(x, 4, 1))).value();
  EXPECT_GT(max_abs_diff(ry, rotate_token_rows(y, 4, 1)), 1e-3);
}

TEST(Decoder, SingleTokenAttentionIsIdentityMixing) {
  DecoderConfig cfg = testing::micro_decoder();
  std::mt19937_64 rng(2);
  const auto vars = as_constants(init_decoder<double>(cfg, rng));
  const auto x = random_tensor<double>({1, Index(cfg.dim)}, rng);
  const auto a = transformer_block(vars, cfg, ad::Var<double>::constant(x)).value();
  const auto b = transformer_block(vars, cfg, ad::Var<double>::constant(x)).value();
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.all_finite());
}

TEST(Decoder, AggregationWeights) {
  std::mt19937_64 rng(4);
  ParamSet<double> p;
  p["dec.agg.logits"] = Tensor<double>({2}, {0.0, std::log(3.0)});
  const auto a = random_tensor<double>({4, 3}, rng), b = random_tensor<double>({4, 3}, rng);
  const auto out = aggregate_prompts(as_constants(p), {ad::Var<double>::constant(a), ad::Var<double>::constant(b)});
  Tensor<double> expect(a.shape(), 0.25 * a.vec() + 0.75 * b.vec());
  EXPECT_LT(max_abs_diff(out.value(), expect), 1e-15);

  p["dec.agg.logits"] = Tensor<double>({1}, {0.3});
  EXPECT_EQ(aggregate_prompts(as_constants(p), {ad::Var<double>::constant(a)}).value(), a);
  EXPECT_THROW(ops::aggregate(std::vector<ad::Var<double>>{}, ad::Var<double>::constant(Tensor<double>({0}))),
               ShapeError);
}

TEST(Decoder, DuplicatedPromptsMatchSinglePrompt) {
  DecoderConfig one = testing::micro_decoder();
  one.prompts = 1;
  auto c = random_decoder_case<double>(one, 4, 2, 21);
  DecoderConfig five = one;
  five.prompts = 5;
  ParamSet<double> p5 = c.params;
  p5["dec.agg.logits"] = random_tensor<double>({5}, *std::make_unique<std::mt19937_64>(1));
  Tensor<double> text5({5, Index(one.text_dim)});
  for (Index t = 0; t < 5; ++t) text5.matrix().row(t) = c.text.matrix().row(0);
  EXPECT_LT(max_abs_diff(decode(c.tokens, c.text, c.params, one), decode(c.tokens, text5, p5, five)), 1e-14);
}

TEST(Decoder, ToGridAndTokenRotateAgreeWithRotate90) {
  std::mt19937_64 rng(8);
  const auto rows = random_tensor<double>({25, 3}, rng);
  const auto f = ops::to_grid(ad::Var<double>::constant(rows)).value();
  for (Index c = 0; c < 3; ++c) EXPECT_EQ(f(c, 0, 0), rows(0, c));
  for (int k = 0; k < 4; ++k) {
    const auto g = ops::to_grid(ad::Var<double>::constant(rotate_token_rows(rows, 5, k))).value();
    EXPECT_EQ(g, grid::rotate90(f, k));
  }
  PatchTokens<double> pt{rows.reshaped({5, 5, 3}), 1, 5, 5};
  auto r = pt;
  for (int i = 0; i < 4; ++i) r = token_rotate(r, 1);
  EXPECT_EQ(r.tokens, pt.tokens);
  EXPECT_EQ(token_rotate(pt, 0).tokens, pt.tokens);
  EXPECT_THROW(ops::to_grid(ad::Var<double>::constant(Tensor<double>({7, 2}))), ShapeError);
}

TEST(Decoder, LiftCopiesIntoEverySlot) {
  std::mt19937_64 rng(1);
  const auto f = random_tensor<double>({3, 4, 4}, rng);
  const auto up = ops::lift(ad::Var<double>::constant(f), 8).value();
  ASSERT_EQ(up.shape(), (Shape{8, 3, 4, 4}));
  for (Index s = 0; s < 8; ++s) EXPECT_EQ(up.vec().segment(s * f.size(), f.size()), f.vec());
  // The constant stack is the lifted map that the group action leaves consistent with a
  // planar rotation of F.
  for (int k = 1; k < 4; ++k) {
    const auto lifted_rot = ops::lift(ad::Var<double>::constant(grid::rotate90(f, k)), 8).value();
    EXPECT_EQ(lifted_rot, act_on_group_map(up, k));
  }
}

TEST(Decoder, UpsampleHeadIsC4Equivariant) {
  DecoderConfig cfg = testing::micro_decoder(8);
  auto c = random_decoder_case<double>(cfg, 5, 4, 13);
  const auto vars = as_constants(c.params);
  std::mt19937_64 rng(6);
  const auto x = random_tensor<double>({8, Index(cfg.dim), 5, 5}, rng);
  const auto base = upsample_head(vars, cfg, ad::Var<double>::constant(x), 20, 20).value();
  for (int k = 1; k < 4; ++k) {
    const auto turned = upsample_head(vars, cfg, ad::Var<double>::constant(act_on_group_map(x, k)), 20, 20).value();
    EXPECT_LT(max_abs_diff(turned, grid::rotate90(base, k)), 1e-12);
  }
}

TEST(Decoder, ConstantInputGivesConstantHeatmap) {
  // Filters supported on the center tap only, so zero padding never reaches the output.
  DecoderConfig cfg = testing::micro_decoder(4);
  auto c = random_decoder_case<double>(cfg, 4, 2, 2);
  std::vector<double> v(std::size_t(cfg.dim), 0.7);
  for (int s = 0; s < cfg.stages(); ++s) {
    auto& w = c.params["dec.gconv" + std::to_string(s) + ".w"];
    const auto& b = c.params["dec.gconv" + std::to_string(s) + ".b"];
    std::vector<double> next(std::size_t(cfg.channels[s + 1]));
    for (Index co = 0; co < w.dim(0); ++co) {
      double acc = b[co];
      for (Index ci = 0; ci < w.dim(1); ++ci) {
        for (Index d = 0; d < w.dim(2); ++d) {
          for (Index t = 0; t < 9; ++t) {
            if (t != 4) w(co, ci, d, t / 3, t % 3) = 0.0;
          }
          acc += w(co, ci, d, 1, 1) * v[std::size_t(ci)];
        }
      }
      next[std::size_t(co)] = s + 1 < cfg.stages() ? std::max(acc, 0.0) : acc;
    }
    v = next;
  }
  const auto logits = upsample_head(as_constants(c.params), cfg,
                                    ad::Var<double>::constant(Tensor<double>({4, Index(cfg.dim), 4, 4}, 0.7)), 8, 8)
                          .value();
  const double expect = 1.0 / (1.0 + std::exp(-v[0]));
  const auto heat = ops::sigmoid(ad::Var<double>::constant(logits)).value();
  EXPECT_LT((heat.vec().array() - expect).abs().maxCoeff(), 1e-12);
}

TEST(Decoder, HeatmapShapeRangeAndDeterminism) {
  DecoderConfig cfg = testing::micro_decoder();
  auto c = random_decoder_case<float>(cfg, 4, 4, 31);
  const auto a = decode(c.tokens, c.text, c.params, cfg);
  const auto b = decode(c.tokens, c.text, c.params, cfg);
  ASSERT_EQ(a.shape(), (Shape{16, 16}));
  EXPECT_EQ(a, b);
  EXPECT_GT(a.vec().minCoeff(), 0.0f);
  EXPECT_LT(a.vec().maxCoeff(), 1.0f);
}

TEST(Decoder, ConfigValidation) {
  DecoderConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.n = 5;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.n = 6;
  EXPECT_NO_THROW(validate(cfg));
  cfg = DecoderConfig{};
  cfg.channels = {8, 4, 1};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = DecoderConfig{};
  cfg.heads = 3;
  EXPECT_THROW(validate(cfg), ConfigError);
}

}  // namespace
}  // namespace symdec
