#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "symdec/encoder.hpp"
#include "test_util.hpp"

namespace symdec {
namespace {

using testing::random_tensor;

TEST(Encoder, PatchGeometry) {
  EXPECT_EQ(patchify(Tensor<float>({3, 32, 32}), 16).shape(), (Shape{2, 2, 768}));
  EXPECT_EQ(patchify(Tensor<float>({3, 417, 417}), 16).shape(), (Shape{26, 26, 768}));
  EXPECT_EQ((EncoderConfig{417, 16, 768, 2, 12, 4}.grid()), 26);
  EXPECT_THROW(patchify(Tensor<float>({3, 32, 30}), 16), ShapeError);
  EXPECT_THROW(patchify(Tensor<float>({1, 32, 32}), 16), ShapeError);
  EXPECT_THROW(patchify(Tensor<float>({3, 8, 8}), 16), ShapeError);
}

TEST(Encoder, PatchVectorLayout) {
  std::mt19937_64 rng(1);
  const auto img = random_tensor<double>({3, 9, 9}, rng);
  const auto p = patchify(img, 4);  // trailing row/column dropped
  ASSERT_EQ(p.shape(), (Shape{2, 2, 48}));
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) {
      for (Index c = 0; c < 3; ++c) {
        for (Index r = 0; r < 4; ++r) {
          for (Index q = 0; q < 4; ++q) EXPECT_EQ(p(i, j, (c * 4 + r) * 4 + q), img(c, i * 4 + r, j * 4 + q));
        }
      }
    }
  }
}

TEST(Encoder, ConstantImageGivesIdenticalPatches) {
  const auto p = patchify(Tensor<float>({3, 32, 32}, 0.3f), 8);
  const auto m = p.matrix(16, 192);
  for (Index r = 1; r < 16; ++r) EXPECT_EQ(m.row(r), m.row(0));
}

TEST(Encoder, ShapeAndDeterminism) {
  const EncoderConfig cfg{32, 8, 12, 2, 3, 2};
  std::mt19937_64 rng(2);
  const auto params = init_encoder<float>(cfg, rng);
  const auto img = Tensor<float>::uniform({3, 32, 32}, rng, 0.0f, 1.0f);
  const auto a = encode(img, params, cfg);
  EXPECT_EQ(a.tokens.shape(), (Shape{4, 4, 12}));
  EXPECT_EQ(a.patch_size, 8);
  EXPECT_EQ(a.image_height, 32);
  EXPECT_EQ(encode(img, params, cfg).tokens.vec(), a.tokens.vec());
  EXPECT_THROW(encode(Tensor<float>({3, 40, 40}), params, cfg), ShapeError);

  // The final layer norm leaves every token with zero mean before its affine part (gain 1, bias 0).
  const auto flat = a.flat();
  const auto m = flat.matrix();
  for (Index r = 0; r < m.rows(); ++r) EXPECT_NEAR(m.row(r).mean(), 0.0, 1e-5);
}

TEST(Encoder, PermutingPatchesPermutesTokensWithoutPositions) {
  const EncoderConfig cfg{24, 6, 8, 2, 2, 2};
  const Index m = cfg.grid(), p = cfg.patch_size;
  std::mt19937_64 rng(3);
  auto params = init_encoder<double>(cfg, rng);
  params.at("enc.pos").vec().setZero();
  const auto img = random_tensor<double>({3, 24, 24}, rng);

  std::vector<Index> perm(std::size_t(m * m));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Patch k of the original lands at position perm[k].
  Tensor<double> moved(img.shape());
  for (Index k = 0; k < m * m; ++k) {
    const Index si = k / m, sj = k % m, di = perm[std::size_t(k)] / m, dj = perm[std::size_t(k)] % m;
    for (Index c = 0; c < 3; ++c) {
      for (Index r = 0; r < p; ++r) {
        for (Index q = 0; q < p; ++q) moved(c, di * p + r, dj * p + q) = img(c, si * p + r, sj * p + q);
      }
    }
  }
  const auto ta = encode(img, params, cfg).flat(), tb = encode(moved, params, cfg).flat();
  const auto a = ta.matrix(), b = tb.matrix();
  double worst = 0.0;
  for (Index k = 0; k < m * m; ++k) worst = std::max(worst, (a.row(k) - b.row(perm[std::size_t(k)])).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-12);

  // With positional embeddings the same permutation is visible in the output.
  std::mt19937_64 rng2(3);
  const auto with_pos = init_encoder<double>(cfg, rng2);
  const auto tc = encode(img, with_pos, cfg).flat(), td = encode(moved, with_pos, cfg).flat();
  const auto c = tc.matrix(), d = td.matrix();
  double gap = 0.0;
  for (Index k = 0; k < m * m; ++k) gap = std::max(gap, (c.row(k) - d.row(perm[std::size_t(k)])).cwiseAbs().maxCoeff());
  EXPECT_GT(gap, 1e-3);
}

}  // namespace
}  // namespace symdec
