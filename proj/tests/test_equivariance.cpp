#include <gtest/gtest.h>

#include <algorithm>

#include "symdec/equivariance.hpp"
#include "test_util.hpp"

namespace symdec {
namespace {

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

EquivarianceOptions small_options(int n) {
  EquivarianceOptions o;
  o.decoder = testing::micro_decoder(n);
  o.grid = 4;
  o.patch = 2;
  o.seeds = 2;
  return o;
}

TEST(EquivarianceCheck, EveryStagePassesOnRandomParameters) {
  for (int n : {4, 8}) {
    const auto report = check_equivariance(small_options(n));
    EXPECT_FALSE(report.skipped);
    EXPECT_TRUE(report.ok()) << "n=" << n;
    // 4 stages x 2 precisions x 3 quarter turns
    EXPECT_EQ(report.rows.size(), 24u);
    for (const auto& row : report.rows) {
      EXPECT_EQ(row.tolerance, row.precision == "float64" ? 1e-10 : 1e-5);
      EXPECT_GE(row.k, 1);
      EXPECT_LE(row.k, 3);
    }
  }
}

TEST(EquivarianceCheck, PositionalCodeBreaksOnlyTheMixingStage) {
  auto o = small_options(8);
  o.decoder.inject_positional_encoding = true;
  const auto report = check_equivariance(o);
  const auto failing = report.failing_stages();
  EXPECT_TRUE(has(failing, "transformer+aggregation"));
  EXPECT_TRUE(has(failing, "claim"));
  EXPECT_FALSE(has(failing, "film"));
  EXPECT_FALSE(has(failing, "upsampler"));
}

TEST(EquivarianceCheck, SuppliedParametersAreUsed) {
  auto o = small_options(4);
  std::mt19937_64 rng(5);
  o.params = init_decoder<float>(o.decoder, rng);
  EXPECT_TRUE(check_equivariance(o).ok());
  o.params->erase(o.params->begin());
  EXPECT_ANY_THROW(check_equivariance(o));
}

TEST(EquivarianceCheck, SixSlotsAreSkipped) {
  auto o = small_options(4);
  o.decoder.n = 6;
  const auto report = check_equivariance(o);
  EXPECT_TRUE(report.skipped);
  EXPECT_TRUE(report.rows.empty());
}

}  // namespace
}  // namespace symdec
