#include <gtest/gtest.h>

#include "symdec/gradcheck.hpp"
#include "symdec/ops.hpp"

namespace symdec {
namespace {

TEST(Gradcheck, EveryRegisteredOpPasses) {
  for (const auto& op : op_registry(17)) {
    const auto report = check_adjoint(*op.rule, op.inputs, 3, op.options);
    EXPECT_TRUE(report.ok(1e-3)) << op.name << " rel err " << report.max_rel_error << " kinks " << report.kinks << "/"
                                 << report.probes << " " << report.failure;
  }
}

TEST(Gradcheck, LinearOpAtNoiseFloor) {
  std::mt19937_64 rng(1);
  const auto report = check_adjoint(*ops::matmul_rule<double>(),
                                    {Tensor<double>::randn({3, 3}, rng, 1.0), Tensor<double>::randn({3, 2}, rng, 1.0)}, 5);
  EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(Gradcheck, SigmoidSlopeAtZero) {
  const Tensor<double> x({1}, {0.0});
  auto y = ops::sigmoid(ad::Var<double>::parameter(x));
  ad::backward(y);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  const auto report = check_adjoint(*ops::sigmoid_rule<double>(), {x}, 2);
  EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(Gradcheck, DetectsWrongBackward) {
  auto broken = ad::make_rule<double>(
      "square_wrong", [](ad::TensorRefs<double> in) { return Tensor<double>(in[0]->shape(), in[0]->vec().cwiseAbs2()); },
      [](ad::TensorRefs<double> in, const Tensor<double>&, const Tensor<double>& g) {
        return std::vector<Tensor<double>>{Tensor<double>(g.shape(), g.vec().cwiseProduct(in[0]->vec()))};
      });
  std::mt19937_64 rng(4);
  EXPECT_GT(check_adjoint(*broken, {Tensor<double>::randn({5}, rng, 1.0)}, 1).max_rel_error, 0.1);
}

TEST(Gradcheck, NonFiniteValueReportsLocation) {
  auto logop = ad::make_rule<double>(
      "log", [](ad::TensorRefs<double> in) { return Tensor<double>(in[0]->shape(), in[0]->vec().array().log().matrix()); },
      [](ad::TensorRefs<double> in, const Tensor<double>&, const Tensor<double>& g) {
        return std::vector<Tensor<double>>{Tensor<double>(g.shape(), g.vec().cwiseQuotient(in[0]->vec()))};
      });
  const auto report = check_adjoint(*logop, {Tensor<double>({3}, {1.0, -1.0, 2.0})}, 1);
  EXPECT_FALSE(report.ok(1e-3));
  EXPECT_NE(report.failure.find("element 1"), std::string::npos) << report.failure;
}

}  // namespace
}  // namespace symdec
