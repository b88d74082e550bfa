#ifndef SYMDEC_GRADCHECK_HPP
#define SYMDEC_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "symdec/autodiff.hpp"

namespace symdec {

struct GradcheckOptions {
  double step = 1e-4;
  // Finite-difference probes per input; 0 checks every element.
  Index max_probes = 0;
  // A probe whose one-sided slopes differ by more than this (relative to max(1, |fd|)) straddles
  // a kink such as ReLU at zero; it is excluded and counted instead of compared.
  double kink_tol = 1e-2;
  // Largest tolerated fraction of excluded probes.
  double max_kink_fraction = 0.05;
};

struct AdjointReport {
  double max_rel_error = 0.0;
  std::vector<double> per_input;
  Index probes = 0;
  Index kinks = 0;
  double max_kink_fraction = 0.05;
  // Non-empty when a non-finite value was met; names the input and element.
  std::string failure;

  bool ok(double tol) const {
    return failure.empty() && max_rel_error < tol && double(kinks) <= max_kink_fraction * double(probes);
  }
};

/// Central finite differences of the scalar <r, op(inputs)> for a random projection r (seeded)
/// against the rule's backward. Per input: ||analytic - fd|| / max(||analytic||, ||fd||, 1e-8)
/// over the probed elements, floored at 1e-6 so identically zero
/// gradients compare against finite-difference noise only.
AdjointReport check_adjoint(const ad::AdjointRule<double>& op, const std::vector<Tensor<double>>& inputs,
                            std::uint64_t seed, const GradcheckOptions& opts = {});

struct RegisteredOp {
  std::string name;
  ad::RulePtr<double> rule;
  std::vector<Tensor<double>> inputs;
  GradcheckOptions options;
};

/// Every primitive used by the model forward pass, plus the composite transformer layer,
/// encoder and decoder, each with sample inputs away from non-differentiable points.
std::vector<RegisteredOp> op_registry(std::uint64_t seed);

}  // namespace symdec

#endif  // SYMDEC_GRADCHECK_HPP
