#ifndef SYMDEC_EQUIVARIANCE_HPP
#define SYMDEC_EQUIVARIANCE_HPP

#include <optional>
#include <string>
#include <vector>

#include "symdec/decoder.hpp"

namespace symdec {

/// Rotates every token and text-free stage input by k quarter turns and compares against the
/// rotated output. Stages: "film" (per-patch modulation), "transformer+aggregation" (mixing and
/// prompt aggregation), "upsampler" (lift, G-convs, pooling), "claim" (full decoder).
struct EquivarianceOptions {
  DecoderConfig decoder;
  Index grid = 6;  // M
  int patch = 4;   // output is (M·patch)²
  int seeds = 5;
  std::uint64_t seed = 0;
  double float_tolerance = 1e-5;
  double double_tolerance = 1e-10;
  /// Trained parameters to check instead of random ones.
  std::optional<ParamSet<float>> params;
};

struct StageDeviation {
  std::string stage;
  std::string precision;  // "float32" / "float64"
  int k = 0;
  double deviation = 0.0;  // max over seeds
  double tolerance = 0.0;

  bool pass() const { return deviation < tolerance; }
};

struct EquivarianceReport {
  std::vector<StageDeviation> rows;
  bool skipped = false;  // n not a multiple of 4

  bool ok() const;
  std::vector<std::string> failing_stages() const;
};

EquivarianceReport check_equivariance(const EquivarianceOptions& opts);

}  // namespace symdec

#endif  // SYMDEC_EQUIVARIANCE_HPP
