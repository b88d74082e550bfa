#ifndef SYMDEC_METRICS_HPP
#define SYMDEC_METRICS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "symdec/synthdata.hpp"

namespace symdec::metrics {

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_taus();

struct F1Options {
  std::vector<double> taus = default_taus();
  int tolerance = 0;   // ρ; gt is dilated for precision, pred for recall
  bool macro = false;  // mean of per-image F1 instead of one split-wide confusion matrix
};

struct CurvePoint {
  double tau = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct F1Result {
  double f1 = 0.0;
  double tau = 0.0;  // median of the first run of maximal thresholds
  std::vector<CurvePoint> curve;
};

/// Max-F1 over the threshold grid; a pixel is predicted positive when pred >= τ. Heatmaps are
/// [H, W]; gts must be binary. Throws EvalError when the split has no positive gt pixel.
F1Result f1_max(const std::vector<Tensor<float>>& preds, const std::vector<Tensor<float>>& gts,
                const F1Options& opts = {});

/// F1 of one image at a fixed threshold (0 when undefined).
double f1_at(const Tensor<float>& pred, const Tensor<float>& gt, double tau, int tolerance = 0);

/// Binary disk dilation of radius ρ (Euclidean).
Tensor<float> dilate(const Tensor<float>& mask, int radius);

enum class TransformKind { none, rotation, quarter, flip };

TransformKind parse_transform(const std::string& name);
std::string transform_name(TransformKind kind);

struct TransformSpec {
  TransformKind kind = TransformKind::rotation;
  double max_degrees = 45.0;  // rotation: uniform in [-max, max]
};

/// One sampled transform. Rotation angles follow grid::rotate; flip mirrors the columns.
struct Transform {
  grid::RotationAngle angle;
  bool flip = false;
};

Transform sample_transform(const TransformSpec& spec, std::mt19937_64& rng);

/// Applies the transform to a map whose last two axes are square and spatial (pad 0).
Tensor<float> apply(const Transform& t, const Tensor<float>& map);
synth::Annotation apply(const Transform& t, const synth::Annotation& ann, Index rows, Index cols);

/// Heatmap [H, W] predicted from the `item`-th input after transforming that input by `t`.
/// Image models transform the image; token-level models may permute tokens instead.
using TransformedPredictor = std::function<Tensor<float>(std::size_t item, const Transform& t)>;

/// Wraps a plain image -> heatmap predictor.
TransformedPredictor image_predictor(std::function<Tensor<float>(const Tensor<float>&)> predict,
                                     const std::vector<Tensor<float>>& images);

struct RobustnessOptions {
  TransformSpec transform;
  std::uint64_t seed = 0;
  synth::Task task = synth::Task::reflection;
  synth::RasterOptions raster;
  F1Options f1;
};

/// Max-F1 on the transformed split: item i draws its transform from derive_seed({seed, i}); the
/// ground truth is re-rasterized from the analytically transformed annotation.
F1Result robustness(const TransformedPredictor& predict, const std::vector<synth::Annotation>& anns, Index rows,
                    Index cols, const RobustnessOptions& opts);

/// −mean[p log q + (1−p) log(1−q)], both clamped to [ε, 1−ε]. At ε = 1e-8 a perfect binary pair
/// scores about 2e-7.
double cross_entropy(const Tensor<float>& p, const Tensor<float>& q, double eps = 1e-8);
/// Mean binary entropy of p (clamped as above).
double binary_entropy(const Tensor<float>& p, double eps = 1e-8);

struct ConsistencyOptions {
  TransformSpec transform;
  int samples = 4;  // transforms per image
  std::uint64_t seed = 0;
  double eps = 1e-8;
};

struct ConsistencyResult {
  double mean = 0.0;                  // over images and samples
  std::vector<double> per_image;      // mean CE per image
  std::vector<double> entropy_gap;    // max over samples of CE(p, q) − H(p) per image
};

/// p = T(Ŝ(I)) is the target, q = Ŝ(T(I)) the prediction.
ConsistencyResult consistency(const TransformedPredictor& predict, std::size_t count, const ConsistencyOptions& opts);

struct EvalReport {
  F1Result f1;
  std::vector<double> per_image_f1;  // at f1.tau
  bool has_robustness = false;
  std::string robustness_transform;
  F1Result robustness;
  bool has_consistency = false;
  ConsistencyResult consistency;
};

/// "key: value" lines.
void write_report(std::ostream& os, const EvalReport& report);
/// tau,precision,recall,f1 rows.
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

}  // namespace symdec::metrics

#endif  // SYMDEC_METRICS_HPP
