#include "symdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "symdec/rng.hpp"

namespace symdec::metrics {

std::vector<double> default_taus() {
  std::vector<double> taus;
  for (int i = 1; i <= 99; ++i) taus.push_back(i / 100.0);
  return taus;
}

namespace {

struct Counts {
  double tp_precision = 0, predicted = 0;  // predicted positives matched by (dilated) gt, all predicted
  double tp_recall = 0, positives = 0;     // gt positives matched by (dilated) pred, all gt
};

CurvePoint score(double tau, const Counts& c) {
  CurvePoint p{tau, c.predicted > 0 ? c.tp_precision / c.predicted : 1.0,
               c.positives > 0 ? c.tp_recall / c.positives : 0.0, 0.0};
  p.f1 = p.precision + p.recall > 0 ? 2 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
  return p;
}

/// Exact-pixel F1 from integer counts.
double exact_f1(double tp, double fp, double fn) { return tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0; }

void validate_pair(const Tensor<float>& pred, const Tensor<float>& gt) {
  if (pred.rank() != 2 || pred.shape() != gt.shape()) {
    throw ShapeError("f1: prediction " + shape_string(pred.shape()) + " vs ground truth " + shape_string(gt.shape()));
  }
  for (Index i = 0; i < gt.size(); ++i) {
    if (gt[i] != 0.0f && gt[i] != 1.0f) throw ConfigError("f1: ground truth must be binary");
  }
}

Tensor<float> binarize(const Tensor<float>& pred, double tau) {
  Tensor<float> out(pred.shape());
  for (Index i = 0; i < pred.size(); ++i) out[i] = double(pred[i]) >= tau ? 1.0f : 0.0f;
  return out;
}

/// Counts of one image at each threshold.
std::vector<Counts> image_counts(const Tensor<float>& pred, const Tensor<float>& gt, const std::vector<double>& taus,
                                 int tolerance) {
  std::vector<Counts> out(taus.size());
  double positives = 0;
  for (Index i = 0; i < gt.size(); ++i) positives += gt[i];
  if (tolerance == 0) {
    // hist[j]: pixels that are predicted positive for exactly the first j thresholds.
    std::vector<double> pos(taus.size() + 1, 0.0), neg(taus.size() + 1, 0.0);
    for (Index i = 0; i < pred.size(); ++i) {
      const auto j = std::size_t(std::upper_bound(taus.begin(), taus.end(), double(pred[i])) - taus.begin());
      (gt[i] == 1.0f ? pos : neg)[j] += 1;
    }
    double tp = 0, fp = 0;
    for (std::size_t t = taus.size(); t-- > 0;) {
      tp += pos[t + 1];
      fp += neg[t + 1];
      out[t] = {tp, tp + fp, tp, positives};
    }
    return out;
  }
  const Tensor<float> gt_wide = dilate(gt, tolerance);
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const Tensor<float> bin = binarize(pred, taus[t]);
    const Tensor<float> bin_wide = dilate(bin, tolerance);
    Counts c;
    c.positives = positives;
    for (Index i = 0; i < gt.size(); ++i) {
      c.predicted += bin[i];
      c.tp_precision += bin[i] * gt_wide[i];
      c.tp_recall += gt[i] * bin_wide[i];
    }
    out[t] = c;
  }
  return out;
}

F1Result pick_best(std::vector<CurvePoint> curve) {
  F1Result r;
  std::size_t first = 0;
  for (std::size_t t = 1; t < curve.size(); ++t) {
    if (curve[t].f1 > curve[first].f1) first = t;
  }
  std::size_t last = first;
  while (last + 1 < curve.size() && curve[last + 1].f1 == curve[first].f1) ++last;
  r.f1 = curve[first].f1;
  r.tau = curve[first + (last - first) / 2].tau;
  r.curve = std::move(curve);
  return r;
}

}  // namespace

Tensor<float> dilate(const Tensor<float>& mask, int radius) {
  if (mask.rank() != 2) throw ShapeError("dilate expects [H, W], got " + shape_string(mask.shape()));
  if (radius <= 0) return mask;
  const Index rows = mask.dim(0), cols = mask.dim(1);
  Tensor<float> out(mask.shape());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (mask(r, c) == 0.0f) continue;
      for (Index dr = -radius; dr <= radius; ++dr) {
        for (Index dc = -radius; dc <= radius; ++dc) {
          const Index rr = r + dr, cc = c + dc;
          if (dr * dr + dc * dc > Index(radius) * radius || rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          out(rr, cc) = 1.0f;
        }
      }
    }
  }
  return out;
}

F1Result f1_max(const std::vector<Tensor<float>>& preds, const std::vector<Tensor<float>>& gts, const F1Options& opts) {
  if (preds.size() != gts.size()) {
    throw ShapeError("f1: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(gts.size()) +
                     " ground truths");
  }
  if (preds.empty()) throw EvalError("f1: empty split");
  if (opts.taus.empty()) throw ConfigError("f1: empty threshold grid");
  for (std::size_t t = 0; t < opts.taus.size(); ++t) {
    if (!(opts.taus[t] > 0 && opts.taus[t] < 1) || (t > 0 && opts.taus[t] <= opts.taus[t - 1])) {
      throw ConfigError("f1: thresholds must be increasing and inside (0, 1)");
    }
  }
  if (opts.tolerance < 0) throw ConfigError("f1: tolerance must be >= 0");

  const std::size_t nt = opts.taus.size();
  std::vector<Counts> total(nt);
  std::vector<CurvePoint> macro(nt);
  int scored_images = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    validate_pair(preds[i], gts[i]);
    const auto counts = image_counts(preds[i], gts[i], opts.taus, opts.tolerance);
    for (std::size_t t = 0; t < nt; ++t) {
      total[t].tp_precision += counts[t].tp_precision;
      total[t].predicted += counts[t].predicted;
      total[t].tp_recall += counts[t].tp_recall;
      total[t].positives += counts[t].positives;
    }
    if (opts.macro && counts[0].positives > 0) {
      ++scored_images;
      for (std::size_t t = 0; t < nt; ++t) {
        const auto p = score(opts.taus[t], counts[t]);
        macro[t].precision += p.precision;
        macro[t].recall += p.recall;
        macro[t].f1 += opts.tolerance == 0 ? exact_f1(counts[t].tp_precision, counts[t].predicted - counts[t].tp_precision,
                                                      counts[t].positives - counts[t].tp_recall)
                                           : p.f1;
      }
    }
  }
  if (total[0].positives == 0) throw EvalError("f1: the split has no positive ground-truth pixels; recall is undefined");

  std::vector<CurvePoint> curve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    if (opts.macro) {
      curve[t] = {opts.taus[t], macro[t].precision / scored_images, macro[t].recall / scored_images,
                  macro[t].f1 / scored_images};
    } else {
      curve[t] = score(opts.taus[t], total[t]);
      if (opts.tolerance == 0) {
        curve[t].f1 = exact_f1(total[t].tp_precision, total[t].predicted - total[t].tp_precision,
                               total[t].positives - total[t].tp_recall);
      }
    }
  }
  return pick_best(std::move(curve));
}

double f1_at(const Tensor<float>& pred, const Tensor<float>& gt, double tau, int tolerance) {
  validate_pair(pred, gt);
  const auto c = image_counts(pred, gt, {tau}, tolerance)[0];
  if (tolerance == 0) return exact_f1(c.tp_precision, c.predicted - c.tp_precision, c.positives - c.tp_recall);
  return score(tau, c).f1;
}

TransformKind parse_transform(const std::string& name) {
  if (name == "none") return TransformKind::none;
  if (name == "rotation") return TransformKind::rotation;
  if (name == "quarter") return TransformKind::quarter;
  if (name == "flip") return TransformKind::flip;
  throw ConfigError("unknown transform '" + name + "' (expected none|rotation|quarter|flip)");
}

std::string transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::none: return "none";
    case TransformKind::rotation: return "rotation";
    case TransformKind::quarter: return "quarter";
    case TransformKind::flip: return "flip";
  }
  return "?";
}

Transform sample_transform(const TransformSpec& spec, std::mt19937_64& rng) {
  Transform t;
  switch (spec.kind) {
    case TransformKind::none: break;
    case TransformKind::rotation:
      if (spec.max_degrees > 0) {
        t.angle = grid::RotationAngle(std::uniform_real_distribution<double>(-spec.max_degrees, spec.max_degrees)(rng));
      }
      break;
    case TransformKind::quarter:
      t.angle = grid::RotationAngle::quarter_turns(std::uniform_int_distribution<int>(0, 3)(rng));
      break;
    case TransformKind::flip: t.flip = std::bernoulli_distribution(0.5)(rng); break;
  }
  return t;
}

Tensor<float> apply(const Transform& t, const Tensor<float>& map) {
  const Tensor<float> flipped = t.flip ? grid::flip_horizontal(map) : map;
  return grid::rotate(flipped, t.angle);
}

synth::Annotation apply(const Transform& t, const synth::Annotation& ann, Index rows, Index cols) {
  const synth::Annotation flipped = t.flip ? synth::flip_horizontal(ann, cols) : ann;
  return synth::rotate(flipped, t.angle, rows, cols);
}

TransformedPredictor image_predictor(std::function<Tensor<float>(const Tensor<float>&)> predict,
                                     const std::vector<Tensor<float>>& images) {
  return [predict = std::move(predict), &images](std::size_t item, const Transform& t) {
    return predict(apply(t, images.at(item)));
  };
}

F1Result robustness(const TransformedPredictor& predict, const std::vector<synth::Annotation>& anns, Index rows,
                    Index cols, const RobustnessOptions& opts) {
  if (anns.empty()) throw EvalError("robustness: empty split");
  std::vector<Tensor<float>> preds, gts;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    std::mt19937_64 rng(derive_seed({opts.seed, std::uint64_t(i)}));
    const Transform t = sample_transform(opts.transform, rng);
    preds.push_back(predict(i, t));
    gts.push_back(synth::rasterize(apply(t, anns[i], rows, cols), rows, cols, opts.task, opts.raster).heatmap);
  }
  return f1_max(preds, gts, opts.f1);
}

double cross_entropy(const Tensor<float>& p, const Tensor<float>& q, double eps) {
  if (p.shape() != q.shape()) {
    throw ShapeError("cross_entropy: " + shape_string(p.shape()) + " vs " + shape_string(q.shape()));
  }
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double a = std::clamp(double(p[i]), eps, 1 - eps), b = std::clamp(double(q[i]), eps, 1 - eps);
    total -= a * std::log(b) + (1 - a) * std::log(1 - b);
  }
  return total / double(p.size());
}

double binary_entropy(const Tensor<float>& p, double eps) { return cross_entropy(p, p, eps); }

ConsistencyResult consistency(const TransformedPredictor& predict, std::size_t count, const ConsistencyOptions& opts) {
  if (count == 0) throw EvalError("consistency: empty split");
  if (opts.samples < 1) throw ConfigError("consistency: samples must be >= 1");
  ConsistencyResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor<float> base = predict(i, Transform{});
    double sum = 0.0, gap = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < opts.samples; ++s) {
      std::mt19937_64 rng(derive_seed({opts.seed, std::uint64_t(i), std::uint64_t(s)}));
      const Transform t = sample_transform(opts.transform, rng);
      const Tensor<float> p = apply(t, base);
      const double ce = cross_entropy(p, predict(i, t), opts.eps);
      sum += ce;
      gap = std::max(gap, ce - binary_entropy(p, opts.eps));
    }
    r.per_image.push_back(sum / opts.samples);
    r.entropy_gap.push_back(gap);
    total += sum;
  }
  r.mean = total / double(count * std::size_t(opts.samples));
  return r;
}

void write_report(std::ostream& os, const EvalReport& report) {
  os << std::setprecision(6);
  os << "f1: " << report.f1.f1 << '\n' << "tau: " << report.f1.tau << '\n';
  os << "images: " << report.per_image_f1.size() << '\n';
  if (report.has_robustness) {
    os << "robustness_transform: " << report.robustness_transform << '\n';
    os << "robustness_f1: " << report.robustness.f1 << '\n' << "robustness_tau: " << report.robustness.tau << '\n';
  }
  if (report.has_consistency) {
    double gap = 0.0;
    for (double g : report.consistency.entropy_gap) gap = std::max(gap, g);
    os << "consistency: " << report.consistency.mean << '\n' << "consistency_max_entropy_gap: " << gap << '\n';
  }
  for (std::size_t i = 0; i < report.per_image_f1.size(); ++i) {
    os << "image_" << std::setw(4) << std::setfill('0') << i << std::setfill(' ') << "_f1: " << report.per_image_f1[i]
       << '\n';
  }
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "tau,precision,recall,f1\n" << std::setprecision(8);
  for (const auto& p : curve) os << p.tau << ',' << p.precision << ',' << p.recall << ',' << p.f1 << '\n';
}

}  // namespace symdec::metrics
