#include "symdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "symdec/decoder.hpp"
#include "symdec/encoder.hpp"
#include "symdec/model.hpp"
#include "symdec/ops.hpp"

namespace symdec {
namespace {

using Rule = ad::AdjointRule<double>;

std::vector<const Tensor<double>*> refs_of(const std::vector<Tensor<double>>& xs) {
  std::vector<const Tensor<double>*> r;
  for (const auto& x : xs) r.push_back(&x);
  return r;
}

Tensor<double> run(const Rule& op, const std::vector<Tensor<double>>& xs) {
  const auto r = refs_of(xs);
  return op.forward(ad::TensorRefs<double>(r));
}

std::string first_bad(const Tensor<double>& t) {
  for (Index i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return "element " + std::to_string(i);
  }
  return {};
}

/// Keeps positive entries away from zero so ReLU kinks and the like are not probed.
Tensor<double> away_from_zero(Tensor<double> t, double margin) {
  for (Index i = 0; i < t.size(); ++i) {
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? -margin : margin;
  }
  return t;
}

/// Whole-graph rule over named parameters followed by extra inputs.
ad::RulePtr<double> named_graph_rule(
    std::string name, std::vector<std::string> names,
    std::function<ad::Var<double>(const VarSet<double>&, const std::vector<ad::Var<double>>&)> fn) {
  return ad::graph_rule<double>(std::move(name), [names, fn](const std::vector<ad::Var<double>>& in) {
    VarSet<double> vars;
    for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], in[i]);
    std::vector<ad::Var<double>> rest(in.begin() + std::ptrdiff_t(names.size()), in.end());
    return fn(vars, rest);
  });
}

}  // namespace

AdjointReport check_adjoint(const Rule& op, const std::vector<Tensor<double>>& inputs, std::uint64_t seed,
                            const GradcheckOptions& opts) {
  AdjointReport report;
  report.max_kink_fraction = opts.max_kink_fraction;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (auto bad = first_bad(inputs[i]); !bad.empty()) {
      report.failure = op.name + ": input " + std::to_string(i) + " " + bad + " is not finite";
      return report;
    }
  }
  std::mt19937_64 rng(seed);
  const Tensor<double> y = run(op, inputs);
  if (auto bad = first_bad(y); !bad.empty()) {
    report.failure = op.name + ": forward output " + bad + " is not finite";
    return report;
  }
  const Tensor<double> r = Tensor<double>::randn(y.shape(), rng, 1.0);
  const auto refs = refs_of(inputs);
  const auto grads = op.backward(ad::TensorRefs<double>(refs), y, r);
  if (grads.size() != inputs.size()) {
    report.failure = op.name + ": backward returned " + std::to_string(grads.size()) + " cotangents for " +
                     std::to_string(inputs.size()) + " inputs";
    return report;
  }
  auto phi = [&](const std::vector<Tensor<double>>& xs) { return run(op, xs).vec().dot(r.vec()); };
  const double phi0 = y.vec().dot(r.vec());
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (grads[i].shape() != inputs[i].shape()) {
      report.failure = op.name + ": cotangent " + std::to_string(i) + " has shape " + shape_string(grads[i].shape()) +
                       ", input has " + shape_string(inputs[i].shape());
      return report;
    }
    if (auto bad = first_bad(grads[i]); !bad.empty()) {
      report.failure = op.name + ": cotangent " + std::to_string(i) + " " + bad + " is not finite";
      return report;
    }
    std::vector<Index> probes(std::size_t(inputs[i].size()));
    std::iota(probes.begin(), probes.end(), 0);
    if (opts.max_probes > 0 && Index(probes.size()) > opts.max_probes) {
      std::shuffle(probes.begin(), probes.end(), rng);
      probes.resize(std::size_t(opts.max_probes));
    }
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (Index j : probes) {
      const double x0 = work[i][j];
      work[i][j] = x0 + opts.step;
      const double up = phi(work);
      work[i][j] = x0 - opts.step;
      const double down = phi(work);
      work[i][j] = x0;
      const double fd = (up - down) / (2 * opts.step);
      if (!std::isfinite(fd)) {
        report.failure = op.name + ": finite difference for input " + std::to_string(i) + " element " +
                         std::to_string(j) + " is not finite";
        return report;
      }
      ++report.probes;
      const double s_up = (up - phi0) / opts.step, s_down = (phi0 - down) / opts.step;
      if (std::abs(s_up - s_down) > opts.kink_tol * std::max(1.0, std::abs(fd))) {
        ++report.kinks;
        continue;
      }
      const double a = grads[i][j];
      diff += (a - fd) * (a - fd);
      na += a * a;
      nf += fd * fd;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-6});
    report.per_input.push_back(rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

std::vector<RegisteredOp> op_registry(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto randn = [&](Shape s, double sd = 1.0) { return Tensor<double>::randn(std::move(s), rng, sd); };
  auto unit = [&](Shape s, double lo, double hi) { return Tensor<double>::uniform(std::move(s), rng, lo, hi); };
  std::vector<RegisteredOp> ops;
  auto add = [&](std::string name, ad::RulePtr<double> rule, std::vector<Tensor<double>> in, Index probes = 0) {
    ops.push_back({std::move(name), std::move(rule), std::move(in), {1e-4, probes}});
  };

  add("matmul", ops::matmul_rule<double>(), {randn({3, 4}), randn({4, 5})});
  add("add", ops::add_rule<double>(), {randn({3, 4}), randn({3, 4})});
  add("add_row", ops::add_row_rule<double>(), {randn({3, 4}), randn({4})});
  add("mul_row", ops::mul_row_rule<double>(), {randn({3, 4}), randn({1, 4})});
  add("scale", ops::scale_rule<double>(-0.7), {randn({2, 3})});
  add("layer_norm", ops::layer_norm_rule<double>(), {randn({3, 6}), randn({6}), randn({6})});
  add("gelu", ops::gelu_rule<double>(), {randn({4, 5})});
  add("relu", ops::relu_rule<double>(), {away_from_zero(randn({4, 5}), 1e-2)});
  add("sigmoid", ops::sigmoid_rule<double>(), {randn({4, 5}, 3.0)});
  add("attention", ops::attention_rule<double>(2), {randn({5, 4}), randn({5, 4}), randn({5, 4})});
  add("select_row", ops::select_row_rule<double>(2), {randn({4, 3})});
  add("softmax", ops::softmax_rule<double>(), {randn({6})});
  add("aggregate", ops::aggregate_rule<double>(), {randn({4, 3}), randn({4, 3}), randn({4, 3}), unit({3}, 0.1, 0.5)});
  add("to_grid", ops::to_grid_rule<double>(), {randn({9, 2})});
  add("lift", ops::lift_rule<double>(8), {randn({2, 3, 3})});
  add("gconv_n4", ops::gconv_rule<double>(4), {randn({4, 2, 5, 5}), randn({3, 2, 4, 3, 3}), randn({3})});
  add("gconv_n8", ops::gconv_rule<double>(8), {randn({8, 2, 4, 4}), randn({2, 2, 8, 3, 3}), randn({2})});
  add("resize", ops::resize_rule<double>(7, 9), {randn({2, 4, 5})});
  add("mean_axis0", ops::mean_axis0_rule<double>(), {randn({3, 2, 4})});
  add("reshape", ops::reshape_rule<double>({6, 2}), {randn({3, 4})});
  {
    Tensor<double> target({4, 4});
    for (Index i = 0; i < target.size(); ++i) target[i] = double(rng() % 2);
    add("focal_loss", ops::focal_logits_rule<double>(target, 0.85, 2.0, 1e-7), {randn({4, 4}, 2.0)});
  }
  add("mse", ops::mse_rule<double>(), {randn({3, 3}), randn({3, 3})});

  {
    TransformerConfig cfg{4, 1, 2, 2};
    ParamSet<double> p;
    init_transformer(p, "t", cfg, rng);
    std::vector<std::string> names;
    std::vector<Tensor<double>> in;
    for (auto& [name, t] : p) {
      names.push_back(name);
      in.push_back(Tensor<double>(t.shape(), t.vec() + randn(t.shape(), 0.3).vec()));
    }
    in.push_back(randn({5, 4}));
    add("transformer_layer",
        named_graph_rule("transformer_layer", names,
                         [cfg](const VarSet<double>& v, const std::vector<ad::Var<double>>& x) {
                           return transformer_layer(v, "t.l0.", cfg, x[0]);
                         }),
        std::move(in));
  }
  {
    EncoderConfig cfg{8, 4, 4, 1, 2, 2};
    const Tensor<double> image = unit({3, 8, 8}, 0.0, 1.0);
    std::vector<std::string> names;
    std::vector<Tensor<double>> in;
    for (auto& [name, t] : init_encoder<double>(cfg, rng)) {
      names.push_back(name);
      in.push_back(Tensor<double>(t.shape(), t.vec() + randn(t.shape(), 0.3).vec()));
    }
    add("encoder",
        named_graph_rule("encoder", names,
                         [cfg, image](const VarSet<double>& v, const std::vector<ad::Var<double>>&) {
                           return encode_graph(v, cfg, image);
                         }),
        std::move(in));
  }
  {
    DecoderConfig cfg;
    cfg.n = 8;
    cfg.dim = 4;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.channels = {4, 3, 2, 1};
    cfg.token_dim = 5;
    cfg.text_dim = 6;
    cfg.prompts = 2;
    std::vector<std::string> names;
    std::vector<Tensor<double>> in;
    for (auto& [name, t] : init_decoder<double>(cfg, rng)) {
      names.push_back(name);
      in.push_back(Tensor<double>(t.shape(), t.vec() + randn(t.shape(), 0.3).vec()));
    }
    in.push_back(randn({9, 5}));
    in.push_back(randn({2, 6}));
    add("decoder",
        named_graph_rule("decoder", names,
                         [cfg](const VarSet<double>& v, const std::vector<ad::Var<double>>& x) {
                           return decode_graph(v, cfg, x[0], x[1], 12, 12);
                         }),
        std::move(in));
  }
  {
    // Training objective: image -> encoder -> decoder -> focal loss, over every model parameter.
    ModelConfig cfg;
    cfg.encoder = EncoderConfig{8, 4, 5, 1, 1, 2};
    cfg.decoder.n = 4;
    cfg.decoder.dim = 4;
    cfg.decoder.layers = 1;
    cfg.decoder.heads = 2;
    cfg.decoder.mlp_ratio = 2;
    cfg.decoder.channels = {4, 3, 2, 1};
    cfg.decoder.token_dim = 5;
    cfg.decoder.text_dim = 6;
    cfg.decoder.prompts = 2;
    const Tensor<double> image = unit({3, 8, 8}, 0.0, 1.0);
    Tensor<double> target({8, 8});
    for (Index i = 0; i < target.size(); ++i) target[i] = double(rng() % 4 == 0);
    std::vector<std::string> names;
    std::vector<Tensor<double>> in;
    for (auto& [name, t] : init_model<double>(cfg, randn({2, 6}), rng())) {
      names.push_back(name);
      in.push_back(Tensor<double>(t.shape(), t.vec() + randn(t.shape(), 0.3).vec()));
    }
    add("objective",
        named_graph_rule("objective", names,
                         [cfg, image, target](const VarSet<double>& v, const std::vector<ad::Var<double>>&) {
                           return ops::focal_loss_logits(model_logits(v, cfg, image), target, 0.85, 2.0, 1e-7);
                         }),
        std::move(in));
  }
  return ops;
}

}  // namespace symdec
