#include "symdec/equivariance.hpp"

#include <algorithm>
#include <map>

#include "symdec/grid.hpp"

namespace symdec {

bool EquivarianceReport::ok() const {
  return !skipped && std::all_of(rows.begin(), rows.end(), [](const StageDeviation& r) { return r.pass(); });
}

std::vector<std::string> EquivarianceReport::failing_stages() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (!r.pass() && std::find(out.begin(), out.end(), r.stage) == out.end()) out.push_back(r.stage);
  }
  return out;
}

namespace {

template <typename S>
Tensor<S> rotate_rows(const Tensor<S>& rows, Index grid, int k) {
  PatchTokens<S> pt{rows.reshaped({grid, grid, rows.dim(1)}), 1, grid, grid};
  return token_rotate(pt, k).flat();
}

template <typename S>
ParamSet<S> case_params(const EquivarianceOptions& opts, std::mt19937_64& rng) {
  if (opts.params) {
    ParamSet<S> out;
    for (const auto& [name, t] : *opts.params) {
      if (name.rfind("dec.", 0) == 0) out.emplace(name, t.template cast<S>());
    }
    return out;
  }
  // Perturb the structured initial values so no stage is trivially symmetric.
  ParamSet<S> p = init_decoder<S>(opts.decoder, rng);
  for (auto& [name, t] : p) t.vec() += Tensor<S>::randn(t.shape(), rng, S(0.1)).vec();
  return p;
}

/// Max deviation per (stage, k) for one precision.
template <typename S>
void run(const EquivarianceOptions& opts, double tol, const std::string& precision, EquivarianceReport& report) {
  const DecoderConfig& cfg = opts.decoder;
  const Index m = opts.grid, side = m * opts.patch;
  std::map<std::pair<std::string, int>, double> worst;
  auto record = [&](const std::string& stage, int k, double dev) {
    auto& w = worst[{stage, k}];
    w = std::max(w, dev);
  };
  for (int s = 0; s < opts.seeds; ++s) {
    std::mt19937_64 rng(opts.seed * 1000003ULL + std::uint64_t(s));
    const ParamSet<S> params = case_params<S>(opts, rng);
    const auto vars = as_constants(params);
    PatchTokens<S> tokens{Tensor<S>::randn({m, m, Index(cfg.token_dim)}, rng, S(1)), opts.patch, side, side};
    const auto text = ad::Var<S>::constant(Tensor<S>::randn({Index(cfg.prompts), Index(cfg.text_dim)}, rng, S(1)));

    const auto projected = project_tokens(vars, ad::Var<S>::constant(tokens.flat())).value();
    std::vector<Tensor<S>> filmed;
    std::vector<ad::Var<S>> branches;
    for (Index t = 0; t < cfg.prompts; ++t) {
      filmed.push_back(film(vars, text, t, ad::Var<S>::constant(projected)).value());
      branches.push_back(ad::Var<S>::constant(transformer_block(vars, cfg, ad::Var<S>::constant(filmed.back())).value()));
    }
    const auto mixed = aggregate_prompts(vars, branches).value();
    const auto plane = ops::to_grid(ad::Var<S>::constant(mixed)).value();
    auto head = [&](const Tensor<S>& f) {
      return upsample_head(vars, cfg, ops::lift(ad::Var<S>::constant(f), cfg.n), side, side).value();
    };
    const auto heat = head(plane);
    const auto decoded = decode(tokens, text.value(), params, cfg);

    for (int k = 1; k < 4; ++k) {
      const auto rp = rotate_rows(projected, m, k);
      double film_dev = 0.0;
      std::vector<ad::Var<S>> rbranches;
      for (Index t = 0; t < cfg.prompts; ++t) {
        const auto f = film(vars, text, t, ad::Var<S>::constant(rp)).value();
        film_dev = std::max(film_dev, double(max_abs_diff(f, rotate_rows(filmed[std::size_t(t)], m, k))));
        rbranches.push_back(ad::Var<S>::constant(
            transformer_block(vars, cfg, ad::Var<S>::constant(rotate_rows(filmed[std::size_t(t)], m, k))).value()));
      }
      record("film", k, film_dev);
      record("transformer+aggregation", k,
             double(max_abs_diff(aggregate_prompts(vars, rbranches).value(), rotate_rows(mixed, m, k))));
      record("upsampler", k, double(max_abs_diff(head(grid::rotate90(plane, k)), grid::rotate90(heat, k))));
      record("claim", k,
             double(max_abs_diff(decode(token_rotate(tokens, k), text.value(), params, cfg), grid::rotate90(decoded, k))));
    }
  }
  for (const char* stage : {"film", "transformer+aggregation", "upsampler", "claim"}) {
    for (int k = 1; k < 4; ++k) report.rows.push_back({stage, precision, k, worst[{stage, k}], tol});
  }
}

}  // namespace

EquivarianceReport check_equivariance(const EquivarianceOptions& opts) {
  validate_decoder_quiet(opts.decoder);
  if (opts.seeds < 1) throw ConfigError("equivariance check needs at least one seed");
  if (opts.grid < 1 || opts.patch < 1) throw ConfigError("equivariance check needs a positive grid and patch size");
  EquivarianceReport report;
  if (opts.decoder.n % 4 != 0) {
    report.skipped = true;
    return report;
  }
  run<float>(opts, opts.float_tolerance, "float32", report);
  run<double>(opts, opts.double_tolerance, "float64", report);
  return report;
}

}  // namespace symdec
