#include "symdec/decoder.hpp"

#include <cmath>
#include <iostream>

#include "symdec/grid.hpp"

namespace symdec {

void validate(const DecoderConfig& cfg) {
  validate_decoder_quiet(cfg);
  if (cfg.n == 6) std::cerr << "warning: n = 6 is not a multiple of 4; C4 equivariance does not hold\n";
}

void validate_decoder_quiet(const DecoderConfig& cfg) {
  if (cfg.n != 6 && (cfg.n < 4 || cfg.n % 4 != 0)) {
    throw ConfigError("decoder.n must be a positive multiple of 4 (or 6), got " + std::to_string(cfg.n));
  }
  if (cfg.dim < 1 || cfg.heads < 1 || cfg.dim % cfg.heads != 0) {
    throw ConfigError("decoder.dim " + std::to_string(cfg.dim) + " must be divisible by decoder.heads " +
                      std::to_string(cfg.heads));
  }
  if (cfg.layers < 0 || cfg.mlp_ratio < 1) throw ConfigError("decoder.layers must be >= 0 and mlp_ratio >= 1");
  if (cfg.channels.size() < 2) throw ConfigError("decoder.channels needs at least two entries");
  if (cfg.channels.front() != cfg.dim) {
    throw ConfigError("decoder.channels[0] = " + std::to_string(cfg.channels.front()) + " must equal decoder.dim = " +
                      std::to_string(cfg.dim));
  }
  if (cfg.channels.back() != 1) throw ConfigError("decoder.channels must end in 1");
  for (int c : cfg.channels) {
    if (c < 1) throw ConfigError("decoder.channels entries must be positive");
  }
  if (cfg.token_dim < 1 || cfg.text_dim < 1 || cfg.prompts < 1) {
    throw ConfigError("decoder token_dim, text_dim and prompts must be positive");
  }
}

template <typename S>
ParamSet<S> init_decoder(const DecoderConfig& cfg, std::mt19937_64& rng) {
  validate_decoder_quiet(cfg);
  ParamSet<S> params;
  const Index d = cfg.dim;
  init_normal(params, "dec.img.w", {cfg.token_dim, d}, rng, 0.02);
  init_constant(params, "dec.img.b", {d}, 0.0);
  init_normal(params, "dec.film.gamma.w", {cfg.text_dim, d}, rng, 0.02);
  init_constant(params, "dec.film.gamma.b", {d}, 1.0);
  init_normal(params, "dec.film.beta.w", {cfg.text_dim, d}, rng, 0.02);
  init_constant(params, "dec.film.beta.b", {d}, 0.0);
  init_transformer(params, "dec", cfg.transformer(), rng);
  init_constant(params, "dec.agg.logits", {cfg.prompts}, 0.0);
  for (int s = 0; s < cfg.stages(); ++s) {
    const Index ci = cfg.channels[s], co = cfg.channels[s + 1];
    const std::string p = "dec.gconv" + std::to_string(s);
    init_normal(params, p + ".w", {co, ci, cfg.n, 3, 3}, rng, std::sqrt(2.0 / double(ci * cfg.n * 9)));
    const bool last = s + 1 == cfg.stages();
    init_constant(params, p + ".b", {co}, last ? std::log(0.05 / 0.95) : 0.0);
  }
  return params;
}

template <typename S>
ad::Var<S> project_tokens(const VarSet<S>& vars, const ad::Var<S>& tokens) {
  return ops::add_row(ops::matmul(tokens, param(vars, "dec.img.w")), param(vars, "dec.img.b"));
}

template <typename S>
ad::Var<S> film(const VarSet<S>& vars, const ad::Var<S>& text, Index prompt, const ad::Var<S>& projected) {
  const auto zt = ops::select_row(text, prompt);
  const auto gamma = ops::add_row(ops::matmul(zt, param(vars, "dec.film.gamma.w")), param(vars, "dec.film.gamma.b"));
  const auto beta = ops::add_row(ops::matmul(zt, param(vars, "dec.film.beta.w")), param(vars, "dec.film.beta.b"));
  return ops::add_row(ops::mul_row(projected, gamma), beta);
}

template <typename S>
Tensor<S> sinusoidal_code(Index count, Index dim) {
  Tensor<S> pe(Shape{count, dim});
  for (Index i = 0; i < count; ++i) {
    for (Index c = 0; c < dim; ++c) {
      const double freq = std::pow(10000.0, -double(2 * (c / 2)) / double(dim));
      pe(i, c) = S(c % 2 == 0 ? std::sin(double(i) * freq) : std::cos(double(i) * freq));
    }
  }
  return pe;
}

template <typename S>
ad::Var<S> transformer_block(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& x) {
  ad::Var<S> h = x;
  if (cfg.inject_positional_encoding) {
    h = ops::add(h, ad::Var<S>::constant(sinusoidal_code<S>(x.shape()[0], x.shape()[1])));
  }
  return transformer_forward(vars, "dec", cfg.transformer(), h);
}

template <typename S>
ad::Var<S> aggregate_prompts(const VarSet<S>& vars, const std::vector<ad::Var<S>>& branches) {
  const auto& logits = param(vars, "dec.agg.logits");
  if (Index(branches.size()) != logits.value().size()) {
    throw ShapeError("aggregate: " + std::to_string(branches.size()) + " prompt branches vs " +
                     std::to_string(logits.value().size()) + " aggregation logits");
  }
  return ops::aggregate(branches, ops::softmax(logits));
}

template <typename S>
ad::Var<S> upsample_head(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& lifted, Index rows,
                         Index cols) {
  ad::Var<S> g = lifted;
  for (int s = 0; s < cfg.stages(); ++s) {
    const std::string p = "dec.gconv" + std::to_string(s);
    g = ops::gconv(g, param(vars, p + ".w"), param(vars, p + ".b"), cfg.n);
    if (s + 1 < cfg.stages()) g = ops::relu(g);
    g = ops::resize(g, 2 * g.shape()[2], 2 * g.shape()[3]);
  }
  auto pooled = ops::mean_axis0(g);  // [1, h, w]
  pooled = ops::resize(pooled, rows, cols);
  return ops::reshape(pooled, Shape{rows, cols});
}

template <typename S>
ad::Var<S> decode_graph(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& tokens,
                        const ad::Var<S>& text, Index rows, Index cols) {
  if (text.shape().size() != 2 || text.shape()[0] != cfg.prompts) {
    throw ShapeError("decode: text tokens " + shape_string(text.shape()) + " vs " + std::to_string(cfg.prompts) +
                     " prompts");
  }
  const auto projected = project_tokens(vars, tokens);
  std::vector<ad::Var<S>> branches;
  for (Index t = 0; t < cfg.prompts; ++t) branches.push_back(transformer_block(vars, cfg, film(vars, text, t, projected)));
  const auto grid = ops::to_grid(aggregate_prompts(vars, branches));
  return upsample_head(vars, cfg, ops::lift(grid, cfg.n), rows, cols);
}

template <typename S>
Tensor<S> decode(const PatchTokens<S>& tokens, const Tensor<S>& text, const ParamSet<S>& params,
                 const DecoderConfig& cfg) {
  const auto logits = decode_graph(as_constants(params), cfg, ad::Var<S>::constant(tokens.flat()),
                                   ad::Var<S>::constant(text), tokens.image_height, tokens.image_width);
  auto out = ops::sigmoid(logits).value();
  if (!out.all_finite()) throw NumericError("decode: non-finite heatmap");
  return out;
}

template <typename S>
PatchTokens<S> token_rotate(const PatchTokens<S>& tokens, int k) {
  const Index m = tokens.grid(), d = tokens.dim();
  // Move the channel axis in front, rotate the planes, move it back.
  Tensor<S> planes(Shape{d, m, m});
  for (Index p = 0; p < m * m; ++p) {
    for (Index c = 0; c < d; ++c) planes.data()[c * m * m + p] = tokens.tokens.data()[p * d + c];
  }
  const Tensor<S> rotated = grid::rotate90(planes, k);
  PatchTokens<S> out = tokens;
  for (Index p = 0; p < m * m; ++p) {
    for (Index c = 0; c < d; ++c) out.tokens.data()[p * d + c] = rotated.data()[c * m * m + p];
  }
  return out;
}

#define SYMDEC_INSTANTIATE_DECODER(S)                                                                              \
  template ParamSet<S> init_decoder<S>(const DecoderConfig&, std::mt19937_64&);                                    \
  template ad::Var<S> project_tokens<S>(const VarSet<S>&, const ad::Var<S>&);                                      \
  template ad::Var<S> film<S>(const VarSet<S>&, const ad::Var<S>&, Index, const ad::Var<S>&);                      \
  template ad::Var<S> transformer_block<S>(const VarSet<S>&, const DecoderConfig&, const ad::Var<S>&);             \
  template ad::Var<S> aggregate_prompts<S>(const VarSet<S>&, const std::vector<ad::Var<S>>&);                      \
  template ad::Var<S> upsample_head<S>(const VarSet<S>&, const DecoderConfig&, const ad::Var<S>&, Index, Index);   \
  template ad::Var<S> decode_graph<S>(const VarSet<S>&, const DecoderConfig&, const ad::Var<S>&, const ad::Var<S>&, \
                                      Index, Index);                                                               \
  template Tensor<S> decode<S>(const PatchTokens<S>&, const Tensor<S>&, const ParamSet<S>&, const DecoderConfig&); \
  template PatchTokens<S> token_rotate<S>(const PatchTokens<S>&, int);                                             \
  template Tensor<S> sinusoidal_code<S>(Index, Index);

SYMDEC_INSTANTIATE_DECODER(float)
SYMDEC_INSTANTIATE_DECODER(double)

}  // namespace symdec
