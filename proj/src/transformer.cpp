#include "symdec/transformer.hpp"

namespace symdec {

template <typename S>
void init_transformer(ParamSet<S>& params, const std::string& prefix, const TransformerConfig& cfg, std::mt19937_64& rng) {
  const Index d = cfg.width, hidden = Index(cfg.width) * cfg.mlp_ratio;
  if (cfg.heads < 1 || d % cfg.heads != 0) {
    throw ConfigError(prefix + ": width " + std::to_string(d) + " is not divisible by " + std::to_string(cfg.heads) + " heads");
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l) + ".";
    init_constant(params, p + "ln1.g", {d}, 1.0);
    init_constant(params, p + "ln1.b", {d}, 0.0);
    for (const char* m : {"q", "k", "v", "o"}) {
      init_normal(params, p + "attn." + m + ".w", {d, d}, rng, 0.02);
      init_constant(params, p + "attn." + m + ".b", {d}, 0.0);
    }
    init_constant(params, p + "ln2.g", {d}, 1.0);
    init_constant(params, p + "ln2.b", {d}, 0.0);
    init_normal(params, p + "mlp.fc1.w", {d, hidden}, rng, 0.02);
    init_constant(params, p + "mlp.fc1.b", {hidden}, 0.0);
    init_normal(params, p + "mlp.fc2.w", {hidden, d}, rng, 0.02);
    init_constant(params, p + "mlp.fc2.b", {d}, 0.0);
  }
}

template <typename S>
ad::Var<S> transformer_layer(const VarSet<S>& vars, const std::string& p, const TransformerConfig& cfg, const ad::Var<S>& x) {
  auto linear = [&](const ad::Var<S>& in, const std::string& name) {
    return ops::add_row(ops::matmul(in, param(vars, name + ".w")), param(vars, name + ".b"));
  };
  const auto h = ops::layer_norm(x, param(vars, p + "ln1.g"), param(vars, p + "ln1.b"));
  const auto attn = ops::attention(linear(h, p + "attn.q"), linear(h, p + "attn.k"), linear(h, p + "attn.v"), cfg.heads);
  const auto x1 = ops::add(x, linear(attn, p + "attn.o"));
  const auto h2 = ops::layer_norm(x1, param(vars, p + "ln2.g"), param(vars, p + "ln2.b"));
  const auto mlp = linear(ops::gelu(linear(h2, p + "mlp.fc1")), p + "mlp.fc2");
  return ops::add(x1, mlp);
}

template <typename S>
ad::Var<S> transformer_forward(const VarSet<S>& vars, const std::string& prefix, const TransformerConfig& cfg, ad::Var<S> x) {
  for (int l = 0; l < cfg.layers; ++l) x = transformer_layer(vars, prefix + ".l" + std::to_string(l) + ".", cfg, x);
  return x;
}

template <typename S>
Tensor<S> layer_norm_normalize(const Tensor<S>& x, double eps) {
  const Index c = x.dim(1);
  auto ones = ad::Var<S>::constant(Tensor<S>(Shape{c}, S(1)));
  auto zeros = ad::Var<S>::constant(Tensor<S>(Shape{c}));
  return ops::layer_norm(ad::Var<S>::constant(x), ones, zeros, eps).value();
}

#define SYMDEC_INSTANTIATE_TRANSFORMER(S)                                                                     \
  template void init_transformer<S>(ParamSet<S>&, const std::string&, const TransformerConfig&, std::mt19937_64&); \
  template ad::Var<S> transformer_layer<S>(const VarSet<S>&, const std::string&, const TransformerConfig&,       \
                                           const ad::Var<S>&);                                                 \
  template ad::Var<S> transformer_forward<S>(const VarSet<S>&, const std::string&, const TransformerConfig&,     \
                                             ad::Var<S>);                                                      \
  template Tensor<S> layer_norm_normalize<S>(const Tensor<S>&, double);

SYMDEC_INSTANTIATE_TRANSFORMER(float)
SYMDEC_INSTANTIATE_TRANSFORMER(double)

}  // namespace symdec
