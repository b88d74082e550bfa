#ifndef SYMDEC_TRANSFORMER_HPP
#define SYMDEC_TRANSFORMER_HPP

#include "symdec/ops.hpp"
#include "symdec/params.hpp"

namespace symdec {

struct TransformerConfig {
  int width = 32;
  int layers = 2;
  int heads = 2;
  int mlp_ratio = 4;
};

/// Pre-norm layers: x += Attn(LN(x)); x += MLP(LN(x)). Parameters live under "<prefix>.l<i>.*".
template <typename S>
void init_transformer(ParamSet<S>& params, const std::string& prefix, const TransformerConfig& cfg, std::mt19937_64& rng);

template <typename S>
ad::Var<S> transformer_layer(const VarSet<S>& vars, const std::string& prefix, const TransformerConfig& cfg,
                             const ad::Var<S>& x);

template <typename S>
ad::Var<S> transformer_forward(const VarSet<S>& vars, const std::string& prefix, const TransformerConfig& cfg,
                               ad::Var<S> x);

/// Pre-affine layer-norm activations (per-row zero mean, unit variance).
template <typename S>
Tensor<S> layer_norm_normalize(const Tensor<S>& x, double eps = 1e-5);

}  // namespace symdec

#endif  // SYMDEC_TRANSFORMER_HPP
