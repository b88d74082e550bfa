#include "symdec/model.hpp"

#include "symdec/ops.hpp"

namespace symdec {

void ModelConfig::validate() const {
  if (encoder.patch_size < 1 || encoder.image_size < encoder.patch_size) {
    throw ConfigError("encoder.image_size " + std::to_string(encoder.image_size) + " must be >= patch_size " +
                      std::to_string(encoder.patch_size));
  }
  if (encoder.dim < 1 || encoder.heads < 1 || encoder.dim % encoder.heads != 0) {
    throw ConfigError("encoder.dim " + std::to_string(encoder.dim) + " must be divisible by encoder.heads " +
                      std::to_string(encoder.heads));
  }
  if (encoder.layers < 0 || encoder.mlp_ratio < 1) throw ConfigError("encoder.layers must be >= 0 and mlp_ratio >= 1");
  if (decoder.token_dim != encoder.dim) {
    throw ConfigError("decoder token width " + std::to_string(decoder.token_dim) + " differs from encoder.dim " +
                      std::to_string(encoder.dim));
  }
  validate_decoder_quiet(decoder);
}

template <typename S>
ParamSet<S> init_model(const ModelConfig& cfg, const Tensor<S>& text, std::uint64_t seed) {
  cfg.validate();
  if (text.rank() != 2 || text.dim(0) != cfg.decoder.prompts || text.dim(1) != cfg.decoder.text_dim) {
    throw ConfigError("prompt embeddings " + shape_string(text.shape()) + " do not match " +
                      std::to_string(cfg.decoder.prompts) + " prompts of width " + std::to_string(cfg.decoder.text_dim));
  }
  std::mt19937_64 rng(seed);
  ParamSet<S> params = init_encoder<S>(cfg.encoder, rng);
  params.merge(init_decoder<S>(cfg.decoder, rng));
  params[kTextTokens] = text;
  return params;
}

template <typename S>
ad::Var<S> model_logits(const VarSet<S>& vars, const ModelConfig& cfg, const Tensor<S>& image) {
  const auto tokens = encode_graph(vars, cfg.encoder, image);
  return decode_graph(vars, cfg.decoder, tokens, param(vars, kTextTokens), image.dim(1), image.dim(2));
}

template <typename S>
Tensor<S> predict(const ParamSet<S>& params, const ModelConfig& cfg, const Tensor<S>& image) {
  auto out = ops::sigmoid(model_logits(as_constants(params), cfg, image)).value();
  if (!out.all_finite()) throw NumericError("predict: non-finite heatmap");
  return out;
}

template ParamSet<float> init_model<float>(const ModelConfig&, const Tensor<float>&, std::uint64_t);
template ParamSet<double> init_model<double>(const ModelConfig&, const Tensor<double>&, std::uint64_t);
template ad::Var<float> model_logits<float>(const VarSet<float>&, const ModelConfig&, const Tensor<float>&);
template ad::Var<double> model_logits<double>(const VarSet<double>&, const ModelConfig&, const Tensor<double>&);
template Tensor<float> predict<float>(const ParamSet<float>&, const ModelConfig&, const Tensor<float>&);
template Tensor<double> predict<double>(const ParamSet<double>&, const ModelConfig&, const Tensor<double>&);

}  // namespace symdec
