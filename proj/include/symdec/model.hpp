#ifndef SYMDEC_MODEL_HPP
#define SYMDEC_MODEL_HPP

#include "symdec/decoder.hpp"
#include "symdec/encoder.hpp"

namespace symdec {

/// Encoder + trainable prompt embeddings ("txt.tokens", [|T|, D_txt]) + decoder.
struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  /// Decoder token width follows the encoder; throws ConfigError on other inconsistencies.
  void validate() const;
};

inline constexpr const char* kTextTokens = "txt.tokens";

/// text: initial prompt embeddings [|T|, D_txt] (shape must match the decoder config).
template <typename S>
ParamSet<S> init_model(const ModelConfig& cfg, const Tensor<S>& text, std::uint64_t seed);

/// Logits [H, W] for an image [3, H, W] of the configured size.
template <typename S>
ad::Var<S> model_logits(const VarSet<S>& vars, const ModelConfig& cfg, const Tensor<S>& image);

/// Heatmap in (0, 1).
template <typename S>
Tensor<S> predict(const ParamSet<S>& params, const ModelConfig& cfg, const Tensor<S>& image);

}  // namespace symdec

#endif  // SYMDEC_MODEL_HPP
