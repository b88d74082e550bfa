#ifndef SYMDEC_DECODER_HPP
#define SYMDEC_DECODER_HPP

#include <vector>

#include "symdec/encoder.hpp"
#include "symdec/params.hpp"
#include "symdec/transformer.hpp"

namespace symdec {

struct DecoderConfig {
  int n = 8;                            // rotation slots of C_n
  int dim = 16;                         // d, width after the image projection
  int layers = 2;                       // L_B
  int heads = 2;
  int mlp_ratio = 4;
  std::vector<int> channels{16, 8, 4, 1};  // G-conv pipeline, channels[0] == dim, last == 1
  int token_dim = 32;                   // D_enc
  int text_dim = 64;                    // D_txt
  int prompts = 25;                     // |T|
  // Test hook: adds a fixed sinusoidal positional code inside the transformer branch,
  // which breaks token-permutation equivariance on purpose.
  bool inject_positional_encoding = false;

  TransformerConfig transformer() const { return {dim, layers, heads, mlp_ratio}; }
  int stages() const { return int(channels.size()) - 1; }
};

/// Throws ConfigError on inconsistent settings. n = 6 is accepted with a warning on stderr;
/// any other n must be a positive multiple of 4.
void validate(const DecoderConfig& cfg);
/// Same checks without the warning.
void validate_decoder_quiet(const DecoderConfig& cfg);

template <typename S>
ParamSet<S> init_decoder(const DecoderConfig& cfg, std::mt19937_64& rng);

/// Projected patch features Z_p [M·M, d] from raw tokens [M·M, D_enc].
template <typename S>
ad::Var<S> project_tokens(const VarSet<S>& vars, const ad::Var<S>& tokens);

/// γ(z_t) ⊙ z_p + β(z_t) for prompt row `prompt` of text [T, D_txt]; z_p is [M·M, d].
template <typename S>
ad::Var<S> film(const VarSet<S>& vars, const ad::Var<S>& text, Index prompt, const ad::Var<S>& projected);

/// L_B pre-norm layers over [M·M, d]; adds the positional code first when the hook is set.
template <typename S>
ad::Var<S> transformer_block(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& x);

/// Σ_t softmax(logits)_t · branch_t.
template <typename S>
ad::Var<S> aggregate_prompts(const VarSet<S>& vars, const std::vector<ad::Var<S>>& branches);

/// Three (G-conv, ReLU except last, 2x upsample) stages on [n, C, h, w], mean over the rotation
/// axis, resize to rows x cols. Returns logits [rows, cols].
template <typename S>
ad::Var<S> upsample_head(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& lifted, Index rows,
                         Index cols);

/// Full decoder in graph form: tokens [M·M, D_enc], text [T, D_txt] -> logits [rows, cols].
template <typename S>
ad::Var<S> decode_graph(const VarSet<S>& vars, const DecoderConfig& cfg, const ad::Var<S>& tokens,
                        const ad::Var<S>& text, Index rows, Index cols);

/// Heatmap in (0,1) at the token source resolution (image_height x image_width).
template <typename S>
Tensor<S> decode(const PatchTokens<S>& tokens, const Tensor<S>& text, const ParamSet<S>& params,
                 const DecoderConfig& cfg);

/// Moves the token at (i, j) to π_θ(i, j), θ = 90°·k; same index map as grid::rotate90.
template <typename S>
PatchTokens<S> token_rotate(const PatchTokens<S>& tokens, int k);

/// Sinusoidal code [count, dim] used by the positional-encoding hook.
template <typename S>
Tensor<S> sinusoidal_code(Index count, Index dim);

}  // namespace symdec

#endif  // SYMDEC_DECODER_HPP
