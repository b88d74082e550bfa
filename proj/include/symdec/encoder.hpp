#ifndef SYMDEC_ENCODER_HPP
#define SYMDEC_ENCODER_HPP

#include <filesystem>

#include "symdec/params.hpp"
#include "symdec/transformer.hpp"

namespace symdec {

/// Grid of per-patch feature vectors, tokens [M, M, D], for a square source image.
template <typename S>
struct PatchTokens {
  Tensor<S> tokens;
  int patch_size = 0;
  Index image_height = 0;
  Index image_width = 0;

  Index grid() const { return tokens.dim(0); }
  Index dim() const { return tokens.dim(2); }
  /// Tokens flattened row-major over (i, j): [M·M, D].
  Tensor<S> flat() const { return tokens.reshaped({grid() * grid(), dim()}); }
};

struct EncoderConfig {
  int image_size = 128;
  int patch_size = 8;
  int dim = 32;
  int layers = 2;
  int heads = 2;
  int mlp_ratio = 4;

  Index grid() const { return image_size / patch_size; }
  TransformerConfig transformer() const { return {dim, layers, heads, mlp_ratio}; }
};

/// Non-overlapping P x P patches of a square [3, H, W] image: [M, M, 3·P·P] with M = ⌊H/P⌋.
/// Patch (i, j) covers rows iP..(i+1)P-1 and columns jP..(j+1)P-1; vector index is (c, row, col)
/// row-major. Trailing rows/columns beyond M·P are dropped.
template <typename S>
Tensor<S> patchify(const Tensor<S>& image, int patch);

template <typename S>
ParamSet<S> init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

/// Graph form: image [3, H, W] -> tokens [M·M, D].
template <typename S>
ad::Var<S> encode_graph(const VarSet<S>& vars, const EncoderConfig& cfg, const Tensor<S>& image);

/// patchify -> linear projection -> + positional embedding -> transformer layers -> final LN.
/// Throws NumericError on non-finite output.
template <typename S>
PatchTokens<S> encode(const Tensor<S>& image, const ParamSet<S>& params, const EncoderConfig& cfg);

/// Token files: CSYM rank-3 tensor plus a "<file>.json" sidecar carrying patch geometry.
void write_tokens(const std::filesystem::path& path, const PatchTokens<float>& tokens);
PatchTokens<float> load_tokens(const std::filesystem::path& path);

}  // namespace symdec

#endif  // SYMDEC_ENCODER_HPP
