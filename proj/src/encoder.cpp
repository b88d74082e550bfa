#include "symdec/encoder.hpp"

#include <fstream>

#include <json.hpp>

#include "symdec/csym.hpp"

namespace symdec {

template <typename S>
Tensor<S> patchify(const Tensor<S>& image, int patch) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("patchify: expected [3, H, W], got " + shape_string(image.shape()));
  if (image.dim(1) != image.dim(2)) throw ShapeError("patchify: image must be square, got " + shape_string(image.shape()));
  if (patch < 1) throw ShapeError("patchify: patch size must be positive");
  const Index h = image.dim(1), w = image.dim(2);
  const Index m = h / patch;
  if (m < 1) throw ShapeError("patchify: image of size " + std::to_string(h) + " smaller than patch " + std::to_string(patch));
  const Index len = Index(3) * patch * patch;
  Tensor<S> out(Shape{m, m, len});
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      S* dst = out.data() + (i * m + j) * len;
      for (Index c = 0; c < 3; ++c) {
        for (Index r = 0; r < patch; ++r) {
          const S* src = image.data() + (c * h + i * patch + r) * w + j * patch;
          std::copy(src, src + patch, dst + (c * patch + r) * patch);
        }
      }
    }
  }
  return out;
}

template <typename S>
ParamSet<S> init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.grid() < 1) throw ConfigError("encoder: image size smaller than patch size");
  ParamSet<S> params;
  const Index in = Index(3) * cfg.patch_size * cfg.patch_size;
  const Index m2 = cfg.grid() * cfg.grid();
  init_normal(params, "enc.patch.w", {in, cfg.dim}, rng, 0.02);
  init_constant(params, "enc.patch.b", {cfg.dim}, 0.0);
  init_normal(params, "enc.pos", {m2, cfg.dim}, rng, 0.02);
  init_transformer(params, "enc", cfg.transformer(), rng);
  init_constant(params, "enc.ln_f.g", {cfg.dim}, 1.0);
  init_constant(params, "enc.ln_f.b", {cfg.dim}, 0.0);
  return params;
}

template <typename S>
ad::Var<S> encode_graph(const VarSet<S>& vars, const EncoderConfig& cfg, const Tensor<S>& image) {
  const Tensor<S> patches = patchify(image, cfg.patch_size);
  const Index m = patches.dim(0);
  if (m != cfg.grid()) {
    throw ShapeError("encode: image gives a " + std::to_string(m) + "x" + std::to_string(m) + " patch grid, encoder expects " +
                     std::to_string(cfg.grid()));
  }
  auto x = ad::Var<S>::constant(patches.reshaped({m * m, patches.dim(2)}));
  x = ops::add_row(ops::matmul(x, param(vars, "enc.patch.w")), param(vars, "enc.patch.b"));
  x = ops::add(x, param(vars, "enc.pos"));
  x = transformer_forward(vars, "enc", cfg.transformer(), x);
  return ops::layer_norm(x, param(vars, "enc.ln_f.g"), param(vars, "enc.ln_f.b"));
}

template <typename S>
PatchTokens<S> encode(const Tensor<S>& image, const ParamSet<S>& params, const EncoderConfig& cfg) {
  const auto out = encode_graph(as_constants(params), cfg, image);
  if (!out.value().all_finite()) throw NumericError("encode: non-finite token values");
  const Index m = cfg.grid();
  return PatchTokens<S>{out.value().reshaped({m, m, Index(cfg.dim)}), cfg.patch_size, image.dim(1), image.dim(2)};
}

void write_tokens(const std::filesystem::path& path, const PatchTokens<float>& tokens) {
  csym::write(path, tokens.tokens);
  nlohmann::json meta = {{"patch_size", tokens.patch_size},
                         {"image_height", tokens.image_height},
                         {"image_width", tokens.image_width}};
  std::ofstream os(path.string() + ".json");
  if (!os) throw IoError("cannot write sidecar for " + path.string());
  os << meta.dump(2) << '\n';
}

PatchTokens<float> load_tokens(const std::filesystem::path& path) {
  PatchTokens<float> out;
  out.tokens = csym::read(path, 3);
  if (out.tokens.dim(0) != out.tokens.dim(1)) {
    throw FormatError(path.string() + ": token grid must be square, got " + shape_string(out.tokens.shape()));
  }
  const std::filesystem::path sidecar = path.string() + ".json";
  std::ifstream is(sidecar);
  if (!is) throw FormatError(path.string() + ": missing sidecar manifest " + sidecar.string());
  try {
    const auto meta = nlohmann::json::parse(is);
    out.patch_size = meta.at("patch_size").get<int>();
    out.image_height = meta.at("image_height").get<Index>();
    out.image_width = meta.at("image_width").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  if (out.patch_size < 1 || std::min(out.image_height, out.image_width) / out.patch_size != out.grid()) {
    throw FormatError(sidecar.string() + ": patch geometry (P=" + std::to_string(out.patch_size) + ", " +
                      std::to_string(out.image_height) + "x" + std::to_string(out.image_width) +
                      ") does not give the stored " + std::to_string(out.grid()) + "x" + std::to_string(out.grid()) +
                      " grid");
  }
  return out;
}

#define SYMDEC_INSTANTIATE_ENCODER(S)                                                             \
  template Tensor<S> patchify<S>(const Tensor<S>&, int);                                          \
  template ParamSet<S> init_encoder<S>(const EncoderConfig&, std::mt19937_64&);                   \
  template ad::Var<S> encode_graph<S>(const VarSet<S>&, const EncoderConfig&, const Tensor<S>&);  \
  template PatchTokens<S> encode<S>(const Tensor<S>&, const ParamSet<S>&, const EncoderConfig&);

SYMDEC_INSTANTIATE_ENCODER(float)
SYMDEC_INSTANTIATE_ENCODER(double)

}  // namespace symdec
