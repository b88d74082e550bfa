#ifndef SYMDEC_CONFIG_HPP
#define SYMDEC_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "symdec/sapg.hpp"
#include "symdec/training.hpp"

namespace symdec {

struct SapgConfig {
  int prompts = 25;  // M
  int words = 4;     // K
  sapg::Policy policy = sapg::Policy::sequential;
  std::uint64_t seed = 0;
  int text_dim = 64;
  std::string vocabulary;  // empty: built-in list
  std::string embeddings;  // CSYM [M, D_txt] replacing the hashed embedder
};

struct DataConfig {
  int train = 64;
  int val = 16;
  int test = 16;
};

struct EvalConfig {
  int tolerance = 0;
  bool macro = false;
  int consistency_samples = 4;
  double robust_degrees = 45.0;
};

struct PathsConfig {
  std::string dataset = "data";
  std::string checkpoint = "checkpoint";
  std::string output = "out";
};

/// Everything a command needs. Image and patch size live on the encoder; the decoder's token
/// width, text width and prompt count are derived (see sync()).
struct RunConfig {
  std::string preset = "desk-toy";
  synth::Task task = synth::Task::reflection;
  std::uint64_t seed = 0;
  int threads = 1;
  ModelConfig model;
  SapgConfig sapg;
  train::FocalConfig focal;
  train::OptimConfig optim;
  train::AugmentConfig augment;
  synth::RasterOptions raster;
  synth::SceneSpec scene;
  DataConfig data;
  EvalConfig eval;
  PathsConfig paths;
  int checkpoint_every = 5;  // epochs

  /// Copies the shared fields into the sub-configs.
  void sync();
  /// Cross-field checks; throws ConfigError naming the field.
  void validate() const;
};

/// "desk-toy" or "paper-geometry".
RunConfig preset(const std::string& name);

/// Strict: unknown keys and wrong types are ConfigErrors naming the key. Keys absent from the
/// document keep the values of the preset named by "preset" (default desk-toy). A missing
/// "focal.alpha" takes the task default.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// SYMDEC_SEED, when set, replaces cfg.seed.
void apply_environment(RunConfig& cfg);

/// Throws ConfigError naming the first model-geometry field where a checkpoint's config and
/// the requested config disagree.
void check_compatible(const RunConfig& checkpoint, const RunConfig& requested);

}  // namespace symdec

#endif  // SYMDEC_CONFIG_HPP
