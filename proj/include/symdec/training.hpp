#ifndef SYMDEC_TRAINING_HPP
#define SYMDEC_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "symdec/model.hpp"
#include "symdec/synthdata.hpp"

namespace symdec::train {

struct FocalConfig {
  double alpha = 0.85;
  double lambda = 2.0;
  double eps = 1e-7;

  void validate() const;
  /// 0.85 for reflection, 0.95 for rotation.
  static double default_alpha(synth::Task task);
};

/// Σ_pixels -α' (1 - Ŝ')^λ log Ŝ' on probabilities clamped to [ε, 1-ε]; gt must be binary.
template <typename S>
double focal_loss(const Tensor<S>& pred, const Tensor<S>& gt, const FocalConfig& cfg);

struct AugmentConfig {
  bool enabled = true;
  bool quarter_turns = true;
  double small_rotation = 15.0;  // degrees, uniform in [-r, r]
  double brightness = 0.1;       // additive offset in [-b, b]
  double contrast = 0.1;         // scale in [1-c, 1+c] about 0.5

  void validate() const;
};

struct Augmented {
  Tensor<float> image;
  synth::Annotation annotation;
};

/// Same geometric transform on image (rotate90, then bilinear small rotation) and annotation
/// (analytic); jitter touches the image only.
Augmented augment(const Tensor<float>& image, const synth::Annotation& ann, const AugmentConfig& cfg,
                  std::mt19937_64& rng);

enum class Schedule { constant, exponential };

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Schedule schedule = Schedule::constant;
  double decay_rate = 0.1;  // exponential: lr · rate^(step / total_steps)
  int batch_size = 8;
  int epochs = 30;

  void validate() const;
};

Schedule parse_schedule(const std::string& name);
std::string schedule_name(Schedule s);
double learning_rate(const OptimConfig& cfg, std::int64_t step, std::int64_t total_steps);

struct OptimState {
  ParamSet<float> m, v;
  std::int64_t step = 0;
};

OptimState init_optim(const ParamSet<float>& params);

struct Example {
  Tensor<float> image;   // [3, S, S]
  Tensor<float> target;  // [S, S], binary
};

/// Mean focal loss over the batch and its gradient; items run on up to `threads` workers and
/// gradients are summed in item order. Throws NumericError naming the first non-finite tensor.
double batch_gradient(const std::vector<Example>& batch, const ParamSet<float>& params, const ModelConfig& model,
                      const FocalConfig& focal, int threads, ParamSet<float>& grads);

void adam_update(ParamSet<float>& params, const ParamSet<float>& grads, OptimState& state, const OptimConfig& cfg,
                 double lr);

/// One forward/backward/Adam update; returns the mean batch loss before the update.
double train_step(const std::vector<Example>& batch, ParamSet<float>& params, OptimState& state,
                  const ModelConfig& model, const FocalConfig& focal, const OptimConfig& optim, double lr, int threads);

struct TrainSetup {
  ModelConfig model;
  FocalConfig focal;
  AugmentConfig augment;
  OptimConfig optim;
  synth::Task task = synth::Task::reflection;
  synth::RasterOptions raster;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct LogRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainState {
  ParamSet<float> params;
  OptimState optim;
  int epoch = 0;  // completed epochs
};

/// Builds the (augmented) batches of one epoch. Order and augmentation draw from
/// derive_seed({seed, epoch}) and derive_seed({seed, epoch, item}) only, so any epoch can be
/// regenerated on resume.
std::vector<std::vector<Example>> epoch_batches(const std::vector<synth::Sample>& data, const TrainSetup& setup,
                                                int epoch);

/// Runs one epoch and advances state.epoch. `log` receives one record per step.
void train_epoch(TrainState& state, const std::vector<synth::Sample>& data, const TrainSetup& setup,
                 const std::function<void(const LogRecord&)>& log);

Example make_example(const synth::Sample& sample, synth::Task task, const synth::RasterOptions& raster);

/// Directory of CSYM tensors (params/, adam_m/, adam_v/) plus manifest.json. `config_text` is an
/// opaque JSON document stored verbatim under "config".
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const std::string& config_text);

struct Checkpoint {
  TrainState state;
  std::string config_text;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// FiLM offset-removal experiment: tokens Z = Z* - δ(t) + noise; only FiLM (γ, β) is fit so that
/// FiLM(Z) ≈ Z*. Returns final MSE with FiLM, MSE of the identity baseline, and noise variance.
struct FilmFitResult {
  double film_mse = 0.0;
  double baseline_mse = 0.0;
  double noise_variance = 0.0;
  int steps = 0;
};

struct FilmFitConfig {
  int prompts = 8;
  int tokens = 64;
  int dim = 16;
  int text_dim = 16;
  double offset_scale = 1.0;
  double noise_std = 0.1;
  int steps = 3000;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

FilmFitResult film_offset_fit(const FilmFitConfig& cfg);

}  // namespace symdec::train

#endif  // SYMDEC_TRAINING_HPP
