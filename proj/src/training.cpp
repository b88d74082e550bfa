#include "symdec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "symdec/csym.hpp"
#include "symdec/image.hpp"
#include "symdec/rng.hpp"

namespace symdec::train {

void FocalConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("focal.alpha must lie in (0, 1)");
  if (!(lambda >= 0)) throw ConfigError("focal.lambda must be >= 0");
  if (!(eps > 0 && eps <= 1e-3)) throw ConfigError("focal.eps must lie in (0, 1e-3]");
}

double FocalConfig::default_alpha(synth::Task task) { return task == synth::Task::reflection ? 0.85 : 0.95; }

template <typename S>
double focal_loss(const Tensor<S>& pred, const Tensor<S>& gt, const FocalConfig& cfg) {
  cfg.validate();
  if (pred.shape() != gt.shape()) {
    throw ShapeError("focal_loss: prediction " + shape_string(pred.shape()) + " vs target " + shape_string(gt.shape()));
  }
  double total = 0.0;
  for (Index i = 0; i < gt.size(); ++i) {
    const double y = double(gt[i]);
    if (y != 0.0 && y != 1.0) throw ConfigError("focal_loss: target must be binary, found " + std::to_string(y));
    const double p = std::clamp(double(pred[i]), cfg.eps, 1.0 - cfg.eps);
    const double pt = y == 1.0 ? p : 1.0 - p;
    const double a = y == 1.0 ? cfg.alpha : 1.0 - cfg.alpha;
    total += -a * std::pow(1.0 - pt, cfg.lambda) * std::log(pt);
  }
  return total;
}

template double focal_loss<float>(const Tensor<float>&, const Tensor<float>&, const FocalConfig&);
template double focal_loss<double>(const Tensor<double>&, const Tensor<double>&, const FocalConfig&);

void AugmentConfig::validate() const {
  if (small_rotation < 0 || small_rotation > 45) throw ConfigError("augment.small_rotation must lie in [0, 45]");
  if (brightness < 0 || brightness > 0.5) throw ConfigError("augment.brightness must lie in [0, 0.5]");
  if (contrast < 0 || contrast >= 1) throw ConfigError("augment.contrast must lie in [0, 1)");
}

Augmented augment(const Tensor<float>& image, const synth::Annotation& ann, const AugmentConfig& cfg,
                  std::mt19937_64& rng) {
  Augmented out{image, ann};
  if (!cfg.enabled) return out;
  const Index rows = image.dim(1), cols = image.dim(2);
  if (cfg.quarter_turns) {
    const int k = std::uniform_int_distribution<int>(0, 3)(rng);
    out.image = grid::rotate90(out.image, k);
    out.annotation = synth::rotate(out.annotation, grid::RotationAngle::quarter_turns(k), rows, cols);
  }
  if (cfg.small_rotation > 0) {
    const double deg = std::uniform_real_distribution<double>(-cfg.small_rotation, cfg.small_rotation)(rng);
    const grid::RotationAngle angle(deg);
    out.image = grid::rotate(out.image, angle);
    out.annotation = synth::rotate(out.annotation, angle, rows, cols);
  }
  const double b = cfg.brightness > 0 ? std::uniform_real_distribution<double>(-cfg.brightness, cfg.brightness)(rng) : 0.0;
  const double c = cfg.contrast > 0 ? std::uniform_real_distribution<double>(1 - cfg.contrast, 1 + cfg.contrast)(rng) : 1.0;
  for (Index i = 0; i < out.image.size(); ++i) {
    out.image[i] = float(std::clamp((double(out.image[i]) - 0.5) * c + 0.5 + b, 0.0, 1.0));
  }
  return out;
}

void OptimConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optim.lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("optim betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("optim.eps must be positive");
  if (!(decay_rate > 0 && decay_rate <= 1)) throw ConfigError("optim.decay_rate must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("optim.epochs must be >= 1");
}

Schedule parse_schedule(const std::string& name) {
  if (name == "constant") return Schedule::constant;
  if (name == "exponential") return Schedule::exponential;
  throw ConfigError("unknown schedule '" + name + "' (expected constant|exponential)");
}

std::string schedule_name(Schedule s) { return s == Schedule::constant ? "constant" : "exponential"; }

double learning_rate(const OptimConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  if (cfg.schedule == Schedule::constant || total_steps <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.decay_rate, double(step) / double(total_steps));
}

OptimState init_optim(const ParamSet<float>& params) {
  OptimState s;
  for (const auto& [name, t] : params) {
    s.m.emplace(name, Tensor<float>(t.shape()));
    s.v.emplace(name, Tensor<float>(t.shape()));
  }
  return s;
}

namespace {

void check_finite(const ParamSet<float>& set, const std::string& what) {
  for (const auto& [name, t] : set) {
    if (!t.all_finite()) throw NumericError(what + " of '" + name + "' has non-finite values");
  }
}

/// Loss and parameter gradients of one example.
double item_gradient(const Example& ex, const ParamSet<float>& params, const ModelConfig& model,
                     const FocalConfig& focal, ParamSet<float>& grads) {
  const auto vars = as_parameters(params);
  const auto logits = model_logits(vars, model, ex.image);
  const auto loss = ops::focal_loss_logits(logits, ex.target, focal.alpha, focal.lambda, focal.eps);
  ad::backward(loss);
  grads.clear();
  for (const auto& [name, v] : vars) grads.emplace(name, v.grad().empty() ? Tensor<float>(v.shape()) : v.grad());
  return double(loss.value()[0]);
}

}  // namespace

double batch_gradient(const std::vector<Example>& batch, const ParamSet<float>& params, const ModelConfig& model,
                      const FocalConfig& focal, int threads, ParamSet<float>& grads) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const std::size_t n = batch.size();
  std::vector<ParamSet<float>> item_grads(n);
  std::vector<double> losses(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::size_t(std::max(threads, 1)), n));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        losses[i] = item_gradient(batch[i], params, model, focal, item_grads[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double loss = 0.0;
  grads = item_grads[0];
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    if (i == 0) continue;
    for (auto& [name, g] : grads) g.vec() += item_grads[i].at(name).vec();
  }
  const float inv = 1.0f / float(n);
  for (auto& [name, g] : grads) g.vec() *= inv;
  loss /= double(n);
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
  check_finite(grads, "gradient");
  return loss;
}

void adam_update(ParamSet<float>& params, const ParamSet<float>& grads, OptimState& state, const OptimConfig& cfg,
                 double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const float b1 = float(cfg.beta1), b2 = float(cfg.beta2);
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).vec();
    auto& m = state.m.at(name).vec();
    auto& v = state.v.at(name).vec();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseAbs2();
    const auto mhat = m.array() / float(c1);
    const auto vhat = v.array() / float(c2);
    p.vec().array() -= float(lr) * mhat / (vhat.sqrt() + float(cfg.eps));
  }
  check_finite(params, "parameter");
}

double train_step(const std::vector<Example>& batch, ParamSet<float>& params, OptimState& state,
                  const ModelConfig& model, const FocalConfig& focal, const OptimConfig& optim, double lr, int threads) {
  ParamSet<float> grads;
  const double loss = batch_gradient(batch, params, model, focal, threads, grads);
  adam_update(params, grads, state, optim, lr);
  return loss;
}

Example make_example(const synth::Sample& sample, synth::Task task, const synth::RasterOptions& raster) {
  auto r = synth::rasterize(sample.annotation, sample.image.dim(1), sample.image.dim(2), task, raster);
  return {sample.image, std::move(r.heatmap)};
}

std::vector<std::vector<Example>> epoch_batches(const std::vector<synth::Sample>& data, const TrainSetup& setup,
                                                int epoch) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed({setup.seed, std::uint64_t(epoch)}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::vector<std::vector<Example>> batches;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(setup.optim.batch_size)) {
    std::vector<Example> batch;
    for (std::size_t j = start; j < std::min(order.size(), start + std::size_t(setup.optim.batch_size)); ++j) {
      const auto& s = data[order[j]];
      std::mt19937_64 rng(derive_seed({setup.seed, std::uint64_t(epoch), std::uint64_t(order[j])}));
      const auto aug = augment(s.image, s.annotation, setup.augment, rng);
      batch.push_back(make_example({s.name, aug.image, aug.annotation}, setup.task, setup.raster));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void train_epoch(TrainState& state, const std::vector<synth::Sample>& data, const TrainSetup& setup,
                 const std::function<void(const LogRecord&)>& log) {
  if (data.empty()) throw ConfigError("training split is empty");
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t per_epoch = std::int64_t((data.size() + std::size_t(setup.optim.batch_size) - 1) /
                                              std::size_t(setup.optim.batch_size));
  const std::int64_t total = per_epoch * setup.optim.epochs;
  for (const auto& batch : epoch_batches(data, setup, state.epoch)) {
    const double lr = learning_rate(setup.optim, state.optim.step, total);
    const double loss = train_step(batch, state.params, state.optim, setup.model, setup.focal, setup.optim, lr, setup.threads);
    if (log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log({state.optim.step, state.epoch, loss, lr, secs});
    }
  }
  ++state.epoch;
}

namespace {

std::string tensor_file(const std::string& group, const std::string& name) { return group + "/" + name + ".csym"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const std::string& config_text) {
  nlohmann::json manifest;
  manifest["format"] = "symdec-checkpoint";
  manifest["version"] = 1;
  manifest["epoch"] = state.epoch;
  manifest["step"] = state.optim.step;
  try {
    manifest["config"] = config_text.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [group, set] : {std::pair<std::string, const ParamSet<float>*>{"params", &state.params},
                                   {"adam_m", &state.optim.m},
                                   {"adam_v", &state.optim.v}}) {
    std::filesystem::create_directories(dir / group);
    for (const auto& [name, t] : *set) {
      csym::write(dir / tensor_file(group, name), t);
      tensors.push_back({{"group", group}, {"name", name}, {"shape", t.shape()}});
    }
  }
  manifest["tensors"] = tensors;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint manifest " + path.string());
  Checkpoint ck;
  try {
    const auto m = nlohmann::json::parse(is);
    if (m.at("format").get<std::string>() != "symdec-checkpoint" || m.at("version").get<int>() != 1) {
      throw FormatError(path.string() + ": not a version-1 checkpoint");
    }
    ck.state.epoch = m.at("epoch").get<int>();
    ck.state.optim.step = m.at("step").get<std::int64_t>();
    ck.config_text = m.at("config").dump();
    for (const auto& e : m.at("tensors")) {
      const auto group = e.at("group").get<std::string>();
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      Tensor<float> t = csym::read(dir / tensor_file(group, name));
      if (t.shape() != shape) {
        throw FormatError(path.string() + ": tensor " + group + "/" + name + " has shape " + shape_string(t.shape()) +
                          ", manifest says " + shape_string(shape));
      }
      ParamSet<float>* set = group == "params" ? &ck.state.params
                             : group == "adam_m" ? &ck.state.optim.m
                             : group == "adam_v" ? &ck.state.optim.v
                                                 : nullptr;
      if (!set) throw FormatError(path.string() + ": unknown tensor group '" + group + "'");
      set->emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  for (const auto& [name, t] : ck.state.params) {
    for (const auto* set : {&ck.state.optim.m, &ck.state.optim.v}) {
      auto it = set->find(name);
      if (it == set->end() || it->second.shape() != t.shape()) {
        throw FormatError(path.string() + ": optimizer moments missing or mis-shaped for '" + name + "'");
      }
    }
  }
  return ck;
}

FilmFitResult film_offset_fit(const FilmFitConfig& cfg) {
  if (cfg.text_dim < cfg.prompts) throw ConfigError("film fit: text_dim must be >= prompts for a linear offset map");
  std::mt19937_64 rng(cfg.seed);
  const Index t = cfg.prompts, n = cfg.tokens, d = cfg.dim, dt = cfg.text_dim;
  const Tensor<double> text = Tensor<double>::randn({t, dt}, rng, 1.0);
  const Tensor<double> delta = Tensor<double>::randn({t, d}, rng, cfg.offset_scale);
  auto draw = [&](int images) {
    // Per image and prompt: (Z*, Z = Z* - δ(t) + ε).
    std::vector<std::pair<Tensor<double>, Tensor<double>>> out;
    for (int i = 0; i < images; ++i) {
      for (Index p = 0; p < t; ++p) {
        Tensor<double> clean = Tensor<double>::randn({n, d}, rng, 1.0);
        Tensor<double> seen = Tensor<double>::randn({n, d}, rng, cfg.noise_std);
        seen.matrix() += clean.matrix();
        seen.matrix().rowwise() -= delta.matrix().row(p);
        out.emplace_back(std::move(clean), std::move(seen));
      }
    }
    return out;
  };
  const auto train = draw(4), test = draw(4);

  ParamSet<double> params;
  init_normal(params, "dec.film.gamma.w", {dt, d}, rng, 0.02);
  init_constant(params, "dec.film.gamma.b", {d}, 1.0);
  init_normal(params, "dec.film.beta.w", {dt, d}, rng, 0.02);
  init_constant(params, "dec.film.beta.b", {d}, 0.0);
  ParamSet<double> m, v;
  for (const auto& [k, x] : params) {
    m.emplace(k, Tensor<double>(x.shape()));
    v.emplace(k, Tensor<double>(x.shape()));
  }
  const auto text_var = ad::Var<double>::constant(text);
  auto mse_over = [&](const VarSet<double>& vars, const auto& set) {
    ad::Var<double> total = ad::Var<double>::constant(Tensor<double>({1}));
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto out = film(vars, text_var, Index(i % std::size_t(t)), ad::Var<double>::constant(set[i].second));
      total = ops::add(total, ops::mse(out, ad::Var<double>::constant(set[i].first)));
    }
    return ops::scale(total, 1.0 / double(set.size()));
  };
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto vars = as_parameters(params);
    ad::backward(mse_over(vars, train));
    for (auto& [k, x] : params) {
      const auto& g = vars.at(k).grad().vec();
      m.at(k).vec() = 0.9 * m.at(k).vec() + 0.1 * g;
      v.at(k).vec() = 0.999 * v.at(k).vec() + 0.001 * g.cwiseAbs2();
      const auto mhat = m.at(k).vec().array() / (1 - std::pow(0.9, step));
      const auto vhat = v.at(k).vec().array() / (1 - std::pow(0.999, step));
      x.vec().array() -= cfg.lr * mhat / (vhat.sqrt() + 1e-8);
    }
  }
  FilmFitResult r;
  r.steps = cfg.steps;
  r.noise_variance = cfg.noise_std * cfg.noise_std;
  r.film_mse = mse_over(as_constants(params), test).value()[0];
  double base = 0.0;
  for (const auto& [clean, seen] : test) base += (seen.vec() - clean.vec()).squaredNorm() / double(clean.size());
  r.baseline_mse = base / double(test.size());
  return r;
}

}  // namespace symdec::train
