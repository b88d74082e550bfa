#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "symdec/config.hpp"
#include "symdec/csym.hpp"
#include "symdec/equivariance.hpp"
#include "symdec/image.hpp"
#include "symdec/metrics.hpp"

namespace fs = std::filesystem;
using namespace symdec;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

/// Output directory that only appears once every file in it has been written. Files go to a
/// hidden sibling first; commit() moves them into place, destruction without commit deletes them.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    const auto parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    stage_ = parent / ("." + target_.filename().string() + ".partial");
    fs::remove_all(stage_);
    fs::create_directories(stage_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(stage_, ec);
  }

  const fs::path& path() const { return stage_; }

  /// replace: target is swapped wholesale; otherwise staged files are merged into it.
  void commit(bool replace) {
    if (replace) {
      fs::remove_all(target_);
      fs::rename(stage_, target_);
    } else {
      fs::create_directories(target_);
      for (const auto& entry : fs::directory_iterator(stage_)) {
        const auto dest = target_ / entry.path().filename();
        fs::remove_all(dest);
        fs::rename(entry.path(), dest);
      }
      fs::remove_all(stage_);
    }
    committed_ = true;
  }

 private:
  fs::path target_, stage_;
  bool committed_ = false;
};

struct Globals {
  std::string config_path;
  std::string preset = "desk-toy";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Preset or config file, then SYMDEC_SEED, then explicit flags.
RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? preset(g.preset) : load_config(g.config_path);
  apply_environment(cfg);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  cfg.sync();
  cfg.validate();
  return cfg;
}

sapg::Vocabulary vocabulary_for(const SapgConfig& s) {
  return s.vocabulary.empty() ? sapg::default_vocabulary() : sapg::read_vocabulary(s.vocabulary);
}

sapg::PromptSet prompts_for(const SapgConfig& s) {
  return sapg::build_prompt_set(vocabulary_for(s), s.prompts, s.words, s.policy, s.seed);
}

Tensor<float> initial_text(const SapgConfig& s) {
  if (!s.embeddings.empty()) {
    auto t = sapg::load_text_embeddings(s.embeddings);
    if (t.count() != s.prompts || t.dim() != s.text_dim) {
      throw ConfigError("sapg.embeddings has shape " + shape_string(t.embeddings.shape()) + ", config expects [" +
                        std::to_string(s.prompts) + ", " + std::to_string(s.text_dim) + "]");
    }
    return t.embeddings;
  }
  return sapg::embed_prompts(prompts_for(s), s.text_dim, s.seed).embeddings;
}

synth::Dataset read_split(const fs::path& root, const std::string& split) {
  const auto dir = root / split;
  if (!fs::exists(dir / "manifest.json")) {
    throw ConfigError("dataset split '" + split + "' not found at " + dir.string());
  }
  return synth::read_dataset(dir);
}

void require_image_size(const synth::Dataset& d, const RunConfig& cfg, const std::string& split) {
  for (const auto& s : d.samples) {
    if (s.image.dim(1) != cfg.model.encoder.image_size || s.image.dim(2) != cfg.model.encoder.image_size) {
      throw ConfigError("split '" + split + "' image " + s.name + " is " + shape_string(s.image.shape()) +
                        " but the config expects " + std::to_string(cfg.model.encoder.image_size) + " pixels square");
    }
  }
}

metrics::F1Options f1_options(const RunConfig& cfg) {
  metrics::F1Options o;
  o.tolerance = cfg.eval.tolerance;
  o.macro = cfg.eval.macro;
  return o;
}

metrics::EvalReport evaluate_split(const ParamSet<float>& params, const RunConfig& cfg, const synth::Dataset& data) {
  std::vector<Tensor<float>> preds, gts;
  for (const auto& s : data.samples) {
    preds.push_back(predict(params, cfg.model, s.image));
    gts.push_back(synth::rasterize(s.annotation, s.image.dim(1), s.image.dim(2), cfg.task, cfg.raster).heatmap);
  }
  metrics::EvalReport report;
  report.f1 = metrics::f1_max(preds, gts, f1_options(cfg));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.per_image_f1.push_back(metrics::f1_at(preds[i], gts[i], report.f1.tau, cfg.eval.tolerance));
  }
  return report;
}

struct LoadedModel {
  RunConfig cfg;
  train::Checkpoint checkpoint;
};

LoadedModel load_model(const fs::path& dir, const RunConfig& requested, bool requested_explicitly) {
  if (!fs::exists(dir / "manifest.json")) throw ConfigError("no checkpoint at " + dir.string());
  LoadedModel m;
  m.checkpoint = train::load_checkpoint(dir);
  m.cfg = config_from_json(nlohmann::json::parse(m.checkpoint.config_text));
  if (requested_explicitly) check_compatible(m.cfg, requested);
  m.cfg.threads = requested.threads;
  return m;
}

// ---------------------------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::optional<int> count, val, test;  // default to the config's data section
  bool force = false;
};

int cmd_gen_data(const Globals& g, const GenDataArgs& a) {
  RunConfig cfg = resolve(g);
  const int count = a.count.value_or(cfg.data.train);
  const int val = a.val.value_or(cfg.data.val), test = a.test.value_or(cfg.data.test);
  if (count < 1) throw ConfigError("--count must be >= 1");
  if (val < 0 || test < 0) throw ConfigError("--val and --test must be >= 0");
  const fs::path out = a.out.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.out);
  if (fs::exists(out) && !a.force) throw ConfigError(out.string() + " already exists (use --force to replace it)");

  StagedDir stage(out);
  std::cout << "dataset " << out.string() << " (seed " << cfg.seed << ", " << cfg.scene.image_size << "px)\n";
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", count}, {"val", val}, {"test", test}}) {
    if (count == 0) continue;
    const auto manifest = synth::write_dataset(cfg.scene, count, stage.path() / split, split, cfg.seed);
    // Audit pass: every image must carry at least one symmetry element.
    const auto data = synth::read_dataset(stage.path() / split);
    std::size_t axes = 0, centers = 0;
    for (const auto& s : data.samples) {
      if (s.annotation.empty()) throw GenerationError("sample " + s.name + " has no symmetric shape");
      axes += s.annotation.axes.size();
      centers += s.annotation.centers.size();
    }
    std::cout << "  " << std::left << std::setw(5) << split << std::right << " " << manifest.entries.size()
              << " images, " << axes << " axes, " << centers << " centers\n";
  }
  stage.commit(true);
  return 0;
}

struct TrainArgs {
  std::string data, checkpoint, log;
  std::optional<int> epochs;
  bool resume = false;
};

void write_log(std::ofstream& os, const train::LogRecord& r) {
  nlohmann::json j{{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.lr}, {"seconds", r.seconds}};
  os << j.dump() << '\n';
  os.flush();
}

void save_atomically(const fs::path& dir, const train::TrainState& state, const RunConfig& cfg) {
  StagedDir stage(dir);
  train::save_checkpoint(stage.path(), state, to_json(cfg).dump());
  stage.commit(true);
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  RunConfig cfg = resolve(g);
  const fs::path data_dir = a.data.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.data);
  const fs::path ck_dir = a.checkpoint.empty() ? fs::path(cfg.paths.checkpoint) : fs::path(a.checkpoint);
  const fs::path log_path = a.log.empty() ? fs::path(ck_dir.string() + ".log.jsonl") : fs::path(a.log);
  if (!fs::is_directory(data_dir)) throw ConfigError("dataset path " + data_dir.string() + " does not exist");

  train::TrainState state;
  if (a.resume) {
    auto loaded = load_model(ck_dir, cfg, !g.config_path.empty() || g.preset != "desk-toy");
    cfg = loaded.cfg;
    state = std::move(loaded.checkpoint.state);
    if (g.threads) cfg.threads = *g.threads;
  }
  if (a.epochs) cfg.optim.epochs = *a.epochs;
  cfg.validate();
  const auto train_set = read_split(data_dir, "train");
  const auto val_set = read_split(data_dir, "val");
  require_image_size(train_set, cfg, "train");
  require_image_size(val_set, cfg, "val");

  if (!a.resume) {
    state.params = init_model<float>(cfg.model, initial_text(cfg.sapg), cfg.seed);
    state.optim = train::init_optim(state.params);
    state.epoch = 0;
  }

  // Keep log lines of completed epochs only, so a resumed log reads like an uninterrupted one.
  std::vector<std::string> kept;
  if (a.resume) {
    std::ifstream is(log_path);
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && nlohmann::json::parse(line).at("epoch").get<int>() < state.epoch) kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write training log " + log_path.string());
  for (const auto& line : kept) log << line << '\n';

  train::TrainSetup setup{cfg.model, cfg.focal, cfg.augment, cfg.optim, cfg.task, cfg.raster, cfg.seed, cfg.threads};
  std::cout << "training " << train_set.samples.size() << " images, epochs " << state.epoch << ".." << cfg.optim.epochs
            << ", batch " << cfg.optim.batch_size << '\n';
  while (state.epoch < cfg.optim.epochs) {
    double sum = 0.0;
    int steps = 0;
    double lr = 0.0;
    train::train_epoch(state, train_set.samples, setup, [&](const train::LogRecord& r) {
      write_log(log, r);
      sum += r.loss;
      lr = r.lr;
      ++steps;
    });
    std::cout << "epoch " << state.epoch << "/" << cfg.optim.epochs << " loss " << sum / steps << " lr " << lr
              << std::endl;
    if (state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.optim.epochs) save_atomically(ck_dir, state, cfg);
  }

  const auto report = evaluate_split(state.params, cfg, val_set);
  std::ofstream rep(ck_dir / "val_report.txt");
  metrics::write_report(rep, report);
  std::cout << "validation\n";
  metrics::write_report(std::cout, report);
  return 0;
}

struct PredictArgs {
  std::string checkpoint, image, tokens, out;
};

int cmd_predict(const Globals& g, const PredictArgs& a) {
  const RunConfig requested = resolve(g);
  if (a.image.empty() == a.tokens.empty()) throw ConfigError("predict needs exactly one of --image or --tokens");
  const fs::path ck_dir = a.checkpoint.empty() ? fs::path(requested.paths.checkpoint) : fs::path(a.checkpoint);
  const fs::path out = a.out.empty() ? fs::path(requested.paths.output) : fs::path(a.out);
  const auto model = load_model(ck_dir, requested, !g.config_path.empty() || g.preset != "desk-toy");
  const auto& params = model.checkpoint.state.params;
  const auto& mc = model.cfg.model;

  Tensor<float> heat;
  std::string stem;
  if (!a.image.empty()) {
    stem = fs::path(a.image).stem().string();
    const Tensor<float> img = image::read_ppm(a.image);
    const auto box = image::letterbox_geometry(img.dim(1), img.dim(2), mc.encoder.image_size);
    heat = image::crop_and_restore(predict(params, mc, image::pad_to_square(img, box)), box);
  } else {
    stem = fs::path(a.tokens).stem().string();
    const auto tokens = load_tokens(a.tokens);
    if (tokens.dim() != mc.decoder.token_dim) {
      throw ConfigError("token width " + std::to_string(tokens.dim()) + " does not match the decoder's " +
                        std::to_string(mc.decoder.token_dim));
    }
    ParamSet<float> dec;
    for (const auto& [name, t] : params) {
      if (name.rfind("dec.", 0) == 0) dec.emplace(name, t);
    }
    heat = decode(tokens, params.at(kTextTokens), dec, mc.decoder);
  }

  StagedDir stage(out);
  csym::write(stage.path() / (stem + ".csym"), heat);
  image::write_pgm(stage.path() / (stem + ".pgm"), heat);
  stage.commit(false);
  std::cout << (out / (stem + ".pgm")).string() << " " << heat.dim(1) << "x" << heat.dim(0) << " max "
            << heat.vec().maxCoeff() << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "val", out, robust = "none", consistency_transform = "rotation";
  bool consistency = false;
  std::optional<int> tolerance, samples;
  std::optional<double> robust_degrees;
  bool macro = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const RunConfig requested = resolve(g);
  const fs::path ck_dir = a.checkpoint.empty() ? fs::path(requested.paths.checkpoint) : fs::path(a.checkpoint);
  const fs::path data_dir = a.data.empty() ? fs::path(requested.paths.dataset) : fs::path(a.data);
  const fs::path out = a.out.empty() ? fs::path(requested.paths.output) : fs::path(a.out);
  const auto robust_kind = metrics::parse_transform(a.robust);
  const auto cons_kind = metrics::parse_transform(a.consistency_transform);
  auto model = load_model(ck_dir, requested, !g.config_path.empty() || g.preset != "desk-toy");
  RunConfig cfg = model.cfg;
  cfg.seed = requested.seed;
  if (a.tolerance) cfg.eval.tolerance = *a.tolerance;
  if (a.samples) cfg.eval.consistency_samples = *a.samples;
  if (a.robust_degrees) cfg.eval.robust_degrees = *a.robust_degrees;
  if (a.macro) cfg.eval.macro = true;
  cfg.validate();
  const auto data = read_split(data_dir, a.split);
  require_image_size(data, cfg, a.split);
  const auto& params = model.checkpoint.state.params;

  auto report = evaluate_split(params, cfg, data);
  std::vector<Tensor<float>> images;
  std::vector<synth::Annotation> anns;
  for (const auto& s : data.samples) {
    images.push_back(s.image);
    anns.push_back(s.annotation);
  }
  const auto predictor =
      metrics::image_predictor([&](const Tensor<float>& img) { return predict(params, cfg.model, img); }, images);
  const Index side = cfg.model.encoder.image_size;
  if (robust_kind != metrics::TransformKind::none) {
    metrics::RobustnessOptions ro{{robust_kind, cfg.eval.robust_degrees}, cfg.seed, cfg.task, cfg.raster, f1_options(cfg)};
    report.has_robustness = true;
    report.robustness_transform = a.robust;
    report.robustness = metrics::robustness(predictor, anns, side, side, ro);
  }
  if (a.consistency) {
    metrics::ConsistencyOptions co{{cons_kind, cfg.eval.robust_degrees}, cfg.eval.consistency_samples, cfg.seed, 1e-8};
    report.has_consistency = true;
    report.consistency = metrics::consistency(predictor, images.size(), co);
  }

  StagedDir stage(out);
  {
    std::ofstream rep(stage.path() / "report.txt");
    metrics::write_report(rep, report);
    std::ofstream csv(stage.path() / "curve.csv");
    metrics::write_curve_csv(csv, report.f1.curve);
    if (!rep || !csv) throw IoError("cannot write evaluation report");
  }
  stage.commit(false);
  std::cout << "split: " << a.split << '\n';
  metrics::write_report(std::cout, report);
  return 0;
}

struct EquivArgs {
  std::string checkpoint;
  std::optional<int> n;
  int seeds = 5;
  int grid = 6;
  int patch = 4;
  double tolerance = 1e-5;
  bool break_equivariance = false;
};

int cmd_equiv_check(const Globals& g, const EquivArgs& a) {
  RunConfig cfg = resolve(g);
  EquivarianceOptions o;
  if (!a.checkpoint.empty()) {
    auto model = load_model(a.checkpoint, cfg, !g.config_path.empty() || g.preset != "desk-toy");
    cfg = model.cfg;
    o.params = std::move(model.checkpoint.state.params);
  }
  o.decoder = cfg.model.decoder;
  if (a.n) {
    if (o.params) throw ConfigError("--n cannot change the rotation group of a trained checkpoint");
    o.decoder.n = *a.n;
  }
  validate(o.decoder);
  o.decoder.inject_positional_encoding = a.break_equivariance;
  o.seeds = a.seeds;
  o.grid = a.grid;
  o.patch = a.patch;
  o.seed = cfg.seed;
  o.float_tolerance = a.tolerance;
  const auto report = check_equivariance(o);
  if (report.skipped) {
    std::cout << "n=" << o.decoder.n << " is not a multiple of 4; C4 checks skipped\n";
    return 0;
  }
  std::cout << "C4 equivariance, n=" << o.decoder.n << ", " << o.seeds << " seeds"
            << (a.break_equivariance ? ", positional encoding injected" : "") << '\n';
  std::cout << std::left << std::setw(26) << "stage" << std::setw(9) << "dtype" << std::setw(6) << "theta"
            << std::setw(14) << "max_dev" << std::setw(10) << "tol" << "result\n"
            << std::right;
  for (const auto& r : report.rows) {
    std::cout << std::left << std::setw(26) << r.stage << std::setw(9) << r.precision << std::setw(6) << 90 * r.k
              << std::setw(14) << std::setprecision(3) << std::scientific << r.deviation << std::setw(10) << r.tolerance
              << std::defaultfloat << std::right << (r.pass() ? "pass" : "FAIL") << '\n';
  }
  if (!report.ok()) {
    std::cout << "failing stages:";
    for (const auto& s : report.failing_stages()) std::cout << ' ' << s;
    std::cout << '\n';
    return kExitNumeric;
  }
  std::cout << "all stages pass\n";
  return 0;
}

struct PromptArgs {
  std::string out, embed_out;
};

int cmd_prompts(const Globals& g, const PromptArgs& a) {
  const RunConfig cfg = resolve(g);
  const auto set = prompts_for(cfg.sapg);
  if (!a.out.empty()) sapg::write_prompt_set(a.out, set);
  if (!a.embed_out.empty()) csym::write(a.embed_out, sapg::embed_prompts(set, cfg.sapg.text_dim, cfg.sapg.seed).embeddings);
  for (const auto& t : set.texts()) std::cout << t << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const RunConfig defaults = preset("desk-toy");
  CLI::App app{"symdec: prompt-conditioned, rotation-equivariant symmetry detection"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config (keys absent from it keep preset values)");
  app.add_option("--preset", g.preset, "desk-toy | paper-geometry")->capture_default_str();
  app.add_option("--seed", g.seed, "Run seed (overrides config and SYMDEC_SEED)")
      ->default_str(std::to_string(defaults.seed));
  app.add_option("--threads", g.threads, "Worker cap")->default_str(std::to_string(defaults.threads));

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate train/val/test synthetic splits");
  gen->add_option("--out", gd.out, "Dataset directory")->default_str(defaults.paths.dataset);
  gen->add_option("--count", gd.count, "Training images")->default_str(std::to_string(defaults.data.train));
  gen->add_option("--val", gd.val, "Validation images")->default_str(std::to_string(defaults.data.val));
  gen->add_option("--test", gd.test, "Test images")->default_str(std::to_string(defaults.data.test));
  gen->add_flag("--force", gd.force, "Replace an existing dataset directory");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train encoder, prompt embeddings and decoder");
  tr->add_option("--data", ta.data, "Dataset directory")->default_str(defaults.paths.dataset);
  tr->add_option("--checkpoint", ta.checkpoint, "Checkpoint directory")->default_str(defaults.paths.checkpoint);
  tr->add_option("--log", ta.log, "Line-delimited JSON log")->default_str(defaults.paths.checkpoint + ".log.jsonl");
  tr->add_option("--epochs", ta.epochs, "Total epochs")->default_str(std::to_string(defaults.optim.epochs));
  tr->add_flag("--resume", ta.resume, "Continue from the checkpoint");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Heatmap for one image (PPM) or one exported token file");
  pr->add_option("--checkpoint", pa.checkpoint, "Checkpoint directory")->default_str(defaults.paths.checkpoint);
  pr->add_option("--image", pa.image, "Input PPM image");
  pr->add_option("--tokens", pa.tokens, "CSYM patch tokens with sidecar");
  pr->add_option("--out", pa.out, "Output directory")->default_str(defaults.paths.output);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "F1, robustness and consistency on a split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint directory")->default_str(defaults.paths.checkpoint);
  ev->add_option("--data", ea.data, "Dataset directory")->default_str(defaults.paths.dataset);
  ev->add_option("--split", ea.split, "Split name")->capture_default_str();
  ev->add_option("--out", ea.out, "Report directory")->default_str(defaults.paths.output);
  ev->add_option("--robust", ea.robust, "none | rotation | quarter | flip")->capture_default_str();
  ev->add_option("--robust-degrees", ea.robust_degrees, "Rotation range [-r, r]")
      ->default_str(std::to_string(int(defaults.eval.robust_degrees)));
  ev->add_flag("--consistency", ea.consistency, "Also compute consistency");
  ev->add_option("--consistency-transform", ea.consistency_transform, "rotation | quarter | flip")->capture_default_str();
  ev->add_option("--samples", ea.samples, "Transforms per image for consistency")
      ->default_str(std::to_string(defaults.eval.consistency_samples));
  ev->add_option("--tolerance", ea.tolerance, "Match radius in pixels")->default_str(std::to_string(defaults.eval.tolerance));
  ev->add_flag("--macro", ea.macro, "Average per-image F1 instead of one split-wide count");

  EquivArgs qa;
  auto* eq = app.add_subcommand("equiv-check", "Certify C4 equivariance of the decoder stage by stage");
  eq->add_option("--checkpoint", qa.checkpoint, "Use trained parameters instead of random ones");
  eq->add_option("--n", qa.n, "Rotation slots")->default_str(std::to_string(defaults.model.decoder.n));
  eq->add_option("--seeds", qa.seeds, "Random cases")->capture_default_str();
  eq->add_option("--grid", qa.grid, "Token grid side M")->capture_default_str();
  eq->add_option("--patch", qa.patch, "Output pixels per token")->capture_default_str();
  eq->add_option("--tolerance", qa.tolerance, "float32 tolerance (float64 uses 1e-10)")->capture_default_str();
  eq->add_flag("--break-equivariance", qa.break_equivariance, "Inject a positional code into the decoder transformer");

  PromptArgs pp;
  auto* ps = app.add_subcommand("prompts", "Print the SAPG prompt set");
  ps->add_option("--out", pp.out, "Also write the prompts to this file");
  ps->add_option("--embed-out", pp.embed_out, "Write the initial prompt embeddings as CSYM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(g, gd);
    if (*tr) return cmd_train(g, ta);
    if (*pr) return cmd_predict(g, pa);
    if (*ev) return cmd_eval(g, ea);
    if (*eq) return cmd_equiv_check(g, qa);
    if (*ps) return cmd_prompts(g, pp);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const GenerationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
