#include "symdec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace symdec {

using nlohmann::json;

void RunConfig::sync() {
  model.decoder.token_dim = model.encoder.dim;
  model.decoder.text_dim = sapg.text_dim;
  model.decoder.prompts = sapg.prompts;
  scene.image_size = model.encoder.image_size;
}

void RunConfig::validate() const {
  RunConfig synced = *this;
  synced.sync();
  if (synced.model.decoder.token_dim != model.decoder.token_dim || synced.model.decoder.text_dim != model.decoder.text_dim ||
      synced.model.decoder.prompts != model.decoder.prompts || synced.scene.image_size != scene.image_size) {
    throw ConfigError("config: derived decoder/scene fields are stale (call sync())");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (model.encoder.image_size < model.encoder.patch_size || model.encoder.patch_size < 1) {
    throw ConfigError("image_size must be >= patch_size >= 1");
  }
  model.validate();
  if (sapg.prompts < 1 || sapg.words < 1) throw ConfigError("sapg.prompts and sapg.words must be >= 1");
  if (sapg.text_dim < 1) throw ConfigError("sapg.text_dim must be >= 1");
  if (sapg.vocabulary.empty() && std::size_t(sapg.prompts) * std::size_t(sapg.words) > sapg::default_vocabulary().size()) {
    throw ConfigError("sapg: M*K = " + std::to_string(sapg.prompts * sapg.words) +
                      " exceeds the built-in vocabulary of " + std::to_string(sapg::default_vocabulary().size()));
  }
  focal.validate();
  optim.validate();
  augment.validate();
  if (!(raster.width >= 1)) throw ConfigError("raster.width must be >= 1");
  if (!(raster.sigma > 0)) throw ConfigError("raster.sigma must be positive");
  scene.validate();
  if (data.train < 1) throw ConfigError("data.train must be >= 1");
  if (data.val < 1) throw ConfigError("data.val must be >= 1");
  if (data.test < 0) throw ConfigError("data.test must be >= 0");
  if (eval.tolerance < 0) throw ConfigError("eval.tolerance must be >= 0");
  if (eval.consistency_samples < 1) throw ConfigError("eval.consistency_samples must be >= 1");
  if (!(eval.robust_degrees >= 0 && eval.robust_degrees <= 180)) throw ConfigError("eval.robust_degrees must lie in [0, 180]");
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  if (name == "desk-toy") {
    // Struct defaults.
  } else if (name == "paper-geometry") {
    cfg.model.encoder = EncoderConfig{417, 16, 768, 2, 12, 4};
    cfg.model.decoder.n = 8;
    cfg.model.decoder.dim = 64;
    cfg.model.decoder.layers = 3;
    cfg.model.decoder.heads = 4;
    cfg.model.decoder.channels = {64, 32, 16, 1};
    cfg.sapg.text_dim = 512;
    cfg.optim.lr = 1e-5;
    cfg.optim.schedule = train::Schedule::exponential;
    cfg.optim.decay_rate = 0.1;
    cfg.optim.batch_size = 16;
    cfg.optim.epochs = 500;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk-toy|paper-geometry)");
  }
  cfg.preset = name;
  cfg.sync();
  return cfg;
}

namespace {

/// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError("config: '" + label() + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: '" + name(key) + "' has the wrong type");
    }
  }

  /// Sub-object, or nullptr when absent.
  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return doc_.contains(key); }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + name(key) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void section(Section& parent, const std::string& key, Fn&& fn) {
  if (const json* j = parent.child(key)) {
    Section s(*j, parent.name(key));
    fn(s);
    s.finish();
  }
}

template <typename Enum, typename Parse>
void get_enum(Section& s, const std::string& key, Enum& out, Parse parse) {
  std::string name;
  s.get(key, name);
  if (!name.empty()) out = parse(name);
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  Section root(doc, "");
  std::string preset_name = "desk-toy";
  root.get("preset", preset_name);
  RunConfig cfg = preset(preset_name);
  get_enum(root, "task", cfg.task, synth::parse_task);
  root.get("seed", cfg.seed);
  root.get("threads", cfg.threads);
  root.get("checkpoint_every", cfg.checkpoint_every);
  root.get("image_size", cfg.model.encoder.image_size);
  root.get("patch_size", cfg.model.encoder.patch_size);
  section(root, "encoder", [&](Section& s) {
    s.get("dim", cfg.model.encoder.dim);
    s.get("layers", cfg.model.encoder.layers);
    s.get("heads", cfg.model.encoder.heads);
    s.get("mlp_ratio", cfg.model.encoder.mlp_ratio);
  });
  section(root, "decoder", [&](Section& s) {
    s.get("n", cfg.model.decoder.n);
    s.get("dim", cfg.model.decoder.dim);
    s.get("layers", cfg.model.decoder.layers);
    s.get("heads", cfg.model.decoder.heads);
    s.get("mlp_ratio", cfg.model.decoder.mlp_ratio);
    s.get("channels", cfg.model.decoder.channels);
  });
  section(root, "sapg", [&](Section& s) {
    s.get("prompts", cfg.sapg.prompts);
    s.get("words", cfg.sapg.words);
    get_enum(s, "policy", cfg.sapg.policy, sapg::parse_policy);
    s.get("seed", cfg.sapg.seed);
    s.get("text_dim", cfg.sapg.text_dim);
    s.get("vocabulary", cfg.sapg.vocabulary);
    s.get("embeddings", cfg.sapg.embeddings);
  });
  bool alpha_given = false;
  section(root, "focal", [&](Section& s) {
    alpha_given = s.has("alpha");
    s.get("alpha", cfg.focal.alpha);
    s.get("lambda", cfg.focal.lambda);
    s.get("eps", cfg.focal.eps);
  });
  if (!alpha_given) cfg.focal.alpha = train::FocalConfig::default_alpha(cfg.task);
  section(root, "optim", [&](Section& s) {
    s.get("lr", cfg.optim.lr);
    s.get("beta1", cfg.optim.beta1);
    s.get("beta2", cfg.optim.beta2);
    s.get("eps", cfg.optim.eps);
    get_enum(s, "schedule", cfg.optim.schedule, train::parse_schedule);
    s.get("decay_rate", cfg.optim.decay_rate);
    s.get("batch_size", cfg.optim.batch_size);
    s.get("epochs", cfg.optim.epochs);
  });
  section(root, "augment", [&](Section& s) {
    s.get("enabled", cfg.augment.enabled);
    s.get("quarter_turns", cfg.augment.quarter_turns);
    s.get("small_rotation", cfg.augment.small_rotation);
    s.get("brightness", cfg.augment.brightness);
    s.get("contrast", cfg.augment.contrast);
  });
  section(root, "raster", [&](Section& s) {
    s.get("width", cfg.raster.width);
    s.get("sigma", cfg.raster.sigma);
  });
  section(root, "scene", [&](Section& s) {
    s.get("min_shapes", cfg.scene.min_shapes);
    s.get("max_shapes", cfg.scene.max_shapes);
    if (s.has("families")) {
      std::vector<std::string> names;
      s.get("families", names);
      cfg.scene.families.clear();
      for (const auto& n : names) cfg.scene.families.push_back(synth::parse_family(n));
    } else {
      s.child("families");
    }
    s.get("min_radius", cfg.scene.min_radius);
    s.get("max_radius", cfg.scene.max_radius);
    s.get("min_sides", cfg.scene.min_sides);
    s.get("max_sides", cfg.scene.max_sides);
    s.get("min_contrast", cfg.scene.min_contrast);
    s.get("texture", cfg.scene.texture);
    s.get("noise", cfg.scene.noise);
    s.get("max_retries", cfg.scene.max_retries);
  });
  section(root, "data", [&](Section& s) {
    s.get("train", cfg.data.train);
    s.get("val", cfg.data.val);
    s.get("test", cfg.data.test);
  });
  section(root, "eval", [&](Section& s) {
    s.get("tolerance", cfg.eval.tolerance);
    s.get("macro", cfg.eval.macro);
    s.get("consistency_samples", cfg.eval.consistency_samples);
    s.get("robust_degrees", cfg.eval.robust_degrees);
  });
  section(root, "paths", [&](Section& s) {
    s.get("dataset", cfg.paths.dataset);
    s.get("checkpoint", cfg.paths.checkpoint);
    s.get("output", cfg.paths.output);
  });
  root.finish();
  cfg.sync();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

json to_json(const RunConfig& c) {
  json families = json::array();
  for (auto f : c.scene.families) families.push_back(synth::family_name(f));
  const auto& e = c.model.encoder;
  const auto& d = c.model.decoder;
  return json{
      {"preset", c.preset},
      {"task", synth::task_name(c.task)},
      {"seed", c.seed},
      {"threads", c.threads},
      {"checkpoint_every", c.checkpoint_every},
      {"image_size", e.image_size},
      {"patch_size", e.patch_size},
      {"encoder", {{"dim", e.dim}, {"layers", e.layers}, {"heads", e.heads}, {"mlp_ratio", e.mlp_ratio}}},
      {"decoder",
       {{"n", d.n}, {"dim", d.dim}, {"layers", d.layers}, {"heads", d.heads}, {"mlp_ratio", d.mlp_ratio},
        {"channels", d.channels}}},
      {"sapg",
       {{"prompts", c.sapg.prompts},
        {"words", c.sapg.words},
        {"policy", sapg::policy_name(c.sapg.policy)},
        {"seed", c.sapg.seed},
        {"text_dim", c.sapg.text_dim},
        {"vocabulary", c.sapg.vocabulary},
        {"embeddings", c.sapg.embeddings}}},
      {"focal", {{"alpha", c.focal.alpha}, {"lambda", c.focal.lambda}, {"eps", c.focal.eps}}},
      {"optim",
       {{"lr", c.optim.lr},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps},
        {"schedule", train::schedule_name(c.optim.schedule)},
        {"decay_rate", c.optim.decay_rate},
        {"batch_size", c.optim.batch_size},
        {"epochs", c.optim.epochs}}},
      {"augment",
       {{"enabled", c.augment.enabled},
        {"quarter_turns", c.augment.quarter_turns},
        {"small_rotation", c.augment.small_rotation},
        {"brightness", c.augment.brightness},
        {"contrast", c.augment.contrast}}},
      {"raster", {{"width", c.raster.width}, {"sigma", c.raster.sigma}}},
      {"scene",
       {{"min_shapes", c.scene.min_shapes},
        {"max_shapes", c.scene.max_shapes},
        {"families", families},
        {"min_radius", c.scene.min_radius},
        {"max_radius", c.scene.max_radius},
        {"min_sides", c.scene.min_sides},
        {"max_sides", c.scene.max_sides},
        {"min_contrast", c.scene.min_contrast},
        {"texture", c.scene.texture},
        {"noise", c.scene.noise},
        {"max_retries", c.scene.max_retries}}},
      {"data", {{"train", c.data.train}, {"val", c.data.val}, {"test", c.data.test}}},
      {"eval",
       {{"tolerance", c.eval.tolerance},
        {"macro", c.eval.macro},
        {"consistency_samples", c.eval.consistency_samples},
        {"robust_degrees", c.eval.robust_degrees}}},
      {"paths", {{"dataset", c.paths.dataset}, {"checkpoint", c.paths.checkpoint}, {"output", c.paths.output}}},
  };
}

void apply_environment(RunConfig& cfg) {
  const char* env = std::getenv("SYMDEC_SEED");
  if (!env) return;
  const std::string text(env);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || text[0] == '-') {
    throw ConfigError("SYMDEC_SEED must be a non-negative integer, got '" + text + "'");
  }
  cfg.seed = v;
}

void check_compatible(const RunConfig& ck, const RunConfig& req) {
  auto same = [](const char* field, const auto& a, const auto& b) {
    if (a != b) {
      throw ConfigError(std::string("checkpoint mismatch in ") + field + ": checkpoint has " + json(a).dump() +
                        ", requested " + json(b).dump());
    }
  };
  same("image_size", ck.model.encoder.image_size, req.model.encoder.image_size);
  same("patch_size", ck.model.encoder.patch_size, req.model.encoder.patch_size);
  same("encoder.dim", ck.model.encoder.dim, req.model.encoder.dim);
  same("encoder.layers", ck.model.encoder.layers, req.model.encoder.layers);
  same("encoder.heads", ck.model.encoder.heads, req.model.encoder.heads);
  same("encoder.mlp_ratio", ck.model.encoder.mlp_ratio, req.model.encoder.mlp_ratio);
  same("decoder.n", ck.model.decoder.n, req.model.decoder.n);
  same("decoder.dim", ck.model.decoder.dim, req.model.decoder.dim);
  same("decoder.layers", ck.model.decoder.layers, req.model.decoder.layers);
  same("decoder.heads", ck.model.decoder.heads, req.model.decoder.heads);
  same("decoder.mlp_ratio", ck.model.decoder.mlp_ratio, req.model.decoder.mlp_ratio);
  same("decoder.channels", ck.model.decoder.channels, req.model.decoder.channels);
  same("sapg.prompts", ck.sapg.prompts, req.sapg.prompts);
  same("sapg.text_dim", ck.sapg.text_dim, req.sapg.text_dim);
}

}  // namespace symdec
