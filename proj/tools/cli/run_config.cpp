#include "cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "rulforge/error.hpp"

namespace rulforge::cli {

using nlohmann::json;

std::string_view to_string(PreprocessingMode mode) {
  return mode == PreprocessingMode::FullSequence ? "full_sequence" : "windowed";
}

PreprocessingMode parse_preprocessing_mode(std::string_view text) {
  if (text == "full_sequence") return PreprocessingMode::FullSequence;
  if (text == "windowed") return PreprocessingMode::Windowed;
  throw ValidationError("unknown preprocessing mode '" + std::string(text) +
                        "' (expected full_sequence or windowed)");
}

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw ValidationError("config: " + path + ": " + msg);
}

/// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) field_error(display(), "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  std::optional<T> optional(const char* key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) field_error(child(key), "expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) field_error(child(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<long long>() < 0) field_error(child(key), "expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) field_error(child(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) field_error(child(key), "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      field_error(child(key), e.what());
    }
  }

  template <typename T>
  T get(const char* key, T fallback) {
    return optional<T>(key).value_or(std::move(fallback));
  }

  template <typename T>
  T required(const char* key) {
    auto v = optional<T>(key);
    if (!v) throw ValidationError("config: missing required field '" + child(key) + "'");
    return *v;
  }

  const json* object(const char* key) {
    seen_.insert(key);
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  /// Wraps a conversion so its error names this field.
  template <typename Fn>
  auto convert(const char* key, Fn&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const ValidationError& e) {
      field_error(child(key), e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) field_error(child(k.c_str()), "unknown field");
    }
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

TrainConfig parse_train(const json& j) {
  ObjectReader r(j, "train");
  TrainConfig t;
  t.batch_size = r.get<std::size_t>("batch_size", t.batch_size);
  t.learning_rate = r.get<double>("learning_rate", t.learning_rate);
  t.max_epochs = r.get<int>("max_epochs", t.max_epochs);
  t.patience = r.get<int>("patience", t.patience);
  t.seed = r.get<std::uint64_t>("seed", t.seed);
  t.val_fraction = r.get<double>("val_fraction", t.val_fraction);
  if (auto opt = r.optional<std::string>("optimizer")) {
    t.optimizer = r.convert("optimizer", [&] { return parse_optimizer(*opt); });
  }
  t.grad_clip = r.optional<double>("grad_clip");
  t.trim = r.get<bool>("trim", t.trim);
  t.retrim_each_epoch = r.get<bool>("retrim_each_epoch", t.retrim_each_epoch);
  t.max_steps = r.optional<std::size_t>("max_steps");
  r.reject_unknown();
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return t;
}

EvalOptions parse_eval(const json& j) {
  ObjectReader r(j, "eval");
  EvalOptions e;
  e.cap_truth = r.get<bool>("cap_truth", e.cap_truth);
  if (auto v = r.optional<std::string>("score_variant")) {
    e.variant = r.convert("score_variant", [&] { return parse_score_variant(*v); });
  }
  r.reject_unknown();
  return e;
}

const std::set<std::string, std::less<>> kModelOverrideKeys{
    "num_blocks", "dilations", "kernel", "channels", "dropout", "head_widths", "padding_mode"};

}  // namespace

SynthConfig parse_synth_config(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  SynthConfig s;
  s.n_train = r.get<int>("n_train", s.n_train);
  s.n_test = r.get<int>("n_test", s.n_test);
  s.min_len = r.get<int>("min_len", s.min_len);
  s.max_len = r.get<int>("max_len", s.max_len);
  s.noise_std = r.get<double>("noise_std", s.noise_std);
  s.n_informative_sensors = r.get<int>("n_informative_sensors", s.n_informative_sensors);
  s.seed = r.get<std::uint64_t>("seed", s.seed);
  r.reject_unknown();
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  return s;
}

json synth_config_to_json(const SynthConfig& s) {
  return {{"n_train", s.n_train},   {"n_test", s.n_test},
          {"min_len", s.min_len},   {"max_len", s.max_len},
          {"noise_std", s.noise_std}, {"n_informative_sensors", s.n_informative_sensors},
          {"seed", s.seed}};
}

RunConfig parse_run_config(const json& j, bool require_output_dir) {
  ObjectReader r(j, "");
  RunConfig c;
  const auto subset = r.required<std::string>("subset");
  c.subset = r.convert("subset", [&] { return parse_subset_id(subset); });
  if (auto root = r.optional<std::string>("data_root")) c.data_root = *root;
  if (const json* s = r.object("synth")) c.synth = parse_synth_config(*s);

  if (const json* p = r.object("preprocessing")) {
    ObjectReader pr(*p, "preprocessing");
    if (auto mode = pr.optional<std::string>("mode")) {
      c.preprocessing = pr.convert("mode", [&] { return parse_preprocessing_mode(*mode); });
    }
    c.window = pr.get<std::size_t>("window", c.window);
    if (c.window < 1) field_error("preprocessing.window", "must be >= 1");
    c.include_settings = pr.get<bool>("include_settings", c.include_settings);
    pr.reject_unknown();
  }

  if (const json* m = r.object("model")) {
    if (!m->is_object()) field_error("model", "expected an object");
    for (const auto& [k, v] : m->items()) {
      if (k == "preset") {
        if (!v.is_string()) field_error("model.preset", "expected a string");
        c.preset = v.get<std::string>();
      } else if (kModelOverrideKeys.count(k)) {
        c.model_overrides[k] = v;
      } else {
        field_error("model." + k, "unknown field");
      }
    }
  }
  // Surface architecture errors now rather than after data loading.
  try {
    (void)c.model_config(1);
  } catch (const ValidationError& e) {
    field_error("model", e.what());
  }

  if (const json* t = r.object("train")) c.train = parse_train(*t);
  if (const json* e = r.object("eval")) c.eval = parse_eval(*e);

  if (require_output_dir) {
    c.output_dir = r.required<std::string>("output_dir");
  } else if (auto out = r.optional<std::string>("output_dir")) {
    c.output_dir = *out;
  }
  c.n_runs = r.get<int>("n_runs", c.n_runs);
  if (c.n_runs < 1) field_error("n_runs", "must be >= 1");
  r.reject_unknown();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, bool require_output_dir) {
  std::ifstream f(path);
  if (!f) throw NotFoundError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j, require_output_dir);
}

TcnConfig RunConfig::model_config(int in_features) const {
  TcnConfig m = model_preset(preset, in_features);
  const json& o = model_overrides;
  try {
    if (o.contains("num_blocks")) m.num_blocks = o.at("num_blocks").get<int>();
    if (o.contains("dilations")) m.dilations = o.at("dilations").get<std::vector<int>>();
    if (o.contains("kernel")) m.kernel = o.at("kernel").get<int>();
    if (o.contains("channels")) m.channels = o.at("channels").get<int>();
    if (o.contains("dropout")) m.dropout = o.at("dropout").get<double>();
    if (o.contains("head_widths")) m.head_widths = o.at("head_widths").get<std::vector<int>>();
    if (o.contains("padding_mode")) {
      m.padding_mode = parse_padding_mode(o.at("padding_mode").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model override: ") + e.what());
  }
  m.validate();
  return m;
}

json RunConfig::to_json() const {
  json j;
  j["subset"] = std::string(rulforge::to_string(subset));
  if (data_root) j["data_root"] = data_root->string();
  if (synth) j["synth"] = synth_config_to_json(*synth);
  j["preprocessing"] = {{"mode", std::string(cli::to_string(preprocessing))},
                        {"window", window},
                        {"include_settings", include_settings}};
  json model = model_overrides;
  model["preset"] = preset;
  j["model"] = model;
  json t = {{"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"seed", train.seed},
            {"val_fraction", train.val_fraction},
            {"optimizer", std::string(rulforge::to_string(train.optimizer))},
            {"trim", train.trim},
            {"retrim_each_epoch", train.retrim_each_epoch}};
  t["grad_clip"] = train.grad_clip ? json(*train.grad_clip) : json(nullptr);
  t["max_steps"] = train.max_steps ? json(*train.max_steps) : json(nullptr);
  j["train"] = t;
  j["eval"] = {{"cap_truth", eval.cap_truth},
               {"score_variant", std::string(rulforge::to_string(eval.variant))}};
  j["output_dir"] = output_dir.string();
  j["n_runs"] = n_runs;
  return j;
}

}  // namespace rulforge::cli
