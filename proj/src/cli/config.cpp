#include "negguide/cli/config.hpp"

#include <fstream>
#include <sstream>

#include "negguide/errors.hpp"
#include "negguide/trace_io.hpp"

namespace negguide::cli {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class T>
T get_as(const nlohmann::json& doc, const std::string& path) {
  try {
    return doc.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

std::size_t positive_count(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
    throw ConfigError(path + ": expected a positive integer");
  }
  return v.get<std::size_t>();
}

void check_keys(const nlohmann::json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown field");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "", {"world", "schedule", "guidance", "positive", "negative", "strategies",
                       "k_values", "t_grid", "n_samples", "n_seeds", "out", "workers",
                       "save_traces", "denoiser", "train"});
  ExperimentConfig c;
  if (!doc.contains("world") || !doc["world"].is_string()) {
    throw ConfigError("world: expected a path string");
  }
  c.world_path = resolve(base_dir, doc["world"].get<std::string>());

  if (doc.contains("schedule")) {
    const auto& js = doc["schedule"];
    check_keys(js, "schedule", {"kind", "T", "beta_min", "beta_max"});
    try {
      if (js.contains("kind")) c.schedule_kind = parse_schedule_kind(get_as<std::string>(js["kind"], "schedule.kind"));
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("schedule.kind: ") + e.what());
    }
    if (js.contains("T")) c.total_steps = static_cast<int>(positive_count(js["T"], "schedule.T"));
    if (js.contains("beta_min")) c.beta_min = get_as<double>(js["beta_min"], "schedule.beta_min");
    if (js.contains("beta_max")) c.beta_max = get_as<double>(js["beta_max"], "schedule.beta_max");
  }
  if (doc.contains("guidance")) c.guidance = guidance_from_json(doc["guidance"]);
  if (!doc.contains("positive") || !doc["positive"].is_string()) {
    throw ConfigError("positive: expected a concept id");
  }
  c.positive = doc["positive"].get<std::string>();
  if (doc.contains("negative")) c.negative = get_as<std::string>(doc["negative"], "negative");
  if (doc.contains("strategies")) {
    const auto& jl = doc["strategies"];
    if (!jl.is_array()) throw ConfigError("strategies: expected an array");
    for (std::size_t i = 0; i < jl.size(); ++i) {
      const std::string path = "strategies[" + std::to_string(i) + "]";
      if (!jl[i].is_object()) throw ConfigError(path + ": expected an object");
      try {
        guidance_from_json(jl[i], c.guidance);
      } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
      }
    }
    c.strategy_overlays = jl;
  }
  auto int_list = [&](const char* key) {
    std::vector<int> out;
    if (!doc.contains(key)) return out;
    if (!doc[key].is_array()) throw ConfigError(std::string(key) + ": expected an array of integers");
    for (std::size_t i = 0; i < doc[key].size(); ++i) {
      if (!doc[key][i].is_number_integer()) {
        throw ConfigError(std::string(key) + "[" + std::to_string(i) + "]: expected an integer");
      }
      out.push_back(doc[key][i].get<int>());
    }
    return out;
  };
  c.k_values = int_list("k_values");
  c.t_grid = int_list("t_grid");
  if (doc.contains("n_samples")) c.n_samples = positive_count(doc["n_samples"], "n_samples");
  if (doc.contains("n_seeds")) c.n_seeds = positive_count(doc["n_seeds"], "n_seeds");
  if (doc.contains("out")) c.out_dir = resolve(base_dir, get_as<std::string>(doc["out"], "out"));
  if (doc.contains("workers")) c.workers = static_cast<int>(positive_count(doc["workers"], "workers"));
  if (doc.contains("save_traces")) c.save_traces = get_as<bool>(doc["save_traces"], "save_traces");
  if (doc.contains("denoiser")) {
    const auto& jd = doc["denoiser"];
    check_keys(jd, "denoiser", {"kind", "path"});
    const std::string kind = jd.value("kind", "analytic");
    if (kind == "analytic") {
      c.denoiser.kind = DenoiserSpec::Kind::kAnalytic;
    } else if (kind == "trained") {
      c.denoiser.kind = DenoiserSpec::Kind::kTrained;
      if (!jd.contains("path")) throw ConfigError("denoiser.path: required for trained denoisers");
      c.denoiser.model_path = resolve(base_dir, get_as<std::string>(jd["path"], "denoiser.path"));
    } else {
      throw ConfigError("denoiser.kind: expected 'analytic' or 'trained'");
    }
  }
  if (doc.contains("train")) {
    const auto& jt = doc["train"];
    check_keys(jt, "train", {"hidden", "activation", "time_features", "embedding_dim",
                             "learning_rate", "iterations", "batch_size", "condition_dropout",
                             "seed", "model_out"});
    TrainableConfig& t = c.train;
    if (jt.contains("hidden")) t.hidden = get_as<std::vector<int>>(jt["hidden"], "train.hidden");
    try {
      if (jt.contains("activation")) t.activation = parse_activation(get_as<std::string>(jt["activation"], "train.activation"));
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("train.activation: ") + e.what());
    }
    if (jt.contains("time_features")) t.time_features = get_as<int>(jt["time_features"], "train.time_features");
    if (jt.contains("embedding_dim")) t.embedding_dim = get_as<int>(jt["embedding_dim"], "train.embedding_dim");
    if (jt.contains("learning_rate")) t.learning_rate = get_as<double>(jt["learning_rate"], "train.learning_rate");
    if (jt.contains("iterations")) t.iterations = get_as<long>(jt["iterations"], "train.iterations");
    if (jt.contains("batch_size")) t.batch_size = get_as<int>(jt["batch_size"], "train.batch_size");
    if (jt.contains("condition_dropout")) t.condition_dropout = get_as<double>(jt["condition_dropout"], "train.condition_dropout");
    if (jt.contains("seed")) c.train_seed = get_as<std::uint64_t>(jt["seed"], "train.seed");
    if (jt.contains("model_out")) c.model_out = resolve(base_dir, get_as<std::string>(jt["model_out"], "train.model_out"));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

void apply_overrides(ExperimentConfig& c, const Overrides& f) {
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.workers) {
    if (*f.workers < 1) throw ConfigError("--workers: must be positive");
    c.workers = *f.workers;
  }
  if (f.total_steps) {
    if (*f.total_steps < 1) throw ConfigError("--t: must be positive");
    c.total_steps = *f.total_steps;
  }
  if (f.n) {
    if (*f.n == 0) throw ConfigError("--n: must be positive");
    c.n_samples = *f.n;
    c.n_seeds = *f.n;
  }
  nlohmann::json g = nlohmann::json::object();
  if (f.seed) g["seed"] = *f.seed;
  if (f.strategy) g["strategy"] = *f.strategy;
  if (f.s) g["s"] = *f.s;
  if (f.s_n) g["s_n"] = *f.s_n;
  if (f.k) g["K"] = *f.k;
  if (f.sampler) g["sampler"] = *f.sampler;
  if (f.no_normalize) g["normalize"] = false;
  if (f.window) g["window_fraction"] = *f.window;
  c.guidance = guidance_from_json(g, c.guidance);
}

std::vector<StrategyEntry> ExperimentConfig::strategies() const {
  std::vector<StrategyEntry> out;
  if (strategy_overlays.empty()) {
    for (Strategy s : {Strategy::kCfg, Strategy::kDnp, Strategy::kAnswer}) {
      GuidanceConfig g = guidance;
      g.strategy = s;
      out.push_back({std::string(to_string(s)), g});
    }
    return out;
  }
  for (const auto& overlay : strategy_overlays) {
    GuidanceConfig g = guidance_from_json(overlay, guidance);
    std::string label = overlay.contains("label") ? overlay["label"].get<std::string>()
                                                  : std::string(to_string(g.strategy));
    out.push_back({label, g});
  }
  return out;
}

nlohmann::json ExperimentConfig::canonical() const {
  nlohmann::json doc;
  doc["world_contents_hash"] = fnv1a_hex(read_text(world_path));
  doc["schedule"] = {{"kind", std::string(to_string(schedule_kind))},
                     {"T", total_steps},
                     {"beta_min", beta_min},
                     {"beta_max", beta_max}};
  doc["guidance"] = guidance_to_json(guidance);
  doc["positive"] = positive;
  doc["negative"] = negative ? nlohmann::json(*negative) : nlohmann::json();
  nlohmann::json strategies_doc = nlohmann::json::array();
  for (const StrategyEntry& e : strategies()) {
    strategies_doc.push_back({{"label", e.label}, {"guidance", guidance_to_json(e.guidance)}});
  }
  doc["strategies"] = strategies_doc;
  doc["k_values"] = k_values;
  doc["t_grid"] = t_grid;
  doc["n_samples"] = n_samples;
  doc["n_seeds"] = n_seeds;
  doc["save_traces"] = save_traces;
  if (denoiser.kind == DenoiserSpec::Kind::kTrained) {
    doc["denoiser"] = {{"kind", "trained"}, {"model_hash", fnv1a_hex(read_text(denoiser.model_path))}};
  } else {
    doc["denoiser"] = {{"kind", "analytic"}};
  }
  doc["train"] = {{"hidden", train.hidden},
                  {"activation", std::string(to_string(train.activation))},
                  {"time_features", train.time_features},
                  {"embedding_dim", train.embedding_dim},
                  {"learning_rate", train.learning_rate},
                  {"iterations", train.iterations},
                  {"batch_size", train.batch_size},
                  {"condition_dropout", train.condition_dropout},
                  {"seed", train_seed}};
  return doc;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical().dump()); }

}  // namespace negguide::cli
