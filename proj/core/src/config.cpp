#include "plm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace plm {

namespace {

struct Field {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, const char* key) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid integer for '") + key + "': " + v);
  }
}

std::uint64_t parse_u64(const std::string& v, const char* key) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid integer for '") + key + "': " + v);
  }
}

double parse_double(const std::string& v, const char* key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid number for '") + key + "': " + v);
  }
}

bool parse_bool(const std::string& v, const char* key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string("invalid boolean for '") + key + "': " + v);
}

#define INT_FIELD(member)                                                            \
  Field{#member, [](RunConfig& c, const std::string& v) { c.member = parse_int(v, #member); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }}
#define U64_FIELD(member)                                                            \
  Field{#member, [](RunConfig& c, const std::string& v) { c.member = parse_u64(v, #member); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }}
#define DBL_FIELD(member)                                                            \
  Field{#member,                                                                     \
        [](RunConfig& c, const std::string& v) { c.member = parse_double(v, #member); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }}
#define BOOL_FIELD(member)                                                           \
  Field{#member, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v, #member); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }}
#define STR_FIELD(member)                                                \
  Field{#member, [](RunConfig& c, const std::string& v) { c.member = v; }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }}

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      U64_FIELD(seed),
      INT_FIELD(steps),
      INT_FIELD(batch_size),
      DBL_FIELD(lr),
      DBL_FIELD(sgd_momentum),
      DBL_FIELD(weight_decay),
      DBL_FIELD(ema_m),
      DBL_FIELD(tau),
      DBL_FIELD(lambda),
      INT_FIELD(grid),
      INT_FIELD(out_size),
      INT_FIELD(d_backbone),
      INT_FIELD(d_dense),
      INT_FIELD(d_global),
      INT_FIELD(queue_global),
      INT_FIELD(queue_dense),
      STR_FIELD(matcher),
      INT_FIELD(images),
      INT_FIELD(checkpoint_every),
      INT_FIELD(threads),
      BOOL_FIELD(symmetrize),
      INT_FIELD(image_size),
      INT_FIELD(kmin),
      INT_FIELD(kmax),
      DBL_FIELD(blob_rmin),
      DBL_FIELD(blob_rmax),
      DBL_FIELD(scale_min),
      DBL_FIELD(scale_max),
      DBL_FIELD(aspect_min),
      DBL_FIELD(aspect_max),
      DBL_FIELD(hflip_prob),
      DBL_FIELD(vflip_prob),
      DBL_FIELD(jitter_scale_min),
      DBL_FIELD(jitter_scale_max),
      DBL_FIELD(jitter_shift_min),
      DBL_FIELD(jitter_shift_max),
      STR_FIELD(checkpoint),
      INT_FIELD(probe_images),
      DBL_FIELD(probe_train_frac),
      DBL_FIELD(probe_ridge),
      INT_FIELD(fidelity_pairs),
      U64_FIELD(eval_seed),
      STR_FIELD(sweep_lambdas),
      INT_FIELD(sweep_steps),
  };
  return fields;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : registry())
    if (key == f.name) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected key=value, got '" + key_equals_value + "'");
  const std::string key = trim(key_equals_value.substr(0, eq));
  const std::string value = trim(key_equals_value.substr(eq + 1));
  find_field(key).set(cfg, value);
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(base, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("invalid JSON config: " + std::string(e.what()));
    }
    for (const auto& [key, value] : j.items()) {
      const std::string v = value.is_string() ? value.get<std::string>() : value.dump();
      find_field(key).set(base, v);
    }
    return base;
  }
  return parse_config_text(text, base);
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  for (const auto& f : registry()) j[f.name] = f.get(cfg);
  return j.dump(2);
}

void write_config_json(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << config_to_json(cfg) << "\n";
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  keys.reserve(registry().size());
  for (const auto& f : registry()) keys.emplace_back(f.name);
  return keys;
}

DataConfig to_data_config(const RunConfig& cfg) {
  DataConfig d;
  d.image_size = cfg.image_size;
  d.kmin = cfg.kmin;
  d.kmax = cfg.kmax;
  d.blob_rmin = cfg.blob_rmin;
  d.blob_rmax = cfg.blob_rmax;
  d.reference_g = cfg.grid;
  return d;
}

AugSamplerConfig to_aug_config(const RunConfig& cfg) {
  AugSamplerConfig a;
  a.scale_min = cfg.scale_min;
  a.scale_max = cfg.scale_max;
  a.aspect_min = cfg.aspect_min;
  a.aspect_max = cfg.aspect_max;
  a.hflip_prob = cfg.hflip_prob;
  a.vflip_prob = cfg.vflip_prob;
  a.jitter_scale_min = cfg.jitter_scale_min;
  a.jitter_scale_max = cfg.jitter_scale_max;
  a.jitter_shift_min = cfg.jitter_shift_min;
  a.jitter_shift_max = cfg.jitter_shift_max;
  a.out_size = cfg.out_size;
  a.grid = cfg.grid;
  return a;
}

ModelConfig to_model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.grid = cfg.grid;
  m.out_size = cfg.out_size;
  m.d_backbone = cfg.d_backbone;
  m.d_dense = cfg.d_dense;
  m.d_global = cfg.d_global;
  return m;
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.steps = cfg.steps;
  t.batch_size = cfg.batch_size;
  t.lr = cfg.lr;
  t.sgd_momentum = cfg.sgd_momentum;
  t.weight_decay = cfg.weight_decay;
  t.ema_m = cfg.ema_m;
  t.tau = cfg.tau;
  t.lambda = cfg.lambda;
  t.queue_global = cfg.queue_global;
  t.queue_dense = cfg.queue_dense;
  t.seed = cfg.seed;
  t.matcher = matcher_from_string(cfg.matcher);
  t.images = cfg.images;
  t.checkpoint_every = cfg.checkpoint_every;
  t.threads = cfg.threads;
  t.symmetrize = cfg.symmetrize;
  t.model = to_model_config(cfg);
  t.data = to_data_config(cfg);
  t.aug = to_aug_config(cfg);
  return t;
}

ProbeConfig to_probe_config(const RunConfig& cfg) {
  ProbeConfig p;
  p.images = cfg.probe_images;
  p.train_frac = cfg.probe_train_frac;
  p.ridge = cfg.probe_ridge;
  p.data = to_data_config(cfg);
  return p;
}

FidelityConfig to_fidelity_config(const RunConfig& cfg) {
  FidelityConfig f;
  f.data = to_data_config(cfg);
  f.aug = to_aug_config(cfg);
  f.model = to_model_config(cfg);
  return f;
}

std::vector<double> parse_lambda_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    out.push_back(parse_double(token, "sweep_lambdas"));
  }
  if (out.empty()) throw ConfigError("sweep_lambdas is empty");
  return out;
}

}  // namespace plm
