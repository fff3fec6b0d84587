#include "gsdtta/config.hpp"

#include "gsdtta/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace gsdtta {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw UsageError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

}  // namespace

std::string to_string(LabelRule rule) {
  return rule == LabelRule::kArgmaxSimilarity ? "argmax_sim" : "literal_argmin";
}

std::string to_string(LabelRefresh refresh) {
  return refresh == LabelRefresh::kEveryStep ? "every_step" : "per_cycle";
}

std::string to_string(WeightKernel kernel) {
  return kernel == WeightKernel::kGaussian ? "gaussian" : "literal_quartic";
}

const std::vector<std::string>& adapt_config_keys() {
  static const std::vector<std::string> keys = {
      "alpha", "beta1", "beta2", "beta3", "m_band", "lr", "weight_decay", "batch_size",
      "input_steps_per_cycle", "model_steps_per_cycle", "total_steps", "enable_gsdps", "enable_gsgma",
      "eigenmap_guided", "eigenmap_dim", "band_excludes_zero_modes", "label_rule", "label_refresh",
      "reset_per_group", "k", "delta", "gamma", "weight_kernel", "seed"};
  return keys;
}

void set_config_value(AdaptConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "alpha") cfg.alpha = to_double(key, value);
  else if (key == "beta1") cfg.beta1 = to_double(key, value);
  else if (key == "beta2") cfg.beta2 = to_double(key, value);
  else if (key == "beta3") cfg.beta3 = to_double(key, value);
  else if (key == "m_band") cfg.m_band = to_int<int>(key, value);
  else if (key == "lr") cfg.lr = to_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = to_double(key, value);
  else if (key == "batch_size") cfg.batch_size = to_int<int>(key, value);
  else if (key == "input_steps_per_cycle") cfg.input_steps_per_cycle = to_int<int>(key, value);
  else if (key == "model_steps_per_cycle") cfg.model_steps_per_cycle = to_int<int>(key, value);
  else if (key == "total_steps") cfg.total_steps = to_int<int>(key, value);
  else if (key == "enable_gsdps") cfg.enable_gsdps = to_bool(key, value);
  else if (key == "enable_gsgma") cfg.enable_gsgma = to_bool(key, value);
  else if (key == "eigenmap_guided") cfg.eigenmap_guided = to_bool(key, value);
  else if (key == "eigenmap_dim") cfg.eigenmap_dim = to_int<int>(key, value);
  else if (key == "band_excludes_zero_modes") cfg.band_excludes_zero_modes = to_bool(key, value);
  else if (key == "label_rule") {
    if (value == "argmax_sim") cfg.label_rule = LabelRule::kArgmaxSimilarity;
    else if (value == "literal_argmin") cfg.label_rule = LabelRule::kLiteralArgmin;
    else bad_value(key, value);
  } else if (key == "label_refresh") {
    if (value == "every_step") cfg.label_refresh = LabelRefresh::kEveryStep;
    else if (value == "per_cycle") cfg.label_refresh = LabelRefresh::kPerCycle;
    else bad_value(key, value);
  } else if (key == "reset_per_group") cfg.reset_per_group = to_bool(key, value);
  else if (key == "k") cfg.graph.k = to_int<int>(key, value);
  else if (key == "delta") cfg.graph.delta = to_double(key, value);
  else if (key == "gamma") cfg.graph.gamma = to_double(key, value);
  else if (key == "weight_kernel") {
    if (value == "gaussian") cfg.graph.kernel = WeightKernel::kGaussian;
    else if (value == "literal_quartic") cfg.graph.kernel = WeightKernel::kLiteralQuartic;
    else bad_value(key, value);
  } else if (key == "seed") cfg.seed = to_int<std::uint64_t>(key, value);
  else throw UsageError("unknown config key '" + std::string(key) + "'");
}

AdaptConfig parse_adapt_config(std::string_view text, const AdaptConfig& base) {
  AdaptConfig cfg = base;
  const std::string_view body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config JSON must be an object");
    for (const auto& [key, value] : j.items()) {
      if (value.is_string()) set_config_value(cfg, key, value.get<std::string>());
      else if (value.is_boolean() || value.is_number()) set_config_value(cfg, key, value.dump());
      else throw UsageError("config key '" + key + "' must be a scalar");
    }
  } else {
    std::istringstream in{std::string(body)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view l = line;
      if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
      l = trim(l);
      if (l.empty()) continue;
      const auto eq = l.find('=');
      if (eq == std::string_view::npos)
        throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
      set_config_value(cfg, trim(l.substr(0, eq)), l.substr(eq + 1));
    }
  }
  cfg.validate();
  return cfg;
}

AdaptConfig load_adapt_config(const std::filesystem::path& path, const AdaptConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_adapt_config(ss.str(), base);
}

nlohmann::ordered_json to_json(const AdaptConfig& cfg) {
  nlohmann::ordered_json j;
  j["alpha"] = cfg.alpha;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["beta3"] = cfg.beta3;
  j["m_band"] = cfg.m_band;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["input_steps_per_cycle"] = cfg.input_steps_per_cycle;
  j["model_steps_per_cycle"] = cfg.model_steps_per_cycle;
  j["total_steps"] = cfg.total_steps;
  j["enable_gsdps"] = cfg.enable_gsdps;
  j["enable_gsgma"] = cfg.enable_gsgma;
  j["eigenmap_guided"] = cfg.eigenmap_guided;
  j["eigenmap_dim"] = cfg.eigenmap_dim;
  j["band_excludes_zero_modes"] = cfg.band_excludes_zero_modes;
  j["label_rule"] = to_string(cfg.label_rule);
  j["label_refresh"] = to_string(cfg.label_refresh);
  j["reset_per_group"] = cfg.reset_per_group;
  j["k"] = cfg.graph.k;
  j["delta"] = cfg.graph.delta;
  j["gamma"] = cfg.graph.gamma;
  j["weight_kernel"] = to_string(cfg.graph.kernel);
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace gsdtta
