#include "sfeat/train_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

std::uint64_t to_unsigned(const std::string& v) {
  std::uint64_t u = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), u);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return u;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_unsigned(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"lr", [](TrainConfig& c, const std::string& v) { c.adam.lr = to_double(v); }},
      {"weight_decay", [](TrainConfig& c, const std::string& v) { c.adam.weight_decay = to_double(v); }},
      {"beta1", [](TrainConfig& c, const std::string& v) { c.adam.beta1 = to_double(v); }},
      {"beta2", [](TrainConfig& c, const std::string& v) { c.adam.beta2 = to_double(v); }},
      {"eps", [](TrainConfig& c, const std::string& v) { c.adam.eps = to_double(v); }},
      {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = to_unsigned(v); }},
      {"steps", [](TrainConfig& c, const std::string& v) { c.steps = to_unsigned(v); }},
      {"epochs", [](TrainConfig& c, const std::string& v) { c.epochs = to_unsigned(v); }},
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_unsigned(v); }},
      {"descriptor_dim", [](TrainConfig& c, const std::string& v) { c.backbone.descriptor_dim = to_unsigned(v); }},
      {"channel_widths", [](TrainConfig& c, const std::string& v) { c.backbone.channel_widths = to_list(v); }},
      {"crop", [](TrainConfig& c, const std::string& v) { c.augmentation.crop = static_cast<int>(to_unsigned(v)); }},
      {"perspective_jitter", [](TrainConfig& c, const std::string& v) { c.augmentation.perspective_jitter = to_double(v); }},
      {"photometric", [](TrainConfig& c, const std::string& v) { c.augmentation.photometric = to_bool(v); }},
      {"brightness", [](TrainConfig& c, const std::string& v) { c.augmentation.brightness = to_double(v); }},
      {"contrast", [](TrainConfig& c, const std::string& v) { c.augmentation.contrast = to_double(v); }},
      {"hue", [](TrainConfig& c, const std::string& v) { c.augmentation.hue = to_double(v); }},
      {"noise", [](TrainConfig& c, const std::string& v) { c.augmentation.noise = to_double(v); }},
      {"patch_size", [](TrainConfig& c, const std::string& v) { c.repeatability.patch_size = to_unsigned(v); }},
      {"peaky_weight", [](TrainConfig& c, const std::string& v) { c.repeatability.peaky_weight = to_double(v); }},
      {"sample_radius", [](TrainConfig& c, const std::string& v) { c.reliability.sample_radius = to_double(v); }},
      {"num_negatives", [](TrainConfig& c, const std::string& v) { c.reliability.num_negatives = to_unsigned(v); }},
      {"kappa", [](TrainConfig& c, const std::string& v) { c.reliability.kappa = to_double(v); }},
      {"num_bins", [](TrainConfig& c, const std::string& v) { c.reliability.num_bins = to_unsigned(v); }},
      {"anchor_stride", [](TrainConfig& c, const std::string& v) { c.reliability.anchor_stride = to_unsigned(v); }},
      {"lambda_reliability", [](TrainConfig& c, const std::string& v) { c.weights.reliability = to_double(v); }},
      {"lambda_repeatability", [](TrainConfig& c, const std::string& v) { c.weights.repeatability = to_double(v); }},
      {"lambda_covariance", [](TrainConfig& c, const std::string& v) { c.weights.covariance = to_double(v); }},
      {"no_style", [](TrainConfig& c, const std::string& v) { c.no_style = to_bool(v); }},
      {"no_structure", [](TrainConfig& c, const std::string& v) { c.no_structure = to_bool(v); }},
      {"no_dsc", [](TrainConfig& c, const std::string& v) { c.no_dsc = to_bool(v); }},
      {"checkpoint_every", [](TrainConfig& c, const std::string& v) { c.checkpoint_every = to_unsigned(v); }},
      {"threads", [](TrainConfig& c, const std::string& v) { c.threads = static_cast<unsigned>(to_unsigned(v)); }},
  };
  return table;
}

void apply_preset(TrainConfig& c, const std::string& name) {
  if (name == "desk") {
    c.backbone = BackboneConfig::desk();
    c.augmentation.crop = 64;
  } else if (name == "full") {
    c.backbone = BackboneConfig::full();
    c.augmentation.crop = 192;
    c.epochs = 25;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
  }
}

}  // namespace

BackboneConfig TrainConfig::network_config() const {
  BackboneConfig b = backbone;
  b.use_dsc_tail = !no_dsc;
  return b;
}

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 1 && epochs < 1) throw ConfigError("steps must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  network_config().validate();
  augmentation.validate();
  repeatability.validate();
  reliability.validate();
  weights.validate();
  if (static_cast<std::size_t>(augmentation.crop) < repeatability.patch_size) {
    throw ConfigError("crop must be at least patch_size");
  }
}

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
    }
    entries.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), number});
  }
  TrainConfig cfg;
  auto where = [&](const Entry& e) { return source + ":" + std::to_string(e.line) + ": "; };
  for (const auto& e : entries) {
    if (e.key != "preset") continue;
    try {
      apply_preset(cfg, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(where(e) + err.what());
    }
  }
  for (const auto& e : entries) {
    if (e.key == "preset") continue;
    const auto it = setters().find(e.key);
    if (it == setters().end()) throw ConfigError(where(e) + "unknown key '" + e.key + "'");
    try {
      it->second(cfg, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(where(e) + e.key + ": " + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.string());
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  auto num = [&out](const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << key << " = " << buf << "\n";
  };
  auto u = [&out](const char* key, std::uint64_t v) { out << key << " = " << v << "\n"; };
  auto b = [&out](const char* key, bool v) { out << key << " = " << (v ? "true" : "false") << "\n"; };
  num("lr", c.adam.lr);
  num("weight_decay", c.adam.weight_decay);
  num("beta1", c.adam.beta1);
  num("beta2", c.adam.beta2);
  num("eps", c.adam.eps);
  u("batch_size", c.batch_size);
  u("steps", c.steps);
  u("epochs", c.epochs);
  u("seed", c.seed);
  u("descriptor_dim", c.backbone.descriptor_dim);
  out << "channel_widths = ";
  for (std::size_t i = 0; i < c.backbone.channel_widths.size(); ++i) {
    out << (i ? "," : "") << c.backbone.channel_widths[i];
  }
  out << "\n";
  u("crop", static_cast<std::uint64_t>(c.augmentation.crop));
  num("perspective_jitter", c.augmentation.perspective_jitter);
  b("photometric", c.augmentation.photometric);
  num("brightness", c.augmentation.brightness);
  num("contrast", c.augmentation.contrast);
  num("hue", c.augmentation.hue);
  num("noise", c.augmentation.noise);
  u("patch_size", c.repeatability.patch_size);
  num("peaky_weight", c.repeatability.peaky_weight);
  num("sample_radius", c.reliability.sample_radius);
  u("num_negatives", c.reliability.num_negatives);
  num("kappa", c.reliability.kappa);
  u("num_bins", c.reliability.num_bins);
  u("anchor_stride", c.reliability.anchor_stride);
  num("lambda_reliability", c.weights.reliability);
  num("lambda_repeatability", c.weights.repeatability);
  num("lambda_covariance", c.weights.covariance);
  b("no_style", c.no_style);
  b("no_structure", c.no_structure);
  b("no_dsc", c.no_dsc);
  u("checkpoint_every", c.checkpoint_every);
  u("threads", c.threads);
  return out.str();
}

}  // namespace sfeat
