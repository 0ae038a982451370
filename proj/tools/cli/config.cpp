#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace part::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ConfigError(key, "invalid value '" + text + "' for key '" + key + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  const double v = parse_number<double>(key, text);
  if (!std::isfinite(v)) throw ConfigError(key, "value for key '" + key + "' must be finite");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key, "invalid value '" + text + "' for key '" + key + "' (expected true or false)");
}

template <typename F>
auto parse_enum(const std::string& key, const std::string& text, F parse) {
  try {
    return parse(text);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key, "invalid value '" + text + "' for key '" + key + "'");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

const std::map<std::string, Setter>& registry() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_key = [&t](const std::string& key, auto field) {
      t[key] = [key, field](RunConfig& c, const std::string& v) { field(c) = parse_number<std::size_t>(key, v); };
    };
    auto real_key = [&t](const std::string& key, auto field) {
      t[key] = [key, field](RunConfig& c, const std::string& v) { field(c) = parse_real(key, v); };
    };
    auto bool_key = [&t](const std::string& key, auto field) {
      t[key] = [key, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); };
    };

    t["seed"] = [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); };

    real_key("lambda", [](RunConfig& c) -> double& { return c.model.lambda; });
    size_key("parts.N", [](RunConfig& c) -> std::size_t& { return c.parts.N; });
    size_key("parts.R", [](RunConfig& c) -> std::size_t& { return c.parts.R; });
    real_key("parts.th", [](RunConfig& c) -> double& { return c.parts.th; });
    real_key("parts.mu", [](RunConfig& c) -> double& { return c.parts.mu; });
    real_key("parts.sigma", [](RunConfig& c) -> double& { return c.parts.sigma; });
    real_key("parts.eta_min", [](RunConfig& c) -> double& { return c.parts.eta_min; });
    real_key("parts.eta_max", [](RunConfig& c) -> double& { return c.parts.eta_max; });
    real_key("parts.eps", [](RunConfig& c) -> double& { return c.parts.eps; });
    t["parts.maxiter"] = [](RunConfig& c, const std::string& v) {
      c.parts.maxiter = parse_number<int>("parts.maxiter", v);
    };

    size_key("heads_global", [](RunConfig& c) -> std::size_t& { return c.model.heads_global; });
    size_key("heads_part", [](RunConfig& c) -> std::size_t& { return c.model.heads_part; });
    size_key("stack_global", [](RunConfig& c) -> std::size_t& { return c.model.stack_global; });
    size_key("stack_part", [](RunConfig& c) -> std::size_t& { return c.model.stack_part; });
    size_key("channels", [](RunConfig& c) -> std::size_t& { return c.model.channels; });
    size_key("head_dim", [](RunConfig& c) -> std::size_t& { return c.model.head_dim; });
    t["pos_encoding"] = [](RunConfig& c, const std::string& v) {
      c.model.pos = parse_enum("pos_encoding", v, parse_pos_mode);
    };
    bool_key("mask_logits", [](RunConfig& c) -> bool& { return c.model.mask_logits; });
    bool_key("learnable_encoding", [](RunConfig& c) -> bool& { return c.model.learnable_encoding; });
    bool_key("relation", [](RunConfig& c) -> bool& { return c.model.relation; });
    bool_key("per_part_classifier", [](RunConfig& c) -> bool& { return c.model.per_part_classifier; });
    real_key("init_gain", [](RunConfig& c) -> double& { return c.model.init_gain; });
    t["widths"] = [](RunConfig& c, const std::string& v) {
      std::vector<std::size_t> widths;
      for (const auto& item : split_list(v)) widths.push_back(parse_number<std::size_t>("widths", item));
      if (widths.empty()) throw ConfigError("widths", "key 'widths' needs at least one stage");
      c.model.widths = std::move(widths);
    };

    real_key("lr", [](RunConfig& c) -> double& { return c.train.lr; });
    t["lr_period"] = [](RunConfig& c, const std::string& v) {
      c.train.lr_period = parse_number<int>("lr_period", v);
    };
    real_key("lr_factor", [](RunConfig& c) -> double& { return c.train.lr_factor; });
    size_key("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    size_key("batch", [](RunConfig& c) -> std::size_t& { return c.train.batch; });
    size_key("per_class", [](RunConfig& c) -> std::size_t& { return c.train.per_class; });
    size_key("augment.crop_pad", [](RunConfig& c) -> std::size_t& { return c.train.crop_pad; });
    bool_key("augment.hflip", [](RunConfig& c) -> bool& { return c.train.hflip; });
    size_key("max_steps", [](RunConfig& c) -> std::size_t& { return c.train.max_steps; });
    t["optimizer"] = [](RunConfig& c, const std::string& v) {
      c.train.optimizer = parse_enum("optimizer", v, parse_optimizer);
    };
    real_key("momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
    real_key("weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });

    size_key("data.classes", [](RunConfig& c) -> std::size_t& { return c.data.classes; });
    size_key("data.per_class", [](RunConfig& c) -> std::size_t& { return c.data.per_class; });
    size_key("data.size", [](RunConfig& c) -> std::size_t& { return c.data.size; });
    size_key("data.motifs", [](RunConfig& c) -> std::size_t& { return c.data.motifs; });
    size_key("data.motif_size", [](RunConfig& c) -> std::size_t& { return c.data.motif_size; });
    size_key("data.spacing_min", [](RunConfig& c) -> std::size_t& { return c.data.spacing_min; });
    size_key("data.spacing_max", [](RunConfig& c) -> std::size_t& { return c.data.spacing_max; });
    size_key("data.vertical", [](RunConfig& c) -> std::size_t& { return c.data.vertical; });
    size_key("data.jitter", [](RunConfig& c) -> std::size_t& { return c.data.jitter; });
    real_key("data.noise", [](RunConfig& c) -> double& { return c.data.noise; });
    real_key("data.train_fraction", [](RunConfig& c) -> double& { return c.data.train_fraction; });
    t["data.seed"] = [](RunConfig& c, const std::string& v) {
      c.data.seed = parse_number<std::uint64_t>("data.seed", v);
    };
    t["data.dir"] = [](RunConfig& c, const std::string& v) { c.data_dir = v; };
    t["checkpoint"] = [](RunConfig& c, const std::string& v) { c.checkpoint = v; };

    size_key("sample", [](RunConfig& c) -> std::size_t& { return c.sample; });
    bool_key("discover.masks", [](RunConfig& c) -> bool& { return c.write_masks; });
    t["cam.class"] = [](RunConfig& c, const std::string& v) {
      c.cam_class = parse_number<int>("cam.class", v);
      if (c.cam_class < -1) throw ConfigError("cam.class", "key 'cam.class' must be -1 or a class index");
    };
    t["cam.source"] = [](RunConfig& c, const std::string& v) {
      c.cam_source = parse_enum("cam.source", v, parse_cam_source);
    };

    size_key("equiv.size", [](RunConfig& c) -> std::size_t& { return c.equiv_size; });
    size_key("equiv.channels", [](RunConfig& c) -> std::size_t& { return c.equiv_channels; });
    size_key("equiv.kernel", [](RunConfig& c) -> std::size_t& { return c.equiv_kernel; });
    real_key("equiv.c", [](RunConfig& c) -> double& { return c.equiv_c; });
    t["equiv.alphas"] = [](RunConfig& c, const std::string& v) {
      std::vector<double> alphas;
      for (const auto& item : split_list(v)) {
        const double a = parse_real("equiv.alphas", item);
        if (!(a > 0.0)) throw ConfigError("equiv.alphas", "key 'equiv.alphas' needs positive values");
        alphas.push_back(a);
      }
      if (alphas.empty()) throw ConfigError("equiv.alphas", "key 'equiv.alphas' is empty");
      c.equiv_alphas = std::move(alphas);
    };
    return t;
  }();
  return table;
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = registry();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown configuration key '" + key + "'");
  it->second(cfg, value);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(assignment, "override '" + assignment + "' is not of the form key=value");
  }
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  cfg.config_path = file;
  cfg.overrides = overrides;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), file.string());
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : registry()) keys.push_back(k);
  return keys;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

}  // namespace part::cli
