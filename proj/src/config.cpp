#include "mdil/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "mdil/error.hpp"

namespace mdil {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& key, const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list element");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

std::vector<std::int64_t> to_int_list(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> out;
  for (const auto& s : split_list(key, v)) out.push_back(to_int(key, s));
  return out;
}

const std::set<std::string> kDomainFields{
    "seed", "classes", "hue", "noise", "texture_freq", "texture_amp", "jitter",
    "size", "train", "val", "shapes_min", "shapes_max", "min_visible", "radius_min", "radius_max",
};

struct DomainEntries {
  std::map<std::string, std::pair<std::string, std::string>> fields;  // field -> (key, value)
};

}  // namespace

bool is_method_name(const std::string& name) { return name == "ours" || parse_baseline(name).has_value(); }

const DomainGenSpec& ExperimentConfig::spec(const std::string& name) const {
  auto it = specs.find(name);
  if (it == specs.end()) throw ConfigError("domain '" + name + "' is not configured");
  return it->second;
}

std::vector<std::string> ExperimentConfig::echo() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries) out.push_back(k + " = " + v);
  return out;
}

MethodSetup ExperimentConfig::setup() const {
  if (method == "ours") return ours_setup(model, train);
  const auto kind = parse_baseline(method);
  if (!kind) throw ConfigError("method: unknown method '" + method + "'");
  return baseline_setup(*kind, model, train);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, DomainEntries> domain_entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (value.empty()) throw ConfigError(key + ": empty value");
    if (!seen.insert(key).second) throw ConfigError(key + ": given twice");
    cfg.entries.emplace_back(key, value);

    if (key == "out") {
      cfg.out = value;
    } else if (key == "data") {
      cfg.data = value;
    } else if (key == "domains") {
      cfg.domains = split_list(key, value);
    } else if (key == "sequence") {
      cfg.sequence = split_list(key, value);
    } else if (key == "method") {
      if (!is_method_name(value)) throw ConfigError("method: unknown method '" + value + "'");
      cfg.method = value;
    } else if (key == "reference") {
      if (value != "single_task" && value != "none") throw ConfigError("reference: expected single_task or none");
      cfg.reference = value == "single_task";
    } else if (key == "train.lr") {
      cfg.train.lr = to_double(key, value);
    } else if (key == "train.dlr") {
      if (value == "freeze-shared") {
        cfg.train.freeze_shared = true;
      } else {
        cfg.train.dlr = to_double(key, value);
      }
    } else if (key == "train.lambda_kld") {
      cfg.train.lambda_kld = to_double(key, value);
    } else if (key == "train.kld") {
      cfg.train.use_kld = to_switch(key, value);
    } else if (key == "train.distill") {
      if (value != "all" && value != "last") throw ConfigError("train.distill: expected all or last");
      cfg.train.distill = value == "all" ? DistillMode::all : DistillMode::last;
    } else if (key == "train.init") {
      if (value != "init_wt" && value != "random") throw ConfigError("train.init: expected init_wt or random");
      cfg.train.init = value == "init_wt" ? InitMode::init_wt : InitMode::random;
    } else if (key == "train.epochs") {
      cfg.train.epochs = static_cast<int>(to_int(key, value));
    } else if (key == "train.first_epochs") {
      cfg.train.first_epochs = static_cast<int>(to_int(key, value));
    } else if (key == "train.batch_size") {
      cfg.train.batch_size = static_cast<int>(to_int(key, value));
    } else if (key == "train.first_batch_size") {
      cfg.train.first_batch_size = static_cast<int>(to_int(key, value));
    } else if (key == "train.momentum") {
      cfg.train.momentum = to_double(key, value);
    } else if (key == "train.schedule") {
      if (value != "constant" && value != "poly") throw ConfigError("train.schedule: expected constant or poly");
      cfg.train.schedule = value == "poly" ? LrSchedule::poly : LrSchedule::constant;
    } else if (key == "train.seed") {
      cfg.train.seed = to_u64(key, value);
    } else if (key == "model.widths") {
      cfg.model.encoder.widths = to_int_list(key, value);
    } else if (key == "model.units") {
      cfg.model.encoder.units_per_stage = static_cast<int>(to_int(key, value));
    } else if (key == "model.decoder_widths") {
      cfg.model.decoder_widths = to_int_list(key, value);
    } else if (key == "model.tconv_kernel") {
      cfg.model.tconv_kernel = static_cast<int>(to_int(key, value));
    } else if (key == "model.adapter_std") {
      cfg.model.adapter_init_std = to_double(key, value);
    } else if (key == "model.bn_momentum") {
      cfg.model.bn.momentum = to_double(key, value);
    } else if (key == "model.bn_eps") {
      cfg.model.bn.eps = to_double(key, value);
    } else if (key.rfind("domain.", 0) == 0) {
      const auto dot = key.find('.', 7);
      if (dot == std::string::npos) throw ConfigError("unknown key '" + key + "'");
      const std::string name = key.substr(7, dot - 7);
      const std::string field = key.substr(dot + 1);
      if (!is_plain_token(name) || name.find('.') != std::string::npos) {
        throw ConfigError(key + ": invalid domain name '" + name + "'");
      }
      if (!kDomainFields.count(field)) throw ConfigError("unknown key '" + key + "'");
      domain_entries[name].fields[field] = {key, value};
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (cfg.sequence.empty() && cfg.domains.empty()) throw ConfigError("sequence: missing key");
  if (cfg.domains.empty()) cfg.domains = cfg.sequence;
  for (const auto& s : cfg.sequence) {
    if (std::find(cfg.domains.begin(), cfg.domains.end(), s) == cfg.domains.end()) cfg.domains.push_back(s);
  }
  for (const auto& [name, _] : domain_entries) {
    if (std::find(cfg.domains.begin(), cfg.domains.end(), name) == cfg.domains.end()) {
      throw ConfigError("domain." + name + ": domain is not listed in domains or sequence");
    }
  }

  std::vector<DomainGenSpec> all;
  for (const auto& name : cfg.domains) {
    if (!is_plain_token(name)) throw ConfigError("domains: invalid domain name '" + name + "'");
    auto& f = domain_entries[name].fields;
    auto need = [&](const std::string& field) -> const std::pair<std::string, std::string>& {
      auto it = f.find(field);
      if (it == f.end()) throw ConfigError("domain." + name + "." + field + ": missing key");
      return it->second;
    };
    DomainGenSpec s;
    s.name = name;
    s.seed = to_u64(need("seed").first, need("seed").second);
    try {
      s.classes = LabelSpace(split_list(need("classes").first, need("classes").second));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(need("classes").first + ": " + e.what());
    }
    double hue = 0;
    for (const auto& [field, kv] : f) {
      const auto& [k, v] = kv;
      if (field == "hue") hue = to_double(k, v);
      if (field == "noise") s.noise_sigma = to_double(k, v);
      if (field == "texture_freq") s.texture_freq = to_double(k, v);
      if (field == "texture_amp") s.texture_amp = to_double(k, v);
      if (field == "jitter") s.color_jitter = to_double(k, v);
      if (field == "size") s.height = s.width = static_cast<int>(to_int(k, v));
      if (field == "train") s.train_count = static_cast<int>(to_int(k, v));
      if (field == "val") s.val_count = static_cast<int>(to_int(k, v));
      if (field == "shapes_min") s.shapes_min = static_cast<int>(to_int(k, v));
      if (field == "shapes_max") s.shapes_max = static_cast<int>(to_int(k, v));
      if (field == "min_visible") s.min_visible = to_double(k, v);
      if (field == "radius_min") s.radius_min = to_double(k, v);
      if (field == "radius_max") s.radius_max = to_double(k, v);
    }
    try {
      s.palette = default_palette(s.classes, hue);
      s.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("domain.") + name + ": " + e.what());
    }
    all.push_back(s);
    cfg.specs[name] = std::move(s);
  }
  try {
    validate_domain_set(all);
    cfg.model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mdil
