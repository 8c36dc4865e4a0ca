#include "mixalign/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <type_traits>
#include <sstream>
#include <vector>

namespace mixalign {

namespace {

// A key bound to a field: writes it as text and parses text back into it.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> write;
  std::function<void(const std::string&)> read;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("not a boolean (true/false): '" + s + "'");
}

class Registry {
 public:
  void add(const std::string& section, const std::string& key, double& v) {
    fields_.push_back({section, key, [&v] { return fmt_double(v); }, [&v](const std::string& s) { v = parse_double(s); }});
  }
  void add(const std::string& section, const std::string& key, int& v) {
    fields_.push_back({section, key, [&v] { return std::to_string(v); }, [&v](const std::string& s) { v = parse_int<int>(s); }});
  }
  template <typename U>
    requires std::is_unsigned_v<U>
  void add(const std::string& section, const std::string& key, U& v) {
    fields_.push_back({section, key, [&v] { return std::to_string(v); }, [&v](const std::string& s) { v = parse_int<U>(s); }});
  }
  void add(const std::string& section, const std::string& key, bool& v) {
    fields_.push_back({section, key, [&v] { return std::string(v ? "true" : "false"); },
                       [&v](const std::string& s) { v = parse_bool(s); }});
  }
  void add(const std::string& section, const std::string& key, std::string& v) {
    fields_.push_back({section, key, [&v] { return v; }, [&v](const std::string& s) { v = s; }});
  }
  void add(const std::string& section, const std::string& key, Range& r) {
    add(section, key + "_min", r.lo);
    add(section, key + "_max", r.hi);
  }

  const std::vector<Field>& fields() const { return fields_; }

 private:
  std::vector<Field> fields_;
};

Registry bind(TrainConfig& c) {
  Registry r;
  r.add("run", "seed", c.seed);
  r.add("run", "epochs", c.epochs);
  r.add("run", "batch_size", c.batch_size);
  r.add("run", "early_stop_patience", c.early_stop_patience);
  r.add("run", "threshold", c.threshold);
  r.add("run", "clip_norm", c.clip_norm);
  r.add("run", "out_dir", c.out_dir);

  r.add("data", "seed", c.data.seed);
  r.add("data", "train_domains", c.data.train_domains);
  r.add("data", "heldout_domains", c.data.heldout_domains);
  r.add("data", "samples_per_domain", c.data.samples_per_domain);
  r.add("data", "imbalance_ratio", c.data.imbalance_ratio);
  for (auto [prefix, s] : {std::pair<const char*, StyleRange*>{"train", &c.data.train_style}, {"heldout", &c.data.heldout_style}}) {
    const std::string p = prefix;
    r.add("data", p + "_offset_max", s->offset_max);
    r.add("data", p + "_gain_min", s->gain_min);
    r.add("data", p + "_gain_max", s->gain_max);
    r.add("data", p + "_blur_max", s->blur_max);
    r.add("data", p + "_noise_max", s->noise_max);
  }

  r.add("model", "width1", c.arch.widths[0]);
  r.add("model", "width2", c.arch.widths[1]);
  r.add("model", "width3", c.arch.widths[2]);

  r.add("optim", "lr", c.optim.lr);
  r.add("optim", "weight_decay", c.optim.weight_decay);
  r.add("optim", "beta1", c.optim.beta1);
  r.add("optim", "beta2", c.optim.beta2);
  r.add("optim", "eps", c.optim.eps);

  r.add("sched", "patience", c.sched.patience);
  r.add("sched", "factor", c.sched.factor);
  r.add("sched", "min_delta", c.sched.min_delta);
  r.add("sched", "lr_min", c.sched.lr_min);

  r.add("mixstyle", "enabled", c.mixstyle_enabled);
  r.add("mixstyle", "alpha", c.mixstyle.alpha);
  r.add("mixstyle", "epsilon", c.mixstyle.epsilon);
  r.add("mixstyle", "probability", c.mixstyle.apply_probability);

  r.add("cbam", "reduction", c.arch.cbam_reduction);
  r.add("cbam", "kernel_size", c.arch.cbam_kernel);

  r.add("kd", "enabled", c.kd_enabled);
  r.add("kd", "temperature", c.kd.temperature);
  r.add("kd", "weight", c.kd.base_weight);
  r.add("kd", "warmup_epochs", c.kd.warmup_epochs);
  r.add("kd", "every_batch", c.kd_every_batch);
  r.add("kd", "interval", c.kd_interval);

  r.add("ema", "momentum", c.ema_momentum);
  r.add("ema", "ramp", c.ema_ramp);

  r.add("align", "enabled", c.align_enabled);
  r.add("align", "scale", c.align_scale);
  r.add("align", "gamma", c.dann_gamma);

  AugmentConfig& a = c.augment;
  r.add("augment", "enabled", c.augment_enabled);
  r.add("augment", "crop_p", a.crop_p);
  r.add("augment", "crop_scale", a.crop_scale);
  r.add("augment", "crop_ratio", a.crop_ratio);
  r.add("augment", "hflip_p", a.hflip_p);
  r.add("augment", "vflip_p", a.vflip_p);
  r.add("augment", "rotate_p", a.rotate_p);
  r.add("augment", "rotate_max_deg", a.rotate_max_deg);
  r.add("augment", "perspective_p", a.perspective_p);
  r.add("augment", "perspective_max", a.perspective_max);
  r.add("augment", "jitter_p", a.jitter_p);
  r.add("augment", "brightness", a.brightness);
  r.add("augment", "contrast", a.contrast);
  r.add("augment", "saturation", a.saturation);
  r.add("augment", "hue", a.hue);
  r.add("augment", "blur_p", a.blur_p);
  r.add("augment", "blur_sigma", a.blur_sigma);
  r.add("augment", "autocontrast_p", a.autocontrast_p);
  r.add("augment", "sharpness_p", a.sharpness_p);
  r.add("augment", "sharpness", a.sharpness);
  r.add("augment", "gamma_p", a.gamma_p);
  r.add("augment", "gamma", a.gamma);
  r.add("augment", "posterize_p", a.posterize_p);
  r.add("augment", "posterize_bits", a.posterize_bits);
  r.add("augment", "solarize_p", a.solarize_p);
  r.add("augment", "solarize_threshold", a.solarize_threshold);
  r.add("augment", "erase_p", a.erase_p);
  r.add("augment", "erase_area", a.erase_area);
  r.add("augment", "erase_aspect", a.erase_aspect);
  return r;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("run.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("run.batch_size must be >= 2");
  if (early_stop_patience < 1) throw ConfigError("run.early_stop_patience must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("run.threshold must lie in (0,1)");
  if (!(clip_norm > 0.0)) throw ConfigError("run.clip_norm must be > 0");
  if (out_dir.find_first_of("#\n") != std::string::npos) throw ConfigError("run.out_dir may not contain '#' or newlines");
  if (data.train_domains < 2 || data.heldout_domains < 1) throw ConfigError("data: need >= 2 train and >= 1 held-out domains");
  if (data.samples_per_domain < 4) throw ConfigError("data.samples_per_domain must be >= 4");
  if (!(data.imbalance_ratio > 0.0)) throw ConfigError("data.imbalance_ratio must be > 0");
  for (std::size_t w : arch.widths) {
    if (w == 0) throw ConfigError("model widths must be > 0");
  }
  if (!(optim.lr > 0.0) || optim.weight_decay < 0.0 || !(optim.eps > 0.0) || !(optim.beta1 >= 0.0 && optim.beta1 < 1.0) ||
      !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("optim: invalid AdamW settings");
  }
  if (sched.patience < 1 || !(sched.factor > 0.0 && sched.factor < 1.0) || sched.lr_min < 0.0) {
    throw ConfigError("sched: invalid plateau settings");
  }
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ConfigError("ema.momentum must lie in [0,1)");
  if (kd_interval < 1) throw ConfigError("kd.interval must be >= 1");
  if (align_scale < 0.0 || dann_gamma < 0.0) throw ConfigError("align: scale and gamma must be >= 0");
  try {
    mixstyle.validate();
    kd.validate();
    augment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string to_text(const TrainConfig& config) {
  TrainConfig copy = config;
  const Registry reg = bind(copy);
  std::ostringstream os;
  std::string section;
  for (const auto& f : reg.fields()) {
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.write() << "\n";
  }
  return os.str();
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  const Registry reg = bind(config);
  std::map<std::string, const Field*> index;
  std::set<std::string> sections;
  for (const auto& f : reg.fields()) {
    index[f.section + "." + f.key] = &f;
    sections.insert(f.section);
  }
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string name = section + "." + trim(line.substr(0, eq));
    const auto it = index.find(name);
    if (it == index.end()) throw ConfigError(where + "unknown key " + name);
    if (!seen.insert(name).second) throw ConfigError(where + "duplicate key " + name);
    try {
      it->second->read(trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + name + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const TrainConfig& config) {
  TrainConfig copy = config;
  copy.out_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(copy)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* component_name(Component c) {
  switch (c) {
    case Component::None: return "none";
    case Component::MixStyle: return "mixstyle";
    case Component::Align: return "align";
    case Component::Kd: return "kd";
    case Component::All: return "all";
  }
  return "?";
}

Component parse_component(const std::string& name) {
  for (Component c : {Component::None, Component::MixStyle, Component::Align, Component::Kd, Component::All}) {
    if (name == component_name(c)) return c;
  }
  throw ConfigError("unknown component '" + name + "' (none|mixstyle|align|kd|all)");
}

TrainConfig with_components(TrainConfig base, Component c) {
  base.mixstyle_enabled = c == Component::MixStyle || c == Component::All;
  base.align_enabled = c == Component::Align || c == Component::All;
  base.kd_enabled = c == Component::Kd || c == Component::All;
  return base;
}

}  // namespace mixalign
