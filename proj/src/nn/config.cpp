#include "dropblock/nn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "dropblock/error.hpp"

namespace dropblock::nn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct LineError {
  int line;
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
  }
};

long to_long(const std::string& v, const LineError& at, const std::string& key) {
  long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) at.fail("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& v, const LineError& at, const std::string& key) {
  return static_cast<int>(to_long(v, at, key));
}

double to_double(const std::string& v, const LineError& at, const std::string& key) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    at.fail("'" + key + "' expects a number, got '" + v + "'");
  }
  if (used != v.size()) at.fail("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const LineError& at, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  at.fail("'" + key + "' expects true or false, got '" + v + "'");
}

/// Parameters of a layer line, consumed by name; leftovers are errors.
class LayerArgs {
 public:
  LayerArgs(const std::vector<std::string>& tokens, const LineError& at) : at_(at) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos) at.fail("layer argument '" + tokens[i] + "' needs name=value");
      args_[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
  }
  bool has(const std::string& k) const { return args_.count(k) != 0; }
  std::string take(const std::string& k) {
    auto it = args_.find(k);
    if (it == args_.end()) at_.fail("layer needs '" + k + "'");
    std::string v = it->second;
    args_.erase(it);
    return v;
  }
  int take_int(const std::string& k, std::optional<int> def = std::nullopt) {
    if (!has(k) && def) return *def;
    return to_int(take(k), at_, k);
  }
  double take_double(const std::string& k, double def) {
    return has(k) ? to_double(take(k), at_, k) : def;
  }
  bool take_bool(const std::string& k, bool def) {
    return has(k) ? to_bool(take(k), at_, k) : def;
  }
  void finish() const {
    if (!args_.empty()) at_.fail("unknown layer argument '" + args_.begin()->first + "'");
  }

 private:
  LineError at_;
  std::map<std::string, std::string> args_;
};

RegularizerSpec parse_regularizer(RegularizerKind kind, LayerArgs& a, const std::string& prefix) {
  RegularizerSpec r;
  r.kind = kind;
  r.id = a.take(prefix + "id");
  if (kind == RegularizerKind::DropBlock || kind == RegularizerKind::Cutout) {
    r.block_size = a.take_int(prefix + "block_size");
  }
  if (kind == RegularizerKind::DropBlock) {
    r.per_channel = a.take_bool(prefix + "per_channel", true);
    r.gamma_multiplier = a.take_double(prefix + "gamma_multiplier", 1.0);
  }
  return r;
}

LayerSpec parse_layer(const std::string& value, const LineError& at) {
  std::istringstream ss(value);
  std::vector<std::string> tokens;
  for (std::string t; ss >> t;) tokens.push_back(t);
  if (tokens.empty()) at.fail("empty layer");
  LayerArgs a(tokens, at);
  const std::string& kind = tokens[0];
  LayerSpec out;
  if (kind == "conv") {
    out = Conv2dSpec{a.take_int("out"), a.take_int("kernel"), a.take_int("stride", 1),
                     a.take_int("pad", 0)};
  } else if (kind == "relu") {
    out = ReluSpec{};
  } else if (kind == "maxpool") {
    const int size = a.take_int("size");
    out = MaxPoolSpec{size, a.take_int("stride", size)};
  } else if (kind == "dense") {
    out = DenseSpec{a.take_int("out")};
  } else if (kind == "residual_begin") {
    out = ResidualBeginSpec{};
  } else if (kind == "residual_end") {
    ResidualEndSpec e;
    if (a.has("skip")) {
      RegularizerKind rk{};
      try {
        rk = regularizer_kind_from(a.take("skip"));
      } catch (const ConfigError& err) {
        at.fail(err.what());
      }
      e.skip_regularizer = parse_regularizer(rk, a, "skip_");
    }
    out = e;
  } else {
    RegularizerKind rk{};
    try {
      rk = regularizer_kind_from(kind);
    } catch (const ConfigError&) {
      at.fail("unknown layer kind '" + kind + "'");
    }
    out = parse_regularizer(rk, a, "");
  }
  a.finish();
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_regularizer(const RegularizerSpec& r, const std::string& prefix) {
  std::string s = prefix + "id=" + r.id;
  if (r.kind == RegularizerKind::DropBlock || r.kind == RegularizerKind::Cutout) {
    s += " " + prefix + "block_size=" + std::to_string(r.block_size);
  }
  if (r.kind == RegularizerKind::DropBlock) {
    s += " " + prefix + "per_channel=" + (r.per_channel ? "true" : "false");
    s += " " + prefix + "gamma_multiplier=" + fmt(r.gamma_multiplier);
  }
  return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const LineError at{lineno};
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) at.fail("'" + key + "' has no value");

    auto& net = cfg.network;
    auto& tr = cfg.train;
    auto& data = cfg.data;
    if (key == "input") {
      int c = 0, h = 0, w = 0;
      char x1 = 0, x2 = 0;
      std::istringstream dims(value);
      if (!(dims >> c >> x1 >> h >> x2 >> w) || x1 != 'x' || x2 != 'x' || !dims.eof()) {
        at.fail("'input' expects CxHxW, got '" + value + "'");
      }
      net.input_channels = c;
      net.input_height = h;
      net.input_width = w;
    } else if (key == "layer") {
      net.layers.push_back(parse_layer(value, at));
    } else if (key == "epochs") {
      tr.epochs = to_int(value, at, key);
    } else if (key == "batch_size") {
      tr.batch_size = to_int(value, at, key);
    } else if (key == "learning_rate") {
      tr.learning_rate = to_double(value, at, key);
    } else if (key == "momentum") {
      tr.momentum = to_double(value, at, key);
    } else if (key == "weight_decay") {
      tr.weight_decay = to_double(value, at, key);
    } else if (key == "seed") {
      tr.seed = static_cast<std::uint64_t>(to_long(value, at, key));
    } else if (key == "keep_prob") {
      tr.keep_prob_target = to_double(value, at, key);
    } else if (key == "schedule") {
      if (value == "linear") {
        tr.policy = KeepProbPolicy::Scheduled;
      } else if (value == "fixed") {
        tr.policy = KeepProbPolicy::Fixed;
      } else {
        at.fail("'schedule' must be linear or fixed");
      }
    } else if (key == "schedule_start") {
      tr.schedule_start = to_long(value, at, key);
    } else if (key == "schedule_end") {
      tr.schedule_end = to_long(value, at, key);
    } else if (key == "data") {
      if (value != "synthetic" && value != "idx") at.fail("'data' must be synthetic or idx");
      data.source = value;
    } else if (key == "train_samples") {
      data.train_samples = to_int(value, at, key);
    } else if (key == "val_samples") {
      data.val_samples = to_int(value, at, key);
    } else if (key == "classes") {
      data.classes = to_int(value, at, key);
    } else if (key == "data_seed") {
      data.data_seed = static_cast<std::uint64_t>(to_long(value, at, key));
    } else if (key == "train_images") {
      data.train_images = value;
    } else if (key == "train_labels") {
      data.train_labels = value;
    } else if (key == "val_images") {
      data.val_images = value;
    } else if (key == "val_labels") {
      data.val_labels = value;
    } else {
      at.fail("unknown key '" + key + "'");
    }
  }
  if (cfg.network.layers.empty()) throw ConfigError("config declares no layers");
  try {
    cfg.train.validate();
    (void)cfg.network.output_shape();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (cfg.data.source == "idx" &&
      (cfg.data.train_images.empty() || cfg.data.train_labels.empty() ||
       cfg.data.val_images.empty() || cfg.data.val_labels.empty())) {
    throw ConfigError("idx data needs train_images, train_labels, val_images, val_labels");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& cfg) {
  const auto& net = cfg.network;
  const auto& tr = cfg.train;
  const auto& d = cfg.data;
  std::string s;
  s += "input = " + std::to_string(net.input_channels) + "x" +
       std::to_string(net.input_height) + "x" + std::to_string(net.input_width) + "\n";
  for (const auto& l : net.layers) {
    s += "layer = ";
    if (const auto* c = std::get_if<Conv2dSpec>(&l)) {
      s += "conv out=" + std::to_string(c->out_channels) + " kernel=" + std::to_string(c->kernel) +
           " stride=" + std::to_string(c->stride) + " pad=" + std::to_string(c->pad);
    } else if (std::holds_alternative<ReluSpec>(l)) {
      s += "relu";
    } else if (const auto* m = std::get_if<MaxPoolSpec>(&l)) {
      s += "maxpool size=" + std::to_string(m->size) + " stride=" + std::to_string(m->stride);
    } else if (const auto* dn = std::get_if<DenseSpec>(&l)) {
      s += "dense out=" + std::to_string(dn->out_dim);
    } else if (const auto* r = std::get_if<RegularizerSpec>(&l)) {
      s += std::string(to_string(r->kind)) + " " + format_regularizer(*r, "");
    } else if (std::holds_alternative<ResidualBeginSpec>(l)) {
      s += "residual_begin";
    } else if (const auto* e = std::get_if<ResidualEndSpec>(&l)) {
      s += "residual_end";
      if (e->skip_regularizer) {
        s += " skip=" + std::string(to_string(e->skip_regularizer->kind)) + " " +
             format_regularizer(*e->skip_regularizer, "skip_");
      }
    }
    s += "\n";
  }
  s += "epochs = " + std::to_string(tr.epochs) + "\n";
  s += "batch_size = " + std::to_string(tr.batch_size) + "\n";
  s += "learning_rate = " + fmt(tr.learning_rate) + "\n";
  s += "momentum = " + fmt(tr.momentum) + "\n";
  s += "weight_decay = " + fmt(tr.weight_decay) + "\n";
  s += "seed = " + std::to_string(tr.seed) + "\n";
  s += "keep_prob = " + fmt(tr.keep_prob_target) + "\n";
  s += std::string("schedule = ") +
       (tr.policy == KeepProbPolicy::Scheduled ? "linear" : "fixed") + "\n";
  s += "schedule_start = " + std::to_string(tr.schedule_start) + "\n";
  if (tr.schedule_end) s += "schedule_end = " + std::to_string(*tr.schedule_end) + "\n";
  s += "data = " + d.source + "\n";
  if (d.source == "synthetic") {
    s += "train_samples = " + std::to_string(d.train_samples) + "\n";
    s += "val_samples = " + std::to_string(d.val_samples) + "\n";
    s += "classes = " + std::to_string(d.classes) + "\n";
    s += "data_seed = " + std::to_string(d.data_seed) + "\n";
  } else {
    s += "train_images = " + d.train_images.string() + "\n";
    s += "train_labels = " + d.train_labels.string() + "\n";
    s += "val_images = " + d.val_images.string() + "\n";
    s += "val_labels = " + d.val_labels.string() + "\n";
  }
  return s;
}

std::pair<Dataset, Dataset> load_datasets(const DataConfig& cfg) {
  if (cfg.source == "idx") {
    return {load_idx(cfg.train_images, cfg.train_labels),
            load_idx(cfg.val_images, cfg.val_labels)};
  }
  return {gen_synthetic(cfg.data_seed, cfg.train_samples, cfg.classes),
          gen_synthetic(cfg.data_seed + 1, cfg.val_samples, cfg.classes)};
}

}  // namespace dropblock::nn
