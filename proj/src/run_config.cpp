#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace fussl {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"seed", ""},
      {"out_dir", "out"},
      {"dataset", ""},
      {"gen.n_super", "5"},
      {"gen.classes_per_super", "2"},
      {"gen.dim", "32"},
      {"gen.n_per_class", "200"},
      {"gen.separation", "8"},
      {"gen.class_separation", "-1"},
      {"aug.noise_sigma", "0.3"},
      {"aug.mask_fraction", "0.1"},
      {"aug.scale_lo", "0.9"},
      {"aug.scale_hi", "1.1"},
      {"aug.crop_fraction_min", "1"},
      {"model.backbone_dims", "64,64,64"},
      {"model.projector_dims", "128,128,128"},
      {"model.predictor_hidden", "64"},
      {"model.batchnorm", "true"},
      {"model.bn_momentum", "0.9"},
      {"loss.kind", "barlow-twins"},
      {"loss.temperature", "0.5"},
      {"loss.margin", "1"},
      {"loss.lambda", "0.005"},
      {"loss.whiten_eps", "1e-06"},
      {"loss.triplet_mode", "standard"},
      {"protocol.m", "3"},
      {"protocol.phase1_epochs", "200"},
      {"protocol.phase2_epochs", "100"},
      {"protocol.phase2_full_epochs", "25"},
      {"protocol.batch_size", "128"},
      {"protocol.lr_phase1_warm", "0.003"},
      {"protocol.lr_phase1_main", "0.001"},
      {"protocol.lr_phase2", "0.001"},
      {"protocol.freeze_boundary", "2"},
      {"protocol.label_mode", "fuzzy"},
      {"protocol.progressive", "false"},
      {"protocol.progressive_phase1_period", "50"},
      {"protocol.progressive_phase2_period", "25"},
      {"protocol.parallel_blocks", "true"},
      {"protocol.byol_ema", "false"},
      {"protocol.ema_rate", "0.99"},
      {"optim.beta1", "0.9"},
      {"optim.beta2", "0.999"},
      {"optim.eps", "1e-08"},
      {"optim.weight_decay", "1e-06"},
      {"probe.test_fraction", "0.25"},
      {"probe.epochs", "100"},
      {"probe.lr", "0.001"},
      {"probe.batch_size", "128"},
      {"probe.knn_k", "5"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw config_error("unknown config key '" + key + "'");
  }
  it->second = trim(value);
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw config_error("unknown config key '" + key + "'");
  }
  return it->second;
}

bool RunConfig::has(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  load_text(buffer.str(), path);
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(origin + ":" + std::to_string(line_no) +
                         ": expected 'key = value'");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

double RunConfig::number(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double parsed = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return parsed;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': not a number: '" + v + "'");
  }
}

std::size_t RunConfig::count(const std::string& key) const {
  const double v = number(key);
  if (v < 0.0 || v != std::floor(v)) {
    throw config_error("config key '" + key + "': expected a nonnegative integer");
  }
  return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("config key '" + key + "': expected true/false");
}

std::vector<std::size_t> RunConfig::dims(const std::string& key) const {
  const std::string v = get(key);
  std::vector<std::size_t> out;
  std::string part;
  std::istringstream in(v);
  while (std::getline(in, part, ',')) {
    part = trim(part);
    try {
      std::size_t used = 0;
      const unsigned long d = std::stoul(part, &used);
      if (used != part.size() || d == 0) throw std::invalid_argument(part);
      out.push_back(d);
    } catch (const std::exception&) {
      throw config_error("config key '" + key +
                         "': expected comma-separated positive integers");
    }
  }
  if (out.empty()) {
    throw config_error("config key '" + key + "': empty dimension list");
  }
  return out;
}

void RunConfig::validate() const {
  if (!has("seed")) throw config_error("config: seed is required");
  (void)seed();
  (void)protocol(count("gen.dim"));
  (void)probe_test_fraction();
  if (number("probe.test_fraction") < 0.0 || number("probe.test_fraction") >= 1.0) {
    throw config_error("config: probe.test_fraction must be in [0, 1)");
  }
}

std::uint64_t RunConfig::seed() const {
  const std::string v = get("seed");
  if (v.empty()) throw config_error("config: seed is required");
  try {
    std::size_t used = 0;
    const unsigned long long parsed = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return parsed;
  } catch (const std::exception&) {
    throw config_error("config: seed must be a nonnegative integer, got '" +
                       v + "'");
  }
}

std::string RunConfig::out_dir() const { return get("out_dir"); }
std::string RunConfig::dataset_path() const { return get("dataset"); }
double RunConfig::probe_test_fraction() const { return number("probe.test_fraction"); }
std::size_t RunConfig::probe_epochs() const { return count("probe.epochs"); }
double RunConfig::probe_lr() const { return number("probe.lr"); }
std::size_t RunConfig::knn_k() const { return count("probe.knn_k"); }

ProtocolConfig RunConfig::protocol(std::size_t input_dim) const {
  ProtocolConfig cfg;
  cfg.m = count("protocol.m");
  cfg.loss_kind = parse_loss_kind(get("loss.kind"));
  cfg.phase1_epochs = count("protocol.phase1_epochs");
  cfg.phase2_epochs = count("protocol.phase2_epochs");
  // Shortening phase 2 (e.g. --phase2-epochs 0 for a phase-1-only run)
  // shortens the unfrozen stretch with it.
  cfg.phase2_full_epochs =
      std::min(count("protocol.phase2_full_epochs"), cfg.phase2_epochs);
  cfg.batch_size = count("protocol.batch_size");
  cfg.lr_phase1_warm = number("protocol.lr_phase1_warm");
  cfg.lr_phase1_main = number("protocol.lr_phase1_main");
  cfg.lr_phase2 = number("protocol.lr_phase2");
  cfg.freeze_boundary = count("protocol.freeze_boundary");
  cfg.label_mode = parse_label_mode(get("protocol.label_mode"));
  cfg.progressive = flag("protocol.progressive");
  cfg.progressive_phase1_period = count("protocol.progressive_phase1_period");
  cfg.progressive_phase2_period = count("protocol.progressive_phase2_period");
  cfg.seed = seed();
  cfg.parallel_blocks = flag("protocol.parallel_blocks");
  cfg.byol_ema = flag("protocol.byol_ema");
  cfg.ema_rate = number("protocol.ema_rate");

  cfg.loss.temperature = number("loss.temperature");
  cfg.loss.margin = number("loss.margin");
  cfg.loss.lambda = number("loss.lambda");
  cfg.loss.whiten_eps = number("loss.whiten_eps");
  const std::string mode = get("loss.triplet_mode");
  if (mode == "standard") {
    cfg.loss.triplet_mode = TripletMode::kStandard;
  } else if (mode == "as-written") {
    cfg.loss.triplet_mode = TripletMode::kAsWritten;
  } else {
    throw config_error(
        "config: loss.triplet_mode must be 'standard' or 'as-written'");
  }

  cfg.augment.noise_sigma = number("aug.noise_sigma");
  cfg.augment.mask_fraction = number("aug.mask_fraction");
  cfg.augment.scale_lo = number("aug.scale_lo");
  cfg.augment.scale_hi = number("aug.scale_hi");
  cfg.augment.crop_fraction_min = number("aug.crop_fraction_min");

  cfg.optim.beta1 = number("optim.beta1");
  cfg.optim.beta2 = number("optim.beta2");
  cfg.optim.eps = number("optim.eps");
  cfg.optim.weight_decay = number("optim.weight_decay");

  // Backbone and projector: hidden layers with optional batchnorm + ReLU,
  // plain linear output on the projector (and predictor).
  const bool bn = flag("model.batchnorm");
  std::size_t prev = input_dim;
  for (std::size_t width : dims("model.backbone_dims")) {
    cfg.encoder.backbone.push_back(LayerSpec{prev, width, bn, Activation::kRelu});
    prev = width;
  }
  const auto proj = dims("model.projector_dims");
  for (std::size_t i = 0; i < proj.size(); ++i) {
    const bool last = i + 1 == proj.size();
    cfg.encoder.projector.push_back(LayerSpec{
        prev, proj[i], last ? false : bn,
        last ? Activation::kNone : Activation::kRelu});
    prev = proj[i];
  }
  if (cfg.loss_kind == LossKind::kNonContrastive) {
    const std::size_t hidden = count("model.predictor_hidden");
    cfg.encoder.predictor.push_back(LayerSpec{prev, hidden, bn, Activation::kRelu});
    cfg.encoder.predictor.push_back(LayerSpec{hidden, prev, false, Activation::kNone});
  }
  return cfg;
}

Dataset RunConfig::generate(std::uint64_t seed_override) const {
  return generate_synthetic(
      static_cast<std::uint32_t>(count("gen.n_super")),
      static_cast<std::uint32_t>(count("gen.classes_per_super")),
      static_cast<std::uint32_t>(count("gen.dim")),
      static_cast<std::uint32_t>(count("gen.n_per_class")),
      number("gen.separation"), seed_override, number("gen.class_separation"));
}

}  // namespace fussl
