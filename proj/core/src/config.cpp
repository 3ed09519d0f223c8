// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sgpseg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    SGPSEG_CHECK(pos == value.size(), "config: trailing characters in value for '"
                                          << key << "': " << value);
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("config: cannot parse number for '" + key + "': " + value);
  }
}

int parse_int(const std::string& key, const std::string& value) {
  double v = parse_double(key, value);
  int i = static_cast<int>(v);
  SGPSEG_CHECK(static_cast<double>(i) == v, "config: '" << key
                                                        << "' expects an integer, got "
                                                        << value);
  return i;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    SGPSEG_CHECK(pos == value.size(), "config: trailing characters in value for '"
                                          << key << "': " << value);
    return static_cast<uint64_t>(v);
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("config: cannot parse seed for '" + key + "': " + value);
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(GateEstimator e) {
  return e == GateEstimator::soft ? "soft" : "st";
}

GateEstimator parse_estimator(const std::string& s) {
  if (s == "soft") return GateEstimator::soft;
  if (s == "st" || s == "straight_through") return GateEstimator::straight_through;
  throw ValidationError("unknown estimator '" + s + "' (expected soft|st)");
}

std::string to_string(SizeWeighting w) {
  return w == SizeWeighting::off ? "off" : "inverse_fraction";
}

SizeWeighting parse_size_weighting(const std::string& s) {
  if (s == "off") return SizeWeighting::off;
  if (s == "inverse_fraction") return SizeWeighting::inverse_fraction;
  throw ValidationError("unknown size weighting '" + s +
                        "' (expected off|inverse_fraction)");
}

void RunConfig::validate() const {
  SGPSEG_CHECK(!name.empty(), "config: run name must not be empty");
  SGPSEG_CHECK(lr > 0.0, "config: lr must be > 0, got " << lr);
  SGPSEG_CHECK(epochs >= 1, "config: epochs must be >= 1, got " << epochs);
  SGPSEG_CHECK(batch_size >= 1, "config: batch_size must be >= 1, got " << batch_size);
  SGPSEG_CHECK(val_fraction >= 0.0 && val_fraction < 1.0,
               "config: val_fraction must lie in [0,1), got " << val_fraction);
  SGPSEG_CHECK(gate_temperature > 0.0 && gate_temperature_final > 0.0,
               "config: gate temperatures must be > 0");
  encoder.validate();
  loss.validate();
  SGPSEG_CHECK(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 > 0.0 &&
                   optimizer.beta2 < 1.0 && optimizer.eps > 0.0,
               "config: invalid optimizer settings");
}

std::string RunConfig::run_dir() const {
  return (std::filesystem::path(out_dir) / name).string();
}

void apply_config_kv(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = strip_quotes(trim(raw));
  if (key == "name") {
    c.name = value;
  } else if (key == "seed") {
    c.seed = parse_u64(key, value);
  } else if (key == "lr") {
    c.lr = parse_double(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_int(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_int(key, value);
  } else if (key == "dataset_dir") {
    c.dataset_dir = value;
  } else if (key == "out_dir") {
    c.out_dir = value;
  } else if (key == "val_fraction") {
    c.val_fraction = parse_double(key, value);
  } else if (key == "encoder.patch_size") {
    c.encoder.patch_size = parse_int(key, value);
  } else if (key == "encoder.embed_channels") {
    c.encoder.embed_channels = parse_int(key, value);
  } else if (key == "encoder.num_blocks") {
    c.encoder.num_blocks = parse_int(key, value);
  } else if (key == "encoder.sgpm_layers") {
    c.encoder.sgpm_layers = parse_layer_range(value);
  } else if (key == "encoder.sgpm_position") {
    c.encoder.sgpm_position = parse_sgpm_position(value);
  } else if (key == "encoder.attention_heads") {
    c.encoder.attention_heads = parse_int(key, value);
  } else if (key == "encoder.mlp_ratio") {
    c.encoder.mlp_ratio = parse_int(key, value);
  } else if (key == "encoder.msfb_compression") {
    c.encoder.msfb_compression = parse_int(key, value);
  } else if (key == "gate.temperature") {
    c.gate_temperature = parse_double(key, value);
  } else if (key == "gate.temperature_final") {
    c.gate_temperature_final = parse_double(key, value);
  } else if (key == "gate.estimator") {
    c.estimator = parse_estimator(value);
  } else if (key == "loss.focal_alpha") {
    c.loss.focal_alpha = parse_double(key, value);
  } else if (key == "loss.focal_gamma") {
    c.loss.focal_gamma = parse_double(key, value);
  } else if (key == "loss.dice_smooth") {
    c.loss.dice_smooth = parse_double(key, value);
  } else if (key == "loss.combine_lambda") {
    c.loss.combine_lambda = parse_double(key, value);
  } else if (key == "loss.size_weighting") {
    c.loss.size_weighting = parse_size_weighting(value);
  } else if (key == "loss.size_exponent") {
    c.loss.size_exponent = parse_double(key, value);
  } else if (key == "loss.size_ref_fraction") {
    c.loss.size_ref_fraction = parse_double(key, value);
  } else if (key == "loss.size_floor") {
    c.loss.size_floor = parse_double(key, value);
  } else if (key == "optimizer.beta1") {
    c.optimizer.beta1 = parse_double(key, value);
  } else if (key == "optimizer.beta2") {
    c.optimizer.beta2 = parse_double(key, value);
  } else if (key == "optimizer.eps") {
    c.optimizer.eps = parse_double(key, value);
  } else {
    throw ValidationError("config: unknown key '" + key + "'");
  }
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  SGPSEG_CHECK(in.good(), "cannot open config file '" << path << "'");
  RunConfig c;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool in_quote = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      SGPSEG_CHECK(line.back() == ']', "config " << path << ":" << lineno
                                                 << ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    SGPSEG_CHECK(eq != std::string::npos,
                 "config " << path << ":" << lineno << ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    try {
      apply_config_kv(c, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " (at " + path + ":" +
                            std::to_string(lineno) + ")");
    }
  }
  return c;
}

std::string run_config_toml(const RunConfig& c) {
  std::ostringstream o;
  o << "name = \"" << c.name << "\"\n";
  o << "seed = " << c.seed << "\n";
  o << "lr = " << fmt_double(c.lr) << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "dataset_dir = \"" << c.dataset_dir << "\"\n";
  o << "out_dir = \"" << c.out_dir << "\"\n";
  o << "val_fraction = " << fmt_double(c.val_fraction) << "\n";
  o << "\n[encoder]\n";
  o << "patch_size = " << c.encoder.patch_size << "\n";
  o << "embed_channels = " << c.encoder.embed_channels << "\n";
  o << "num_blocks = " << c.encoder.num_blocks << "\n";
  o << "sgpm_layers = \"" << c.encoder.sgpm_layers.str() << "\"\n";
  o << "sgpm_position = \"" << to_string(c.encoder.sgpm_position) << "\"\n";
  o << "attention_heads = " << c.encoder.attention_heads << "\n";
  o << "mlp_ratio = " << c.encoder.mlp_ratio << "\n";
  o << "msfb_compression = " << c.encoder.msfb_compression << "\n";
  o << "\n[gate]\n";
  o << "temperature = " << fmt_double(c.gate_temperature) << "\n";
  o << "temperature_final = " << fmt_double(c.gate_temperature_final) << "\n";
  o << "estimator = \"" << to_string(c.estimator) << "\"\n";
  o << "\n[loss]\n";
  o << "focal_alpha = " << fmt_double(c.loss.focal_alpha) << "\n";
  o << "focal_gamma = " << fmt_double(c.loss.focal_gamma) << "\n";
  o << "dice_smooth = " << fmt_double(c.loss.dice_smooth) << "\n";
  o << "combine_lambda = " << fmt_double(c.loss.combine_lambda) << "\n";
  o << "size_weighting = \"" << to_string(c.loss.size_weighting) << "\"\n";
  o << "size_exponent = " << fmt_double(c.loss.size_exponent) << "\n";
  o << "size_ref_fraction = " << fmt_double(c.loss.size_ref_fraction) << "\n";
  o << "size_floor = " << fmt_double(c.loss.size_floor) << "\n";
  o << "\n[optimizer]\n";
  o << "beta1 = " << fmt_double(c.optimizer.beta1) << "\n";
  o << "beta2 = " << fmt_double(c.optimizer.beta2) << "\n";
  o << "eps = " << fmt_double(c.optimizer.eps) << "\n";
  return o.str();
}

std::string run_config_json_text(const RunConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["dataset_dir"] = c.dataset_dir;
  j["out_dir"] = c.out_dir;
  j["val_fraction"] = c.val_fraction;
  j["encoder"] = {{"patch_size", c.encoder.patch_size},
                  {"embed_channels", c.encoder.embed_channels},
                  {"num_blocks", c.encoder.num_blocks},
                  {"sgpm_layers", c.encoder.sgpm_layers.str()},
                  {"sgpm_position", to_string(c.encoder.sgpm_position)},
                  {"attention_heads", c.encoder.attention_heads},
                  {"mlp_ratio", c.encoder.mlp_ratio},
                  {"msfb_compression", c.encoder.msfb_compression}};
  j["gate"] = {{"temperature", c.gate_temperature},
               {"temperature_final", c.gate_temperature_final},
               {"estimator", to_string(c.estimator)}};
  j["loss"] = {{"focal_alpha", c.loss.focal_alpha},
               {"focal_gamma", c.loss.focal_gamma},
               {"dice_smooth", c.loss.dice_smooth},
               {"combine_lambda", c.loss.combine_lambda},
               {"size_weighting", to_string(c.loss.size_weighting)},
               {"size_exponent", c.loss.size_exponent},
               {"size_ref_fraction", c.loss.size_ref_fraction},
               {"size_floor", c.loss.size_floor}};
  j["optimizer"] = {{"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  return j.dump();
}

RunConfig run_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cannot parse embedded config: ") + e.what());
  }
  RunConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.seed = j.at("seed").get<uint64_t>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.dataset_dir = j.at("dataset_dir").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.val_fraction = j.at("val_fraction").get<double>();
    const auto& e = j.at("encoder");
    c.encoder.patch_size = e.at("patch_size").get<int>();
    c.encoder.embed_channels = e.at("embed_channels").get<int>();
    c.encoder.num_blocks = e.at("num_blocks").get<int>();
    c.encoder.sgpm_layers = parse_layer_range(e.at("sgpm_layers").get<std::string>());
    c.encoder.sgpm_position = parse_sgpm_position(e.at("sgpm_position").get<std::string>());
    c.encoder.attention_heads = e.at("attention_heads").get<int>();
    c.encoder.mlp_ratio = e.at("mlp_ratio").get<int>();
    c.encoder.msfb_compression = e.at("msfb_compression").get<int>();
    const auto& g = j.at("gate");
    c.gate_temperature = g.at("temperature").get<double>();
    c.gate_temperature_final = g.at("temperature_final").get<double>();
    c.estimator = parse_estimator(g.at("estimator").get<std::string>());
    const auto& l = j.at("loss");
    c.loss.focal_alpha = l.at("focal_alpha").get<double>();
    c.loss.focal_gamma = l.at("focal_gamma").get<double>();
    c.loss.dice_smooth = l.at("dice_smooth").get<double>();
    c.loss.combine_lambda = l.at("combine_lambda").get<double>();
    c.loss.size_weighting = parse_size_weighting(l.at("size_weighting").get<std::string>());
    c.loss.size_exponent = l.at("size_exponent").get<double>();
    c.loss.size_ref_fraction = l.at("size_ref_fraction").get<double>();
    c.loss.size_floor = l.at("size_floor").get<double>();
    const auto& o = j.at("optimizer");
    c.optimizer.beta1 = o.at("beta1").get<double>();
    c.optimizer.beta2 = o.at("beta2").get<double>();
    c.optimizer.eps = o.at("eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("embedded config is malformed: ") + e.what());
  }
  return c;
}

}  // namespace sgpseg
