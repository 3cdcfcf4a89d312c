// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/config.hpp"

#include <fstream>
#include <sstream>

namespace mtms {

Config Config::defaults() {
  Config c;
  c.set("model.bins", "161");
  c.set("model.frame_len", "320");
  c.set("model.time_conv", "320");
  c.set("model.time_feat", "161");
  c.set("model.fusion", "644");
  c.set("model.irm_width", "161");
  c.set("model.groups", "4");
  c.set("model.s2_groups", "4");
  c.set("model.units", "3");
  c.set("model.dilations", "1,3,5");
  c.set("model.s2_blocks", "8");
  c.set("model.s2_cycle", "1,2,4,8,16");
  c.set("model.s2_wide", "322");
  c.set("model.s2_narrow", "161");
  c.set("model.dropout", "0.2");
  c.set("train.lr", "0.001");
  c.set("train.batch_frames", "10000");
  c.set("train.alpha", "1");
  c.set("train.beta", "1");
  c.set("train.detach_stage2", "0");
  c.set("train.patience_epochs", "5");
  c.set("infer.prisnr_noisy_only", "0");
  return c;
}

Config Config::preset(const std::string& name) {
  Config c = defaults();
  if (name == "default") return c;
  if (name == "half") {
    c.set("model.time_conv", "160");
    c.set("model.time_feat", "80");
    c.set("model.fusion", "322");
    c.set("model.irm_width", "80");
    c.set("model.s2_wide", "160");
    c.set("model.s2_narrow", "80");
    return c;
  }
  if (name == "micro") {
    // Desk-scale model for gradient and shape checks; not usable on real
    // 16 kHz audio (bins != 161).
    c.set("model.bins", "6");
    c.set("model.frame_len", "16");
    c.set("model.time_conv", "8");
    c.set("model.time_feat", "6");
    c.set("model.fusion", "12");
    c.set("model.irm_width", "6");
    c.set("model.groups", "2");
    c.set("model.s2_groups", "2");
    c.set("model.units", "1");
    c.set("model.dilations", "1");
    c.set("model.s2_blocks", "2");
    c.set("model.s2_wide", "8");
    c.set("model.s2_narrow", "6");
    c.set("train.batch_frames", "8");
    return c;
  }
  if (name == "toy") {
    c.set("model.time_conv", "48");
    c.set("model.time_feat", "32");
    c.set("model.fusion", "96");
    c.set("model.irm_width", "32");
    c.set("model.s2_wide", "64");
    c.set("model.s2_narrow", "32");
    c.set("train.batch_frames", "400");
    return c;
  }
  throw ConfigError("unknown config preset: " + name);
}

Config Config::preset_or_file(const std::string& name_or_path) {
  if (name_or_path == "default" || name_or_path == "half" || name_or_path == "micro" ||
      name_or_path == "toy") {
    return preset(name_or_path);
  }
  return parse_file(name_or_path);
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

Config Config::parse_text(const std::string& text) {
  Config c = defaults();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    const size_t ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke == std::string::npos ? 0 : ke + 1);
    const size_t vb = val.find_first_not_of(" \t");
    val = vb == std::string::npos ? "" : val.substr(vb);
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    c.set(key, val);
  }
  return c;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const std::string s = get_str(key);
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: " + s);
  }
}

double Config::get_double(const std::string& key) const {
  const std::string s = get_str(key);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: " + s);
  }
}

bool Config::get_flag(const std::string& key) const {
  const std::string s = get_str(key);
  if (s == "0" || s == "false") return false;
  if (s == "1" || s == "true") return true;
  throw ConfigError("config key " + key + ": expected 0/1/true/false, got " + s);
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const std::string s = get_str(key);
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad list element: " + tok);
    }
  }
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string Config::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t Config::digest() const { return fnv1a64(canonical_text()); }

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mtms
