// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtms/common.hpp"

namespace mtms {

// Flat key=value configuration. Every architecture and training knob lives
// here; the canonical text (sorted keys) is digested and embedded in
// checkpoints so a model is always rebuilt from the exact config that
// trained it.
class Config {
 public:
  static Config defaults();
  // "default" | "half" | "micro" | "toy", or a path to a key=value file.
  static Config preset_or_file(const std::string& name_or_path);
  static Config preset(const std::string& name);
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_flag(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string canonical_text() const;
  uint64_t digest() const;

 private:
  std::map<std::string, std::string> kv_;
};

uint64_t fnv1a64(const std::string& data);

}  // namespace mtms
