// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <memory>
#include <optional>
#include <string>

#include "mtms/config.hpp"
#include "mtms/model.hpp"
#include "mtms/targets.hpp"

namespace mtms {

// Versioned little-endian binary container: magic, format version, config
// digest + canonical config text, optional SnrStats block, then one record
// per named tensor (name length, name, dtype, rank, dims, raw values).
// Round trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const SnrStats* stats, const Config& config);

struct LoadedCheckpoint {
  Config config;
  std::optional<SnrStats> stats;
  std::unique_ptr<Model> model;  // rebuilt from the embedded config
};

// Throws FormatError on magic/version/digest mismatch or missing tensors.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Standalone SnrStats file (same stats block, own magic).
void save_stats(const std::string& path, const SnrStats& stats);
SnrStats load_stats(const std::string& path);

}  // namespace mtms
