// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mtms {

namespace {

constexpr char kCkptMagic[8] = {'M', 'T', 'M', 'S', 'C', 'K', 'P', 'T'};
constexpr char kStatMagic[8] = {'M', 'T', 'M', 'S', 'S', 'T', 'A', 'T'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kDtypeF64 = 0;

// The container is written on little-endian hosts only; refuse elsewhere so
// "bit-exact" stays meaningful.
void require_little_endian() {
  const uint16_t probe = 1;
  uint8_t b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw FormatError("checkpoint io requires a little-endian host");
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void write_bytes(std::ostream& out, const void* data, size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_stats_block(std::ostream& out, const SnrStats& s) {
  write_pod(out, s.version);
  write_pod(out, static_cast<uint32_t>(s.bins()));
  write_bytes(out, s.mu.data(), s.mu.size() * sizeof(double));
  write_bytes(out, s.sigma.data(), s.sigma.size() * sizeof(double));
  write_pod(out, static_cast<uint64_t>(s.n_frames));
}

SnrStats read_stats_block(std::istream& in) {
  SnrStats s;
  s.version = read_pod<uint32_t>(in, "stats version");
  const uint32_t bins = read_pod<uint32_t>(in, "stats bins");
  if (bins == 0 || bins > 1u << 20) throw FormatError("checkpoint: bad stats bin count");
  s.mu.resize(bins);
  s.sigma.resize(bins);
  in.read(reinterpret_cast<char*>(s.mu.data()), bins * sizeof(double));
  in.read(reinterpret_cast<char*>(s.sigma.data()), bins * sizeof(double));
  if (!in) throw FormatError("checkpoint: truncated stats block");
  s.n_frames = static_cast<int64_t>(read_pod<uint64_t>(in, "stats frame count"));
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const SnrStats* stats, const Config& config) {
  require_little_endian();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  write_bytes(out, kCkptMagic, sizeof(kCkptMagic));
  write_pod(out, kFormatVersion);
  write_pod(out, config.digest());
  const std::string cfg_text = config.canonical_text();
  write_pod(out, static_cast<uint32_t>(cfg_text.size()));
  write_bytes(out, cfg_text.data(), cfg_text.size());
  write_pod(out, static_cast<uint8_t>(stats != nullptr ? 1 : 0));
  if (stats != nullptr) write_stats_block(out, *stats);
  write_pod(out, params.version);
  write_pod(out, params.init_seed);
  write_pod(out, static_cast<uint32_t>(params.all().size()));
  for (const auto& p : params.all()) {
    write_pod(out, static_cast<uint32_t>(p->name.size()));
    write_bytes(out, p->name.data(), p->name.size());
    write_pod(out, kDtypeF64);
    write_pod(out, static_cast<uint8_t>(p->dims.size()));
    for (int64_t d : p->dims) write_pod(out, d);
    write_bytes(out, p->value.data(), p->value.size() * sizeof(double));
  }
  if (!out) throw IoError("short write to checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const uint32_t version = read_pod<uint32_t>(in, "format version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint format version " + std::to_string(version));
  }
  const uint64_t digest = read_pod<uint64_t>(in, "config digest");
  const uint32_t cfg_len = read_pod<uint32_t>(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw FormatError("checkpoint: truncated config text");

  LoadedCheckpoint lc;
  lc.config = Config::parse_text(cfg_text);
  if (lc.config.digest() != digest) {
    throw FormatError("checkpoint config digest mismatch: " + path);
  }
  if (read_pod<uint8_t>(in, "stats flag") != 0) lc.stats = read_stats_block(in);

  lc.model = std::make_unique<Model>(ModelSpec::from_config(lc.config));
  lc.model->init(0);
  ModelParams& params = lc.model->params();
  params.version = read_pod<uint32_t>(in, "params version");
  params.init_seed = read_pod<uint64_t>(in, "init seed");
  const uint32_t count = read_pod<uint32_t>(in, "tensor count");
  if (count != params.all().size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                      std::to_string(params.all().size()));
  }
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in, "tensor name length");
    if (name_len > 4096) throw FormatError("checkpoint: unreasonable tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("checkpoint: truncated tensor name");
    if (read_pod<uint8_t>(in, "dtype") != kDtypeF64) {
      throw FormatError("checkpoint: unsupported dtype for tensor " + name);
    }
    const uint8_t rank = read_pod<uint8_t>(in, "rank");
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = read_pod<int64_t>(in, "dim");
    if (!params.contains(name)) {
      throw FormatError("checkpoint tensor not in model: " + name);
    }
    Param* p = params.find(name);
    if (p->dims != dims) throw FormatError("checkpoint shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p->value.data()), p->value.size() * sizeof(double));
    if (!in) throw FormatError("checkpoint: truncated values for " + name);
  }
  return lc;
}

void save_stats(const std::string& path, const SnrStats& stats) {
  require_little_endian();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open stats file for writing: " + path);
  write_bytes(out, kStatMagic, sizeof(kStatMagic));
  write_pod(out, kFormatVersion);
  write_stats_block(out, stats);
  if (!out) throw IoError("short write to stats file: " + path);
}

SnrStats load_stats(const std::string& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open stats file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kStatMagic, 8) != 0) {
    throw FormatError("not a stats file (bad magic): " + path);
  }
  const uint32_t version = read_pod<uint32_t>(in, "format version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported stats format version " + std::to_string(version));
  }
  return read_stats_block(in);
}

}  // namespace mtms
