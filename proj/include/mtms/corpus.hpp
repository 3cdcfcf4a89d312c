// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtms/signal.hpp"

namespace mtms {

// ---- Audio file io (RIFF/WAVE, PCM 16-bit, mono, 16 kHz) ----

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave);

// ---- Mixing ----

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;
};

// Scales the noise so the full-utterance power ratio hits snr_db exactly;
// noise shorter than the speech is tiled cyclically from offset 0.
MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db);

struct NoiseSplits {
  Waveform train;  // first 60%
  Waveform val;    // middle 20%
  Waveform test;   // last 20%
};

NoiseSplits split_noise(const Waveform& noise);

// ---- Synthetic corpus ----

struct SynthSpec {
  int speech_files = 8;
  int noise_files = 3;
  double speech_dur_s = 4.0;
  double noise_dur_s = 12.0;
  uint64_t seed = 1;
};

struct SourceEntry {
  std::string kind;  // "speech" | "noise"
  std::string path;  // relative to the corpus root
};

// Harmonic tone complexes as the speech stand-in; white, pink (-3 dB/oct)
// and amplitude-modulated white noise. Deterministic for a fixed seed.
std::vector<SourceEntry> synth_corpus(const std::string& out_dir, const SynthSpec& spec);

// ---- Mixing manifest (JSON lines) ----

struct ManifestEntry {
  std::string speech;   // path relative to corpus root
  std::string noise;    // path relative to corpus root
  std::string segment;  // train | val | test (noise portion)
  double snr_db = 0.0;
  uint64_t seed = 0;
  std::string split;  // train | val | test (dataset split)
};

// Pairs every speech file of a split with every noise file; train/val SNRs
// are uniform in [-5, 15], test SNRs drawn from {-5, 0, 5, 10, 15}.
std::vector<ManifestEntry> build_manifest(const std::vector<SourceEntry>& sources,
                                          uint64_t seed);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Realizes one manifest entry: loads both files, cuts the noise segment,
// mixes, and returns the aligned clean waveform as well.
struct RealizedMixture {
  Waveform clean;
  Waveform scaled_noise;
  Waveform noisy;
};
RealizedMixture realize_mixture(const std::string& corpus_root, const ManifestEntry& e);

}  // namespace mtms
