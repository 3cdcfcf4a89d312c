// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mtms/corpus.hpp"
#include "oracles.hpp"

using namespace mtms;
namespace fs = std::filesystem;

namespace {

Waveform make_wave(std::vector<double> samples) {
  Waveform w;
  w.samples = std::move(samples);
  return w;
}

double mean_power(const Waveform& w) {
  double s = 0.0;
  for (double x : w.samples) s += x * x;
  return s / w.samples.size();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("mix_at_snr meets the requested level exactly") {
  Waveform speech = make_wave(oracle::random_signal(8000, 1, 0.4));
  Waveform noise = make_wave(oracle::random_signal(8000, 2, 0.4));

  // Equal-power inputs at 0 dB keep the noise gain at 1.
  Waveform eq_noise = noise;
  const double scale = std::sqrt(mean_power(speech) / mean_power(noise));
  for (double& v : eq_noise.samples) v *= scale;
  MixResult r0 = mix_at_snr(speech, eq_noise, 0.0);
  for (size_t i = 0; i < eq_noise.samples.size(); ++i) {
    CHECK(r0.scaled_noise.samples[i] == doctest::Approx(eq_noise.samples[i]).epsilon(1e-12));
  }

  // +10 dB scales noise power by 10^-1.
  MixResult r10 = mix_at_snr(speech, eq_noise, 10.0);
  CHECK(mean_power(r10.scaled_noise) ==
        doctest::Approx(mean_power(eq_noise) * 0.1).epsilon(1e-9));

  // Achieved SNR recomputed from outputs matches the request.
  for (double snr : {-5.0, 0.0, 7.5, 15.0}) {
    MixResult r = mix_at_snr(speech, noise, snr);
    const double achieved =
        10.0 * std::log10(mean_power(speech) / mean_power(r.scaled_noise));
    CHECK(achieved == doctest::Approx(snr).epsilon(1e-9));
    // Additivity with the same operation order is exact.
    for (size_t i = 0; i < speech.samples.size(); ++i) {
      CHECK(r.noisy.samples[i] == speech.samples[i] + r.scaled_noise.samples[i]);
    }
  }

  CHECK_THROWS_AS(mix_at_snr(make_wave(std::vector<double>(100, 0.0)), noise, 0.0),
                  DataError);
}

TEST_CASE("mix_at_snr tiles short noise cyclically") {
  Waveform speech = make_wave(oracle::random_signal(1000, 3, 0.4));
  Waveform noise = make_wave(oracle::random_signal(300, 4, 0.4));
  MixResult r = mix_at_snr(speech, noise, 0.0);
  CHECK(r.scaled_noise.samples.size() == 1000);
  // Tiling preserves the cyclic structure up to one overall gain.
  const double g = r.scaled_noise.samples[0] / noise.samples[0];
  for (int i = 0; i < 1000; ++i) {
    CHECK(r.scaled_noise.samples[i] ==
          doctest::Approx(g * noise.samples[i % 300]).epsilon(1e-9));
  }
}

TEST_CASE("split_noise boundaries and coverage") {
  {
    Waveform w = make_wave(oracle::random_signal(1000, 5));
    NoiseSplits s = split_noise(w);
    CHECK(s.train.length() == 600);
    CHECK(s.val.length() == 200);
    CHECK(s.test.length() == 200);
    std::vector<double> joined = s.train.samples;
    joined.insert(joined.end(), s.val.samples.begin(), s.val.samples.end());
    joined.insert(joined.end(), s.test.samples.begin(), s.test.samples.end());
    CHECK(joined == w.samples);
  }
  {
    Waveform w = make_wave(oracle::random_signal(10, 6));
    NoiseSplits s = split_noise(w);
    CHECK(s.train.length() == 6);
    CHECK(s.val.length() == 2);
    CHECK(s.test.length() == 2);
  }
  // Disjoint + exhaustive for a spread of lengths.
  for (int n : {5, 7, 23, 999, 16001}) {
    Waveform w = make_wave(oracle::random_signal(n, 100 + n));
    NoiseSplits s = split_noise(w);
    CHECK(s.train.length() + s.val.length() + s.test.length() == n);
    CHECK(s.train.length() >= 1);
  }
  CHECK_THROWS_AS(split_noise(make_wave(std::vector<double>(4, 0.1))), DataError);
}

TEST_CASE("wav io round trip and format errors") {
  TempDir dir("mtms_test_wav");
  const std::string path = (dir.path / "x.wav").string();

  // On-grid samples round trip exactly.
  Waveform w;
  w.samples = {0.0, 0.5, -0.5, 1234.0 / 32768.0, -32768.0 / 32768.0, 32767.0 / 32768.0};
  write_wav(path, w);
  Waveform r = read_wav(path);
  CHECK(r.samples == w.samples);
  CHECK(r.sample_rate == 16000);

  // Arbitrary values are idempotent after the first quantization.
  Waveform arb = make_wave(oracle::random_signal(500, 7, 0.9));
  write_wav(path, arb);
  Waveform q1 = read_wav(path);
  write_wav(path, q1);
  Waveform q2 = read_wav(path);
  CHECK(q1.samples == q2.samples);

  // Wrong sample rate / channel count are named in the error.
  auto write_header = [&](uint32_t rate, uint16_t channels, uint16_t bits,
                          uint16_t tag) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto w16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    out.write("RIFF", 4);
    w32(36 + 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    w32(16);
    w16(tag);
    w16(channels);
    w32(rate);
    w32(rate * channels * bits / 8);
    w16(static_cast<uint16_t>(channels * bits / 8));
    w16(bits);
    out.write("data", 4);
    w32(4);
    w32(0);
  };
  write_header(44100, 1, 16, 1);
  CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("sample rate"), FormatError);
  write_header(16000, 2, 16, 1);
  CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("channels"), FormatError);
  write_header(16000, 1, 8, 1);
  CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("bits"), FormatError);
  write_header(16000, 1, 16, 3);
  CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("format tag"), FormatError);
  CHECK_THROWS_AS(read_wav((dir.path / "missing.wav").string()), IoError);
}

TEST_CASE("synthetic corpus is deterministic and within range") {
  TempDir dir("mtms_test_corpus");
  SynthSpec spec;
  spec.speech_files = 4;
  spec.noise_files = 2;
  spec.speech_dur_s = 1.0;
  spec.noise_dur_s = 2.0;
  spec.seed = 77;

  const auto entries = synth_corpus((dir.path / "a").string(), spec);
  CHECK(entries.size() == 6);
  int n_speech = 0, n_noise = 0;
  for (const auto& e : entries) {
    (e.kind == "speech" ? n_speech : n_noise) += 1;
    Waveform w = read_wav((dir.path / "a" / e.path).string());
    CHECK(w.length() > 0);
    for (double v : w.samples) {
      CHECK(v >= -1.0);
      CHECK(v < 1.0);
    }
  }
  CHECK(n_speech == 4);
  CHECK(n_noise == 2);

  // Same seed: byte-identical files.
  const auto entries_b = synth_corpus((dir.path / "b").string(), spec);
  REQUIRE(entries_b.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(entries[i].path == entries_b[i].path);
    CHECK(slurp((dir.path / "a" / entries[i].path).string()) ==
          slurp((dir.path / "b" / entries_b[i].path).string()));
  }
}

TEST_CASE("pink noise slope is about -3 dB per octave") {
  TempDir dir("mtms_test_pink");
  SynthSpec spec;
  spec.speech_files = 1;
  spec.noise_files = 2;  // index 1 is the pink file
  spec.speech_dur_s = 0.5;
  spec.noise_dur_s = 8.0;
  spec.seed = 13;
  const auto entries = synth_corpus(dir.path.string(), spec);
  std::string pink_path;
  for (const auto& e : entries) {
    if (e.path.find("pink") != std::string::npos) pink_path = e.path;
  }
  REQUIRE(!pink_path.empty());
  Waveform w = read_wav((dir.path / pink_path).string());

  // Welch-style averaged periodogram with 1024-point Hann segments.
  const int seg = 1024, hop = 512;
  const int n_segs = (w.length() - seg) / hop + 1;
  std::vector<double> psd(seg / 2 + 1, 0.0);
  fft::Plan plan(seg);
  std::vector<std::complex<double>> buf(seg);
  for (int s = 0; s < n_segs; ++s) {
    for (int i = 0; i < seg; ++i) {
      const double win = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / (seg - 1));
      buf[i] = w.samples[s * hop + i] * win;
    }
    plan.forward(buf.data());
    for (int k = 0; k <= seg / 2; ++k) psd[k] += std::norm(buf[k]);
  }
  // Least-squares slope of 10*log10(psd) against log2(f) over 100-4000 Hz.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (int k = 1; k <= seg / 2; ++k) {
    const double f = k * 16000.0 / seg;
    if (f < 100.0 || f > 4000.0) continue;
    const double x = std::log2(f);
    const double y = 10.0 * std::log10(psd[k] / n_segs);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-3.0).epsilon(0.34));  // within 1 dB/oct
}

TEST_CASE("manifest: snr ranges, split segments and byte determinism") {
  std::vector<SourceEntry> sources;
  for (int i = 0; i < 10; ++i) {
    sources.push_back({"speech", "speech/s" + std::to_string(i) + ".wav"});
  }
  for (int i = 0; i < 3; ++i) {
    sources.push_back({"noise", "noise/n" + std::to_string(i) + ".wav"});
  }
  const auto entries = build_manifest(sources, 99);
  CHECK(entries.size() == 30);
  const std::set<double> grid = {-5.0, 0.0, 5.0, 10.0, 15.0};
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& e : entries) {
    CHECK(e.segment == e.split);
    if (e.split == "test") {
      ++n_test;
      CHECK(grid.count(e.snr_db) == 1);
    } else {
      (e.split == "train" ? n_train : n_val) += 1;
      CHECK(e.snr_db >= -5.0);
      CHECK(e.snr_db <= 15.0);
    }
  }
  CHECK(n_train == 6 * 3);
  CHECK(n_val == 2 * 3);
  CHECK(n_test == 2 * 3);

  TempDir dir("mtms_test_manifest");
  const std::string p1 = (dir.path / "m1.jsonl").string();
  const std::string p2 = (dir.path / "m2.jsonl").string();
  write_manifest(p1, entries);
  write_manifest(p2, build_manifest(sources, 99));
  CHECK(slurp(p1) == slurp(p2));

  const auto parsed = read_manifest(p1);
  REQUIRE(parsed.size() == entries.size());
  for (size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].speech == entries[i].speech);
    CHECK(parsed[i].noise == entries[i].noise);
    CHECK(parsed[i].snr_db == entries[i].snr_db);
    CHECK(parsed[i].split == entries[i].split);
  }
}

TEST_CASE("realize_mixture reports missing files with their paths") {
  TempDir dir("mtms_test_realize");
  ManifestEntry e;
  e.speech = "speech/missing.wav";
  e.noise = "noise/missing.wav";
  e.segment = "train";
  e.split = "train";
  e.snr_db = 0.0;
  CHECK_THROWS_WITH_AS(realize_mixture(dir.path.string(), e),
                       doctest::Contains("missing.wav"), DataError);
}
