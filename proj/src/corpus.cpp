// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mtms/graph.hpp"

namespace mtms {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void require_finite(const Waveform& w, const char* what) {
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw DataError(std::string(what) + ": non-finite sample");
  }
}

double mean_power(const Waveform& w) {
  double s = 0.0;
  for (double x : w.samples) s += x * x;
  return w.samples.empty() ? 0.0 : s / static_cast<double>(w.samples.size());
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  char riff[4], wave[4];
  uint32_t riff_size = 0;
  in.read(riff, 4);
  in.read(reinterpret_cast<char*>(&riff_size), 4);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  uint16_t fmt_tag = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<int16_t> pcm;
  bool have_data = false;
  while (in) {
    char id[4];
    uint32_t size = 0;
    in.read(id, 4);
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> body(size);
      in.read(body.data(), size);
      if (!in || size < 16) throw FormatError(path + ": truncated fmt chunk");
      std::memcpy(&fmt_tag, body.data(), 2);
      std::memcpy(&channels, body.data() + 2, 2);
      std::memcpy(&sample_rate, body.data() + 4, 4);
      std::memcpy(&bits, body.data() + 14, 2);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), size / 2 * 2);
      if (!in) throw FormatError(path + ": truncated data chunk");
      have_data = true;
      if (size % 2 != 0) in.seekg(1, std::ios::cur);
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }
  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (!have_data) throw FormatError(path + ": missing data chunk");
  if (fmt_tag != 1) {
    throw FormatError(path + ": format tag must be PCM(1), got " + std::to_string(fmt_tag));
  }
  if (channels != 1) {
    throw FormatError(path + ": channels must be 1 (mono), got " + std::to_string(channels));
  }
  if (sample_rate != 16000) {
    throw FormatError(path + ": sample rate must be 16000, got " +
                      std::to_string(sample_rate));
  }
  if (bits != 16) {
    throw FormatError(path + ": bits per sample must be 16, got " + std::to_string(bits));
  }
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32768.0;
  return w;
}

void write_wav(const std::string& path, const Waveform& wave) {
  if (wave.sample_rate != 16000) {
    throw FormatError("write_wav: sample rate must be 16000, got " +
                      std::to_string(wave.sample_rate));
  }
  require_finite(wave, "write_wav");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open wav file for writing: " + path);
  const uint32_t n = static_cast<uint32_t>(wave.samples.size());
  const uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_pod(out, static_cast<uint32_t>(36 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_pod(out, static_cast<uint32_t>(16));
  write_pod(out, static_cast<uint16_t>(1));       // PCM
  write_pod(out, static_cast<uint16_t>(1));       // mono
  write_pod(out, static_cast<uint32_t>(16000));   // rate
  write_pod(out, static_cast<uint32_t>(32000));   // byte rate
  write_pod(out, static_cast<uint16_t>(2));       // block align
  write_pod(out, static_cast<uint16_t>(16));      // bits
  out.write("data", 4);
  write_pod(out, data_bytes);
  for (double s : wave.samples) {
    const double scaled = std::round(s * 32768.0);
    const int16_t q = static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    write_pod(out, q);
  }
  if (!out) throw IoError("short write to wav file: " + path);
}

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db) {
  if (!std::isfinite(snr_db)) throw DataError("mix_at_snr: snr_db must be finite");
  require_finite(speech, "mix_at_snr(speech)");
  require_finite(noise, "mix_at_snr(noise)");
  if (speech.samples.empty()) throw DataError("mix_at_snr: empty speech");
  if (noise.samples.empty()) throw DataError("mix_at_snr: empty noise");
  const double p_speech = mean_power(speech);
  if (p_speech <= 0.0) throw DataError("mix_at_snr: silent speech (zero power)");

  MixResult r;
  r.scaled_noise.sample_rate = speech.sample_rate;
  r.scaled_noise.samples.resize(speech.samples.size());
  // Tile the noise cyclically from offset 0 when it is shorter.
  for (size_t i = 0; i < speech.samples.size(); ++i) {
    r.scaled_noise.samples[i] = noise.samples[i % noise.samples.size()];
  }
  const double p_noise = mean_power(r.scaled_noise);
  if (p_noise <= 0.0) throw DataError("mix_at_snr: silent noise (zero power)");
  const double gain = std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));
  for (double& s : r.scaled_noise.samples) s *= gain;

  r.noisy.sample_rate = speech.sample_rate;
  r.noisy.samples.resize(speech.samples.size());
  for (size_t i = 0; i < speech.samples.size(); ++i) {
    r.noisy.samples[i] = speech.samples[i] + r.scaled_noise.samples[i];
  }
  return r;
}

NoiseSplits split_noise(const Waveform& noise) {
  const int n = noise.length();
  if (n < 5) {
    throw DataError("split_noise: need at least 5 samples, got " + std::to_string(n));
  }
  const int b1 = static_cast<int>(std::floor(0.6 * n));
  const int b2 = static_cast<int>(std::floor(0.8 * n));
  NoiseSplits s;
  s.train.sample_rate = s.val.sample_rate = s.test.sample_rate = noise.sample_rate;
  s.train.samples.assign(noise.samples.begin(), noise.samples.begin() + b1);
  s.val.samples.assign(noise.samples.begin() + b1, noise.samples.begin() + b2);
  s.test.samples.assign(noise.samples.begin() + b2, noise.samples.end());
  return s;
}

namespace {

void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    const double g = peak / m;
    for (double& v : x) v *= g;
  }
}

std::vector<double> synth_speech(int n, double fs, Rng& rng) {
  const double f0 = rng.uniform(100.0, 300.0);
  const double vib_rate = rng.uniform(4.0, 7.0);
  const double vib_depth = 0.01;
  const double syl_rate = rng.uniform(2.0, 5.0);
  const double syl_phase = rng.uniform(0.0, 2.0 * kPi);
  const int harmonics = std::min(24, static_cast<int>(7000.0 / f0));
  std::vector<double> phase(harmonics);
  std::vector<double> amp(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    phase[h] = rng.uniform(0.0, 2.0 * kPi);
    amp[h] = 1.0 / (h + 1.0);
  }
  std::vector<double> x(n, 0.0);
  const int ramp = static_cast<int>(0.05 * fs);
  for (int i = 0; i < n; ++i) {
    const double t = i / fs;
    const double f_inst = f0 * (1.0 + vib_depth * std::sin(2.0 * kPi * vib_rate * t));
    double s = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      phase[h] += 2.0 * kPi * (h + 1.0) * f_inst / fs;
      s += amp[h] * std::sin(phase[h]);
    }
    // Syllable-rate envelope kept above a floor so no frame is dead silent.
    double env = 0.15 + 0.85 * 0.5 * (1.0 - std::cos(2.0 * kPi * syl_rate * t + syl_phase));
    if (i < ramp) env *= static_cast<double>(i) / ramp;
    if (n - 1 - i < ramp) env *= static_cast<double>(n - 1 - i) / ramp;
    x[i] = env * s;
  }
  normalize_peak(x, 0.5);
  return x;
}

std::vector<double> synth_white(int n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  normalize_peak(x, 0.5);
  return x;
}

// Frequency-domain synthesis: amplitude ~ f^{-1/2} gives -3 dB per octave.
std::vector<double> synth_pink(int n, double fs, Rng& rng) {
  const int m = fft::next_fast_size(std::max(n, 2));
  std::vector<std::complex<double>> spec(m, 0.0);
  const int half = m / 2;
  for (int k = 1; k <= half; ++k) {
    const double f = k * fs / m;
    const double a = 1.0 / std::sqrt(f);
    const double ph = rng.uniform(0.0, 2.0 * kPi);
    spec[k] = std::polar(a, ph);
    if (k != half || m % 2 != 0) spec[m - k] = std::conj(spec[k]);
  }
  if (m % 2 == 0) spec[half] = std::abs(spec[half]);  // real Nyquist
  fft::Plan plan(m);
  plan.inverse(spec.data());
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = spec[i].real();
  normalize_peak(x, 0.5);
  return x;
}

std::vector<double> synth_am_white(int n, double fs, Rng& rng) {
  std::vector<double> x = synth_white(n, rng);
  const double rate = rng.uniform(2.0, 8.0);
  const double ph = rng.uniform(0.0, 2.0 * kPi);
  for (int i = 0; i < n; ++i) {
    x[i] *= (1.0 + 0.8 * std::sin(2.0 * kPi * rate * i / fs + ph)) / 1.8;
  }
  normalize_peak(x, 0.5);
  return x;
}

Waveform quantized(const std::vector<double>& x) {
  // Snap to the PCM grid so in-memory audio equals what a wav round trip
  // would produce.
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double q = std::clamp(std::round(x[i] * 32768.0), -32768.0, 32767.0);
    w.samples[i] = q / 32768.0;
  }
  return w;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::vector<SourceEntry> synth_corpus(const std::string& out_dir, const SynthSpec& spec) {
  if (spec.speech_files <= 0 || spec.noise_files <= 0) {
    throw ConfigError("synth_corpus: need at least one speech and one noise file");
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "speech", ec);
  fs::create_directories(fs::path(out_dir) / "noise", ec);
  if (ec) throw IoError("cannot create corpus directories under " + out_dir);

  const double fs = 16000.0;
  Rng rng(spec.seed);
  std::vector<SourceEntry> entries;
  const int n_speech = static_cast<int>(spec.speech_dur_s * fs);
  for (int i = 0; i < spec.speech_files; ++i) {
    const std::string rel = "speech/speech_" + zero_pad(i, 3) + ".wav";
    write_wav((fs::path(out_dir) / rel).string(), quantized(synth_speech(n_speech, fs, rng)));
    entries.push_back({"speech", rel});
  }
  const int n_noise = static_cast<int>(spec.noise_dur_s * fs);
  const char* kinds[] = {"white", "pink", "amwhite"};
  for (int i = 0; i < spec.noise_files; ++i) {
    const int kind = i % 3;
    std::vector<double> x;
    switch (kind) {
      case 0: x = synth_white(n_noise, rng); break;
      case 1: x = synth_pink(n_noise, fs, rng); break;
      default: x = synth_am_white(n_noise, fs, rng); break;
    }
    const std::string rel =
        std::string("noise/noise_") + kinds[kind] + "_" + zero_pad(i, 3) + ".wav";
    write_wav((fs::path(out_dir) / rel).string(), quantized(x));
    entries.push_back({"noise", rel});
  }
  return entries;
}

std::vector<ManifestEntry> build_manifest(const std::vector<SourceEntry>& sources,
                                          uint64_t seed) {
  std::vector<std::string> speech, noise;
  for (const auto& s : sources) {
    if (s.kind == "speech") {
      speech.push_back(s.path);
    } else if (s.kind == "noise") {
      noise.push_back(s.path);
    } else {
      throw DataError("build_manifest: unknown source kind: " + s.kind);
    }
  }
  if (speech.empty() || noise.empty()) {
    throw DataError("build_manifest: need speech and noise sources");
  }
  // Speech files are partitioned 60/20/20 across splits; every noise file
  // serves all splits through its time segments.
  const int ns = static_cast<int>(speech.size());
  const int b1 = static_cast<int>(std::floor(0.6 * ns));
  const int b2 = static_cast<int>(std::floor(0.8 * ns));
  Rng rng(seed);
  const double test_grid[] = {-5.0, 0.0, 5.0, 10.0, 15.0};
  std::vector<ManifestEntry> out;
  for (int i = 0; i < ns; ++i) {
    const std::string split = i < b1 ? "train" : (i < b2 ? "val" : "test");
    for (const std::string& npath : noise) {
      ManifestEntry e;
      e.speech = speech[i];
      e.noise = npath;
      e.segment = split;
      e.split = split;
      e.seed = rng.next();
      if (split == "test") {
        e.snr_db = test_grid[rng.next() % 5];
      } else {
        e.snr_db = rng.uniform(-5.0, 15.0);
      }
      out.push_back(e);
    }
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  for (const auto& e : entries) {
    json j;
    j["speech"] = e.speech;
    j["noise"] = e.noise;
    j["segment"] = e.segment;
    j["snr_db"] = e.snr_db;
    j["seed"] = e.seed;
    j["split"] = e.split;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("short write to manifest: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad json: " + e.what());
    }
    try {
      ManifestEntry e;
      e.speech = j.at("speech").get<std::string>();
      e.noise = j.at("noise").get<std::string>();
      e.segment = j.at("segment").get<std::string>();
      e.snr_db = j.at("snr_db").get<double>();
      e.seed = j.at("seed").get<uint64_t>();
      e.split = j.at("split").get<std::string>();
      if (e.segment != "train" && e.segment != "val" && e.segment != "test") {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad segment " + e.segment);
      }
      out.push_back(e);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing field: " + e.what());
    }
  }
  return out;
}

RealizedMixture realize_mixture(const std::string& corpus_root, const ManifestEntry& e) {
  const fs::path root(corpus_root);
  const std::string speech_path = (root / e.speech).string();
  const std::string noise_path = (root / e.noise).string();
  if (!fs::exists(speech_path)) throw DataError("missing speech file: " + speech_path);
  if (!fs::exists(noise_path)) throw DataError("missing noise file: " + noise_path);
  RealizedMixture r;
  r.clean = read_wav(speech_path);
  const NoiseSplits splits = split_noise(read_wav(noise_path));
  const Waveform& seg =
      e.segment == "train" ? splits.train : (e.segment == "val" ? splits.val : splits.test);
  MixResult mixed = mix_at_snr(r.clean, seg, e.snr_db);
  r.scaled_noise = std::move(mixed.scaled_noise);
  r.noisy = std::move(mixed.noisy);
  return r;
}

}  // namespace mtms
