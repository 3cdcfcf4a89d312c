// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace mtms {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_equal_length(const Waveform& a, const Waveform& b, const char* where) {
  if (a.length() != b.length()) {
    throw DimensionError(std::string(where) + ": length mismatch (" +
                         std::to_string(a.length()) + " vs " + std::to_string(b.length()) +
                         ")");
  }
}

double sinc(double v) {
  if (v == 0.0) return 1.0;
  return std::sin(kPi * v) / (kPi * v);
}

}  // namespace

std::vector<double> resample_linear_phase(const std::vector<double>& x, int fs_in,
                                          int fs_out) {
  if (fs_in <= 0 || fs_out <= 0) throw DomainError("resample: rates must be positive");
  if (fs_in == fs_out) return x;
  if (x.empty()) return {};
  const double ratio = static_cast<double>(fs_in) / fs_out;
  const double cutoff = std::min(1.0, static_cast<double>(fs_out) / fs_in);
  const int half_taps = 16;
  const int n_in = static_cast<int>(x.size());
  const int n_out = static_cast<int>(std::floor((n_in - 1) / ratio)) + 1;
  std::vector<double> y(n_out, 0.0);
  for (int m = 0; m < n_out; ++m) {
    const double t = m * ratio;
    const int lo = static_cast<int>(std::ceil(t)) - half_taps;
    const int hi = static_cast<int>(std::floor(t)) + half_taps;
    double acc = 0.0, wsum = 0.0;
    for (int j = std::max(lo, 0); j <= std::min(hi, n_in - 1); ++j) {
      const double u = j - t;
      const double win = 0.5 + 0.5 * std::cos(kPi * u / (half_taps + 1));
      const double h = cutoff * sinc(cutoff * u) * win;
      acc += h * x[j];
      wsum += h;
    }
    y[m] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

namespace {

// STOI internals at the 10 kHz working rate.
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr int kStoiSegment = 30;         // 384 ms
constexpr double kStoiDynRange = 40.0;   // silent-frame removal, dB
constexpr double kStoiBeta = -15.0;      // clip level, dB

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 1) / (n + 1));
  return w;
}

// Keeps frames within kStoiDynRange dB of the loudest clean frame and
// overlap-adds the survivors back into compacted signals.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::vector<double> w = hann_window(kStoiFrame);
  const int n_frames = static_cast<int>(x.size()) >= kStoiFrame
                           ? (static_cast<int>(x.size()) - kStoiFrame) / kStoiHop + 1
                           : 0;
  if (n_frames == 0) throw DataError("stoi: signal shorter than one analysis frame");
  std::vector<double> energy_db(n_frames);
  double max_db = -1e300;
  for (int f = 0; f < n_frames; ++f) {
    double e = 0.0;
    for (int i = 0; i < kStoiFrame; ++i) {
      const double v = x[f * kStoiHop + i] * w[i];
      e += v * v;
    }
    energy_db[f] = 10.0 * std::log10(e / kStoiFrame + 1e-300);
    max_db = std::max(max_db, energy_db[f]);
  }
  if (max_db <= 10.0 * std::log10(1e-300) + 1.0) {
    throw DataError("stoi: clean signal is silent");
  }
  std::vector<double> xs(x.size(), 0.0), ys(y.size(), 0.0);
  int count = 0;
  int last_end = 0;
  for (int f = 0; f < n_frames; ++f) {
    if (energy_db[f] - max_db + kStoiDynRange <= 0.0) continue;
    const int src = f * kStoiHop;
    const int dst = count * kStoiHop;
    for (int i = 0; i < kStoiFrame; ++i) {
      xs[dst + i] += x[src + i] * w[i];
      ys[dst + i] += y[src + i] * w[i];
    }
    last_end = dst + kStoiFrame;
    ++count;
  }
  if (count == 0) throw DataError("stoi: no frames above the silence threshold");
  xs.resize(last_end);
  ys.resize(last_end);
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band energies: rows are frames, columns bands.
Matrix band_envelope(const std::vector<double>& x, const std::vector<std::pair<int, int>>& bands) {
  const std::vector<double> w = hann_window(kStoiFrame);
  const int n_frames = static_cast<int>(x.size()) >= kStoiFrame
                           ? (static_cast<int>(x.size()) - kStoiFrame) / kStoiHop + 1
                           : 0;
  fft::Plan plan(kStoiFft);
  Matrix env(n_frames, kStoiBands);
  std::vector<std::complex<double>> buf(kStoiFft);
  for (int f = 0; f < n_frames; ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < kStoiFrame; ++i) buf[i] = x[f * kStoiHop + i] * w[i];
    plan.forward(buf.data());
    for (int b = 0; b < kStoiBands; ++b) {
      double e = 0.0;
      for (int k = bands[b].first; k < bands[b].second; ++k) e += std::norm(buf[k]);
      env.at(f, b) = std::sqrt(e);
    }
  }
  return env;
}

std::vector<std::pair<int, int>> third_octave_bins(double fs) {
  std::vector<std::pair<int, int>> bands(kStoiBands);
  const double bin_hz = fs / kStoiFft;
  for (int b = 0; b < kStoiBands; ++b) {
    const double cf = 150.0 * std::pow(2.0, b / 3.0);
    const double fl = cf * std::pow(2.0, -1.0 / 6.0);
    const double fr = cf * std::pow(2.0, 1.0 / 6.0);
    const int lo = static_cast<int>(std::ceil(fl / bin_hz));
    const int hi = static_cast<int>(std::ceil(fr / bin_hz));
    bands[b] = {lo, std::min(hi, kStoiFft / 2 + 1)};
  }
  return bands;
}

double clipped_correlation(const double* xs, const double* ys, int n) {
  double nx = 0.0, ny = 0.0;
  for (int i = 0; i < n; ++i) {
    nx += xs[i] * xs[i];
    ny += ys[i] * ys[i];
  }
  const double alpha = ny > 0.0 ? std::sqrt(nx / ny) : 0.0;
  const double clip = 1.0 + std::pow(10.0, -kStoiBeta / 20.0);
  double sx = 0.0, sy = 0.0;
  std::vector<double> yc(n);
  for (int i = 0; i < n; ++i) {
    yc[i] = std::min(alpha * ys[i], clip * xs[i]);
    sx += xs[i];
    sy += yc[i];
  }
  const double mx = sx / n, my = sy / n;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (xs[i] - mx) * (yc[i] - my);
    dx += (xs[i] - mx) * (xs[i] - mx);
    dy += (yc[i] - my) * (yc[i] - my);
  }
  const double denom = std::sqrt(dx * dy);
  return denom > 0.0 ? num / denom : 0.0;
}

}  // namespace

double stoi(const Waveform& clean, const Waveform& processed) {
  require_equal_length(clean, processed, "stoi");
  std::vector<double> x = resample_linear_phase(clean.samples, clean.sample_rate, 10000);
  std::vector<double> y =
      resample_linear_phase(processed.samples, processed.sample_rate, 10000);
  remove_silent_frames(x, y);

  const std::vector<std::pair<int, int>> bands = third_octave_bins(10000.0);
  const Matrix ex = band_envelope(x, bands);
  const Matrix ey = band_envelope(y, bands);
  if (ex.rows < kStoiSegment) {
    throw DataError("stoi: fewer than " + std::to_string(kStoiSegment) +
                    " voiced frames (" + std::to_string(ex.rows) + ")");
  }
  double acc = 0.0;
  int count = 0;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  for (int m = kStoiSegment; m <= ex.rows; ++m) {
    for (int b = 0; b < kStoiBands; ++b) {
      for (int i = 0; i < kStoiSegment; ++i) {
        xs[i] = ex.at(m - kStoiSegment + i, b);
        ys[i] = ey.at(m - kStoiSegment + i, b);
      }
      acc += clipped_correlation(xs.data(), ys.data(), kStoiSegment);
      ++count;
    }
  }
  return acc / count;
}

double si_sdr(const Waveform& clean, const Waveform& processed) {
  require_equal_length(clean, processed, "si_sdr");
  double dot = 0.0, cc = 0.0;
  for (int i = 0; i < clean.length(); ++i) {
    dot += processed.samples[i] * clean.samples[i];
    cc += clean.samples[i] * clean.samples[i];
  }
  if (cc <= 0.0) throw DataError("si_sdr: clean reference is silent");
  const double alpha = dot / cc;
  double et = 0.0, ee = 0.0;
  for (int i = 0; i < clean.length(); ++i) {
    const double t = alpha * clean.samples[i];
    const double e = processed.samples[i] - t;
    et += t * t;
    ee += e * e;
  }
  if (ee <= 0.0) return 60.0;
  return std::min(10.0 * std::log10(et / ee), 60.0);
}

double segmental_snr(const Waveform& clean, const Waveform& processed, int frame,
                     int hop) {
  require_equal_length(clean, processed, "segmental_snr");
  if (frame <= 0 || hop <= 0) throw DomainError("segmental_snr: bad framing");
  const int n = clean.length();
  if (n < frame) throw DataError("segmental_snr: signal shorter than one frame");
  const int n_frames = (n - frame) / hop + 1;
  double max_energy = 0.0;
  std::vector<double> energies(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    double e = 0.0;
    for (int i = 0; i < frame; ++i) {
      const double v = clean.samples[f * hop + i];
      e += v * v;
    }
    energies[f] = e;
    max_energy = std::max(max_energy, e);
  }
  if (max_energy <= 0.0) throw DataError("segmental_snr: clean reference is silent");
  const double silence_floor = max_energy * 1e-6;  // 60 dB below the loudest frame
  double acc = 0.0;
  int voiced = 0;
  for (int f = 0; f < n_frames; ++f) {
    if (energies[f] <= silence_floor) continue;
    double err = 0.0;
    for (int i = 0; i < frame; ++i) {
      const double d = clean.samples[f * hop + i] - processed.samples[f * hop + i];
      err += d * d;
    }
    double snr = err > 0.0 ? 10.0 * std::log10(energies[f] / err) : 35.0;
    acc += std::clamp(snr, -10.0, 35.0);
    ++voiced;
  }
  if (voiced == 0) throw DataError("segmental_snr: no voiced frames");
  return acc / voiced;
}

void write_report(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report for writing: " + path);
  out << "utt,mode,snr_db,stoi,si_sdr,seg_snr\n";
  out << std::fixed << std::setprecision(6);
  for (const EvalRow& r : rows) {
    out << r.utt << ',' << r.mode << ',' << r.snr_db << ',' << r.stoi << ',' << r.si_sdr
        << ',' << r.seg_snr << '\n';
  }
  // Per-(mode, SNR) means.
  std::map<std::pair<std::string, double>, std::vector<const EvalRow*>> groups;
  for (const EvalRow& r : rows) groups[{r.mode, r.snr_db}].push_back(&r);
  for (const auto& [key, members] : groups) {
    double s_stoi = 0.0, s_sdr = 0.0, s_seg = 0.0;
    for (const EvalRow* r : members) {
      s_stoi += r->stoi;
      s_sdr += r->si_sdr;
      s_seg += r->seg_snr;
    }
    const double n = static_cast<double>(members.size());
    out << "summary," << key.first << ',' << key.second << ',' << s_stoi / n << ','
        << s_sdr / n << ',' << s_seg / n << '\n';
  }
  if (!out) throw IoError("short write to report: " + path);
}

}  // namespace mtms
