// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "mtms/signal.hpp"

namespace mtms {

// Short-time objective intelligibility: clipped per-band correlation of
// one-third-octave envelopes over 384 ms segments at a 10 kHz working rate.
double stoi(const Waveform& clean, const Waveform& processed);

// Scale-invariant SDR in dB, capped at +60.
double si_sdr(const Waveform& clean, const Waveform& processed);

// Mean per-frame SNR clamped to [-10, 35] dB; silent clean frames excluded.
double segmental_snr(const Waveform& clean, const Waveform& processed,
                     int frame = 320, int hop = 160);

// Windowed-sinc fractional resampler, private to the intelligibility metric
// but exposed for testing.
std::vector<double> resample_linear_phase(const std::vector<double>& x, int fs_in,
                                          int fs_out);

struct EvalRow {
  std::string utt;
  std::string mode;
  double snr_db = 0.0;
  double stoi = 0.0;
  double si_sdr = 0.0;
  double seg_snr = 0.0;
};

// CSV rows followed by a summary block of per-(mode, SNR) means.
void write_report(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace mtms
