#pragma once

#include <vector>

#include "esckit/core.hpp"

namespace esckit {

// Band-limited rate conversion: windowed-sinc (Kaiser) interpolation with
// the cutoff at the lower of the two Nyquist frequencies and kernel-weight
// normalisation, so DC passes exactly. Output length is
// round(d * target / source). Upsampling beyond 4x is rejected.
Signal resample(const Signal& signal, double target_rate_hz);

// One second-order section, transposed direct form II, unit a0.
struct Biquad {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct SosFilter {
  std::vector<Biquad> sections;
};

// Butterworth bandpass of the given order (2*order poles) via the analog
// prototype, bandpass transform and bilinear mapping with pre-warped edges.
// The overall gain is folded into the first section.
SosFilter butterworth_bandpass_design(double low_hz, double high_hz, int order,
                                      double sample_rate_hz);

// Single-pass magnitude response |H(e^{i 2 pi f / fs})| of the cascade.
double sos_magnitude(const SosFilter& filter, double freq_hz,
                     double sample_rate_hz);

// Forward-backward application of the bandpass cascade: zero phase, squared
// magnitude. Edges are handled by odd-reflection padding of
// 3 * (2 * sections + 1) samples with steady-state section initialisation;
// signals no longer than the padding are rejected.
Signal butterworth_bandpass_zerophase(const Signal& signal, double low_hz = 1.0,
                                      double high_hz = 47.0, int order = 3);

// Subtracts the least-squares line. Needs at least two samples.
Signal detrend(const Signal& signal);

// Centers to zero mean and scales to unit population (1/n) standard
// deviation. A variance indistinguishable from zero at double precision is
// an error.
Signal znormalize(const Signal& signal);

enum class SynthKind {
  kSpiky,   // narrow Gaussian pulse train, sharp like an R-wave sequence
  kSmooth,  // raised-cosine pulses, rounded like a pulse-oximeter waveform
};

// Quasi-periodic test waveform: one pulse per beat with uniform per-beat
// timing jitter (fraction of the beat period) and optional white noise.
// Identical parameters and stream identity reproduce the signal exactly.
Signal synth_quasiperiodic(SynthKind kind, double rate_hz, double duration_s,
                           double beat_hz, double jitter, RngStream& stream,
                           double noise_std = 0.0);

}  // namespace esckit
