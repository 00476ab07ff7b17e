#include "esckit/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace esckit {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double v) {
  if (v == 0.0) return 1.0;
  const double pv = kPi * v;
  return std::sin(pv) / pv;
}

// Modified Bessel I0 by power series; converges in a few dozen terms for
// the window arguments used here.
double bessel_i0(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double kaiser_window(double frac, double beta) {
  const double t = 1.0 - frac * frac;
  if (t <= 0.0) return 0.0;
  return bessel_i0(beta * std::sqrt(t)) / bessel_i0(beta);
}

void check_signal(const Signal& signal, const char* who) {
  if (signal.values.size() < 1 || !(signal.sample_rate_hz > 0.0) ||
      !signal.values.allFinite()) {
    throw ValidationError(std::string(who) + ": malformed signal");
  }
}

}  // namespace

Signal resample(const Signal& signal, double target_rate_hz) {
  check_signal(signal, "resample");
  if (!(target_rate_hz > 0.0)) {
    throw ValidationError("resample: target rate must be positive");
  }
  if (target_rate_hz == signal.sample_rate_hz) return signal;
  if (target_rate_hz > 4.0 * signal.sample_rate_hz) {
    throw ValidationError("resample: upsampling beyond 4x is not supported");
  }

  const Eigen::Index d = signal.values.size();
  const double ratio = target_rate_hz / signal.sample_rate_hz;
  const auto out_len = static_cast<Eigen::Index>(
      std::max<long long>(1, std::llround(static_cast<double>(d) * ratio)));

  // Cutoff in cycles per source sample; 16 kernel zero-crossings per side.
  const double fc = 0.5 * std::min(1.0, ratio);
  const double half_width = std::ceil(16.0 / (2.0 * fc));
  const double beta = 8.6;

  Vec out(out_len);
  for (Eigen::Index m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const auto lo = static_cast<Eigen::Index>(
        std::max(0.0, std::ceil(t - half_width)));
    const auto hi = static_cast<Eigen::Index>(
        std::min(static_cast<double>(d - 1), std::floor(t + half_width)));
    double acc = 0.0;
    double wsum = 0.0;
    for (Eigen::Index n = lo; n <= hi; ++n) {
      const double u = t - static_cast<double>(n);
      const double h =
          2.0 * fc * sinc(2.0 * fc * u) * kaiser_window(u / half_width, beta);
      acc += signal.values[n] * h;
      wsum += h;
    }
    out[m] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return make_signal(std::move(out), target_rate_hz);
}

SosFilter butterworth_bandpass_design(double low_hz, double high_hz, int order,
                                      double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0)) {
    throw ValidationError("bandpass: sample rate must be positive");
  }
  const double nyquist = 0.5 * sample_rate_hz;
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist)) {
    throw ValidationError("bandpass: need 0 < low < high < Nyquist");
  }
  if (order < 1 || order > 12) {
    throw ValidationError("bandpass: order must be in [1, 12]");
  }

  using cd = std::complex<double>;
  const double fs2 = 2.0 * sample_rate_hz;
  const double wl = fs2 * std::tan(kPi * low_hz / sample_rate_hz);
  const double wh = fs2 * std::tan(kPi * high_hz / sample_rate_hz);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);

  // Analog prototype poles on the unit circle's left half, transformed to
  // the band: each prototype pole yields the pair ph +/- sqrt(ph^2 - w0^2).
  std::vector<cd> analog_poles;
  analog_poles.reserve(static_cast<std::size_t>(2 * order));
  for (int k = 1; k <= order; ++k) {
    const double theta =
        kPi * static_cast<double>(2 * k + order - 1) / (2.0 * order);
    const cd proto(std::cos(theta), std::sin(theta));
    const cd ph = proto * (0.5 * bw);
    const cd disc = std::sqrt(ph * ph - cd(w0 * w0, 0.0));
    analog_poles.push_back(ph + disc);
    analog_poles.push_back(ph - disc);
  }

  cd pole_factor(1.0, 0.0);
  for (const cd& p : analog_poles) pole_factor *= (cd(fs2, 0.0) - p);
  // Analog gain bw^order, zeros at s = 0 contribute fs2^order.
  const double gain = std::pow(bw, order) * std::pow(fs2, order) /
                      pole_factor.real();

  std::vector<cd> digital_poles;
  digital_poles.reserve(analog_poles.size());
  for (const cd& p : analog_poles) {
    digital_poles.push_back((cd(fs2, 0.0) + p) / (cd(fs2, 0.0) - p));
  }

  // Pair conjugate poles (keep the upper-half representative) and then real
  // poles two at a time; every section gets the zeros z = +1 and z = -1.
  std::vector<double> real_poles;
  std::vector<cd> upper_poles;
  for (const cd& p : digital_poles) {
    if (std::abs(p.imag()) < 1e-10) {
      real_poles.push_back(p.real());
    } else if (p.imag() > 0.0) {
      upper_poles.push_back(p);
    }
  }
  if (real_poles.size() % 2 != 0) {
    throw NumericalError("bandpass: unpaired real pole");
  }

  SosFilter filter;
  for (const cd& p : upper_poles) {
    Biquad s;
    s.b0 = 1.0;
    s.b2 = -1.0;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    filter.sections.push_back(s);
  }
  std::sort(real_poles.begin(), real_poles.end());
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    Biquad s;
    s.b0 = 1.0;
    s.b2 = -1.0;
    s.a1 = -(real_poles[i] + real_poles[i + 1]);
    s.a2 = real_poles[i] * real_poles[i + 1];
    filter.sections.push_back(s);
  }
  filter.sections.front().b0 *= gain;
  filter.sections.front().b2 *= gain;
  return filter;
}

double sos_magnitude(const SosFilter& filter, double freq_hz,
                     double sample_rate_hz) {
  if (filter.sections.empty()) throw ValidationError("sos: empty filter");
  using cd = std::complex<double>;
  const double omega = 2.0 * kPi * freq_hz / sample_rate_hz;
  const cd zinv = std::exp(cd(0.0, -omega));
  const cd zinv2 = zinv * zinv;
  cd h(1.0, 0.0);
  for (const Biquad& s : filter.sections) {
    h *= (cd(s.b0, 0.0) + s.b1 * zinv + s.b2 * zinv2) /
         (cd(1.0, 0.0) + s.a1 * zinv + s.a2 * zinv2);
  }
  return std::abs(h);
}

namespace {

// One pass of the cascade over x in place, each section initialised to its
// steady state for a constant input equal to its first sample.
void run_cascade(const SosFilter& filter, std::vector<double>& x) {
  for (const Biquad& s : filter.sections) {
    const double h1 = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double x0 = x.front();
    double z1 = (s.b1 - s.a1 * h1 + s.b2 - s.a2 * h1) * x0;
    double z2 = (s.b2 - s.a2 * h1) * x0;
    for (double& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

Signal butterworth_bandpass_zerophase(const Signal& signal, double low_hz,
                                      double high_hz, int order) {
  check_signal(signal, "bandpass");
  const SosFilter filter =
      butterworth_bandpass_design(low_hz, high_hz, order, signal.sample_rate_hz);

  const auto n_sections = static_cast<int>(filter.sections.size());
  const Eigen::Index pad = 3 * (2 * n_sections + 1);
  const Eigen::Index d = signal.values.size();
  if (d <= pad) {
    throw ValidationError("bandpass: signal no longer than the edge padding");
  }

  std::vector<double> ext(static_cast<std::size_t>(d + 2 * pad));
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[static_cast<std::size_t>(i)] =
        2.0 * signal.values[0] - signal.values[pad - i];
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    ext[static_cast<std::size_t>(pad + i)] = signal.values[i];
  }
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[static_cast<std::size_t>(pad + d + i)] =
        2.0 * signal.values[d - 1] - signal.values[d - 2 - i];
  }

  run_cascade(filter, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(filter, ext);
  std::reverse(ext.begin(), ext.end());

  Vec out(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out[i] = ext[static_cast<std::size_t>(pad + i)];
  }
  return make_signal(std::move(out), signal.sample_rate_hz);
}

Signal detrend(const Signal& signal) {
  check_signal(signal, "detrend");
  const Eigen::Index n = signal.values.size();
  if (n < 2) throw ValidationError("detrend: need at least two samples");

  const double t_mean = 0.5 * static_cast<double>(n - 1);
  const double x_mean = signal.values.mean();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - t_mean;
    num += dt * (signal.values[i] - x_mean);
    den += dt * dt;
  }
  const double slope = num / den;

  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = signal.values[i] - x_mean -
             slope * (static_cast<double>(i) - t_mean);
  }
  return make_signal(std::move(out), signal.sample_rate_hz);
}

Signal znormalize(const Signal& signal) {
  check_signal(signal, "znormalize");
  const Eigen::Index n = signal.values.size();
  const double mean = signal.values.mean();
  const double var =
      (signal.values.array() - mean).square().sum() / static_cast<double>(n);
  const double sd = std::sqrt(var);
  if (sd <= 1e-13 * (1.0 + std::abs(mean))) {
    throw NumericalError("znormalize: variance is zero");
  }
  Vec out = (signal.values.array() - mean) / sd;
  return make_signal(std::move(out), signal.sample_rate_hz);
}

Signal synth_quasiperiodic(SynthKind kind, double rate_hz, double duration_s,
                           double beat_hz, double jitter, RngStream& stream,
                           double noise_std) {
  if (!(rate_hz > 0.0) || !(duration_s > 0.0) || !(beat_hz > 0.0)) {
    throw ValidationError("synth: rate, duration and beat must be positive");
  }
  if (!(jitter >= 0.0 && jitter < 0.5)) {
    throw ValidationError("synth: jitter must be in [0, 0.5)");
  }
  if (!(noise_std >= 0.0)) {
    throw ValidationError("synth: noise level must be non-negative");
  }

  const auto n = static_cast<Eigen::Index>(
      std::max<long long>(2, std::llround(rate_hz * duration_s)));
  const double period = 1.0 / beat_hz;
  const int first_beat = -2;
  const int last_beat = static_cast<int>(std::ceil(duration_s * beat_hz)) + 2;

  std::vector<double> centers;
  centers.reserve(static_cast<std::size_t>(last_beat - first_beat + 1));
  for (int b = first_beat; b <= last_beat; ++b) {
    const double offset = (2.0 * stream.uniform01() - 1.0) * jitter;
    centers.push_back((static_cast<double>(b) + offset) * period);
  }

  Vec out = Vec::Zero(n);
  if (kind == SynthKind::kSpiky) {
    const double width = 0.05 * period;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      double v = 0.0;
      for (double c : centers) {
        const double u = (t - c) / width;
        v += std::exp(-0.5 * u * u);
      }
      out[i] = v;
    }
  } else {
    const double half = 0.3 * period;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      double v = 0.0;
      for (double c : centers) {
        const double u = t - c;
        if (std::abs(u) < half) {
          v += 0.5 * (1.0 + std::cos(kPi * u / half));
        }
      }
      out[i] = v;
    }
  }

  if (noise_std > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] += noise_std * stream.gaussian();
    }
  }
  return make_signal(std::move(out), rate_hz);
}

}  // namespace esckit
