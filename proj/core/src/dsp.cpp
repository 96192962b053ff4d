#include "prosody_mi/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

#include "prosody_mi/error.hpp"

namespace prosody_mi::dsp {

using cplx = std::complex<double>;

// ------------------------------------------------------------------ filters

std::vector<Biquad> design_butterworth_bandpass(int order, double low_hz,
                                                double high_hz,
                                                double sample_rate_hz) {
  if (order < 1) throw ParameterError("bandpass: order must be >= 1");
  if (!(low_hz > 0.0) || !(high_hz > low_hz) ||
      !(high_hz < sample_rate_hz / 2.0)) {
    throw ParameterError(fmt::format(
        "bandpass: need 0 < low ({}) < high ({}) < fs/2 ({})", low_hz, high_hz,
        sample_rate_hz / 2.0));
  }
  const double fs2 = 2.0 * sample_rate_hz;
  // Prewarped analog band edges.
  const double wl = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate_hz);
  const double wh = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate_hz);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);

  std::vector<cplx> z_poles;
  for (int k = 0; k < order; ++k) {
    const double theta =
        std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);
    const cplx p = std::polar(1.0, theta);
    // Low-pass to band-pass: s^2 - p*bw*s + w0^2 = 0.
    const cplx disc = std::sqrt(p * p * bw * bw - 4.0 * w0 * w0);
    for (const cplx s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      z_poles.push_back((fs2 + s) / (fs2 - s));
    }
  }

  std::vector<Biquad> sections;
  for (const cplx z : z_poles) {
    if (z.imag() > 1e-12) {
      Biquad bq;
      bq.b = {1.0, 0.0, -1.0};  // one zero at z = 1 and one at z = -1
      bq.a = {-2.0 * z.real(), std::norm(z)};
      sections.push_back(bq);
    }
  }
  if (static_cast<int>(sections.size()) != order) {
    throw NumericError("bandpass: unexpected real poles in design");
  }
  std::sort(sections.begin(), sections.end(),
            [](const Biquad& x, const Biquad& y) { return x.a[1] < y.a[1]; });

  // Normalise to unit gain at the digital image of w0.
  const double wc = 2.0 * std::atan(w0 / fs2);
  const cplx zc = std::polar(1.0, -wc);  // z^-1
  cplx h = 1.0;
  for (const auto& s : sections) {
    h *= (s.b[0] + s.b[1] * zc + s.b[2] * zc * zc) /
         (1.0 + s.a[0] * zc + s.a[1] * zc * zc);
  }
  const double gain = 1.0 / std::abs(h);
  for (auto& v : sections.front().b) v *= gain;
  return sections;
}

namespace {

// Steady-state states of each section for a unit step at the cascade input.
std::vector<std::array<double, 2>> steady_state(std::span<const Biquad> sections) {
  std::vector<std::array<double, 2>> zi;
  double scale = 1.0;
  for (const auto& s : sections) {
    const double g =
        (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
    const double z2 = s.b[2] - s.a[1] * g;
    const double z1 = s.b[1] - s.a[0] * g + z2;
    zi.push_back({z1 * scale, z2 * scale});
    scale *= g;
  }
  return zi;
}

}  // namespace

std::vector<double> sosfilt(std::span<const Biquad> sections,
                            std::span<const double> signal,
                            std::optional<double> initial) {
  std::vector<double> y(signal.begin(), signal.end());
  auto zi = steady_state(sections);
  const double x0 = initial.value_or(0.0);
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = zi[k][0] * x0;
    double z2 = zi[k][1] * x0;
    for (auto& v : y) {
      const double x = v;
      const double out = s.b[0] * x + z1;
      z1 = s.b[1] * x - s.a[0] * out + z2;
      z2 = s.b[2] * x - s.a[1] * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sosfiltfilt(std::span<const Biquad> sections,
                                std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) return {};
  std::size_t pad = 3 * (2 * sections.size() + 1);
  pad = std::min(pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) {
    ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);
  }

  auto fwd = sosfilt(sections, ext, ext.front());
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = sosfilt(sections, fwd, fwd.front());
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad),
          bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> bandpass(std::span<const double> signal, int sample_rate_hz,
                             double low_hz, double high_hz) {
  const auto sections =
      design_butterworth_bandpass(4, low_hz, high_hz, sample_rate_hz);
  return sosfiltfilt(sections, signal);
}

// --------------------------------------------------------- scalar features

SampleRange samples_in_span(double start_s, double end_s, int sample_rate_hz,
                            std::size_t n_samples) {
  if (sample_rate_hz <= 0) throw ParameterError("sample rate must be positive");
  const double fs = sample_rate_hz;
  const double first = std::ceil(start_s * fs - 1e-9);
  const double last = std::ceil(end_s * fs - 1e-9);
  if (first < 0.0 || last > static_cast<double>(n_samples) || !(last > first)) {
    throw RangeError(fmt::format(
        "span [{}, {}) s is outside the {:.3f} s signal or empty", start_s,
        end_s, static_cast<double>(n_samples) / fs));
  }
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

double mean_log_energy(std::span<const double> filtered,
                       const corpus::WordToken& token, int sample_rate_hz) {
  const auto range = samples_in_span(token.start_s, token.end_s,
                                     sample_rate_hz, filtered.size());
  double sum = 0.0;
  for (std::size_t i = range.first; i < range.last; ++i) {
    sum += std::log(std::abs(filtered[i]) + kLogEnergyEpsilon);
  }
  return sum / static_cast<double>(range.last - range.first);
}

double duration_per_syllable(const corpus::WordToken& token,
                             const corpus::LexiconEntry& entry) {
  if (entry.syllable_count < 1) {
    throw ValidationError("syllable_count must be >= 1 for '" + entry.word + "'");
  }
  return token.duration_s() / entry.syllable_count;
}

double pause_after(const corpus::WordToken& token,
                   const corpus::WordToken* next) {
  if (next == nullptr) return 0.0;
  if (next->start_s < token.end_s) {
    throw ValidationError(fmt::format(
        "next word '{}' starts at {} before '{}' ends at {}", next->text,
        next->start_s, token.text, token.end_s));
  }
  return next->start_s - token.end_s;
}

// ----------------------------------------------------------------------- f0

std::size_t F0Track::voiced_count() const {
  return static_cast<std::size_t>(
      std::count(voiced_mask.begin(), voiced_mask.end(), true));
}

F0Track track_f0(std::span<const double> signal, int sample_rate_hz,
                 const YinParams& params) {
  if (sample_rate_hz <= 0) throw ParameterError("sample rate must be positive");
  if (!(params.f0_min_hz > 0.0) || !(params.f0_min_hz < params.f0_max_hz)) {
    throw ParameterError(fmt::format("track_f0: need 0 < f0_min ({}) < f0_max ({})",
                                     params.f0_min_hz, params.f0_max_hz));
  }
  if (!(params.frame_hop_s > 0.0) || !(params.frame_len_s > 0.0) ||
      !(params.threshold > 0.0)) {
    throw ParameterError("track_f0: frame parameters must be positive");
  }
  const double fs = sample_rate_hz;
  const auto frame_len = static_cast<std::size_t>(std::lround(params.frame_len_s * fs));
  const auto hop = std::max<std::size_t>(1, std::lround(params.frame_hop_s * fs));
  const auto tau_min = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(fs / params.f0_max_hz)));
  const auto tau_max = static_cast<std::size_t>(std::ceil(fs / params.f0_min_hz));
  if (tau_max + 2 >= frame_len) {
    throw ParameterError(
        "track_f0: frame length too short for the lowest f0");
  }
  const std::size_t window = frame_len - tau_max - 1;
  if (signal.size() < frame_len) {
    throw RangeError("track_f0: signal shorter than one frame");
  }

  const std::size_t n_frames = 1 + (signal.size() - frame_len) / hop;
  F0Track track;
  track.frame_hop_s = static_cast<double>(hop) / fs;
  track.times_s.resize(n_frames);
  track.f0_hz.assign(n_frames, 0.0);
  track.voiced_mask.assign(n_frames, false);

  std::vector<double> diff(tau_max + 2, 0.0);
  std::vector<double> cmnd(tau_max + 2, 1.0);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t offset = f * hop;
    track.times_s[f] = (static_cast<double>(offset) + frame_len / 2.0) / fs;
    const double* x = signal.data() + offset;

    double energy = 0.0;
    for (std::size_t j = 0; j < window; ++j) energy += x[j] * x[j];
    if (energy <= 1e-12 * static_cast<double>(window)) continue;

    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      double acc = 0.0;
      for (std::size_t j = 0; j < window; ++j) {
        const double d = x[j] - x[j + tau];
        acc += d * d;
      }
      diff[tau] = acc;
    }
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      running += diff[tau];
      cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running
                                : 1.0;
    }

    std::size_t best = 0;
    for (std::size_t tau = tau_min; tau <= tau_max; ++tau) {
      if (cmnd[tau] < params.threshold) {
        while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best == 0) continue;

    const double a = cmnd[best - 1];
    const double b = cmnd[best];
    const double c = cmnd[best + 1];
    const double denom = a - 2.0 * b + c;
    double shift = denom > 0.0 ? 0.5 * (a - c) / denom : 0.0;
    shift = std::clamp(shift, -1.0, 1.0);
    track.f0_hz[f] = fs / (static_cast<double>(best) + shift);
    track.voiced_mask[f] = true;
  }
  return track;
}

F0Track clean_f0(const F0Track& track) {
  const std::size_t n = track.size();
  std::vector<double> logf(n, 0.0);
  std::vector<bool> voiced(n, false);
  std::vector<double> voiced_logs;
  for (std::size_t i = 0; i < n; ++i) {
    if (track.voiced_mask[i] && track.f0_hz[i] > 0.0) {
      voiced[i] = true;
      logf[i] = std::log2(track.f0_hz[i]);
      voiced_logs.push_back(logf[i]);
    }
  }
  if (voiced_logs.empty()) {
    throw DegenerateDataError("clean_f0: track has no voiced frames");
  }

  std::sort(voiced_logs.begin(), voiced_logs.end());
  const std::size_t m = voiced_logs.size();
  const double median = m % 2 == 1
                            ? voiced_logs[m / 2]
                            : 0.5 * (voiced_logs[m / 2 - 1] + voiced_logs[m / 2]);
  for (std::size_t i = 0; i < n; ++i) {
    if (voiced[i] && std::abs(logf[i] - median) > 1.0) voiced[i] = false;
  }

  F0Track out = track;
  std::ptrdiff_t prev = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (voiced[i]) {
      prev = static_cast<std::ptrdiff_t>(i);
      continue;
    }
    std::size_t next = i + 1;
    while (next < n && !voiced[next]) ++next;
    double v;
    if (prev < 0) {
      v = logf[next];
    } else if (next >= n) {
      v = logf[prev];
    } else {
      const double t0 = track.times_s[prev];
      const double t1 = track.times_s[next];
      const double w = (track.times_s[i] - t0) / (t1 - t0);
      v = logf[prev] + w * (logf[next] - logf[prev]);
    }
    logf[i] = v;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.f0_hz[i] = std::exp2(logf[i]);
    out.voiced_mask[i] = true;
  }
  return out;
}

double interpolate_log2_f0(const F0Track& cleaned, double t) {
  const auto& ts = cleaned.times_s;
  if (ts.empty()) throw RangeError("interpolate: empty track");
  if (t <= ts.front()) return std::log2(cleaned.f0_hz.front());
  if (t >= ts.back()) return std::log2(cleaned.f0_hz.back());
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - ts.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
  const double a = std::log2(cleaned.f0_hz[lo]);
  const double b = std::log2(cleaned.f0_hz[hi]);
  return a + w * (b - a);
}

double stressed_syllable_midpoint(const corpus::WordToken& token,
                                  const corpus::LexiconEntry& entry) {
  if (entry.stress_syllable_index < 0 ||
      entry.stress_syllable_index >= entry.syllable_count) {
    throw ValidationError("stress index out of range for '" + entry.word + "'");
  }
  if (!token.phones.empty()) {
    // ARPAbet vowels carry a stress digit; 1 marks primary stress.
    std::vector<const corpus::Phone*> vowels;
    for (const auto& p : token.phones) {
      if (!p.label.empty() && std::isdigit(static_cast<unsigned char>(p.label.back()))) {
        if (p.label.back() == '1') return 0.5 * (p.start_s + p.end_s);
        vowels.push_back(&p);
      }
    }
    if (static_cast<int>(vowels.size()) > entry.stress_syllable_index) {
      const auto* p = vowels[entry.stress_syllable_index];
      return 0.5 * (p->start_s + p->end_s);
    }
  }
  const double syllable = token.duration_s() / entry.syllable_count;
  return token.start_s + (entry.stress_syllable_index + 0.5) * syllable;
}

TimeWindow stress_window_bounds(const corpus::WordToken& token,
                                const corpus::LexiconEntry& entry) {
  const double mid = stressed_syllable_midpoint(token, entry);
  return {std::max(token.start_s, mid - kStressHalfWindowS),
          std::min(token.end_s, mid + kStressHalfWindowS)};
}

F0Segment stress_window(const F0Track& cleaned, const corpus::WordToken& token,
                        const corpus::LexiconEntry& entry) {
  const auto w = stress_window_bounds(token, entry);
  if (!(w.end_s > w.start_s)) {
    throw RangeError(fmt::format("stress window [{}, {}] of '{}' is empty",
                                 w.start_s, w.end_s, token.text));
  }
  if (cleaned.size() == 0) throw RangeError("stress_window: empty track");
  F0Segment seg;
  seg.times_s.push_back(w.start_s);
  seg.f0_hz.push_back(std::exp2(interpolate_log2_f0(cleaned, w.start_s)));
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    const double t = cleaned.times_s[i];
    if (t > w.start_s && t < w.end_s) {
      seg.times_s.push_back(t);
      seg.f0_hz.push_back(cleaned.f0_hz[i]);
    }
  }
  seg.times_s.push_back(w.end_s);
  seg.f0_hz.push_back(std::exp2(interpolate_log2_f0(cleaned, w.end_s)));
  return seg;
}

// ---------------------------------------------------------------------- DCT

std::vector<double> dct2_orthonormal(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    out[k] = (k == 0 ? s0 : sk) * acc;
  }
  return out;
}

std::vector<double> idct2_orthonormal(std::span<const double> coefficients) {
  const std::size_t n = coefficients.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = s0 * coefficients[0];
    for (std::size_t k = 1; k < n; ++k) {
      acc += sk * coefficients[k] *
             std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    out[i] = acc;
  }
  return out;
}

std::vector<double> resample_linear(std::span<const double> times,
                                    std::span<const double> values,
                                    int n_points) {
  if (times.size() != values.size() || times.size() < 2 || n_points < 2) {
    throw ParameterError("resample_linear: need >= 2 samples and >= 2 points");
  }
  const double t0 = times.front();
  const double t1 = times.back();
  if (!(t1 > t0)) throw ParameterError("resample_linear: zero-length curve");
  std::vector<double> out(static_cast<std::size_t>(n_points));
  std::size_t seg = 0;
  for (int j = 0; j < n_points; ++j) {
    const double t = j == n_points - 1 ? t1 : t0 + (t1 - t0) * j / (n_points - 1);
    while (seg + 2 < times.size() && times[seg + 1] < t) ++seg;
    const double ta = times[seg];
    const double tb = times[seg + 1];
    const double w = tb > ta ? std::clamp((t - ta) / (tb - ta), 0.0, 1.0) : 0.0;
    out[static_cast<std::size_t>(j)] = values[seg] + w * (values[seg + 1] - values[seg]);
  }
  return out;
}

std::vector<double> dct_parameterize(const F0Segment& segment, int k,
                                     ContourDomain domain) {
  if (k < 1 || k > kContourPoints) {
    throw ParameterError(fmt::format("dct_parameterize: k = {} outside [1, {}]",
                                     k, kContourPoints));
  }
  if (segment.times_s.size() < 2 || segment.f0_hz.size() != segment.times_s.size()) {
    throw ParameterError("dct_parameterize: segment needs >= 2 samples");
  }
  std::vector<double> curve(segment.f0_hz.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    curve[i] = domain == ContourDomain::kLog2 ? std::log2(segment.f0_hz[i])
                                              : segment.f0_hz[i];
  }
  const auto resampled = resample_linear(segment.times_s, curve, kContourPoints);
  auto coefficients = dct2_orthonormal(resampled);
  coefficients.resize(static_cast<std::size_t>(k));
  return coefficients;
}

// --------------------------------------------------------------- columns

std::vector<double> relative_prominence(std::span<const double> prominence) {
  std::vector<double> out(prominence.size(), 0.0);
  for (std::size_t t = 0; t < prominence.size(); ++t) {
    if (!std::isfinite(prominence[t])) {
      throw ValidationError(fmt::format(
          "relative_prominence: missing prominence for token {}", t));
    }
    if (t == 0) continue;
    const std::size_t first = t >= 3 ? t - 3 : 0;
    double sum = 0.0;
    for (std::size_t j = first; j < t; ++j) sum += prominence[j];
    out[t] = prominence[t] - sum / static_cast<double>(t - first);
  }
  return out;
}

ZScoreStats fit_zscore(std::span<const double> train_values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const double v : train_values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw DegenerateDataError("zscore: no finite train values");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const double v : train_values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0)) throw DegenerateDataError("zscore: zero variance column");
  return {mean, sd};
}

double apply_zscore(double value, const ZScoreStats& stats) {
  return (value - stats.mean) / stats.std;
}

}  // namespace prosody_mi::dsp
