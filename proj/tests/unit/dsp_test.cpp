#include "prosody_mi/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "prosody_mi/error.hpp"

namespace pm = prosody_mi;
namespace dsp = prosody_mi::dsp;
using prosody_mi::corpus::LexiconEntry;
using prosody_mi::corpus::WordToken;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double freq, int fs, double seconds, double amp = 1.0) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2.0 * kPi * freq * i / fs);
  return x;
}

std::vector<double> sawtooth(double freq, int fs, double seconds) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double phase = std::fmod(freq * i / fs, 1.0);
    x[i] = 0.5 * (2.0 * phase - 1.0);
  }
  return x;
}

double rms(const std::vector<double>& x, std::size_t from, std::size_t to) {
  double acc = 0.0;
  for (std::size_t i = from; i < to; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(to - from));
}

WordToken word(double start, double end) {
  WordToken t;
  t.text = "w";
  t.start_s = start;
  t.end_s = end;
  return t;
}

LexiconEntry entry(int syllables, int stress) {
  return {"w", syllables, stress, pm::corpus::SyllableSource::kLexicon};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace

TEST(Bandpass, PassbandSinePreserved) {
  const int fs = 24000;
  const auto x = sine(1000.0, fs, 1.0);
  const auto y = dsp::bandpass(x, fs);
  ASSERT_EQ(y.size(), x.size());
  const double ratio = rms(y, 2400, 21600) / rms(x, 2400, 21600);
  EXPECT_NEAR(ratio, 1.0, 0.05);
}

TEST(Bandpass, StopbandSineAttenuated) {
  const int fs = 24000;
  const auto x = sine(50.0, fs, 1.0);
  const auto y = dsp::bandpass(x, fs);
  const double db = 20.0 * std::log10(rms(y, 2400, 21600) / rms(x, 2400, 21600));
  EXPECT_LE(db, -20.0);
}

TEST(Bandpass, ZeroInZeroOut) {
  const std::vector<double> x(1000, 0.0);
  for (double v : dsp::bandpass(x, 16000)) EXPECT_EQ(v, 0.0);
}

TEST(Bandpass, Linear) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(4000), y(4000), mix(4000);
  const double a = 1.7, b = -0.6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = n(rng);
    y[i] = n(rng);
    mix[i] = a * x[i] + b * y[i];
  }
  const auto fx = dsp::bandpass(x, 16000);
  const auto fy = dsp::bandpass(y, 16000);
  const auto fm = dsp::bandpass(mix, 16000);
  double scale = 0.0;
  for (double v : fm) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-9 * scale);
  }
}

TEST(Bandpass, InvalidEdges) {
  const std::vector<double> x(1000, 0.0);
  EXPECT_THROW(dsp::bandpass(x, 16000, 0.0, 5000.0), pm::ParameterError);
  EXPECT_THROW(dsp::bandpass(x, 16000, 5000.0, 300.0), pm::ParameterError);
  EXPECT_THROW(dsp::bandpass(x, 8000, 300.0, 5000.0), pm::ParameterError);
}

TEST(Butterworth, UnitGainAtCentre) {
  const double fs = 16000.0, lo = 300.0, hi = 5000.0;
  const auto sos = dsp::design_butterworth_bandpass(4, lo, hi, fs);
  ASSERT_EQ(sos.size(), 4u);
  // Evaluate |H| at the geometric centre of the prewarped band edges.
  const double wl = std::tan(kPi * lo / fs);
  const double wh = std::tan(kPi * hi / fs);
  const double w = 2.0 * std::atan(std::sqrt(wl * wh));
  const std::complex<double> z = std::polar(1.0, w);
  std::complex<double> h = 1.0;
  for (const auto& s : sos) {
    const auto zi = 1.0 / z;
    h *= (s.b[0] + s.b[1] * zi + s.b[2] * zi * zi) / (1.0 + s.a[0] * zi + s.a[1] * zi * zi);
  }
  EXPECT_NEAR(std::abs(h), 1.0, 1e-9);
}

TEST(Energy, ConstantAmplitudes) {
  const int fs = 1000;
  const auto tok = word(0.0, 1.0);
  std::vector<double> ones(1000, -1.0);
  EXPECT_NEAR(dsp::mean_log_energy(ones, tok, fs), 0.0, 1e-7);
  std::vector<double> es(1000, std::numbers::e);
  EXPECT_NEAR(dsp::mean_log_energy(es, tok, fs), 1.0, 1e-7);
  std::vector<double> half(1000, 1.0);
  std::fill(half.begin() + 500, half.end(), std::numbers::e);
  EXPECT_NEAR(dsp::mean_log_energy(half, tok, fs), 0.5, 1e-7);
}

TEST(Energy, SpanOutsideSignal) {
  std::vector<double> x(100, 1.0);
  EXPECT_THROW(dsp::mean_log_energy(x, word(0.05, 0.2), 1000), pm::RangeError);
}

TEST(Duration, PerSyllable) {
  EXPECT_NEAR(dsp::duration_per_syllable(word(1.0, 1.6), entry(3, 0)), 0.20, 1e-12);
  EXPECT_NEAR(dsp::duration_per_syllable(word(0.0, 0.25), entry(1, 0)), 0.25, 1e-12);
}

TEST(Pause, Examples) {
  const auto a = word(0.9, 1.2);
  const auto b = word(1.45, 1.9);
  EXPECT_NEAR(dsp::pause_after(a, &b), 0.25, 1e-12);
  const auto c = word(1.2, 1.5);
  EXPECT_EQ(dsp::pause_after(a, &c), 0.0);
  EXPECT_EQ(dsp::pause_after(a, nullptr), 0.0);
  const auto overlap = word(1.1, 1.5);
  EXPECT_THROW(dsp::pause_after(a, &overlap), pm::ValidationError);
}

TEST(Pause, DurationsAndPausesTileTheUtterance) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ticks(1, 200);
  // Times on a 1/1024 s grid are exact in binary floating point.
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<WordToken> toks;
    double t = ticks(rng) / 1024.0;
    for (int i = 0; i < 12; ++i) {
      const double start = t;
      const double end = start + ticks(rng) / 1024.0;
      toks.push_back(word(start, end));
      t = end + (ticks(rng) % 3 == 0 ? 0.0 : ticks(rng) / 1024.0);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const WordToken* next = i + 1 < toks.size() ? &toks[i + 1] : nullptr;
      total += toks[i].duration_s() + dsp::pause_after(toks[i], next);
    }
    EXPECT_EQ(total, toks.back().end_s - toks.front().start_s);
  }
}

TEST(Yin, Sawtooth120Hz) {
  const int fs = 16000;
  const auto track = dsp::track_f0(sawtooth(120.0, fs, 1.0), fs);
  std::vector<double> voiced;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (track.voiced_mask[i]) voiced.push_back(track.f0_hz[i]);
  }
  ASSERT_GT(voiced.size(), track.size() / 2);
  EXPECT_NEAR(median(voiced), 120.0, 2.0);
}

TEST(Yin, WhiteNoiseMostlyUnvoiced) {
  const int fs = 16000;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> x(fs);
  for (auto& v : x) v = n(rng);
  const auto track = dsp::track_f0(x, fs);
  EXPECT_LE(static_cast<double>(track.voiced_count()), 0.1 * track.size());
}

TEST(Yin, SilenceUnvoiced) {
  const auto track = dsp::track_f0(std::vector<double>(8000, 0.0), 16000);
  EXPECT_GT(track.size(), 0u);
  EXPECT_EQ(track.voiced_count(), 0u);
  EXPECT_THROW(dsp::clean_f0(track), pm::DegenerateDataError);
}

TEST(Yin, BadParameters) {
  const std::vector<double> x(8000, 0.0);
  dsp::YinParams p;
  p.f0_min_hz = 400.0;
  p.f0_max_hz = 60.0;
  EXPECT_THROW(dsp::track_f0(x, 16000, p), pm::ParameterError);
  p = {};
  p.frame_hop_s = 0.0;
  EXPECT_THROW(dsp::track_f0(x, 16000, p), pm::ParameterError);
}

TEST(Yin, HarmonicSweepMonotone) {
  const int fs = 16000;
  const double seconds = 2.0;
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  double phase = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 100.0 + 100.0 * (static_cast<double>(i) / x.size());
    phase += 2.0 * kPi * f / fs;
    double v = 0.0;
    for (int h = 1; h <= 5; ++h) v += std::sin(h * phase) / h;
    x[i] = 0.3 * v;
  }
  const auto cleaned = dsp::clean_f0(dsp::track_f0(x, fs));
  std::vector<double> smooth;
  for (std::size_t i = 2; i + 2 < cleaned.size(); ++i) {
    smooth.push_back(median({cleaned.f0_hz.begin() + i - 2, cleaned.f0_hz.begin() + i + 3}));
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_GE(smooth[i], smooth[i - 1]) << i;
  EXPECT_NEAR(smooth.front(), 100.0, 5.0);
  EXPECT_NEAR(smooth.back(), 200.0, 8.0);
}

TEST(CleanF0, OctaveOutlierInterpolated) {
  dsp::F0Track t;
  t.times_s = {0.0, 0.01, 0.02};
  t.f0_hz = {110.0, 440.0, 112.0};
  t.voiced_mask = {true, true, true};
  const auto c = dsp::clean_f0(t);
  EXPECT_NEAR(c.f0_hz[1], std::sqrt(110.0 * 112.0), 1e-9);
  EXPECT_NEAR(c.f0_hz[1], 111.0, 0.01);
  EXPECT_EQ(c.voiced_count(), 3u);
}

TEST(CleanF0, SteadyIsIdentityAndEdgesExtend) {
  dsp::F0Track t;
  t.times_s = {0.0, 0.01, 0.02, 0.03};
  t.f0_hz = {100.0, 100.0, 100.0, 100.0};
  t.voiced_mask = {true, true, true, true};
  const auto same = dsp::clean_f0(t);
  for (double f : same.f0_hz) EXPECT_DOUBLE_EQ(f, 100.0);

  t.f0_hz = {150.0, 0.0, 0.0, 0.0};
  t.voiced_mask = {true, false, false, false};
  const auto ext = dsp::clean_f0(t);
  for (double f : ext.f0_hz) EXPECT_DOUBLE_EQ(f, 150.0);
  for (bool v : ext.voiced_mask) EXPECT_TRUE(v);
}

TEST(StressWindow, Bounds) {
  const auto whole = dsp::stress_window_bounds(word(2.0, 2.3), entry(1, 0));
  EXPECT_DOUBLE_EQ(whole.start_s, 2.0);
  EXPECT_DOUBLE_EQ(whole.end_s, 2.3);
  const auto mid = dsp::stress_window_bounds(word(1.0, 1.9), entry(3, 1));
  EXPECT_NEAR(mid.start_s - 1.0, 0.20, 1e-12);
  EXPECT_NEAR(mid.end_s - 1.0, 0.70, 1e-12);
  EXPECT_THROW(dsp::stress_window_bounds(word(1.0, 1.9), entry(3, 3)), pm::ValidationError);
}

TEST(StressWindow, SegmentFromTrack) {
  dsp::F0Track t;
  for (int i = 0; i <= 200; ++i) {
    t.times_s.push_back(i * 0.01);
    t.f0_hz.push_back(100.0 + i);
    t.voiced_mask.push_back(true);
  }
  const auto seg = dsp::stress_window(t, word(0.505, 0.795), entry(1, 0));
  ASSERT_GE(seg.times_s.size(), 2u);
  EXPECT_DOUBLE_EQ(seg.times_s.front(), 0.505);
  EXPECT_DOUBLE_EQ(seg.times_s.back(), 0.795);
  for (std::size_t i = 1; i < seg.times_s.size(); ++i) EXPECT_GT(seg.times_s[i], seg.times_s[i - 1]);
}

TEST(Dct, ConstantCurve) {
  dsp::F0Segment seg;
  const double c = 7.0;
  for (int i = 0; i < 20; ++i) {
    seg.times_s.push_back(i * 0.01);
    seg.f0_hz.push_back(std::exp2(c));
  }
  const auto coef = dsp::dct_parameterize(seg, 8);
  ASSERT_EQ(coef.size(), 8u);
  EXPECT_NEAR(coef[0], c * 10.0, 1e-9);
  for (int i = 1; i < 8; ++i) EXPECT_NEAR(coef[i], 0.0, 1e-9);
}

TEST(Dct, BasisVector) {
  std::vector<double> x(100);
  for (int i = 0; i < 100; ++i) x[i] = std::cos(kPi * (2 * i + 1) * 1.0 / 200.0);
  const auto coef = dsp::dct2_orthonormal(x);
  for (int k = 0; k < 100; ++k) {
    if (k == 1) {
      EXPECT_NEAR(coef[k], std::sqrt(50.0), 1e-9);
    } else {
      EXPECT_NEAR(coef[k], 0.0, 1e-9);
    }
  }
}

TEST(Dct, RoundTripAllCoefficients) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(80.0, 300.0);
  dsp::F0Segment seg;
  for (int i = 0; i < 37; ++i) {
    seg.times_s.push_back(0.3 + i * 0.0123);
    seg.f0_hz.push_back(u(rng));
  }
  std::vector<double> logs;
  for (double f : seg.f0_hz) logs.push_back(std::log2(f));
  const auto resampled = dsp::resample_linear(seg.times_s, logs, dsp::kContourPoints);
  const auto coef = dsp::dct_parameterize(seg, 100);
  const auto back = dsp::idct2_orthonormal(coef);
  ASSERT_EQ(back.size(), resampled.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], resampled[i], 1e-9);
}

TEST(Dct, ParameterErrors) {
  dsp::F0Segment seg{{0.0, 0.1}, {100.0, 110.0}};
  EXPECT_THROW(dsp::dct_parameterize(seg, 101), pm::ParameterError);
  EXPECT_THROW(dsp::dct_parameterize(seg, 0), pm::ParameterError);
  dsp::F0Segment one{{0.0}, {100.0}};
  EXPECT_THROW(dsp::dct_parameterize(one, 8), pm::ParameterError);
}

TEST(Dct, HzDomain) {
  dsp::F0Segment seg{{0.0, 0.1}, {100.0, 100.0}};
  const auto coef = dsp::dct_parameterize(seg, 2, dsp::ContourDomain::kHz);
  EXPECT_NEAR(coef[0], 1000.0, 1e-9);
}

TEST(Prominence, Relative) {
  const auto r = dsp::relative_prominence(std::vector<double>{2, 2, 2, 5});
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 0.0);
  EXPECT_DOUBLE_EQ(r[3], 3.0);
  EXPECT_DOUBLE_EQ(dsp::relative_prominence(std::vector<double>{4, 1})[1], -3.0);
  const auto window = dsp::relative_prominence(std::vector<double>{9, 1, 2, 3, 10});
  EXPECT_DOUBLE_EQ(window[4], 10.0 - 2.0);
  for (double v : dsp::relative_prominence(std::vector<double>(6, 1.5))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(dsp::relative_prominence(std::vector<double>{1.0, std::nan("")}), pm::ValidationError);
}

TEST(ZScore, Examples) {
  const auto s = dsp::fit_zscore(std::vector<double>{0.0, 2.0});
  EXPECT_DOUBLE_EQ(dsp::apply_zscore(1.0, s), 0.0);
  EXPECT_DOUBLE_EQ(dsp::apply_zscore(2.0, s), 1.0);
  EXPECT_THROW(dsp::fit_zscore(std::vector<double>{3.0, 3.0, 3.0}), pm::DegenerateDataError);
}

TEST(ZScore, TrainColumnStandardised) {
  std::mt19937_64 rng(23);
  std::gamma_distribution<double> g(2.0, 3.0);
  std::vector<double> x(5000);
  for (auto& v : x) v = g(rng) + 100.0;
  const auto s = dsp::fit_zscore(x);
  double mean = 0.0;
  for (double v : x) mean += dsp::apply_zscore(v, s);
  mean /= x.size();
  double var = 0.0;
  for (double v : x) var += std::pow(dsp::apply_zscore(v, s) - mean, 2);
  var /= x.size();
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
}
