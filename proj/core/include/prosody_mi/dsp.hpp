#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "prosody_mi/corpus.hpp"

namespace prosody_mi::dsp {

// ------------------------------------------------------------------ filters

// One second-order section, transposed direct form II. a0 is normalised to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};  // a1, a2
};

// Butterworth band-pass of the given prototype order (4 gives 8 poles in
// four sections), unity gain at the geometric band centre.
std::vector<Biquad> design_butterworth_bandpass(int order, double low_hz,
                                                double high_hz,
                                                double sample_rate_hz);

// Single forward pass with steady-state initial conditions scaled by x0.
std::vector<double> sosfilt(std::span<const Biquad> sections,
                            std::span<const double> signal,
                            std::optional<double> initial = std::nullopt);

// Zero-phase forward-backward filtering with odd-extension padding.
std::vector<double> sosfiltfilt(std::span<const Biquad> sections,
                                std::span<const double> signal);

// Zero-phase 4th-order Butterworth band-pass. Output length equals input.
std::vector<double> bandpass(std::span<const double> signal, int sample_rate_hz,
                             double low_hz = 300.0, double high_hz = 5000.0);

// --------------------------------------------------------- scalar features

inline constexpr double kLogEnergyEpsilon = 1e-8;

// Sample index range [first, last) covered by [start_s, end_s).
struct SampleRange {
  std::size_t first = 0;
  std::size_t last = 0;
};
SampleRange samples_in_span(double start_s, double end_s, int sample_rate_hz,
                            std::size_t n_samples);

// Mean of log(|x| + 1e-8) over the samples inside the token span.
double mean_log_energy(std::span<const double> filtered,
                       const corpus::WordToken& token, int sample_rate_hz);

double duration_per_syllable(const corpus::WordToken& token,
                             const corpus::LexiconEntry& entry);

// Silence to the next word's onset; 0 for the last word.
double pause_after(const corpus::WordToken& token,
                   const corpus::WordToken* next);

// ----------------------------------------------------------------------- f0

struct F0Track {
  std::vector<double> times_s;
  std::vector<double> f0_hz;  // 0 encodes unvoiced before cleaning
  double frame_hop_s = 0.01;
  std::vector<bool> voiced_mask;

  std::size_t size() const { return times_s.size(); }
  std::size_t voiced_count() const;
};

struct YinParams {
  double f0_min_hz = 60.0;
  double f0_max_hz = 400.0;
  double frame_hop_s = 0.010;
  double frame_len_s = 0.040;
  double threshold = 0.15;
};

// YIN pitch tracker: difference function, cumulative-mean normalisation,
// absolute threshold and parabolic refinement of the selected dip.
F0Track track_f0(std::span<const double> signal, int sample_rate_hz,
                 const YinParams& params = {});

// Octave outlier removal around the median log2 f0, then log2-linear
// interpolation over gaps with nearest-value extension at the edges.
// Throws DegenerateDataError when no frame is voiced.
F0Track clean_f0(const F0Track& track);

// f0 samples (Hz) over a time interval of a cleaned track.
struct F0Segment {
  std::vector<double> times_s;
  std::vector<double> f0_hz;
};

struct TimeWindow {
  double start_s = 0.0;
  double end_s = 0.0;
};

// Stressed-syllable midpoint. Uses the primary-stress vowel phone when phone
// alignments are present, else a uniform split of the word into syllables.
double stressed_syllable_midpoint(const corpus::WordToken& token,
                                  const corpus::LexiconEntry& entry);

inline constexpr double kStressHalfWindowS = 0.25;

TimeWindow stress_window_bounds(const corpus::WordToken& token,
                                const corpus::LexiconEntry& entry);

// Cleaned track restricted to the stress window, with interpolated samples
// at the window edges.
F0Segment stress_window(const F0Track& cleaned, const corpus::WordToken& token,
                        const corpus::LexiconEntry& entry);

// Interpolated value of a cleaned track at time t, in log2 space.
double interpolate_log2_f0(const F0Track& cleaned, double t);

// ---------------------------------------------------------------------- DCT

inline constexpr int kContourPoints = 100;

enum class ContourDomain { kLog2, kHz };

// Orthonormal DCT-II and its inverse (DCT-III).
std::vector<double> dct2_orthonormal(std::span<const double> x);
std::vector<double> idct2_orthonormal(std::span<const double> coefficients);

// Linear resampling of (t, y) onto n equally spaced points over [t0, t_end].
std::vector<double> resample_linear(std::span<const double> times,
                                    std::span<const double> values,
                                    int n_points);

// Resamples the curve (log2 f0 by default) to 100 points and returns the
// first k orthonormal DCT-II coefficients.
std::vector<double> dct_parameterize(const F0Segment& segment, int k = 8,
                                     ContourDomain domain = ContourDomain::kLog2);

// --------------------------------------------------------------- columns

// prominence(t) minus the mean prominence of up to three preceding tokens of
// the same utterance; 0 for the first token.
std::vector<double> relative_prominence(std::span<const double> prominence);

struct ZScoreStats {
  double mean = 0.0;
  double std = 1.0;
};

// Population mean and standard deviation of the (finite) train values.
// Throws DegenerateDataError on zero variance.
ZScoreStats fit_zscore(std::span<const double> train_values);
double apply_zscore(double value, const ZScoreStats& stats);

}  // namespace prosody_mi::dsp
