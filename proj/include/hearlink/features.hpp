#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "hearlink/audio.hpp"

namespace hearlink {

inline constexpr double kMinF0 = 60.0;
inline constexpr double kMaxF0 = 500.0;
inline constexpr double kVoicingThreshold = 0.3;
inline constexpr double kHnrFloorDb = -20.0;
inline constexpr double kHnrCeilingDb = 40.0;

/// Frame-level low-level descriptors.
struct FrameLLD {
    std::int64_t frame_index = 0;
    double time = 0.0;  // frame start, seconds from stream origin
    bool voiced = false;
    bool quality_ok = true;
    std::optional<double> f0;
    double intensity_db = -120.0;
    double spectral_flux = 0.0;
    std::optional<double> hnr_db;
    std::optional<double> snr_db;  // filled per window, relative to its non-speech frames
};

// --- pitch ------------------------------------------------------------------

/// Normalized cross-correlation of a frame with itself shifted by `lag` samples,
/// computed over the overlapping part only.
template <typename Derived>
double normalized_autocorrelation(const Eigen::ArrayBase<Derived>& x, Eigen::Index lag)
{
    const Eigen::Index n = x.size() - lag;
    if (lag < 0 || n <= 0) {
        return 0.0;
    }
    const auto head = x.head(n);
    const auto tail = x.tail(n);
    const double denom = std::sqrt(head.square().sum() * tail.square().sum());
    if (denom <= 0.0) {
        return 0.0;
    }
    return (head * tail).sum() / denom;
}

struct PitchEstimate {
    double f0 = 0.0;
    double lag = 0.0;       // fractional lag in samples
    double strength = 0.0;  // interpolated correlation peak
};

/// Autocorrelation pitch with parabolic peak interpolation over 60-500 Hz.
/// Absent when the correlation peak falls below the voicing threshold.
std::optional<PitchEstimate> estimate_pitch(const Signal& frame, int sample_rate = kCanonicalSampleRate);

inline std::optional<double> estimate_f0(const Signal& frame, int sample_rate = kCanonicalSampleRate)
{
    if (auto p = estimate_pitch(frame, sample_rate)) {
        return p->f0;
    }
    return std::nullopt;
}

// --- energy / noise -----------------------------------------------------------

template <typename Derived>
double intensity(const Eigen::ArrayBase<Derived>& frame)
{
    return 10.0 * std::log10(frame.square().mean() + 1e-12);
}

double hnr_from_correlation(double r_max);

/// Harmonics-to-noise ratio at the estimated pitch; absent for unpitched frames.
std::optional<double> hnr(const Signal& frame, int sample_rate = kCanonicalSampleRate);

/// HNR with the pitch lag supplied by the caller.
double hnr_at_lag(const Signal& frame, Eigen::Index lag);

/// Mean voiced level minus mean non-speech level, both in dB.
std::optional<double> snr_estimate(std::span<const double> voiced_db, std::span<const double> unvoiced_db);

// --- spectrum -------------------------------------------------------------------

/// Hann-windowed magnitude spectrum (bins 0..N/2) scaled by the window sum.
class SpectrumAnalyzer {
public:
    Signal magnitude(const Signal& frame);

private:
    Eigen::FFT<double> fft_;
    Signal window_;
    std::vector<double> time_;
    std::vector<std::complex<double>> freq_;
};

/// L2 norm of the positive bin-wise increase between consecutive spectra over the bin count.
double spectral_flux(const Signal& previous_magnitude, const Signal& magnitude);

double spectral_flux(const Frame& previous, const Frame& current);

// --- glottal periods ----------------------------------------------------------------

struct PitchPoint {
    double time = 0.0;  // frame centre
    double f0 = 0.0;
};

struct PeriodTrack {
    std::vector<double> pulse_times;
    std::vector<double> periods;
    std::vector<double> amplitudes;
    double glottal_pulse_rate = 0.0;
};

/// Places glottal pulses at waveform peaks one local period apart across a run of
/// pitched frames. `run` holds the run's samples starting at `run_start` seconds.
std::optional<PeriodTrack> track_pulses(const Signal& run, int sample_rate, double run_start,
                                        std::span<const PitchPoint> pitch);

/// mean(|x_i - x_{i-1}|) / mean(x_i); throws InsufficientPeriods below two values.
double local_perturbation(std::span<const double> values);

inline double jitter(const PeriodTrack& track) { return local_perturbation(track.periods); }
inline double shimmer(const PeriodTrack& track) { return local_perturbation(track.amplitudes); }

// --- pauses and tempo ------------------------------------------------------------

struct ProsodyOptions {
    double min_pause = 0.3;        // s
    double prominence_db = 2.0;    // syllable nucleus prominence
    double min_peak_spacing = 0.1; // s
};

struct PauseStats {
    std::optional<double> mean_duration;
    double frequency_per_min = 0.0;
    std::vector<double> durations;
};

/// Gaps of at least `min_pause` between consecutive segments, clipped to the window.
std::optional<PauseStats> pause_stats(std::span<const VoicedSegment> segments, double window_start,
                                      double window_len, const ProsodyOptions& options = {});

struct SegmentTempo {
    double speech_rate = 0.0;
    double articulation_rate = 0.0;
    std::vector<double> pause_durations;
    double pause_frequency = 0.0;
    int nuclei = 0;
};

struct IntensityPoint {
    double time = 0.0;
    double intensity_db = -120.0;
    bool voiced = false;
};

/// Syllable nuclei counted as prominent intensity peaks inside voiced runs.
int count_syllable_nuclei(std::span<const IntensityPoint> track, const ProsodyOptions& options = {});

std::optional<SegmentTempo> tempo(std::span<const VoicedSegment> segments, std::span<const IntensityPoint> track,
                                  double window_start, double window_len, const ProsodyOptions& options = {});

// --- per-frame extraction ---------------------------------------------------------------

/// Stateful per-stream extractor (keeps the previous spectrum for flux).
class LldExtractor {
public:
    explicit LldExtractor(int sample_rate = kCanonicalSampleRate) : sample_rate_(sample_rate) {}

    FrameLLD extract(const Frame& frame);

private:
    int sample_rate_;
    SpectrumAnalyzer spectrum_;
    std::optional<Signal> previous_magnitude_;
};

}  // namespace hearlink
