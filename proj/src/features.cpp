#include "hearlink/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace hearlink {

namespace {

struct ParabolicPeak {
    double offset = 0.0;
    double value = 0.0;
};

ParabolicPeak parabolic(double left, double centre, double right)
{
    const double denom = left - 2.0 * centre + right;
    if (denom >= 0.0) {
        return {0.0, centre};
    }
    const double offset = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
    return {offset, centre - 0.25 * (left - right) * offset};
}

}  // namespace

std::optional<PitchEstimate> estimate_pitch(const Signal& frame, int sample_rate)
{
    const Signal x = frame - frame.mean();
    const auto n = x.size();
    const auto min_lag = static_cast<Eigen::Index>(std::floor(sample_rate / kMaxF0));
    const auto max_lag = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(sample_rate / kMinF0)), n - 3);
    if (max_lag <= min_lag) {
        return std::nullopt;
    }

    // r[k] holds the correlation at lag (min_lag - 1 + k)
    std::vector<double> r(static_cast<std::size_t>(max_lag - min_lag + 3));
    for (std::size_t k = 0; k < r.size(); ++k) {
        r[k] = normalized_autocorrelation(x, min_lag - 1 + static_cast<Eigen::Index>(k));
    }
    const double global_max = *std::max_element(r.begin() + 1, r.end() - 1);
    if (global_max < kVoicingThreshold) {
        return std::nullopt;
    }

    // Earliest local maximum close to the global one, which avoids period doubling.
    const double accept = std::max(kVoicingThreshold, 0.9 * global_max);
    for (std::size_t k = 1; k + 1 < r.size(); ++k) {
        if (r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] >= accept) {
            const auto peak = parabolic(r[k - 1], r[k], r[k + 1]);
            const double lag = static_cast<double>(min_lag - 1 + static_cast<Eigen::Index>(k)) + peak.offset;
            const double f0 = sample_rate / lag;
            if (f0 < kMinF0 || f0 > kMaxF0) {
                return std::nullopt;
            }
            return PitchEstimate{f0, lag, std::min(peak.value, 1.0)};
        }
    }
    return std::nullopt;
}

double hnr_from_correlation(double r_max)
{
    if (r_max >= 1.0) {
        return kHnrCeilingDb;
    }
    if (r_max <= 0.0) {
        return kHnrFloorDb;
    }
    return std::clamp(10.0 * std::log10(r_max / (1.0 - r_max)), kHnrFloorDb, kHnrCeilingDb);
}

std::optional<double> hnr(const Signal& frame, int sample_rate)
{
    if (auto p = estimate_pitch(frame, sample_rate)) {
        return hnr_from_correlation(p->strength);
    }
    return std::nullopt;
}

double hnr_at_lag(const Signal& frame, Eigen::Index lag)
{
    const Signal x = frame - frame.mean();
    return hnr_from_correlation(normalized_autocorrelation(x, lag));
}

std::optional<double> snr_estimate(std::span<const double> voiced_db, std::span<const double> unvoiced_db)
{
    if (voiced_db.empty() || unvoiced_db.empty()) {
        return std::nullopt;
    }
    const double v = std::accumulate(voiced_db.begin(), voiced_db.end(), 0.0) / static_cast<double>(voiced_db.size());
    const double u =
        std::accumulate(unvoiced_db.begin(), unvoiced_db.end(), 0.0) / static_cast<double>(unvoiced_db.size());
    return v - u;
}

Signal SpectrumAnalyzer::magnitude(const Signal& frame)
{
    const auto n = frame.size();
    if (window_.size() != n) {
        window_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        }
        time_.assign(static_cast<std::size_t>(n), 0.0);
    }
    Eigen::Map<Signal>(time_.data(), n) = frame * window_;
    fft_.fwd(freq_, time_);
    const double scale = window_.sum();
    const Eigen::Index bins = n / 2 + 1;
    Signal mag(bins);
    for (Eigen::Index k = 0; k < bins; ++k) {
        mag[k] = std::abs(freq_[static_cast<std::size_t>(k)]) / scale;
    }
    return mag;
}

double spectral_flux(const Signal& previous_magnitude, const Signal& magnitude)
{
    if (previous_magnitude.size() != magnitude.size() || magnitude.size() == 0) {
        return 0.0;
    }
    const Signal rise = (magnitude - previous_magnitude).max(0.0);
    return std::sqrt(rise.square().sum()) / static_cast<double>(magnitude.size());
}

double spectral_flux(const Frame& previous, const Frame& current)
{
    SpectrumAnalyzer analyzer;
    const Signal prev = analyzer.magnitude(previous.samples);
    return spectral_flux(prev, analyzer.magnitude(current.samples));
}

std::optional<PeriodTrack> track_pulses(const Signal& run, int sample_rate, double run_start,
                                        std::span<const PitchPoint> pitch)
{
    if (pitch.size() < 3 || run.size() < 3) {
        return std::nullopt;
    }
    const auto n = run.size();

    auto local_period = [&](double sample_pos) {
        const double t = run_start + sample_pos / sample_rate;
        auto it = std::lower_bound(pitch.begin(), pitch.end(), t,
                                   [](const PitchPoint& p, double value) { return p.time < value; });
        if (it == pitch.end()) {
            it = std::prev(it);
        } else if (it != pitch.begin() && (t - std::prev(it)->time) < (it->time - t)) {
            it = std::prev(it);
        }
        return sample_rate / it->f0;
    };

    auto peak_in = [&](Eigen::Index lo, Eigen::Index hi) {
        Eigen::Index best = lo;
        for (Eigen::Index i = lo + 1; i <= hi; ++i) {
            if (run[i] > run[best]) {
                best = i;
            }
        }
        ParabolicPeak refined{0.0, run[best]};
        if (best > 0 && best + 1 < n) {
            refined = parabolic(run[best - 1], run[best], run[best + 1]);
        }
        return std::pair{static_cast<double>(best) + refined.offset, refined.value};
    };

    PeriodTrack track;
    const auto first_hi = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(local_period(0.0))), n - 1);
    auto [pos, amp] = peak_in(0, first_hi);
    track.pulse_times.push_back(run_start + pos / sample_rate);
    track.amplitudes.push_back(amp);

    while (true) {
        const double period = local_period(pos);
        const auto lo = static_cast<Eigen::Index>(std::ceil(pos + 0.75 * period));
        const auto hi = static_cast<Eigen::Index>(std::floor(pos + 1.25 * period));
        if (hi >= n - 1 || lo > hi) {
            break;
        }
        const auto [next, next_amp] = peak_in(lo, hi);
        if (next <= pos) {
            break;
        }
        track.periods.push_back((next - pos) / sample_rate);
        track.pulse_times.push_back(run_start + next / sample_rate);
        track.amplitudes.push_back(next_amp);
        pos = next;
    }

    if (track.periods.empty()) {
        return std::nullopt;
    }
    track.glottal_pulse_rate = static_cast<double>(track.pulse_times.size()) / (static_cast<double>(n) / sample_rate);
    return track;
}

double local_perturbation(std::span<const double> values)
{
    if (values.size() < 2) {
        throw InsufficientPeriods("at least two values are required, got " + std::to_string(values.size()));
    }
    double diff = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        diff += std::abs(values[i] - values[i - 1]);
    }
    const double mean_diff = diff / static_cast<double>(values.size() - 1);
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (mean_diff == 0.0) {
        return 0.0;
    }
    return mean_diff / std::abs(mean);
}

std::optional<PauseStats> pause_stats(std::span<const VoicedSegment> segments, double window_start,
                                      double window_len, const ProsodyOptions& options)
{
    const double window_end = window_start + window_len;
    std::vector<VoicedSegment> inside;
    for (const auto& s : segments) {
        if (s.end_time > window_start && s.start_time < window_end) {
            inside.push_back(s);
        }
    }
    if (inside.empty()) {
        return std::nullopt;
    }
    std::sort(inside.begin(), inside.end(),
              [](const VoicedSegment& a, const VoicedSegment& b) { return a.start_time < b.start_time; });

    PauseStats stats;
    for (std::size_t i = 1; i < inside.size(); ++i) {
        const double gap_start = std::max(inside[i - 1].end_time, window_start);
        const double gap_end = std::min(inside[i].start_time, window_end);
        const double gap = gap_end - gap_start;
        if (gap >= options.min_pause - 1e-9) {
            stats.durations.push_back(gap);
        }
    }
    if (!stats.durations.empty()) {
        stats.mean_duration = std::accumulate(stats.durations.begin(), stats.durations.end(), 0.0) /
                              static_cast<double>(stats.durations.size());
    }
    stats.frequency_per_min = static_cast<double>(stats.durations.size()) / window_len * 60.0;
    return stats;
}

int count_syllable_nuclei(std::span<const IntensityPoint> track, const ProsodyOptions& options)
{
    struct Peak {
        double time;
        double height;
    };
    std::vector<Peak> candidates;

    std::size_t a = 0;
    while (a < track.size()) {
        if (!track[a].voiced) {
            ++a;
            continue;
        }
        std::size_t b = a;
        while (b + 1 < track.size() && track[b + 1].voiced) {
            ++b;
        }
        // voiced run [a, b]
        for (std::size_t i = a + 1; i < b; ++i) {
            const double h = track[i].intensity_db;
            if (!(h > track[i - 1].intensity_db && h >= track[i + 1].intensity_db)) {
                continue;
            }
            double left_min = h;
            for (std::size_t k = i; k-- > a;) {
                if (track[k].intensity_db > h) {
                    break;
                }
                left_min = std::min(left_min, track[k].intensity_db);
            }
            double right_min = h;
            for (std::size_t k = i + 1; k <= b; ++k) {
                if (track[k].intensity_db > h) {
                    break;
                }
                right_min = std::min(right_min, track[k].intensity_db);
            }
            if (h - std::max(left_min, right_min) >= options.prominence_db) {
                candidates.push_back({track[i].time, h});
            }
        }
        a = b + 1;
    }

    std::sort(candidates.begin(), candidates.end(), [](const Peak& l, const Peak& r) {
        return l.height != r.height ? l.height > r.height : l.time < r.time;
    });
    std::vector<double> accepted;
    for (const auto& c : candidates) {
        const bool clear = std::none_of(accepted.begin(), accepted.end(), [&](double t) {
            return std::abs(t - c.time) < options.min_peak_spacing - 1e-9;
        });
        if (clear) {
            accepted.push_back(c.time);
        }
    }
    return static_cast<int>(accepted.size());
}

std::optional<SegmentTempo> tempo(std::span<const VoicedSegment> segments, std::span<const IntensityPoint> track,
                                  double window_start, double window_len, const ProsodyOptions& options)
{
    const double window_end = window_start + window_len;
    std::vector<IntensityPoint> inside;
    std::size_t voiced = 0;
    for (const auto& p : track) {
        if (p.time >= window_start && p.time < window_end) {
            inside.push_back(p);
            voiced += p.voiced ? 1 : 0;
        }
    }
    if (voiced == 0) {
        return std::nullopt;
    }
    const double voiced_time = static_cast<double>(voiced) * kHopSeconds;

    SegmentTempo result;
    result.nuclei = count_syllable_nuclei(inside, options);
    result.speech_rate = result.nuclei / window_len;
    result.articulation_rate = result.nuclei / voiced_time;
    if (auto pauses = pause_stats(segments, window_start, window_len, options)) {
        result.pause_durations = pauses->durations;
        result.pause_frequency = pauses->frequency_per_min;
    }
    return result;
}

FrameLLD LldExtractor::extract(const Frame& frame)
{
    FrameLLD lld;
    lld.frame_index = frame.index;
    lld.time = frame.start_time;
    lld.voiced = frame.voiced;
    lld.quality_ok = frame.quality_ok;
    lld.intensity_db = intensity(frame.samples);

    Signal magnitude = spectrum_.magnitude(frame.samples);
    lld.spectral_flux = previous_magnitude_ ? spectral_flux(*previous_magnitude_, magnitude) : 0.0;
    previous_magnitude_ = std::move(magnitude);

    if (frame.voiced && frame.quality_ok) {
        if (auto pitch = estimate_pitch(frame.samples, sample_rate_)) {
            lld.f0 = pitch->f0;
            lld.hnr_db = hnr_from_correlation(pitch->strength);
        }
    }
    return lld;
}

}  // namespace hearlink
