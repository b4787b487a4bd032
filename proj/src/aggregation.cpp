#include "hearlink/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hearlink {

namespace {

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
    double range = 0.0;
};

std::optional<Moments> moments(const std::vector<double>& v)
{
    if (v.empty()) {
        return std::nullopt;
    }
    const Eigen::Map<const Signal> x(v.data(), static_cast<Eigen::Index>(v.size()));
    Moments m;
    m.mean = x.mean();
    m.stddev = std::sqrt((x - m.mean).square().mean());
    m.range = x.maxCoeff() - x.minCoeff();
    return m;
}

}  // namespace

PeriodSummary summarize_periods(std::span<const PeriodTrack> tracks)
{
    double period_diff = 0.0;
    double period_sum = 0.0;
    std::size_t period_diffs = 0;
    std::size_t periods = 0;
    double amp_diff = 0.0;
    double amp_sum = 0.0;
    std::size_t amp_diffs = 0;
    std::size_t amps = 0;
    double pulses = 0.0;
    double tracked_time = 0.0;

    for (const auto& t : tracks) {
        for (std::size_t i = 0; i < t.periods.size(); ++i) {
            period_sum += t.periods[i];
            if (i > 0) {
                period_diff += std::abs(t.periods[i] - t.periods[i - 1]);
                ++period_diffs;
            }
        }
        periods += t.periods.size();
        for (std::size_t i = 0; i < t.amplitudes.size(); ++i) {
            amp_sum += t.amplitudes[i];
            if (i > 0) {
                amp_diff += std::abs(t.amplitudes[i] - t.amplitudes[i - 1]);
                ++amp_diffs;
            }
        }
        amps += t.amplitudes.size();
        if (t.glottal_pulse_rate > 0.0) {
            pulses += static_cast<double>(t.pulse_times.size());
            tracked_time += static_cast<double>(t.pulse_times.size()) / t.glottal_pulse_rate;
        }
    }

    PeriodSummary s;
    if (period_diffs > 0 && period_sum > 0.0) {
        s.jitter = (period_diff / static_cast<double>(period_diffs)) / (period_sum / static_cast<double>(periods));
    }
    if (amp_diffs > 0 && amp_sum != 0.0) {
        s.shimmer = (amp_diff / static_cast<double>(amp_diffs)) / std::abs(amp_sum / static_cast<double>(amps));
    }
    if (tracked_time > 0.0) {
        s.glottal_pulse_rate = pulses / tracked_time;
    }
    return s;
}

HLDWindow aggregate_window(std::span<const FrameLLD> llds, double window_start, double window_len,
                           const WindowExtras& extras)
{
    HLDWindow w;
    w.window_start = window_start;
    w.window_len = window_len;
    w.index = static_cast<std::int64_t>(std::floor(window_start / window_len + 0.5));

    std::vector<double> f0;
    std::vector<double> level;
    std::vector<double> hnr_values;
    std::vector<double> flux;
    std::size_t voiced = 0;
    for (const auto& l : llds) {
        if (!l.voiced) {
            continue;
        }
        ++voiced;
        if (!l.quality_ok) {
            continue;
        }
        level.push_back(l.intensity_db);
        flux.push_back(l.spectral_flux);
        if (l.f0) {
            f0.push_back(*l.f0);
        }
        if (l.hnr_db) {
            hnr_values.push_back(*l.hnr_db);
        }
    }
    w.voiced_fraction = llds.empty() ? 0.0 : static_cast<double>(voiced) / static_cast<double>(llds.size());
    if (level.empty()) {
        w.quality_ok = false;
        return w;
    }
    w.quality_ok = w.voiced_fraction >= kMinVoicedFraction;

    auto& m = w.metrics;
    if (auto f = moments(f0)) {
        m["f0_avg"] = f->mean;
        m["f0_std"] = f->stddev;
        m["f0_range"] = f->range;
    }
    if (auto i = moments(level)) {
        m["intensity_std"] = i->stddev;
        m["intensity_range"] = i->range;
    }
    if (auto h = moments(hnr_values)) {
        m["hnr"] = h->mean;
    }
    m["spectral_flux_mean"] = moments(flux)->mean;
    if (extras.snr_db) {
        m["snr"] = *extras.snr_db;
    }
    if (extras.pauses) {
        m["pause_duration"] = extras.pauses->mean_duration.value_or(0.0);
        m["pause_frequency"] = extras.pauses->frequency_per_min;
    }
    if (extras.tempo) {
        m["speech_rate"] = extras.tempo->speech_rate;
        m["articulation_rate"] = extras.tempo->articulation_rate;
    }
    if (extras.periods.jitter) {
        m["jitter"] = *extras.periods.jitter;
    }
    if (extras.periods.shimmer) {
        m["shimmer"] = *extras.periods.shimmer;
    }
    if (extras.periods.glottal_pulse_rate) {
        m["glottal_pulse_rate"] = *extras.periods.glottal_pulse_rate;
    }
    return w;
}

HLDWindow summarize_window(std::span<const Frame> frames, std::span<FrameLLD> llds, double window_start,
                           double window_len, int sample_rate, const ProsodyOptions& options)
{
    WindowExtras extras;
    const auto segments = segments_from_flags(frames);
    extras.pauses = pause_stats(segments, window_start, window_len, options);

    std::vector<IntensityPoint> track;
    track.reserve(llds.size());
    std::vector<double> voiced_db;
    std::vector<double> unvoiced_db;
    for (const auto& l : llds) {
        track.push_back({l.time, l.intensity_db, l.voiced});
        (l.voiced ? voiced_db : unvoiced_db).push_back(l.intensity_db);
    }
    extras.tempo = tempo(segments, track, window_start, window_len, options);
    extras.snr_db = snr_estimate(voiced_db, unvoiced_db);
    if (!unvoiced_db.empty()) {
        const double floor_db = std::accumulate(unvoiced_db.begin(), unvoiced_db.end(), 0.0) /
                                static_cast<double>(unvoiced_db.size());
        for (auto& l : llds) {
            if (l.voiced) {
                l.snr_db = l.intensity_db - floor_db;
            }
        }
    }

    // Pulse tracks over maximal runs of consecutive pitched frames.
    const auto hop = FrameGeometry::for_rate(sample_rate).hop;
    std::vector<PeriodTrack> tracks;
    std::size_t i = 0;
    while (i < llds.size()) {
        if (!llds[i].f0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < llds.size() && llds[j + 1].f0 && llds[j + 1].frame_index == llds[j].frame_index + 1) {
            ++j;
        }
        if (j - i + 1 >= 3) {
            const auto length = static_cast<Eigen::Index>((j - i) * static_cast<std::size_t>(hop)) +
                                frames[j].samples.size();
            Signal run(length);
            for (std::size_t k = i; k < j; ++k) {
                run.segment(static_cast<Eigen::Index>((k - i) * static_cast<std::size_t>(hop)), hop) =
                    frames[k].samples.head(hop);
            }
            run.tail(frames[j].samples.size()) = frames[j].samples;

            std::vector<PitchPoint> pitch;
            const double half_frame = 0.5 * static_cast<double>(frames[i].samples.size()) / sample_rate;
            for (std::size_t k = i; k <= j; ++k) {
                pitch.push_back({llds[k].time + half_frame, *llds[k].f0});
            }
            if (auto t = track_pulses(run, sample_rate, llds[i].time, pitch)) {
                tracks.push_back(std::move(*t));
            }
        }
        i = j + 1;
    }
    extras.periods = summarize_periods(tracks);

    return aggregate_window(llds, window_start, window_len, extras);
}

WindowAssembler::WindowAssembler(double window_len, int sample_rate, ProsodyOptions options)
    : window_len_(window_len), sample_rate_(sample_rate), options_(options)
{
}

HLDWindow WindowAssembler::close_current()
{
    HLDWindow w = summarize_window(frames_, llds_, static_cast<double>(current_) * window_len_, window_len_,
                                   sample_rate_, options_);
    w.index = current_;
    frames_.clear();
    llds_.clear();
    ++current_;
    return w;
}

std::vector<HLDWindow> WindowAssembler::push(Frame frame, FrameLLD lld)
{
    if (last_time_ && lld.time <= *last_time_) {
        throw StreamOrderError("frame at " + std::to_string(lld.time) + " s does not follow " +
                               std::to_string(*last_time_) + " s");
    }
    last_time_ = lld.time;

    std::vector<HLDWindow> out;
    const auto target = static_cast<std::int64_t>(std::floor(lld.time / window_len_ + 1e-9));
    while (current_ < target) {
        out.push_back(close_current());
    }
    frames_.push_back(std::move(frame));
    llds_.push_back(std::move(lld));
    return out;
}

std::vector<HLDWindow> WindowAssembler::finish(double elapsed)
{
    std::vector<HLDWindow> out;
    while (static_cast<double>(current_ + 1) * window_len_ <= elapsed + 1e-9) {
        out.push_back(close_current());
    }
    frames_.clear();
    llds_.clear();
    return out;
}

}  // namespace hearlink
