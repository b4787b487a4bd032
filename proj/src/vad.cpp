#include <algorithm>
#include <cmath>

#include "hearlink/audio.hpp"

namespace hearlink {

double frame_energy_db(const Signal& samples)
{
    if (samples.size() == 0) {
        return -120.0;
    }
    return 10.0 * std::log10(samples.square().mean() + 1e-12);
}

double zero_crossing_rate(const Signal& samples)
{
    if (samples.size() < 2) {
        return 0.0;
    }
    Eigen::Index crossings = 0;
    for (Eigen::Index i = 1; i < samples.size(); ++i) {
        crossings += (samples[i] >= 0.0) != (samples[i - 1] >= 0.0);
    }
    return static_cast<double>(crossings) / static_cast<double>(samples.size() - 1);
}

EnergyVad::EnergyVad(EnergyVadOptions options) : options_(options), floor_db_(options.initial_floor_db) {}

bool EnergyVad::decide(const Signal& samples, double floor_db) const
{
    const double e = frame_energy_db(samples);
    const double threshold = std::max(floor_db + options_.margin_db, options_.absolute_min_db);
    return e > threshold && zero_crossing_rate(samples) <= options_.max_zero_crossing_rate;
}

bool EnergyVad::is_voiced(const Frame& frame)
{
    const bool voiced = decide(frame.samples, floor_db_);
    if (options_.adaptive) {
        const double e = frame_energy_db(frame.samples);
        if (e < floor_db_) {
            floor_db_ = e;
        } else if (e <= floor_db_ + options_.margin_db) {
            floor_db_ += options_.floor_rise_unvoiced * (e - floor_db_);
        } else {
            floor_db_ += options_.floor_rise_voiced * (e - floor_db_);
        }
    }
    return voiced;
}

void EnergyVad::reset() { floor_db_ = options_.initial_floor_db; }

std::vector<bool> apply_hangover(const std::vector<bool>& raw, int hangover)
{
    std::vector<bool> out = raw;
    const std::size_t n = raw.size();
    std::size_t i = 0;
    while (i < n) {
        if (raw[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !raw[j]) {
            ++j;
        }
        // unvoiced run [i, j)
        const bool bounded = i > 0 && j < n;
        if (bounded && j - i < static_cast<std::size_t>(hangover)) {
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), true);
        }
        i = j;
    }
    return out;
}

std::vector<VoicedSegment> segments_from_flags(std::span<const Frame> frames)
{
    std::vector<VoicedSegment> segments;
    std::size_t i = 0;
    while (i < frames.size()) {
        if (!frames[i].voiced) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < frames.size() && frames[j + 1].voiced && frames[j + 1].index == frames[j].index + 1) {
            ++j;
        }
        VoicedSegment seg;
        seg.first_frame = frames[i].index;
        seg.last_frame = frames[j].index;
        // each frame owns the hop-length span around its centre; the first frame also owns the stream start
        const double half_frame = 0.5 * kFrameSeconds;
        const double half_hop = 0.5 * kHopSeconds;
        seg.start_time = frames[i].index == 0 ? frames[i].start_time : frames[i].start_time + half_frame - half_hop;
        seg.end_time = frames[j].start_time + half_frame + half_hop;
        segments.push_back(seg);
        i = j + 1;
    }
    return segments;
}

GateResult vad_gate(std::vector<Frame> frames, VoiceActivityDetector& detector)
{
    std::vector<bool> raw;
    raw.reserve(frames.size());
    for (const auto& f : frames) {
        raw.push_back(detector.is_voiced(f));
    }
    const auto merged = apply_hangover(raw);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        frames[i].voiced = merged[i];
    }
    GateResult result;
    result.segments = segments_from_flags(frames);
    result.frames = std::move(frames);
    return result;
}

VadGate::VadGate(VoiceActivityDetector& detector, int hangover) : detector_(detector), hangover_(hangover) {}

std::vector<Frame> VadGate::push(Frame frame)
{
    frame.voiced = detector_.is_voiced(frame);
    pending_.push_back(std::move(frame));
    return release(false);
}

std::vector<Frame> VadGate::finish() { return release(true); }

std::vector<Frame> VadGate::release(bool final)
{
    std::vector<Frame> out;
    const auto h = static_cast<std::size_t>(hangover_);
    while (!pending_.empty() && (final || pending_.size() > h)) {
        Frame f = std::move(pending_.front());
        pending_.pop_front();
        const bool raw = f.voiced;
        if (!raw) {
            // Walk outwards looking for voiced neighbours within the hangover span.
            bool left_bounded = false;
            std::size_t left = 0;
            for (std::size_t k = 1; k <= h && k <= history_.size(); ++k) {
                if (history_[history_.size() - k]) {
                    left_bounded = true;
                    break;
                }
                ++left;
            }
            bool right_bounded = false;
            std::size_t right = 0;
            for (std::size_t k = 0; k < h && k < pending_.size(); ++k) {
                if (pending_[k].voiced) {
                    right_bounded = true;
                    break;
                }
                ++right;
            }
            f.voiced = left_bounded && right_bounded && left + right + 1 < h;
        }
        history_.push_back(raw);
        if (history_.size() > h) {
            history_.pop_front();
        }
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace hearlink
