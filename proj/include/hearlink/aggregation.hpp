#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hearlink/audio.hpp"
#include "hearlink/features.hpp"

namespace hearlink {

inline constexpr double kWindowSeconds = 10.0;
inline constexpr double kMinVoicedFraction = 0.1;

/// Functionals of one fixed-length window. Metrics that could not be measured are
/// left out of `metrics` rather than zero-filled.
struct HLDWindow {
    std::int64_t index = 0;
    double window_start = 0.0;
    double window_len = kWindowSeconds;
    std::map<std::string, double> metrics;
    double voiced_fraction = 0.0;
    bool quality_ok = false;

    [[nodiscard]] std::optional<double> metric(const std::string& name) const
    {
        if (auto it = metrics.find(name); it != metrics.end()) {
            return it->second;
        }
        return std::nullopt;
    }
};

/// Pooled glottal-period measures over all pulse tracks of a window.
struct PeriodSummary {
    std::optional<double> jitter;
    std::optional<double> shimmer;
    std::optional<double> glottal_pulse_rate;
};

PeriodSummary summarize_periods(std::span<const PeriodTrack> tracks);

struct WindowExtras {
    std::optional<SegmentTempo> tempo;
    std::optional<PauseStats> pauses;
    PeriodSummary periods;
    std::optional<double> snr_db;
};

/// Pure functionals over a window's frame descriptors plus segment-level measures.
HLDWindow aggregate_window(std::span<const FrameLLD> llds, double window_start, double window_len,
                           const WindowExtras& extras);

/// Computes segment-level measures (pauses, tempo, pulses, SNR) from the window's
/// frames and descriptors, then aggregates. Fills `snr_db` on voiced descriptors.
HLDWindow summarize_window(std::span<const Frame> frames, std::span<FrameLLD> llds, double window_start,
                           double window_len, int sample_rate = kCanonicalSampleRate,
                           const ProsodyOptions& options = {});

/// Groups a time-ordered (frame, descriptor) stream into back-to-back windows
/// aligned to multiples of the window length from the stream origin.
class WindowAssembler {
public:
    explicit WindowAssembler(double window_len = kWindowSeconds, int sample_rate = kCanonicalSampleRate,
                             ProsodyOptions options = {});

    /// Returns every window completed by the arrival of this frame.
    std::vector<HLDWindow> push(Frame frame, FrameLLD lld);

    /// Emits the pending window if `elapsed` seconds of audio cover it; an
    /// incomplete trailing window is dropped.
    std::vector<HLDWindow> finish(double elapsed);

private:
    HLDWindow close_current();

    double window_len_;
    int sample_rate_;
    ProsodyOptions options_;
    std::int64_t current_ = 0;
    std::optional<double> last_time_;
    std::vector<Frame> frames_;
    std::vector<FrameLLD> llds_;
};

}  // namespace hearlink
