#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hearlink/audio.hpp"
#include "hearlink/errors.hpp"

namespace hearlink {

/// Targets for one stretch of synthetic speech.
struct SynthPhase {
    std::string name = "baseline";   // baseline | depressed | recovery
    double duration = 60.0;          // s
    double f0_mean = 180.0;          // Hz
    double f0_std = 25.0;            // Hz, spread of per-syllable pitch targets
    double jitter = 0.005;           // relative cycle-to-cycle period perturbation
    double shimmer = 0.03;           // relative cycle-to-cycle amplitude perturbation
    double pause_rate = 6.0;         // pauses per minute of speech
    double pause_duration = 0.5;     // s
    double articulation_rate = 4.0;  // syllables per second of speech
    double amplitude = 0.3;          // peak of the syllable envelope
    double amplitude_std = 0.25;     // relative per-syllable loudness spread
    double noise = 0.002;            // std of the additive white noise floor
    int harmonics = 8;
};

struct SynthProfile {
    int sample_rate = kCanonicalSampleRate;
    std::vector<SynthPhase> phases;

    /// `{"sample_rate"?, "phases": [{"name", "duration", ...}]}`; unspecified
    /// fields take the defaults above. Throws ValidationError.
    static SynthProfile from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    /// Throws ValidationError when any target lies outside the extractor's range.
    void validate() const;
    [[nodiscard]] double total_duration() const;
};

/// Phase defaults tuned for the three-phase streaming scenario.
SynthPhase baseline_phase(double duration);
SynthPhase depressed_phase(double duration);
SynthPhase recovery_phase(double duration);

struct PhaseSpan {
    std::string name;
    double start = 0.0;
    double end = 0.0;
};

std::vector<PhaseSpan> phase_spans(const SynthProfile& profile);

/// Amplitude-modulated harmonic tone with per-syllable pitch targets, per-cycle
/// jitter and shimmer, and inserted pauses. Deterministic for a given seed.
Signal synthesize(const SynthProfile& profile, std::uint64_t seed);

}  // namespace hearlink
