#include "hearlink/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace hearlink {

using nlohmann::json;

namespace {

void check(bool ok, const std::string& phase, const std::string& what)
{
    if (!ok) {
        throw ValidationError("synth phase '" + phase + "': " + what);
    }
}

}  // namespace

SynthProfile SynthProfile::from_json(const json& j)
{
    SynthProfile p;
    try {
        p.sample_rate = j.value("sample_rate", p.sample_rate);
        for (const auto& e : j.at("phases")) {
            SynthPhase s;
            s.name = e.value("name", s.name);
            s.duration = e.value("duration", s.duration);
            s.f0_mean = e.value("f0_mean", s.f0_mean);
            s.f0_std = e.value("f0_std", s.f0_std);
            s.jitter = e.value("jitter", s.jitter);
            s.shimmer = e.value("shimmer", s.shimmer);
            s.pause_rate = e.value("pause_rate", s.pause_rate);
            s.pause_duration = e.value("pause_duration", s.pause_duration);
            s.articulation_rate = e.value("articulation_rate", s.articulation_rate);
            s.amplitude = e.value("amplitude", s.amplitude);
            s.amplitude_std = e.value("amplitude_std", s.amplitude_std);
            s.noise = e.value("noise", s.noise);
            s.harmonics = e.value("harmonics", s.harmonics);
            p.phases.push_back(s);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("synth profile: ") + e.what());
    }
    p.validate();
    return p;
}

json SynthProfile::to_json() const
{
    json phases = json::array();
    for (const auto& s : this->phases) {
        phases.push_back({{"name", s.name},
                          {"duration", s.duration},
                          {"f0_mean", s.f0_mean},
                          {"f0_std", s.f0_std},
                          {"jitter", s.jitter},
                          {"shimmer", s.shimmer},
                          {"pause_rate", s.pause_rate},
                          {"pause_duration", s.pause_duration},
                          {"articulation_rate", s.articulation_rate},
                          {"amplitude", s.amplitude},
                          {"amplitude_std", s.amplitude_std},
                          {"noise", s.noise},
                          {"harmonics", s.harmonics}});
    }
    return {{"sample_rate", sample_rate}, {"phases", phases}};
}

void SynthProfile::validate() const
{
    if (sample_rate < 8000 || sample_rate > 96000) {
        throw ValidationError("synth profile: sample_rate must be within 8000..96000");
    }
    if (phases.empty()) {
        throw ValidationError("synth profile: no phases");
    }
    for (const auto& s : phases) {
        check(s.name == "baseline" || s.name == "depressed" || s.name == "recovery", s.name,
              "name must be baseline, depressed or recovery");
        check(std::isfinite(s.duration) && s.duration > 0.0, s.name, "duration must be positive");
        check(s.f0_std >= 0.0 && s.f0_mean - 2.0 * s.f0_std >= 70.0 && s.f0_mean + 2.0 * s.f0_std <= 450.0, s.name,
              "f0_mean +- 2 f0_std must stay within 70..450 Hz");
        check(s.jitter >= 0.0 && s.jitter <= 0.05, s.name, "jitter must be within 0..0.05");
        check(s.shimmer >= 0.0 && s.shimmer <= 0.3, s.name, "shimmer must be within 0..0.3");
        check(s.pause_rate >= 0.0 && s.pause_rate <= 30.0, s.name, "pause_rate must be within 0..30 per minute");
        check(s.pause_rate == 0.0 || (s.pause_duration >= 0.3 && s.pause_duration <= 5.0), s.name,
              "pause_duration must be within 0.3..5 s");
        check(s.articulation_rate >= 1.0 && s.articulation_rate <= 8.0, s.name,
              "articulation_rate must be within 1..8 syllables/s");
        check(s.amplitude > 0.0 && s.amplitude <= 0.8, s.name, "amplitude must be within (0, 0.8]");
        check(s.amplitude_std >= 0.0 && s.amplitude_std <= 0.5, s.name, "amplitude_std must be within 0..0.5");
        check(s.noise >= 0.0 && s.noise <= 0.05, s.name, "noise must be within 0..0.05");
        check(s.harmonics >= 1 && s.harmonics <= 20, s.name, "harmonics must be within 1..20");
    }
}

double SynthProfile::total_duration() const
{
    double t = 0.0;
    for (const auto& s : phases) {
        t += s.duration;
    }
    return t;
}

SynthPhase baseline_phase(double duration)
{
    SynthPhase s;
    s.name = "baseline";
    s.duration = duration;
    return s;
}

SynthPhase depressed_phase(double duration)
{
    SynthPhase s;
    s.name = "depressed";
    s.duration = duration;
    s.f0_mean = 150.0;
    s.f0_std = 8.0;
    s.jitter = 0.012;
    s.shimmer = 0.06;
    s.pause_rate = 14.0;
    s.pause_duration = 1.2;
    s.articulation_rate = 2.5;
    s.amplitude_std = 0.1;
    return s;
}

SynthPhase recovery_phase(double duration)
{
    SynthPhase s = baseline_phase(duration);
    s.name = "recovery";
    return s;
}

std::vector<PhaseSpan> phase_spans(const SynthProfile& profile)
{
    std::vector<PhaseSpan> spans;
    double t = 0.0;
    for (const auto& s : profile.phases) {
        spans.push_back({s.name, t, t + s.duration});
        t += s.duration;
    }
    return spans;
}

Signal synthesize(const SynthProfile& profile, std::uint64_t seed)
{
    profile.validate();
    const double sr = profile.sample_rate;
    std::vector<Eigen::Index> lengths;
    Eigen::Index total = 0;
    for (const auto& s : profile.phases) {
        lengths.push_back(static_cast<Eigen::Index>(std::llround(s.duration * sr)));
        total += lengths.back();
    }
    Signal out = Signal::Zero(total);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    double phase = 0.0;
    double f0 = profile.phases.front().f0_mean;
    double cycle_freq = f0;
    double cycle_gain = 1.0;
    Eigen::Index offset = 0;
    for (std::size_t p = 0; p < profile.phases.size(); ++p) {
        const auto& s = profile.phases[p];
        const Eigen::Index n = lengths[p];
        const double smoothing = 1.0 - std::exp(-1.0 / (0.03 * sr));

        const double syllable_len = 1.0 / s.articulation_rate;
        double syllable_pos = 0.0;
        double f0_target = s.f0_mean;
        double syllable_gain = 1.0;
        auto draw_syllable = [&] {
            f0_target = s.f0_mean + s.f0_std * std::clamp(gauss(rng), -2.0, 2.0);
            syllable_gain = std::max(0.2, 1.0 + s.amplitude_std * std::clamp(gauss(rng), -2.0, 2.0));
        };
        draw_syllable();

        auto draw_gap = [&] {
            if (s.pause_rate <= 0.0) {
                return std::numeric_limits<double>::infinity();
            }
            return std::max(syllable_len, -std::log(1.0 - uniform(rng)) * 60.0 / s.pause_rate);
        };
        double speech_left = draw_gap();
        double pause_left = 0.0;

        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 0.0;
            if (pause_left > 0.0) {
                pause_left -= 1.0 / sr;
                if (pause_left <= 0.0) {
                    speech_left = draw_gap();
                    syllable_pos = 0.0;
                    draw_syllable();
                }
            } else {
                f0 += smoothing * (f0_target - f0);
                phase += two_pi * cycle_freq / sr;
                if (phase >= two_pi) {
                    phase -= two_pi;
                    cycle_freq = f0 / std::max(0.5, 1.0 + s.jitter * gauss(rng));
                    cycle_gain = std::max(0.1, 1.0 + s.shimmer * gauss(rng));
                }
                double tone = 0.0;
                for (int h = 1; h <= s.harmonics; ++h) {
                    tone += std::sin(h * phase) / h;
                }
                const double env = std::sin(std::numbers::pi * syllable_pos / syllable_len);
                v = s.amplitude * syllable_gain * cycle_gain * (0.2 + 0.8 * env * env) * tone / 1.6;

                syllable_pos += 1.0 / sr;
                if (syllable_pos >= syllable_len) {
                    syllable_pos -= syllable_len;
                    draw_syllable();
                }
                speech_left -= 1.0 / sr;
                if (speech_left <= 0.0 && syllable_pos < 1.0 / sr) {
                    pause_left = s.pause_duration * (0.8 + 0.4 * uniform(rng));
                }
            }
            out[offset + i] = std::clamp(v + s.noise * gauss(rng), -0.99, 0.99);
        }
        offset += n;
    }
    return out;
}

}  // namespace hearlink
