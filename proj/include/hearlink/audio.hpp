#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hearlink/errors.hpp"

namespace hearlink {

using Signal = Eigen::ArrayXd;

inline constexpr int kCanonicalSampleRate = 16000;
inline constexpr double kFrameSeconds = 0.025;
inline constexpr double kHopSeconds = 0.010;

/// Mono amplitude samples in [-1, 1].
struct SampleBuffer {
    Signal samples;
    int sample_rate = kCanonicalSampleRate;
    int channel_count = 1;
    double origin_time = 0.0;

    [[nodiscard]] double duration() const
    {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

struct Frame {
    Signal samples;
    std::int64_t index = 0;
    double start_time = 0.0;
    bool voiced = false;
    bool quality_ok = true;
};

struct VoicedSegment {
    double start_time = 0.0;
    double end_time = 0.0;
    std::int64_t first_frame = 0;
    std::int64_t last_frame = 0;  // inclusive

    [[nodiscard]] double duration() const { return end_time - start_time; }
};

// --- decoding -------------------------------------------------------------

enum class AudioFormat { Wav, Pcm16 };

/// Decodes a RIFF/WAVE PCM16 file into a canonical 16 kHz mono buffer.
/// Raw PCM16 (`AudioFormat::Pcm16`) is taken as little-endian 16 kHz mono.
SampleBuffer decode_pcm(std::span<const std::uint8_t> bytes, AudioFormat format_hint = AudioFormat::Wav);

SampleBuffer read_wav_file(const std::string& path);

/// PCM16 mono RIFF/WAVE writer. Samples are clamped to [-1, 1] before quantizing.
std::vector<std::uint8_t> encode_wav(const Signal& samples, int sample_rate);
void write_wav_file(const std::string& path, const Signal& samples, int sample_rate);

/// Linear-interpolation resampler.
Signal resample_linear(const Signal& input, int from_rate, int to_rate);

// --- framing --------------------------------------------------------------

struct FrameGeometry {
    std::int64_t length = 0;
    std::int64_t hop = 0;
    int sample_rate = kCanonicalSampleRate;

    static FrameGeometry for_rate(int sample_rate);

    /// floor((N - L) / H) + 1 for N >= L, else 0.
    [[nodiscard]] std::int64_t frame_count(std::int64_t n_samples) const;
};

/// Fraction of samples sitting on the PCM16 rails above which a frame is marked low quality.
inline constexpr double kMaxClippingRatio = 0.01;

bool frame_quality_ok(const Signal& samples);

std::vector<Frame> frame_signal(const SampleBuffer& buf);

/// Incremental framer; yields exactly the frames `frame_signal` would for the
/// concatenation of everything pushed.
class Framer {
public:
    explicit Framer(int sample_rate = kCanonicalSampleRate);

    std::vector<Frame> push(const Signal& chunk);

    [[nodiscard]] std::int64_t samples_seen() const { return samples_seen_; }
    [[nodiscard]] const FrameGeometry& geometry() const { return geometry_; }

private:
    FrameGeometry geometry_;
    std::vector<double> pending_;
    std::int64_t pending_offset_ = 0;  // absolute index of pending_[0]
    std::int64_t samples_seen_ = 0;
    std::int64_t next_frame_ = 0;
};

// --- voice activity ---------------------------------------------------------

/// Per-frame speech/non-speech classifier. Implementations may carry state across
/// frames of one stream; `reset` starts a new stream.
class VoiceActivityDetector {
public:
    virtual ~VoiceActivityDetector() = default;
    virtual bool is_voiced(const Frame& frame) = 0;
    virtual void reset() = 0;
};

struct EnergyVadOptions {
    double initial_floor_db = -70.0;
    double margin_db = 15.0;           // energy must exceed the noise floor by this much
    double absolute_min_db = -55.0;    // and this absolute level
    double max_zero_crossing_rate = 0.3;
    double floor_rise_unvoiced = 0.05; // per-frame approach rate toward non-speech energy
    double floor_rise_voiced = 1e-4;   // slow creep during speech
    bool adaptive = true;              // false pins the floor at initial_floor_db
};

double frame_energy_db(const Signal& samples);
double zero_crossing_rate(const Signal& samples);

/// Log-energy gate against an exponential minimum-tracking noise floor, with a
/// zero-crossing-rate ceiling to reject broadband noise.
class EnergyVad final : public VoiceActivityDetector {
public:
    explicit EnergyVad(EnergyVadOptions options = {});

    bool is_voiced(const Frame& frame) override;
    void reset() override;

    /// Decision against an explicit floor, no state update.
    [[nodiscard]] bool decide(const Signal& samples, double floor_db) const;
    [[nodiscard]] double noise_floor_db() const { return floor_db_; }

private:
    EnergyVadOptions options_;
    double floor_db_;
};

inline constexpr int kHangoverFrames = 3;

/// Fills unvoiced gaps shorter than `hangover` frames that sit between voiced frames.
std::vector<bool> apply_hangover(const std::vector<bool>& raw, int hangover = kHangoverFrames);

std::vector<VoicedSegment> segments_from_flags(std::span<const Frame> frames);

struct GateResult {
    std::vector<Frame> frames;
    std::vector<VoicedSegment> segments;
};

GateResult vad_gate(std::vector<Frame> frames, VoiceActivityDetector& detector);

/// Streaming form of `vad_gate`: classifies frames as they arrive and releases
/// them with final voiced flags once `hangover` frames of lookahead exist.
class VadGate {
public:
    explicit VadGate(VoiceActivityDetector& detector, int hangover = kHangoverFrames);

    std::vector<Frame> push(Frame frame);
    std::vector<Frame> finish();

private:
    std::vector<Frame> release(bool final);

    VoiceActivityDetector& detector_;
    int hangover_;
    std::deque<Frame> pending_;
    std::deque<bool> history_;  // raw flags of the last `hangover` released frames
};

// --- streaming input ----------------------------------------------------------

/// Reads length-prefixed PCM16 chunks: a little-endian uint32 byte count followed
/// by that many bytes of 16 kHz mono little-endian samples. A zero length or end
/// of stream terminates.
class ChunkReader {
public:
    explicit ChunkReader(std::istream& in) : in_(in) {}

    /// Next chunk, or nullopt at end of stream.
    std::optional<Signal> next();

private:
    std::istream& in_;
};

std::vector<std::uint8_t> encode_chunk(const Signal& samples);

}  // namespace hearlink
