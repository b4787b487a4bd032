#include "hearlink/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hearlink {

namespace {

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at)
{
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at)
{
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag)
{
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

double pcm16_to_unit(std::int16_t v) { return static_cast<double>(v) / 32768.0; }

Signal decode_interleaved_pcm16(std::span<const std::uint8_t> data, int channels)
{
    const std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
    const std::size_t n = data.size() / frame_bytes;
    Signal out(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const auto raw = static_cast<std::int16_t>(read_u16(data, i * frame_bytes + 2 * c));
            acc += pcm16_to_unit(raw);
        }
        out[static_cast<Eigen::Index>(i)] = acc / channels;
    }
    return out;
}

}  // namespace

SampleBuffer decode_pcm(std::span<const std::uint8_t> bytes, AudioFormat format_hint)
{
    if (format_hint == AudioFormat::Pcm16) {
        SampleBuffer buf;
        buf.samples = decode_interleaved_pcm16(bytes, 1);
        return buf;
    }

    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw DecodeError("not a RIFF/WAVE stream");
    }

    std::optional<std::uint16_t> format_tag;
    int channels = 0;
    int sample_rate = 0;
    int bits = 0;
    std::optional<std::span<const std::uint8_t>> data;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16 || available < 16) {
                throw DecodeError("truncated fmt chunk");
            }
            format_tag = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            sample_rate = static_cast<int>(read_u32(bytes, body + 4));
            bits = read_u16(bytes, body + 14);
            if (*format_tag == 0xFFFE) {
                // WAVE_FORMAT_EXTENSIBLE: the sub-format GUID starts with the real tag.
                if (available < 26) {
                    throw DecodeError("truncated extensible fmt chunk");
                }
                format_tag = read_u16(bytes, body + 24);
            }
        } else if (tag_is(bytes, pos, "data")) {
            // Streaming writers may leave the size unset; take what is there.
            data = bytes.subspan(body, available);
        }
        if (size > bytes.size() - body) {
            break;
        }
        pos = body + size + (size & 1u);
    }

    if (!format_tag) {
        throw DecodeError("missing fmt chunk");
    }
    if (*format_tag != 1) {
        throw UnsupportedFormat("only PCM encoding is supported (format tag " + std::to_string(*format_tag) + ")");
    }
    if (bits != 16) {
        throw UnsupportedFormat("only 16-bit samples are supported (got " + std::to_string(bits) + ")");
    }
    if (channels <= 0 || sample_rate <= 0) {
        throw DecodeError("invalid channel count or sample rate");
    }
    if (!data) {
        throw DecodeError("missing data chunk");
    }

    SampleBuffer buf;
    buf.samples = resample_linear(decode_interleaved_pcm16(*data, channels), sample_rate, kCanonicalSampleRate);
    return buf;
}

SampleBuffer read_wav_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pcm(bytes, AudioFormat::Wav);
}

std::vector<std::uint8_t> encode_wav(const Signal& samples, int sample_rate)
{
    const auto n = static_cast<std::uint32_t>(samples.size());
    std::vector<std::uint8_t> out;
    out.reserve(44 + 2 * n);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + 2 * n);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, 2 * n);
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        const double s = std::clamp(samples[i], -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::clamp(std::lround(s * 32767.0), -32768L, 32767L));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

void write_wav_file(const std::string& path, const Signal& samples, int sample_rate)
{
    const auto bytes = encode_wav(samples, sample_rate);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path);
    }
}

Signal resample_linear(const Signal& input, int from_rate, int to_rate)
{
    if (from_rate == to_rate || input.size() == 0) {
        return input;
    }
    const double ratio = static_cast<double>(from_rate) / to_rate;
    const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(input.size()) * to_rate / from_rate));
    Signal out(n_out);
    const Eigen::Index last = input.size() - 1;
    for (Eigen::Index i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const auto lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos), last);
        const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, last);
        const double frac = pos - static_cast<double>(lo);
        out[i] = input[lo] + (input[hi] - input[lo]) * frac;
    }
    return out;
}

// --- framing --------------------------------------------------------------

FrameGeometry FrameGeometry::for_rate(int sample_rate)
{
    FrameGeometry g;
    g.sample_rate = sample_rate;
    g.length = std::llround(kFrameSeconds * sample_rate);
    g.hop = std::llround(kHopSeconds * sample_rate);
    return g;
}

std::int64_t FrameGeometry::frame_count(std::int64_t n_samples) const
{
    if (n_samples < length) {
        return 0;
    }
    return (n_samples - length) / hop + 1;
}

bool frame_quality_ok(const Signal& samples)
{
    // PCM16 tops out at 32767/32768, treat that as the rail.
    constexpr double rail = 32767.0 / 32768.0;
    const auto clipped = (samples.abs() >= rail).count();
    return static_cast<double>(clipped) <= kMaxClippingRatio * static_cast<double>(samples.size());
}

std::vector<Frame> frame_signal(const SampleBuffer& buf)
{
    const auto g = FrameGeometry::for_rate(buf.sample_rate);
    const std::int64_t count = g.frame_count(buf.samples.size());
    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        Frame f;
        f.samples = buf.samples.segment(i * g.hop, g.length);
        f.index = i;
        f.start_time = static_cast<double>(i * g.hop) / buf.sample_rate;
        f.quality_ok = frame_quality_ok(f.samples);
        frames.push_back(std::move(f));
    }
    return frames;
}

Framer::Framer(int sample_rate) : geometry_(FrameGeometry::for_rate(sample_rate)) {}

std::vector<Frame> Framer::push(const Signal& chunk)
{
    pending_.insert(pending_.end(), chunk.data(), chunk.data() + chunk.size());
    samples_seen_ += chunk.size();

    std::vector<Frame> out;
    while (true) {
        const std::int64_t start = next_frame_ * geometry_.hop;
        if (start + geometry_.length > samples_seen_) {
            break;
        }
        Frame f;
        f.samples = Eigen::Map<const Signal>(pending_.data() + (start - pending_offset_), geometry_.length);
        f.index = next_frame_;
        f.start_time = static_cast<double>(start) / geometry_.sample_rate;
        f.quality_ok = frame_quality_ok(f.samples);
        out.push_back(std::move(f));
        ++next_frame_;
    }

    const std::int64_t keep_from = next_frame_ * geometry_.hop;
    if (keep_from > pending_offset_) {
        const auto drop = static_cast<std::size_t>(std::min<std::int64_t>(keep_from - pending_offset_,
                                                                          static_cast<std::int64_t>(pending_.size())));
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(drop));
        pending_offset_ += static_cast<std::int64_t>(drop);
    }
    return out;
}

// --- streaming input ----------------------------------------------------------

std::optional<Signal> ChunkReader::next()
{
    std::uint8_t header[4];
    if (!in_.read(reinterpret_cast<char*>(header), 4)) {
        return std::nullopt;
    }
    const std::uint32_t length = read_u32(header, 0);
    if (length == 0) {
        return std::nullopt;
    }
    if (length % 2 != 0) {
        throw DecodeError("PCM16 chunk length must be even");
    }
    std::vector<std::uint8_t> body(length);
    if (!in_.read(reinterpret_cast<char*>(body.data()), length)) {
        throw DecodeError("truncated PCM16 chunk");
    }
    return decode_interleaved_pcm16(body, 1);
}

std::vector<std::uint8_t> encode_chunk(const Signal& samples)
{
    std::vector<std::uint8_t> out;
    put_u32(out, static_cast<std::uint32_t>(2 * samples.size()));
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        const double s = std::clamp(samples[i], -1.0, 1.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s * 32767.0))));
    }
    return out;
}

}  // namespace hearlink
