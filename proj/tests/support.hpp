#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hearlink/audio.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("hearlink-test-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline hearlink::Signal sine(double freq, double amplitude, double seconds, int rate = 16000, double phase = 0.0)
{
    const auto n = static_cast<Eigen::Index>(std::llround(seconds * rate));
    hearlink::Signal s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase);
    }
    return s;
}

inline hearlink::Signal white_noise(double stddev, Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, stddev);
    hearlink::Signal s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s[i] = g(rng);
    }
    return s;
}

/// Unit impulses every `period` samples starting at `offset`.
inline hearlink::Signal pulse_train(int period, Eigen::Index n, double amplitude = 0.8, int offset = 0)
{
    hearlink::Signal s = hearlink::Signal::Zero(n);
    for (Eigen::Index i = offset; i < n; i += period) {
        s[i] = amplitude;
    }
    return s;
}

inline hearlink::Signal concat(std::initializer_list<hearlink::Signal> parts)
{
    Eigen::Index n = 0;
    for (const auto& p : parts) {
        n += p.size();
    }
    hearlink::Signal out(n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.segment(at, p.size()) = p;
        at += p.size();
    }
    return out;
}

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v)
{
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

/// Minimal RIFF/WAVE writer used as an independent oracle for the decoder.
inline std::vector<std::uint8_t> wav_bytes(const std::vector<std::int16_t>& interleaved, int channels, int rate,
                                           std::uint16_t format_tag = 1, std::uint16_t bits = 16)
{
    std::vector<std::uint8_t> b;
    const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    put_u32(b, 36 + data_bytes);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(b, 16);
    put_u16(b, format_tag);
    put_u16(b, static_cast<std::uint16_t>(channels));
    put_u32(b, static_cast<std::uint32_t>(rate));
    put_u32(b, static_cast<std::uint32_t>(rate * channels * bits / 8));
    put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
    put_u16(b, bits);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    put_u32(b, data_bytes);
    for (auto s : interleaved) {
        put_u16(b, static_cast<std::uint16_t>(s));
    }
    return b;
}

}  // namespace testsupport
