#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace emphtts {

inline constexpr int kSampleRate = 22050;

struct WavData {
    int sample_rate = kSampleRate;
    std::vector<double> samples;  // mono, nominal range [-1, 1]
};

// 16-bit PCM mono writer; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate = kSampleRate);
std::string encode_wav(const std::vector<double>& samples, int sample_rate = kSampleRate);

// Reads 16-bit PCM or 32-bit float mono WAV. Multi-channel input is rejected.
WavData read_wav(const std::filesystem::path& path);
WavData decode_wav(const std::string& bytes);

// read_wav plus a sample-rate assertion.
std::vector<double> read_wav_at(const std::filesystem::path& path, int expected_rate = kSampleRate);

}  // namespace emphtts
