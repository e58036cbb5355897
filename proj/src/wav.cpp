#include "emphtts/wav.hpp"

#include "emphtts/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace emphtts {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[pos + static_cast<std::size_t>(i)]);
    return v;
}

std::uint16_t get_u16(const std::string& s, std::size_t pos) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(s[pos]) |
                                      (static_cast<unsigned char>(s[pos + 1]) << 8));
}

}  // namespace

std::string encode_wav(const std::vector<double>& samples, int sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (double s : samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    const std::string bytes = encode_wav(samples, sample_rate);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

WavData decode_wav(const std::string& bytes) {
    if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
        throw Error("not a RIFF/WAVE stream");
    }
    int format = 0;
    int channels = 0;
    int bits = 0;
    WavData out;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id = bytes.substr(pos, 4);
        const std::uint32_t size = get_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) throw Error("truncated WAV chunk '" + id + "'");
        if (id == "fmt ") {
            format = get_u16(bytes, body);
            channels = get_u16(bytes, body + 2);
            out.sample_rate = static_cast<int>(get_u32(bytes, body + 4));
            bits = get_u16(bytes, body + 14);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw Error("WAV data chunk before fmt chunk");
            if (channels != 1) throw Error("expected mono WAV, got " + std::to_string(channels) + " channels");
            if (format == 1 && bits == 16) {
                out.samples.resize(size / 2);
                for (std::size_t i = 0; i < out.samples.size(); ++i) {
                    const auto v = static_cast<std::int16_t>(get_u16(bytes, body + 2 * i));
                    out.samples[i] = v / 32768.0;
                }
            } else if (format == 3 && bits == 32) {
                out.samples.resize(size / 4);
                for (std::size_t i = 0; i < out.samples.size(); ++i) {
                    const std::uint32_t raw = get_u32(bytes, body + 4 * i);
                    float f;
                    std::memcpy(&f, &raw, sizeof f);
                    out.samples[i] = f;
                }
            } else {
                throw Error("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                            std::to_string(bits) + " bits)");
            }
            return out;
        }
        pos = body + size + (size & 1);
    }
    throw Error("WAV stream has no data chunk");
}

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NotFoundError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_wav(ss.str());
}

std::vector<double> read_wav_at(const std::filesystem::path& path, int expected_rate) {
    WavData w = read_wav(path);
    if (w.sample_rate != expected_rate) {
        throw Error(path.string() + ": sample rate " + std::to_string(w.sample_rate) + " Hz, expected " +
                    std::to_string(expected_rate) + " Hz");
    }
    return std::move(w.samples);
}

}  // namespace emphtts
