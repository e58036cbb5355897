#pragma once

#include "emphtts/corpus.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace emphtts {

struct FrameSpan {
    int begin = 0;  // first frame
    int end = 0;    // one past the last frame
    bool operator==(const FrameSpan&) const = default;
};

// Frame ranges of the flagged words, from per-phoneme durations.
std::vector<FrameSpan> word_frame_spans(const std::vector<int>& durations, const std::vector<PhonemeSpan>& words,
                                        const std::vector<bool>& flagged);

struct PlotOptions {
    int px_per_frame = 4;
    int px_per_bin = 2;
    int f0_panel_height = 120;
    double f0_max = 400.0;  // Hz at the top of the F0 panel
};

struct PlotBox {
    FrameSpan frames;
    int x0 = 0;  // inclusive pixel columns
    int x1 = 0;
};

struct PlotLayout {
    int width = 0;
    int height = 0;
    int mel_height = 0;  // rows of the heatmap panel; the F0 panel follows
    std::vector<PlotBox> boxes;
    std::size_t f0_points = 0;  // voiced frames drawn
};

// Mel heatmap (low bins at the bottom) over an F0 panel, with a blue
// rectangle over each emphasis span. F0 values <= 0 are unvoiced and not drawn.
PlotLayout plot_spectrogram(const Eigen::MatrixXd& mel, const std::vector<double>& f0,
                            const std::vector<FrameSpan>& emphasis, const std::filesystem::path& path,
                            const PlotOptions& options = {});

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB
    std::array<std::uint8_t, 3> at(int x, int y) const;
};

RgbImage read_png(const std::filesystem::path& path);

inline constexpr std::array<std::uint8_t, 3> kBoxColor{40, 90, 255};
inline constexpr std::array<std::uint8_t, 3> kF0Color{255, 60, 40};

}  // namespace emphtts
