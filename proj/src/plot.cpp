#include "emphtts/plot.hpp"

#include "emphtts/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace emphtts {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

Rgb heat(double t) {
    static const double anchors[5][3] = {
        {13, 8, 135}, {126, 3, 168}, {204, 71, 120}, {248, 149, 64}, {240, 249, 33},
    };
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(t));
    const double f = t - i;
    Rgb out;
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(anchors[i][c] * (1 - f) + anchors[i + 1][c] * f);
    return out;
}

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w * h * 3), 255) {}
    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        auto* p = &px_[static_cast<std::size_t>((y * w_ + x) * 3)];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }
    void line(int x0, int y0, int x1, int y1, Rgb c) {
        const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
        for (int s = 0; s <= steps; ++s) {
            set(x0 + (x1 - x0) * s / steps, y0 + (y1 - y0) * s / steps, c);
        }
    }
    void write(const std::filesystem::path& path) const {
        png_image image{};
        image.version = PNG_IMAGE_VERSION;
        image.width = static_cast<png_uint_32>(w_);
        image.height = static_cast<png_uint_32>(h_);
        image.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&image, path.string().c_str(), 0, px_.data(), 0, nullptr)) {
            throw Error("cannot write PNG " + path.string() + ": " + image.message);
        }
    }

private:
    int w_, h_;
    std::vector<std::uint8_t> px_;
};

}  // namespace

std::vector<FrameSpan> word_frame_spans(const std::vector<int>& durations, const std::vector<PhonemeSpan>& words,
                                        const std::vector<bool>& flagged) {
    if (flagged.size() != words.size()) throw StructuralError("one emphasis flag per word required");
    std::vector<int> start(durations.size() + 1, 0);
    for (std::size_t p = 0; p < durations.size(); ++p) start[p + 1] = start[p] + durations[p];
    std::vector<FrameSpan> out;
    for (std::size_t w = 0; w < words.size(); ++w) {
        if (words[w].end > durations.size() || words[w].begin >= words[w].end) {
            throw StructuralError("word span " + std::to_string(w) + " outside the phoneme range");
        }
        if (flagged[w]) out.push_back({start[words[w].begin], start[words[w].end]});
    }
    return out;
}

PlotLayout plot_spectrogram(const Eigen::MatrixXd& mel, const std::vector<double>& f0,
                            const std::vector<FrameSpan>& emphasis, const std::filesystem::path& path,
                            const PlotOptions& o) {
    const int frames = static_cast<int>(mel.rows());
    const int bins = static_cast<int>(mel.cols());
    if (frames < 1 || bins < 1) throw EmptyInputError("nothing to plot: empty mel spectrogram");
    if (!f0.empty() && static_cast<int>(f0.size()) != frames) {
        throw StructuralError("F0 track has " + std::to_string(f0.size()) + " frames, mel has " + std::to_string(frames));
    }
    PlotLayout layout;
    layout.width = frames * o.px_per_frame;
    layout.mel_height = bins * o.px_per_bin;
    layout.height = layout.mel_height + o.f0_panel_height;
    Canvas canvas(layout.width, layout.height);

    const double lo = mel.minCoeff();
    const double range = std::max(mel.maxCoeff() - lo, 1e-12);
    for (int f = 0; f < frames; ++f) {
        for (int b = 0; b < bins; ++b) {
            const Rgb c = heat((mel(f, b) - lo) / range);
            const int y0 = (bins - 1 - b) * o.px_per_bin;
            for (int dx = 0; dx < o.px_per_frame; ++dx) {
                for (int dy = 0; dy < o.px_per_bin; ++dy) canvas.set(f * o.px_per_frame + dx, y0 + dy, c);
            }
        }
    }
    for (int x = 0; x < layout.width; ++x) canvas.set(x, layout.mel_height, {0, 0, 0});

    auto f0_y = [&](double hz) {
        const double t = std::clamp(hz / o.f0_max, 0.0, 1.0);
        return layout.height - 1 - static_cast<int>(t * (o.f0_panel_height - 2));
    };
    int prev_x = -1, prev_y = 0;
    for (int f = 0; f < static_cast<int>(f0.size()); ++f) {
        if (f0[static_cast<std::size_t>(f)] <= 0) {
            prev_x = -1;
            continue;
        }
        const int x = f * o.px_per_frame + o.px_per_frame / 2;
        const int y = f0_y(f0[static_cast<std::size_t>(f)]);
        if (prev_x >= 0) canvas.line(prev_x, prev_y, x, y, kF0Color);
        canvas.set(x, y, kF0Color);
        prev_x = x;
        prev_y = y;
        ++layout.f0_points;
    }

    for (const auto& span : emphasis) {
        if (span.begin < 0 || span.end > frames || span.begin >= span.end) {
            throw StructuralError("emphasis span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                                  ") outside the plotted frames");
        }
        PlotBox box{span, span.begin * o.px_per_frame, span.end * o.px_per_frame - 1};
        for (int t = 0; t < 2; ++t) {
            canvas.line(box.x0 + t, 0, box.x0 + t, layout.height - 1, kBoxColor);
            canvas.line(box.x1 - t, 0, box.x1 - t, layout.height - 1, kBoxColor);
            canvas.line(box.x0, t, box.x1, t, kBoxColor);
            canvas.line(box.x0, layout.height - 1 - t, box.x1, layout.height - 1 - t, kBoxColor);
        }
        layout.boxes.push_back(box);
    }
    canvas.write(path);
    return layout;
}

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
    const auto* p = &pixels[static_cast<std::size_t>((y * width + x) * 3)];
    return {p[0], p[1], p[2]};
}

RgbImage read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw Error("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        throw Error("cannot decode PNG " + path.string() + ": " + image.message);
    }
    return out;
}

}  // namespace emphtts
