#include "emphtts/audio.hpp"

#include "emphtts/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

namespace emphtts::audio {

namespace {

std::vector<double> hann(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

using Spectrum = std::vector<std::complex<double>>;

// Complex half spectra of Hann-windowed frames.
std::vector<Spectrum> stft(const std::vector<double>& wave, const FrameConfig& cfg) {
    const int frames = frame_count(wave.size(), cfg);
    const int win = cfg.window();
    const auto window = hann(win);
    Eigen::FFT<double> fft;
    std::vector<Spectrum> out(static_cast<std::size_t>(frames));
    std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
    for (int f = 0; f < frames; ++f) {
        std::fill(buf.begin(), buf.end(), 0.0);
        const std::size_t off = static_cast<std::size_t>(f) * static_cast<std::size_t>(cfg.shift());
        for (int i = 0; i < win; ++i) buf[static_cast<std::size_t>(i)] = wave[off + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
        Spectrum full;
        fft.fwd(full, buf);
        full.resize(static_cast<std::size_t>(cfg.n_fft / 2 + 1));
        out[static_cast<std::size_t>(f)] = std::move(full);
    }
    return out;
}

std::vector<double> istft(const std::vector<Spectrum>& spectra, const FrameConfig& cfg) {
    const int win = cfg.window();
    const int shift = cfg.shift();
    const auto window = hann(win);
    const std::size_t length = spectra.empty() ? 0 : (spectra.size() - 1) * static_cast<std::size_t>(shift) + static_cast<std::size_t>(win);
    std::vector<double> out(length, 0.0);
    std::vector<double> norm(length, 0.0);
    Eigen::FFT<double> fft;
    const int n = cfg.n_fft;
    for (std::size_t f = 0; f < spectra.size(); ++f) {
        Spectrum full(static_cast<std::size_t>(n));
        for (int k = 0; k <= n / 2; ++k) full[static_cast<std::size_t>(k)] = spectra[f][static_cast<std::size_t>(k)];
        for (int k = n / 2 + 1; k < n; ++k) full[static_cast<std::size_t>(k)] = std::conj(spectra[f][static_cast<std::size_t>(n - k)]);
        std::vector<double> frame;
        fft.inv(frame, full);
        const std::size_t off = f * static_cast<std::size_t>(shift);
        for (int i = 0; i < win; ++i) {
            const auto si = static_cast<std::size_t>(i);
            out[off + si] += frame[si] * window[si];
            norm[off + si] += window[si] * window[si];
        }
    }
    for (std::size_t i = 0; i < length; ++i) {
        if (norm[i] > 1e-8) out[i] /= norm[i];
    }
    return out;
}

}  // namespace

int frame_count(std::size_t samples, const FrameConfig& cfg) {
    const auto win = static_cast<std::size_t>(cfg.window());
    if (samples < win) return 0;
    return static_cast<int>((samples - win) / static_cast<std::size_t>(cfg.shift())) + 1;
}

Matrix stft_magnitude(const std::vector<double>& wave, const FrameConfig& cfg) {
    const auto spectra = stft(wave, cfg);
    Matrix mag(static_cast<Eigen::Index>(spectra.size()), cfg.n_fft / 2 + 1);
    for (std::size_t f = 0; f < spectra.size(); ++f) {
        for (std::size_t k = 0; k < spectra[f].size(); ++k) mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) = std::abs(spectra[f][k]);
    }
    return mag;
}

Matrix mel_filterbank(const FrameConfig& cfg) {
    const int bins = cfg.n_fft / 2 + 1;
    Matrix fb = Matrix::Zero(cfg.n_mels, bins);
    const double mel_lo = hz_to_mel(cfg.f_min);
    const double mel_hi = hz_to_mel(std::min(cfg.f_max, cfg.sample_rate / 2.0));
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
    }
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double mid = edges[static_cast<std::size_t>(m + 1)];
        const double hi = edges[static_cast<std::size_t>(m + 2)];
        for (int k = 0; k < bins; ++k) {
            const double hz = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
            double w = 0.0;
            if (hz > lo && hz <= mid) w = (hz - lo) / (mid - lo);
            else if (hz > mid && hz < hi) w = (hi - hz) / (hi - mid);
            fb(m, k) = w;
        }
    }
    return fb;
}

Matrix log_mel(const std::vector<double>& wave, const FrameConfig& cfg) {
    const Matrix mag = stft_magnitude(wave, cfg);
    const Matrix mel = mag * mel_filterbank(cfg).transpose();
    return mel.unaryExpr([](double v) { return std::log(std::max(v, kMelFloor)); });
}

double estimate_f0(const double* x, std::size_t n, int sample_rate, double f_min, double f_max) {
    if (n < 4) return 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    std::vector<double> s(x, x + n);
    double energy = 0.0;
    for (auto& v : s) {
        v -= mean;
        energy += v * v;
    }
    if (std::sqrt(energy / static_cast<double>(n)) < 1e-4) return 0.0;

    const auto lag_min = static_cast<std::size_t>(std::ceil(sample_rate / f_max));
    const auto lag_max = std::min(static_cast<std::size_t>(std::floor(sample_rate / f_min)), n / 2);
    if (lag_min + 2 > lag_max) return 0.0;
    std::vector<double> r(lag_max + 2, 0.0);
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1 && lag < n; ++lag) {
        double num = 0.0, e0 = 0.0, e1 = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) {
            num += s[i] * s[i + lag];
            e0 += s[i] * s[i];
            e1 += s[i + lag] * s[i + lag];
        }
        r[lag] = (e0 > 0 && e1 > 0) ? num / std::sqrt(e0 * e1) : 0.0;
    }
    double best = 0.0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, r[lag]);
    if (best < 0.5) return 0.0;
    // First local maximum close to the global peak avoids sub-harmonic picks.
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
        if (r[lag] >= 0.9 * best && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
            const double a = r[lag - 1], b = r[lag], c = r[lag + 1];
            const double denom = a - 2 * b + c;
            const double delta = std::abs(denom) > 1e-12 ? 0.5 * (a - c) / denom : 0.0;
            return sample_rate / (static_cast<double>(lag) + std::clamp(delta, -0.5, 0.5));
        }
    }
    return 0.0;
}

std::vector<double> f0_track(const std::vector<double>& wave, const FrameConfig& cfg) {
    const int frames = frame_count(wave.size(), cfg);
    const int half = static_cast<int>(std::ceil(cfg.sample_rate / 50.0));
    std::vector<double> out(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        const long centre = static_cast<long>(f) * cfg.shift() + cfg.window() / 2;
        const long lo = std::max(0L, centre - half);
        const long hi = std::min(static_cast<long>(wave.size()), centre + half);
        out[static_cast<std::size_t>(f)] = estimate_f0(wave.data() + lo, static_cast<std::size_t>(hi - lo), cfg.sample_rate);
    }
    return out;
}

std::vector<double> frame_energy(const std::vector<double>& wave, const FrameConfig& cfg) {
    const int frames = frame_count(wave.size(), cfg);
    std::vector<double> out(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        double sq = 0.0;
        const std::size_t off = static_cast<std::size_t>(f) * static_cast<std::size_t>(cfg.shift());
        for (int i = 0; i < cfg.window(); ++i) sq += wave[off + static_cast<std::size_t>(i)] * wave[off + static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(f)] = std::sqrt(sq / cfg.window());
    }
    return out;
}

std::vector<double> griffin_lim(const Matrix& log_mel_frames, const FrameConfig& cfg, int iterations) {
    if (log_mel_frames.cols() != cfg.n_mels) throw StructuralError("griffin_lim: mel band count mismatch");
    const Matrix fb = mel_filterbank(cfg);
    Eigen::CompleteOrthogonalDecomposition<Matrix> pinv(fb);
    const Matrix fb_pinv = pinv.pseudoInverse();  // bins x n_mels
    const double floor_log = std::log(kMelFloor);
    // Bins at the floor carry no energy.
    const Matrix mel = log_mel_frames.unaryExpr([floor_log](double v) { return v <= floor_log + 1e-9 ? 0.0 : std::exp(v); });
    const Matrix mag = (mel * fb_pinv.transpose()).cwiseMax(0.0);  // frames x bins

    const auto frames = static_cast<std::size_t>(mag.rows());
    std::vector<Spectrum> spec(frames, Spectrum(static_cast<std::size_t>(mag.cols())));
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t k = 0; k < spec[f].size(); ++k) spec[f][k] = mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k));
    }
    std::vector<double> wave = istft(spec, cfg);
    for (int it = 0; it < iterations; ++it) {
        const auto est = stft(wave, cfg);
        for (std::size_t f = 0; f < frames && f < est.size(); ++f) {
            for (std::size_t k = 0; k < spec[f].size(); ++k) {
                const double a = std::abs(est[f][k]);
                const std::complex<double> phase = a > 1e-12 ? est[f][k] / a : std::complex<double>(1.0, 0.0);
                spec[f][k] = mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) * phase;
            }
        }
        wave = istft(spec, cfg);
    }
    return wave;
}

double rms(const std::vector<double>& wave) {
    if (wave.empty()) return 0.0;
    double sq = 0.0;
    for (double v : wave) sq += v * v;
    return std::sqrt(sq / static_cast<double>(wave.size()));
}

}  // namespace emphtts::audio
