#pragma once

#include <Eigen/Dense>

#include <vector>

namespace emphtts::audio {

using Matrix = Eigen::MatrixXd;

struct FrameConfig {
    int sample_rate = 22050;
    double window_ms = 25.0;
    double shift_ms = 10.0;
    int n_fft = 1024;
    int n_mels = 80;
    double f_min = 0.0;
    double f_max = 8000.0;

    int window() const { return static_cast<int>(sample_rate * window_ms / 1000.0); }
    int shift() const { return static_cast<int>(sample_rate * shift_ms / 1000.0); }
};

// Smallest value a log-mel bin can take; log(kMelFloor).
inline constexpr double kMelFloor = 1e-5;

// floor((samples - window) / shift) + 1, or 0 when shorter than one window.
int frame_count(std::size_t samples, const FrameConfig& cfg);

// Magnitude spectra of Hann-windowed frames, frames x (n_fft/2 + 1).
Matrix stft_magnitude(const std::vector<double>& wave, const FrameConfig& cfg);

// Triangular HTK-mel filterbank, n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(const FrameConfig& cfg);

// log(max(mel magnitude, kMelFloor)), frames x n_mels.
Matrix log_mel(const std::vector<double>& wave, const FrameConfig& cfg);

// Autocorrelation pitch over 50-500 Hz; 0 for unvoiced or silent input.
double estimate_f0(const double* samples, std::size_t count, int sample_rate, double f_min = 50.0,
                   double f_max = 500.0);
// Per-frame F0 on the analysis frame grid. The autocorrelation window is
// centred on each frame and long enough for two periods of f_min.
std::vector<double> f0_track(const std::vector<double>& wave, const FrameConfig& cfg);
// Per-frame RMS over the analysis window.
std::vector<double> frame_energy(const std::vector<double>& wave, const FrameConfig& cfg);

// Pseudo-inverse mel + Griffin-Lim phase reconstruction. Deterministic for a
// given iteration count; output has (frames - 1) * shift + window samples.
std::vector<double> griffin_lim(const Matrix& log_mel_frames, const FrameConfig& cfg, int iterations = 32);

double rms(const std::vector<double>& wave);

}  // namespace emphtts::audio
