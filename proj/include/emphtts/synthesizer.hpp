#pragma once

#include "emphtts/audio.hpp"
#include "emphtts/corpus.hpp"
#include "emphtts/nn.hpp"

#include <map>
#include <string>
#include <vector>

namespace emphtts {

using nn::Index;
using nn::Matrix;
using nn::Var;

struct SynthConfig {
    Index d_model = 32;
    int encoder_layers = 1;
    int decoder_layers = 1;
    int heads = 2;
    Index ffn = 64;
    int n_mels = 80;
    int pitch_bins = 32;
    int energy_bins = 32;
    Index d_emp = 64;
    Index d_speaker = 16;

    static SynthConfig toy() { return {}; }
    static SynthConfig full() { return {256, 2, 2, 2, 1024, 80, 256, 256, 64, 768}; }
    void validate() const;
};

class PhonemeInventory {
public:
    PhonemeInventory() = default;
    explicit PhonemeInventory(std::vector<std::string> symbols);
    static PhonemeInventory from_corpus(const std::vector<Conversation>& corpus);

    // Throws NotFoundError naming the symbol.
    Index id(const std::string& symbol) const;
    std::vector<Index> ids(const std::vector<std::string>& phonemes) const;
    std::size_t size() const { return symbols_.size(); }
    const std::vector<std::string>& symbols() const { return symbols_; }

private:
    std::vector<std::string> symbols_;
    std::map<std::string, Index> index_;
};

struct AcousticTargets {
    std::vector<int> durations;  // frames per phoneme
    std::vector<double> pitch;   // Hz per frame, 0 = unvoiced
    std::vector<double> energy;  // RMS per frame
    Matrix mel;                  // frames x n_mels, natural-log magnitude

    int frames() const { return static_cast<int>(mel.rows()); }
    // Throws StructuralError unless every per-frame series has sum(durations) rows.
    void validate() const;
};

// Mel, F0 and energy on the analysis grid plus the ingested durations. The
// last phoneme absorbs up to two frames of disagreement with the audio length.
AcousticTargets extract_targets(const Waveform& wave, std::vector<int> durations, const audio::FrameConfig& cfg);

// Unvoiced frames take the linearly interpolated value of their voiced
// neighbours (edges extend the nearest voiced value); all-unvoiced stays 0.
std::vector<double> interpolate_unvoiced(const std::vector<double>& f0);

// Training-time representation: log-durations and z-scored pitch/energy.
struct NormalizedTargets {
    std::vector<int> durations;
    Eigen::VectorXd log_duration;
    Eigen::VectorXd pitch;
    Eigen::VectorXd energy;
    Matrix mel;
};

struct ProsodyStats {
    double pitch_mean = 0.0;
    double pitch_std = 1.0;
    double energy_mean = 0.0;
    double energy_std = 1.0;

    static ProsodyStats fit(const std::vector<AcousticTargets>& targets);
    NormalizedTargets normalize(const AcousticTargets& t) const;
    double pitch_hz(double normalized) const { return normalized * pitch_std + pitch_mean; }
    double energy_rms(double normalized) const { return normalized * energy_std + energy_mean; }
};

struct SynthOutput {
    Var encoded;        // phonemes x d_model, before the emphasis regulator
    Var regulated;      // phonemes x d_model, after the emphasis regulator
    Var log_duration;   // phonemes x 1
    std::vector<int> durations;  // used by the length regulator
    Var pitch;          // frames x 1, normalized
    Var energy;         // frames x 1, normalized
    Var mel;            // frames x n_mels
};

struct TtsLoss {
    Var mel;
    Var duration;
    Var pitch;
    Var energy;
    Var total;
};

struct TtsLossWeights {
    double mel = 1.0;
    double duration = 1.0;
    double pitch = 1.0;
    double energy = 1.0;
};

// Repeats row i of x durations[i] times.
Var length_regulate(const Var& x, const std::vector<int>& durations);
// max(1, round(exp(log_duration))).
std::vector<int> durations_from_log(const Matrix& log_duration);
// Bucket of a normalized value over [-3, 3].
Index quantize(double value, int bins);
// Frame index of the first frame of every phoneme, plus the total at the end.
std::vector<int> cumulative_frames(const std::vector<int>& durations);

// Self-attention + position-wise feed-forward block with post-norm residuals.
class FftBlock {
public:
    FftBlock() = default;
    FftBlock(nn::ParameterStore& store, const std::string& name, Index d_model, Index ffn, int heads);
    Var operator()(const Var& x) const;

private:
    nn::MultiHeadAttention attention_;
    nn::LayerNorm norm1_;
    nn::Linear ffn_in_;
    nn::Linear ffn_out_;
    nn::LayerNorm norm2_;
};

class Synthesizer {
public:
    Synthesizer() = default;
    Synthesizer(nn::ParameterStore& store, const std::string& name, const SynthConfig& cfg, PhonemeInventory inventory);

    Var encode(const std::vector<std::string>& phonemes) const;
    // Adds each word's projected emphasis feature to its phoneme rows and the
    // projected speaker vector to every row.
    Var regulate(const Var& encoded, const Var& h_emp, const std::vector<PhonemeSpan>& spans, const Var& speaker) const;
    // Teacher-forced when `targets` is given.
    SynthOutput adapt_and_decode(const Var& regulated, const NormalizedTargets* targets) const;
    Var decode(const Var& frames) const;

    SynthOutput operator()(const std::vector<std::string>& phonemes, const Var& h_emp,
                           const std::vector<PhonemeSpan>& spans, const Var& speaker,
                           const NormalizedTargets* targets) const;

    const SynthConfig& config() const { return cfg_; }
    const PhonemeInventory& inventory() const { return inventory_; }

private:
    SynthConfig cfg_;
    PhonemeInventory inventory_;
    nn::Embedding phoneme_embedding_;
    std::vector<FftBlock> encoder_;
    nn::Linear emphasis_proj_;
    nn::Linear speaker_proj_;
    nn::Linear duration_hidden_;
    nn::Linear duration_out_;
    nn::Linear pitch_hidden_;
    nn::Linear pitch_out_;
    nn::Embedding pitch_embedding_;
    nn::Linear energy_hidden_;
    nn::Linear energy_out_;
    nn::Embedding energy_embedding_;
    std::vector<FftBlock> decoder_;
    nn::Linear mel_out_;
};

TtsLoss tts_loss(const SynthOutput& predicted, const NormalizedTargets& targets, const TtsLossWeights& weights = {});
// L_tts + lambda * L_emp.
Var total_loss(const TtsLoss& tts, const Var& emphasis, double lambda);

// Pseudo-inverse mel + Griffin-Lim; audition only.
Waveform reconstruct_waveform(const Matrix& mel, const audio::FrameConfig& cfg, int iterations = 32);

}  // namespace emphtts
