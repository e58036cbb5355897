#pragma once

#include "emphtts/audio.hpp"
#include "emphtts/corpus.hpp"
#include "emphtts/nn.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace emphtts {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class Axis { Sentence, Word, Frame, Phoneme };

struct FeatureMatrix {
    Axis axis = Axis::Word;
    Matrix values;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
    bool finite() const { return values.allFinite(); }
};

struct EmbedderConfig {
    int d_sentence_text = 16;
    int d_word_history = 16;
    int d_word_current = 16;
    int d_frame_audio = 16;
    int d_sentence_audio = 16;
    int d_speaker = 16;
    std::uint64_t seed = 0;

    static EmbedderConfig toy() { return {}; }
    static EmbedderConfig full_dims() { return {512, 768, 1024, 768, 768, 768, 0}; }
    void validate() const;
};

enum class WordRole { History, Current };

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    // Unit-norm sentence vector.
    virtual RowVector sentence(const Utterance& u) const = 0;
    // One row per word; width d_word_history or d_word_current by role.
    virtual FeatureMatrix words(const Utterance& u, WordRole role) const = 0;
};

class AudioEmbedder {
public:
    virtual ~AudioEmbedder() = default;
    virtual RowVector sentence(const Waveform& wave) const = 0;
    virtual FeatureMatrix frames(const Waveform& wave) const = 0;
};

// Deterministic stand-in for pretrained sentence/word encoders. Token vectors
// come from a seeded hash of the token alone, so the same word gets the same
// vector in both roles (the first d entries of one stream); a position term
// makes word rows depend on (token, position).
class ToyTextEmbedder : public TextEmbedder {
public:
    explicit ToyTextEmbedder(EmbedderConfig cfg) : cfg_(cfg) {}
    RowVector sentence(const Utterance& u) const override;
    FeatureMatrix words(const Utterance& u, WordRole role) const override;
    RowVector token_vector(const std::string& token, int dim) const;
    RowVector position_vector(std::size_t position, int dim) const;

private:
    EmbedderConfig cfg_;
};

// Summary statistics of the audio used by ToyAudioEmbedder::sentence.
struct AudioSummary {
    double log_energy = 0.0;  // log(power / 1e-10), 0 for silence
    double f0_mean = 0.0;     // Hz over voiced frames
    double f0_std = 0.0;
    double spectral_centroid = 0.0;  // Hz
    double voiced_fraction = 0.0;

    RowVector as_row() const;
};

// Deterministic stand-in for frame- and utterance-level speech encoders:
// hand-crafted prosodic statistics pushed through a fixed seeded projection.
class ToyAudioEmbedder : public AudioEmbedder {
public:
    ToyAudioEmbedder(EmbedderConfig cfg, audio::FrameConfig frames);
    RowVector sentence(const Waveform& wave) const override;
    FeatureMatrix frames(const Waveform& wave) const override;

    AudioSummary summary(const Waveform& wave) const;
    // Raw per-frame features before projection: n_mels log-mel bands relative
    // to the floor, then F0 and log-energy columns.
    Matrix frame_features(const Waveform& wave) const;
    Eigen::Index f0_column() const { return frame_cfg_.n_mels; }
    Eigen::Index energy_column() const { return frame_cfg_.n_mels + 1; }

private:
    EmbedderConfig cfg_;
    audio::FrameConfig frame_cfg_;
    Matrix sentence_projection_;
    Matrix frame_projection_;
};

// Named-extractor registry; "toy" is registered for both modalities.
using TextEmbedderFactory = std::function<std::unique_ptr<TextEmbedder>(const EmbedderConfig&)>;
using AudioEmbedderFactory =
    std::function<std::unique_ptr<AudioEmbedder>(const EmbedderConfig&, const audio::FrameConfig&)>;

void register_text_embedder(const std::string& kind, TextEmbedderFactory factory);
void register_audio_embedder(const std::string& kind, AudioEmbedderFactory factory);
std::unique_ptr<TextEmbedder> make_text_embedder(const std::string& kind, const EmbedderConfig& cfg);
std::unique_ptr<AudioEmbedder> make_audio_embedder(const std::string& kind, const EmbedderConfig& cfg,
                                                   const audio::FrameConfig& frames);

// Learned speaker lookup over a closed set of speaker ids.
class SpeakerTable {
public:
    SpeakerTable() = default;
    SpeakerTable(nn::ParameterStore& store, const std::string& name, std::vector<std::string> speakers, int dim);

    nn::Var embed(const std::string& speaker_id) const;
    std::size_t size() const { return speakers_.size(); }
    const std::vector<std::string>& speakers() const { return speakers_; }
    std::size_t index_of(const std::string& speaker_id) const;

private:
    std::vector<std::string> speakers_;
    nn::Embedding table_;
};

// Portable seeded N(0, 1) sample for (key, index).
double hashed_normal(std::uint64_t key, std::uint64_t index);
std::uint64_t fnv1a(const std::string& s);

}  // namespace emphtts
