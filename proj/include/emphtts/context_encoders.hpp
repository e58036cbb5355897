#pragma once

#include "emphtts/nn.hpp"

#include <span>
#include <vector>

namespace emphtts {

using nn::Index;
using nn::Matrix;
using nn::Var;

struct EncoderConfig {
    Index d_fuse = 16;
    Index gru_hidden = 16;
    int gru_layers = 1;
    int fine_heads = 1;
    Index fine_d_qkv = 16;
    bool bidirectional = true;
    // false replaces the cross-turn memory with plain concatenation of the
    // history turns.
    bool memory = true;
    // Forward and backward passes share attention parameters (test harness).
    bool tie_directions = false;

    static EncoderConfig toy() { return {}; }
    static EncoderConfig full() { return {256, 128, 2, 3, 768, true, true, false}; }
    void validate() const;
};

// Adds a projected speaker vector to every row of one turn.
class SpeakerConditioner {
public:
    SpeakerConditioner() = default;
    SpeakerConditioner(nn::ParameterStore& store, const std::string& name, Index d_speaker, Index d_feature);
    Var operator()(const Var& rows, const Var& speaker) const;

private:
    nn::Linear proj_;
};

// Sentence-level history (CTE): BiGRU over history sentence vectors, final
// state joined with the current sentence vector, one linear layer to d_fuse.
class CoarseTextEncoder {
public:
    CoarseTextEncoder() = default;
    CoarseTextEncoder(nn::ParameterStore& store, const std::string& name, Index d_sentence, Index d_speaker,
                      const EncoderConfig& cfg);

    Var operator()(std::span<const Var> history, std::span<const Var> speakers, const Var& current) const;

private:
    EncoderConfig cfg_;
    SpeakerConditioner speaker_;
    nn::StackedGru gru_;
    nn::Linear out_;
};

// Sentence-level acoustic history (CAE); no current-turn audio exists.
class CoarseAudioEncoder {
public:
    CoarseAudioEncoder() = default;
    CoarseAudioEncoder(nn::ParameterStore& store, const std::string& name, Index d_sentence, Index d_speaker,
                       const EncoderConfig& cfg);

    Var operator()(std::span<const Var> history, std::span<const Var> speakers) const;

private:
    EncoderConfig cfg_;
    SpeakerConditioner speaker_;
    nn::StackedGru gru_;
    nn::Linear out_;
};

// Per-word weights of one turn: softmax of the intensity column over words.
Var emphasis_weights(const Var& intensity);

struct DirectionalOutput {
    Var forward;   // rows follow the terminal turn / query of the forward pass
    Var backward;  // zeros when the encoder runs forward-only
    std::vector<Var> weighted_forward;   // MFTE: W' per step of the forward pass
    std::vector<nn::AttentionResult> attention;
};

// Word-level textual history with intensity-weighted memory (MFTE).
class FineTextEncoder {
public:
    FineTextEncoder() = default;
    FineTextEncoder(nn::ParameterStore& store, const std::string& name, Index d_word_history, Index d_word_current,
                    Index d_speaker, const EncoderConfig& cfg);

    // words[j]: n_j x d_word_history; intensities[j]: n_j x 1; current: n x d_word_current.
    Var operator()(std::span<const Var> words, std::span<const Var> intensities, std::span<const Var> speakers,
                   const Var& current) const;
    DirectionalOutput directions(std::span<const Var> words, std::span<const Var> intensities,
                                 std::span<const Var> speakers, const Var& current) const;

private:
    Var pass(const std::vector<Var>& turns, std::span<const Var> intensities, const std::vector<std::size_t>& order,
             const nn::MultiHeadAttention& attention, const Var& current, DirectionalOutput* trace) const;

    EncoderConfig cfg_;
    Index d_current_ = 0;
    SpeakerConditioner speaker_;
    nn::MultiHeadAttention forward_attention_;
    nn::MultiHeadAttention backward_attention_;
    nn::Linear out_;
};

// Frame-level acoustic history accumulated turn by turn through attention (MFAE).
class FineAudioEncoder {
public:
    FineAudioEncoder() = default;
    FineAudioEncoder(nn::ParameterStore& store, const std::string& name, Index d_frame, Index d_speaker,
                     const EncoderConfig& cfg);

    Var operator()(std::span<const Var> frames, std::span<const Var> speakers) const;
    DirectionalOutput directions(std::span<const Var> frames, std::span<const Var> speakers) const;

private:
    Var pass(const std::vector<Var>& turns, const std::vector<std::size_t>& order,
             const nn::MultiHeadAttention& attention, DirectionalOutput* trace) const;

    EncoderConfig cfg_;
    Index d_frame_ = 0;
    SpeakerConditioner speaker_;
    nn::MultiHeadAttention forward_attention_;
    nn::MultiHeadAttention backward_attention_;
    nn::Linear out_;
};

// Nearest-neighbour row indices mapping `target` rows onto `source` rows.
std::vector<Index> align_rows(Index source, Index target);

}  // namespace emphtts
