#pragma once

#include "emphtts/corpus.hpp"
#include "emphtts/nn.hpp"

#include <optional>

namespace emphtts {

using nn::Index;
using nn::Matrix;
using nn::Var;

struct FusionConfig {
    Index d_fuse = 16;
    int heads = 2;
    Index d_qkv = 16;
    Index predictor_hidden = 64;
    // false swaps the attention fusions for projected feature addition.
    bool hybrid = true;
    bool cross = true;

    static FusionConfig toy() { return {}; }
    static FusionConfig full() { return {256, 2, 256, 64, true, true}; }
    void validate() const;
};

// Coarse + fine context within one modality. The query is always built from
// the current utterance's word features, so the output has one row per word.
class HybridFusion {
public:
    HybridFusion() = default;
    // `word_aligned_fine`: fine context rows correspond to current words (text);
    // otherwise they are frames and get mean-pooled in the addition ablation.
    HybridFusion(nn::ParameterStore& store, const std::string& name, const FusionConfig& cfg, bool word_aligned_fine);

    // Either context part may be absent (encoder switched off or empty history).
    nn::AttentionResult operator()(const std::optional<Var>& coarse, const Var& current,
                                   const std::optional<Var>& fine) const;

private:
    FusionConfig cfg_;
    bool word_aligned_fine_ = true;
    nn::MultiHeadAttention attention_;
};

// f_ta = f_t + attention(query f_t, key/value f_a).
class CrossModalityFusion {
public:
    CrossModalityFusion() = default;
    CrossModalityFusion(nn::ParameterStore& store, const std::string& name, const FusionConfig& cfg);

    nn::AttentionResult operator()(const Var& text, const Var& audio) const;

private:
    FusionConfig cfg_;
    nn::MultiHeadAttention attention_;
};

struct EmphasisPrediction {
    Var intensities;  // words x 1, sigmoid outputs
    Var hidden;       // words x predictor_hidden
};

class IntensityPredictor {
public:
    IntensityPredictor() = default;
    IntensityPredictor(nn::ParameterStore& store, const std::string& name, Index d_fuse, Index hidden);

    EmphasisPrediction operator()(const Var& fused) const;
    const nn::Linear& hidden_layer() const { return hidden_; }
    const nn::Linear& output_layer() const { return output_; }

private:
    nn::Linear hidden_;
    nn::Linear output_;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Mean soft-target binary cross-entropy over words.
Var emphasis_loss(const Var& predicted, const std::vector<double>& target);
Var emphasis_loss(const Var& predicted, const IntensityVector& target);

}  // namespace emphtts
