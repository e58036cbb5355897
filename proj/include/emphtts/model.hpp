#pragma once

#include "emphtts/config.hpp"
#include "emphtts/context_encoders.hpp"
#include "emphtts/features.hpp"
#include "emphtts/fusion.hpp"
#include "emphtts/synthesizer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace emphtts {

struct HistoryTurn {
    const TurnFeatures* features = nullptr;
    std::vector<double> intensity;  // gold or previously predicted
};

struct ModelInput {
    std::vector<HistoryTurn> history;  // oldest first, already windowed
    const TurnFeatures* current = nullptr;
};

// Builds the input for `turn` of `conv` over the most recent context_length
// turns. History intensities come from `predicted` (indexed by turn - 1) when
// given, otherwise from the gold annotations.
ModelInput make_input(const ConversationFeatures& conv, int turn, int context_length,
                      const std::vector<std::vector<double>>* predicted = nullptr);

// Context encoders, fusion and intensity predictor under "context.", the
// acoustic model under "tts.".
class EmphasisTts {
public:
    EmphasisTts(const RunConfig& cfg, PhonemeInventory inventory, std::vector<std::string> speakers);

    EmphasisPrediction predict(const ModelInput& in) const;
    // h_emp handed to the synthesizer. Detached from the emphasis branch; for
    // binary_labels it is the embedding of `labels` instead.
    Var emphasis_features(const EmphasisPrediction& p, const std::vector<bool>& labels) const;
    SynthOutput synthesize(const TurnFeatures& current, const Var& h_emp, const NormalizedTargets* targets) const;

    nn::ParameterStore& store() { return store_; }
    const nn::ParameterStore& store() const { return store_; }
    const RunConfig& config() const { return cfg_; }
    const PhonemeInventory& inventory() const { return synth_.inventory(); }
    const std::vector<std::string>& speakers() const { return context_speakers_.speakers(); }

    static constexpr const char* kContextPrefix = "context.";
    static constexpr const char* kTtsPrefix = "tts.";

private:
    RunConfig cfg_;
    nn::ParameterStore store_;
    SpeakerTable context_speakers_;
    nn::Linear current_proj_;
    std::optional<CoarseTextEncoder> cte_;
    std::optional<FineTextEncoder> mfte_;
    std::optional<CoarseAudioEncoder> cae_;
    std::optional<FineAudioEncoder> mfae_;
    HybridFusion text_fusion_;
    HybridFusion audio_fusion_;
    CrossModalityFusion cross_fusion_;
    IntensityPredictor predictor_;
    nn::Embedding label_embedding_;
    SpeakerTable tts_speakers_;
    Synthesizer synth_;
};

}  // namespace emphtts
