#include "emphtts/model.hpp"

#include "emphtts/error.hpp"

namespace emphtts {

namespace {

Var column(const std::vector<double>& v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
    return ag::constant(std::move(m));
}

}  // namespace

ModelInput make_input(const ConversationFeatures& conv, int turn, int context_length,
                      const std::vector<std::vector<double>>* predicted) {
    if (turn < 1 || turn > static_cast<int>(conv.turns.size())) {
        throw NotFoundError("conversation '" + conv.conversation_id + "' has no turn " + std::to_string(turn));
    }
    ModelInput in;
    in.current = &conv.turns[static_cast<std::size_t>(turn - 1)];
    for (int j : history_window(turn, context_length)) {
        const auto& t = conv.turns[static_cast<std::size_t>(j - 1)];
        HistoryTurn h{&t, {}};
        if (predicted) {
            if (static_cast<int>(predicted->size()) < j) {
                throw StructuralError("missing predicted intensities for history turn " + std::to_string(j));
            }
            h.intensity = (*predicted)[static_cast<std::size_t>(j - 1)];
        } else {
            if (!t.intensity) {
                throw StructuralError("conversation '" + conv.conversation_id + "' turn " + std::to_string(j) +
                                      " has no gold intensity for the history");
            }
            h.intensity = *t.intensity;
        }
        if (h.intensity.size() != t.words.size()) throw StructuralError("history intensity length differs from word count");
        in.history.push_back(std::move(h));
    }
    return in;
}

EmphasisTts::EmphasisTts(const RunConfig& cfg, PhonemeInventory inventory, std::vector<std::string> speakers)
    : cfg_(cfg), store_(cfg.seed) {
    cfg.validate();
    const std::string c = kContextPrefix;
    const std::string t = kTtsPrefix;
    const auto& e = cfg.embed;
    const Index d = cfg.encoder.d_fuse;

    context_speakers_ = SpeakerTable(store_, c + "speakers", speakers, e.d_speaker);
    current_proj_ = nn::Linear(store_, c + "current", e.d_word_current, d);
    if (cfg.use_cte) cte_.emplace(store_, c + "cte", e.d_sentence_text, e.d_speaker, cfg.encoder);
    if (cfg.use_mfte) mfte_.emplace(store_, c + "mfte", e.d_word_history, e.d_word_current, e.d_speaker, cfg.encoder);
    if (cfg.use_cae) cae_.emplace(store_, c + "cae", e.d_sentence_audio, e.d_speaker, cfg.encoder);
    if (cfg.use_mfae) mfae_.emplace(store_, c + "mfae", e.d_frame_audio, e.d_speaker, cfg.encoder);
    text_fusion_ = HybridFusion(store_, c + "hybrid_text", cfg.fusion, true);
    audio_fusion_ = HybridFusion(store_, c + "hybrid_audio", cfg.fusion, false);
    cross_fusion_ = CrossModalityFusion(store_, c + "cross", cfg.fusion);
    predictor_ = IntensityPredictor(store_, c + "predictor", d, cfg.fusion.predictor_hidden);

    if (cfg.binary_labels) label_embedding_ = nn::Embedding(store_, t + "labels", 2, cfg.synth.d_emp, 0.5);
    tts_speakers_ = SpeakerTable(store_, t + "speakers", std::move(speakers), static_cast<int>(cfg.synth.d_speaker));
    synth_ = Synthesizer(store_, t + "synth", cfg.synth, std::move(inventory));
}

EmphasisPrediction EmphasisTts::predict(const ModelInput& in) const {
    if (!in.current) throw StructuralError("model input without a current turn");
    const TurnFeatures& cur = *in.current;
    if (cur.words.empty()) throw EmptyInputError("current turn has no words");
    const Var current_words = ag::constant(cur.words_current);
    const Var current = current_proj_(current_words);

    std::vector<Var> sentences, words, intensities, speakers, audio_sentences, frames;
    bool audio = true;
    for (const auto& h : in.history) {
        sentences.push_back(ag::constant(h.features->sentence));
        words.push_back(ag::constant(h.features->words_history));
        intensities.push_back(column(h.intensity));
        speakers.push_back(context_speakers_.embed(h.features->speaker));
        audio = audio && h.features->has_audio();
        if (h.features->has_audio()) {
            audio_sentences.push_back(ag::constant(h.features->audio_sentence));
            frames.push_back(ag::constant(h.features->frames));
        }
    }
    const bool history = !in.history.empty();
    if (history && !audio && (cae_ || mfae_)) {
        throw StructuralError("acoustic encoders enabled but a history turn has no audio");
    }

    std::optional<Var> text_coarse, text_fine, audio_coarse, audio_fine;
    if (history && cte_) text_coarse = (*cte_)(sentences, speakers, ag::constant(cur.sentence));
    if (history && mfte_) text_fine = (*mfte_)(words, intensities, speakers, current_words);
    if (history && cae_) audio_coarse = (*cae_)(audio_sentences, speakers);
    if (history && mfae_) audio_fine = (*mfae_)(frames, speakers);

    Var fused = text_fusion_(text_coarse, current, text_fine).output;
    if (audio_coarse || audio_fine) {
        const Var acoustic = audio_fusion_(audio_coarse, current, audio_fine).output;
        fused = cross_fusion_(fused, acoustic).output;
    }
    return predictor_(fused);
}

Var EmphasisTts::emphasis_features(const EmphasisPrediction& p, const std::vector<bool>& labels) const {
    if (!cfg_.binary_labels) return ag::detach(p.hidden);
    if (static_cast<Index>(labels.size()) != p.hidden.rows()) throw StructuralError("label count differs from word count");
    std::vector<Index> ids;
    for (bool l : labels) ids.push_back(l ? 1 : 0);
    return label_embedding_(ids);
}

SynthOutput EmphasisTts::synthesize(const TurnFeatures& current, const Var& h_emp, const NormalizedTargets* targets) const {
    return synth_(current.phonemes, h_emp, current.spans, tts_speakers_.embed(current.speaker), targets);
}

}  // namespace emphtts
