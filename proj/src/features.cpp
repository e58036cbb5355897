#include "emphtts/features.hpp"

#include "emphtts/error.hpp"
#include "emphtts/wav.hpp"

#include <set>

namespace emphtts {

AudioSource audio_from_map(std::map<std::string, Waveform> audio) {
    auto shared = std::make_shared<const std::map<std::string, Waveform>>(std::move(audio));
    return [shared](const Utterance& u) -> std::optional<Waveform> {
        if (!u.audio_path) return std::nullopt;
        auto it = shared->find(*u.audio_path);
        if (it == shared->end()) return std::nullopt;
        return it->second;
    };
}

AudioSource audio_from_directory(std::filesystem::path root) {
    return [root](const Utterance& u) -> std::optional<Waveform> {
        if (!u.audio_path) return std::nullopt;
        const auto path = root / *u.audio_path;
        if (!std::filesystem::exists(path)) throw NotFoundError("audio file " + path.string() + " does not exist");
        return read_wav(path).samples;
    };
}

Featurizer::Featurizer(const RunConfig& cfg, AudioSource audio)
    : cfg_(cfg),
      source_(std::move(audio)),
      text_(make_text_embedder(cfg.text_frontend, cfg.embed)),
      audio_embedder_(make_audio_embedder(cfg.audio_frontend, cfg.embed, cfg.frame)) {}

TurnFeatures Featurizer::turn(const Utterance& u) const {
    TurnFeatures t;
    t.index = u.index;
    t.speaker = u.speaker_id;
    t.words = u.words;
    t.phonemes = u.phonemes;
    t.spans = u.word_phoneme_spans;
    t.sentence = text_->sentence(u);
    t.words_history = text_->words(u, WordRole::History).values;
    t.words_current = text_->words(u, WordRole::Current).values;
    if (u.emphasis_intensity) t.intensity = u.emphasis_intensity->values();

    const auto wave = source_ ? source_(u) : std::nullopt;
    if (wave) {
        t.audio_sentence = audio_embedder_->sentence(*wave);
        t.frames = audio_embedder_->frames(*wave).values;
        if (u.phoneme_durations) t.targets = extract_targets(*wave, *u.phoneme_durations, cfg_.frame);
    }
    return t;
}

ConversationFeatures Featurizer::conversation(const Conversation& c) const {
    validate_conversation(c);
    ConversationFeatures out;
    out.conversation_id = c.conversation_id;
    for (const auto& u : c.turns) out.turns.push_back(turn(u));
    return out;
}

FeatureBank::FeatureBank(const Featurizer& featurizer, const std::vector<Conversation>& corpus) {
    for (const auto& c : corpus) {
        if (index_.count(c.conversation_id)) throw StructuralError("duplicate conversation id '" + c.conversation_id + "'");
        index_[c.conversation_id] = conversations_.size();
        conversations_.push_back(featurizer.conversation(c));
    }
}

const ConversationFeatures& FeatureBank::conversation(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("conversation '" + id + "' is not in the feature bank");
    return conversations_[it->second];
}

std::vector<int> history_window(int turn, int context_length) {
    if (context_length < 1) throw ConfigError("context_length must be >= 1");
    std::vector<int> out;
    for (int j = std::max(1, turn - context_length); j < turn; ++j) out.push_back(j);
    return out;
}

std::vector<std::string> speakers_of(const std::vector<Conversation>& corpus) {
    std::set<std::string> s;
    for (const auto& c : corpus) {
        for (const auto& u : c.turns) s.insert(u.speaker_id);
    }
    return {s.begin(), s.end()};
}

}  // namespace emphtts
