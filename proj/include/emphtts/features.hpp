#pragma once

#include "emphtts/config.hpp"
#include "emphtts/corpus.hpp"
#include "emphtts/frontends.hpp"
#include "emphtts/synthesizer.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace emphtts {

// Everything the model reads about one utterance, precomputed once.
struct TurnFeatures {
    int index = 1;
    std::string speaker;
    std::vector<std::string> words;
    std::vector<std::string> phonemes;
    std::vector<PhonemeSpan> spans;

    Matrix sentence;        // 1 x d_sentence_text
    Matrix words_history;   // n x d_word_history
    Matrix words_current;   // n x d_word_current
    Matrix audio_sentence;  // 1 x d_sentence_audio; empty without audio
    Matrix frames;          // f x d_frame_audio; empty without audio

    std::optional<std::vector<double>> intensity;
    std::optional<AcousticTargets> targets;

    bool has_audio() const { return frames.rows() > 0; }
};

struct ConversationFeatures {
    std::string conversation_id;
    std::vector<TurnFeatures> turns;
};

// Returns the waveform of an utterance, or nullopt when it has none.
using AudioSource = std::function<std::optional<Waveform>(const Utterance&)>;

AudioSource audio_from_map(std::map<std::string, Waveform> audio);
// audio_path resolved relative to `root`.
AudioSource audio_from_directory(std::filesystem::path root);

class Featurizer {
public:
    Featurizer(const RunConfig& cfg, AudioSource audio);

    TurnFeatures turn(const Utterance& u) const;
    ConversationFeatures conversation(const Conversation& c) const;
    const TextEmbedder& text() const { return *text_; }
    const AudioEmbedder& audio() const { return *audio_embedder_; }

private:
    RunConfig cfg_;
    AudioSource source_;
    std::unique_ptr<TextEmbedder> text_;
    std::unique_ptr<AudioEmbedder> audio_embedder_;
};

class FeatureBank {
public:
    FeatureBank() = default;
    FeatureBank(const Featurizer& featurizer, const std::vector<Conversation>& corpus);

    const std::vector<ConversationFeatures>& conversations() const { return conversations_; }
    const ConversationFeatures& conversation(const std::string& id) const;
    std::size_t size() const { return conversations_.size(); }

private:
    std::vector<ConversationFeatures> conversations_;
    std::map<std::string, std::size_t> index_;
};

// Turn indices (1-based) of the history fed to the encoders for `turn`: the
// most recent `context_length` turns before it, oldest first.
std::vector<int> history_window(int turn, int context_length);

std::vector<std::string> speakers_of(const std::vector<Conversation>& corpus);

}  // namespace emphtts
