#pragma once

#include "emphtts/runner.hpp"

#include <memory>
#include <string>
#include <vector>

namespace emphtts::testing {

// Toy corpus with its features built under `cfg`.
struct ToyBench {
    RunConfig cfg;
    ToyCorpus corpus;
    std::unique_ptr<Featurizer> featurizer;
    std::unique_ptr<FeatureBank> bank;
    std::vector<std::string> ids;

    ToyBench(const RunConfig& c, const ToyCorpusOptions& options) : cfg(c), corpus(make_toy_corpus(options)) {
        featurizer = std::make_unique<Featurizer>(cfg, audio_from_map(corpus.audio));
        bank = std::make_unique<FeatureBank>(*featurizer, corpus.conversations);
        for (const auto& conv : corpus.conversations) ids.push_back(conv.conversation_id);
    }
};

inline ToyCorpusOptions toy_options(int conversations, std::uint64_t seed, int min_turns = 3, int max_turns = 6) {
    ToyCorpusOptions o;
    o.num_conversations = conversations;
    o.seed = seed;
    o.min_turns = min_turns;
    o.max_turns = max_turns;
    return o;
}

// Two-turn dialogues that share their second turn. In `planted` the first turn
// contains the word at `word` of the second turn, so the rule marks it
// emphasized; in `control` that word is replaced and nothing is planted.
struct TwinPair {
    ConversationFeatures planted;
    ConversationFeatures control;
    std::size_t word = 0;
    std::string text;
};

inline TwinPair make_twin(const Conversation& source, const RunConfig& cfg) {
    const Utterance& first = source.turns.at(0);
    const Utterance& second = source.turns.at(1);
    const auto flags = binarize_intensity(*second.emphasis_intensity);
    std::size_t e = 0;
    while (!flags.at(e)) ++e;
    const std::string repeated = second.words[e];

    std::optional<std::size_t> first_emphasis;
    const auto first_flags = binarize_intensity(*first.emphasis_intensity);
    for (std::size_t i = 0; i < first_flags.size(); ++i) {
        if (first_flags[i]) first_emphasis = i;
    }
    std::vector<std::string> replaced = first.words;
    for (auto& w : replaced) {
        if (w == repeated) w = "zuvo";
    }
    const auto a = make_toy_utterance(1, first.speaker_id, first.words, first_emphasis, 5, "twin/a.wav");
    const auto b = make_toy_utterance(1, first.speaker_id, replaced, first_emphasis, 5, "twin/b.wav");
    Utterance current = second;
    current.audio_path = "twin/current.wav";
    ToyCorpusOptions render;
    std::map<std::string, Waveform> audio{{"twin/a.wav", render_toy_audio(a, render)},
                                          {"twin/b.wav", render_toy_audio(b, render)},
                                          {"twin/current.wav", render_toy_audio(second, render)}};
    Featurizer featurizer(cfg, audio_from_map(audio));
    return {featurizer.conversation({"twin_a", {a, current}}), featurizer.conversation({"twin_b", {b, current}}), e,
            repeated};
}

}  // namespace emphtts::testing
