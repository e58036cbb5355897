#pragma once

#include "emphtts/context_encoders.hpp"
#include "emphtts/fusion.hpp"

#include <random>
#include <vector>

namespace emphtts::testing {

// Random dialogue history at a single width d for encoder-level tests.
struct HistoryFixture {
    std::vector<Var> sentences;        // 1 x d each
    std::vector<Var> words;            // n_j x d
    std::vector<Var> intensities;      // n_j x 1
    std::vector<Var> audio_sentences;  // 1 x d
    std::vector<Var> frames;           // f_j x d
    std::vector<Var> speakers;         // 1 x d
    Var current_sentence;              // 1 x d
    Var current_words;                 // n x d

    HistoryFixture(Index d, int turns, unsigned seed, bool trainable = false) {
        std::mt19937 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto random = [&](Index r, Index c) {
            Matrix m(r, c);
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * 0.5;
            return Var(m, trainable);
        };
        auto count = [&](int lo, int hi) { return static_cast<Index>(lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1))); };
        for (int j = 0; j < turns; ++j) {
            sentences.push_back(random(1, d));
            const Index n = count(2, 4);
            words.push_back(random(n, d));
            Matrix inten(n, 1);
            for (Index i = 0; i < n; ++i) inten(i, 0) = std::round(unit(rng) * 6) / 6;
            intensities.push_back(Var(inten, false));
            audio_sentences.push_back(random(1, d));
            frames.push_back(random(count(3, 6), d));
            speakers.push_back(random(1, d));
        }
        current_sentence = random(1, d);
        current_words = random(count(2, 5), d);
    }

    std::vector<Var> inputs() const {
        std::vector<Var> all;
        for (const auto* group : {&sentences, &words, &audio_sentences, &frames, &speakers}) {
            all.insert(all.end(), group->begin(), group->end());
        }
        all.push_back(current_sentence);
        all.push_back(current_words);
        return all;
    }
};

inline EncoderConfig small_encoder(Index d) {
    EncoderConfig c;
    c.d_fuse = d;
    c.gru_hidden = d;
    c.gru_layers = 1;
    c.fine_heads = 2;
    c.fine_d_qkv = d;
    return c;
}

inline FusionConfig small_fusion(Index d) {
    FusionConfig c;
    c.d_fuse = d;
    c.heads = 2;
    c.d_qkv = d;
    c.predictor_hidden = d;
    return c;
}

}  // namespace emphtts::testing
