#pragma once

#include "emphtts/config.hpp"
#include "emphtts/features.hpp"
#include "emphtts/metrics.hpp"
#include "emphtts/model.hpp"
#include "emphtts/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace emphtts {

enum class HistoryMode { Predicted, Gold };

// Per-turn intensity predictions, turn 1 first. Turn 1 always runs in
// empty-history mode.
std::vector<std::vector<double>> predict_dialogue(const EmphasisTts& model, const ConversationFeatures& conv,
                                                  HistoryMode mode = HistoryMode::Predicted);

struct WordReport {
    std::string word;
    double intensity = 0.0;     // predicted
    int frames = 0;             // predicted duration of the word
    double mean_energy = 0.0;   // normalized units over the word's predicted frames
    double mean_pitch = 0.0;    // normalized units
};

struct SynthesisResult {
    Matrix mel;                  // frames x n_mels
    std::vector<int> durations;  // predicted, per phoneme
    std::vector<double> pitch_hz;
    std::vector<double> energy;  // normalized, per frame
    Waveform waveform;           // empty when reconstruction is skipped
    std::vector<WordReport> words;
};

struct SynthesisOptions {
    HistoryMode history = HistoryMode::Predicted;
    bool waveform = true;
};

SynthesisResult synthesize(const EmphasisTts& model, const ProsodyStats& prosody, const ConversationFeatures& conv,
                           int turn, const SynthesisOptions& options = {});

struct EvaluationReport {
    std::size_t instances = 0;
    double match1 = 0, match2 = 0, match_mean = 0;
    double f1_1 = 0, f1_2 = 0, f1_mean = 0;
    // Planted-label ROC-AUC over words of turns that have a history.
    std::optional<double> auc;
    // Rendering errors on z-scored pitch/energy averaged per phoneme, and
    // rescaled durations; absent when the synthesizer is not trained.
    std::optional<double> mae_p, mae_e, mae_d;
};

EvaluationReport evaluate(const EmphasisTts& model, const ProsodyStats& prosody, const FeatureBank& bank,
                          const std::vector<std::string>& conversation_ids, HistoryMode mode = HistoryMode::Predicted);
std::string format_report(const EvaluationReport& r);
std::string report_json(const EvaluationReport& r);

struct SweepRow {
    int context_length = 0;
    EvaluationReport report;
};

// Trains and evaluates one model per context length on a fixed split.
std::vector<SweepRow> sweep_context(const RunConfig& cfg, const FeatureBank& bank, const CorpusSplit& split,
                                    const std::vector<int>& lengths);
std::string format_sweep(const std::vector<SweepRow>& rows);

struct AblationRun {
    int experiment = 0;
    std::string name;
    RunConfig config;
    std::vector<LossRecord> history;
    std::optional<EvaluationReport> report;
};

// Trains ablation `experiment` for cfg.steps steps; evaluates when test ids are given.
AblationRun run_ablation(const RunConfig& base, int experiment, const FeatureBank& bank,
                         const std::vector<std::string>& train_ids, const std::vector<std::string>& test_ids);
std::string format_ablation(const std::vector<AblationRun>& runs);

}  // namespace emphtts
