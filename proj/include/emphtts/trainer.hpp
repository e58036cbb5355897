#pragma once

#include "emphtts/config.hpp"
#include "emphtts/features.hpp"
#include "emphtts/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace emphtts {

struct LossRecord {
    std::int64_t step = 0;  // 1-based optimizer step
    double total = 0.0;
    double emphasis = 0.0;
    double tts = 0.0;
};

struct Checkpoint {
    RunConfig config;
    std::vector<std::string> phonemes;
    std::vector<std::string> speakers;
    ProsodyStats prosody;
    std::vector<std::string> train_ids;
    std::int64_t step = 0;
    std::vector<LossRecord> history;
    std::map<std::string, Matrix> parameters;
    nn::Adam::State optimizer;
};

// Binary layout: magic line, 8-byte header length, JSON header, then every
// tensor's doubles in header order (parameters, Adam m, Adam v).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model with the checkpoint's parameters loaded.
std::unique_ptr<EmphasisTts> restore_model(const Checkpoint& ckpt);

struct TrainingExample {
    std::size_t conversation = 0;  // index into the feature bank
    int turn = 1;
};

class Trainer {
public:
    // Fresh run over the bank conversations named in `train_ids` (all when empty).
    Trainer(const RunConfig& cfg, const FeatureBank& bank, std::vector<std::string> train_ids = {});
    // Continues a saved run; the bank must hold the same training conversations.
    Trainer(const Checkpoint& ckpt, const FeatureBank& bank);

    LossRecord step();
    void run(int steps);

    // Batch of the given 1-based step; a pure function of (seed, step).
    std::vector<TrainingExample> batch(std::int64_t step) const;
    const std::vector<TrainingExample>& examples() const { return examples_; }

    Checkpoint checkpoint() const;
    EmphasisTts& model() { return *model_; }
    const ProsodyStats& prosody() const { return prosody_; }
    const std::vector<LossRecord>& history() const { return history_; }
    std::int64_t steps_done() const { return step_; }

private:
    void init(const RunConfig& cfg, std::vector<std::string> phonemes, std::vector<std::string> speakers);

    RunConfig cfg_;
    const FeatureBank* bank_;
    std::vector<std::string> train_ids_;
    std::vector<TrainingExample> examples_;
    ProsodyStats prosody_;
    std::unique_ptr<EmphasisTts> model_;
    std::unique_ptr<nn::Adam> adam_;
    std::int64_t step_ = 0;
    std::vector<LossRecord> history_;
};

// Loss of one example; exposed for the gradient-routing checks.
struct ExampleLoss {
    Var total;
    Var emphasis;
    std::optional<Var> tts;
};
ExampleLoss example_loss(const EmphasisTts& model, const ConversationFeatures& conv, int turn,
                         const ProsodyStats& prosody);

// Runs cfg.steps optimizer steps from scratch.
Checkpoint train(const RunConfig& cfg, const FeatureBank& bank, const std::vector<std::string>& train_ids = {});

}  // namespace emphtts
