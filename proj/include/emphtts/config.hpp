#pragma once

#include "emphtts/audio.hpp"
#include "emphtts/context_encoders.hpp"
#include "emphtts/frontends.hpp"
#include "emphtts/fusion.hpp"
#include "emphtts/synthesizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace emphtts {

struct RunConfig {
    std::string preset = "toy";

    std::string text_frontend = "toy";
    std::string audio_frontend = "toy";
    EmbedderConfig embed;
    audio::FrameConfig frame;

    EncoderConfig encoder;
    FusionConfig fusion;
    SynthConfig synth;

    // Encoder switches; all four off is only valid for ablation 8.
    bool use_cte = true;
    bool use_mfte = true;
    bool use_cae = true;
    bool use_mfae = true;
    // Targets binarized and h_emp taken from an embedding of the 0/1 label.
    bool binary_labels = false;
    int ablation = 0;  // 0 = full model
    bool train_synthesizer = true;

    int context_length = 10;
    double lambda_emp = 1.0;
    double binarize_threshold = 0.5;

    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    double grad_clip = 1.0;
    int batch_size = 16;
    int steps = 200;
    std::uint64_t seed = 0;

    int griffin_lim_iterations = 32;

    bool any_encoder() const { return use_cte || use_mfte || use_cae || use_mfae; }
    void validate() const;
};

RunConfig toy_config();
RunConfig full_config();
// "toy" or "full"; throws ConfigError otherwise.
RunConfig preset_config(const std::string& name);

using ConfigSlot = std::variant<int*, std::int64_t*, std::uint64_t*, double*, bool*, std::string*>;

struct ConfigField {
    std::string key;
    ConfigSlot slot;
};

// Every configurable key bound to its storage in `cfg`, in a fixed order.
std::vector<ConfigField> config_fields(RunConfig& cfg);

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(RunConfig& cfg, const std::string& key);
std::map<std::string, std::string> config_to_map(const RunConfig& cfg);
RunConfig config_from_map(const std::map<std::string, std::string>& values);

// Flat "key = value" lines; '#' starts a comment. A "preset" key, if present,
// is applied first and the remaining keys override it.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);
std::string format_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

// Ablation experiments 1..20 applied on top of `base`.
RunConfig ablation_config(const RunConfig& base, int experiment);
std::string ablation_name(int experiment);

}  // namespace emphtts
