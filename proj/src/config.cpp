#include "emphtts/config.hpp"

#include "emphtts/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace emphtts {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T out{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void assign(const ConfigField& f, const std::string& value) {
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) {
                *p = parse_bool(f.key, value);
            } else if constexpr (std::is_same_v<T, std::string>) {
                *p = value;
            } else if constexpr (std::is_same_v<T, double>) {
                try {
                    std::size_t used = 0;
                    *p = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                } catch (const std::logic_error&) {
                    throw ConfigError("config key '" + f.key + "': cannot parse '" + value + "'");
                }
            } else {
                *p = parse_number<T>(f.key, value);
            }
        },
        f.slot);
}

std::string render(const ConfigField& f) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::string>) return *p;
            else if constexpr (std::is_same_v<T, double>) return format_double(*p);
            else return std::to_string(*p);
        },
        f.slot);
}

}  // namespace

void RunConfig::validate() const {
    if (preset != "toy" && preset != "full") throw ConfigError("unknown preset '" + preset + "'");
    if (context_length < 1) throw ConfigError("context_length must be >= 1");
    if (!any_encoder() && ablation != 8) {
        throw ConfigError("all context encoders are disabled; only Exp.8 runs without encoders");
    }
    if (ablation < 0 || ablation > 20) throw ConfigError("ablation id must be in 0..20");
    if (lambda_emp < 0) throw ConfigError("lambda_emp must be non-negative");
    if (binarize_threshold < 0 || binarize_threshold > 1) throw ConfigError("binarize_threshold must be in [0, 1]");
    if (lr <= 0) throw ConfigError("train.lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("Adam betas must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (griffin_lim_iterations < 0) throw ConfigError("griffin_lim.iterations must be >= 0");
    if (frame.window_ms <= 0 || frame.shift_ms <= 0) throw ConfigError("frame window and shift must be positive");
    if (encoder.d_fuse != fusion.d_fuse) throw ConfigError("encoder.d_fuse and fusion.d_fuse differ");
    if (fusion.predictor_hidden != synth.d_emp) throw ConfigError("predictor.hidden and synth.d_emp differ");
    if (embed.d_speaker != synth.d_speaker) throw ConfigError("d_speaker and synth.d_speaker differ");
    if (synth.n_mels != frame.n_mels) throw ConfigError("synth.n_mels and frame.n_mels differ");
    embed.validate();
    encoder.validate();
    fusion.validate();
    synth.validate();
}

RunConfig toy_config() {
    RunConfig cfg;
    cfg.lr = 1e-2;
    cfg.batch_size = 32;
    return cfg;
}

RunConfig full_config() {
    RunConfig cfg;
    cfg.preset = "full";
    cfg.embed = EmbedderConfig::full_dims();
    cfg.encoder = EncoderConfig::full();
    cfg.fusion = FusionConfig::full();
    cfg.synth = SynthConfig::full();
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    return cfg;
}

RunConfig preset_config(const std::string& name) {
    if (name == "toy") return toy_config();
    if (name == "full") return full_config();
    throw ConfigError("unknown preset '" + name + "' (expected toy or full)");
}

std::vector<ConfigField> config_fields(RunConfig& c) {
    return {
        {"preset", &c.preset},
        {"frontend.text", &c.text_frontend},
        {"frontend.audio", &c.audio_frontend},
        {"embed.d_sentence_text", &c.embed.d_sentence_text},
        {"embed.d_word_history", &c.embed.d_word_history},
        {"embed.d_word_current", &c.embed.d_word_current},
        {"embed.d_frame_audio", &c.embed.d_frame_audio},
        {"embed.d_sentence_audio", &c.embed.d_sentence_audio},
        {"embed.d_speaker", &c.embed.d_speaker},
        {"embed.seed", &c.embed.seed},
        {"frame.sample_rate", &c.frame.sample_rate},
        {"frame.window_ms", &c.frame.window_ms},
        {"frame.shift_ms", &c.frame.shift_ms},
        {"frame.n_fft", &c.frame.n_fft},
        {"frame.n_mels", &c.frame.n_mels},
        {"frame.f_max", &c.frame.f_max},
        {"encoder.d_fuse", &c.encoder.d_fuse},
        {"encoder.gru_hidden", &c.encoder.gru_hidden},
        {"encoder.gru_layers", &c.encoder.gru_layers},
        {"encoder.fine_heads", &c.encoder.fine_heads},
        {"encoder.fine_d_qkv", &c.encoder.fine_d_qkv},
        {"encoder.bidirectional", &c.encoder.bidirectional},
        {"encoder.memory", &c.encoder.memory},
        {"fusion.d_fuse", &c.fusion.d_fuse},
        {"fusion.heads", &c.fusion.heads},
        {"fusion.d_qkv", &c.fusion.d_qkv},
        {"fusion.hybrid", &c.fusion.hybrid},
        {"fusion.cross", &c.fusion.cross},
        {"predictor.hidden", &c.fusion.predictor_hidden},
        {"synth.d_model", &c.synth.d_model},
        {"synth.encoder_layers", &c.synth.encoder_layers},
        {"synth.decoder_layers", &c.synth.decoder_layers},
        {"synth.heads", &c.synth.heads},
        {"synth.ffn", &c.synth.ffn},
        {"synth.n_mels", &c.synth.n_mels},
        {"synth.pitch_bins", &c.synth.pitch_bins},
        {"synth.energy_bins", &c.synth.energy_bins},
        {"synth.d_emp", &c.synth.d_emp},
        {"synth.d_speaker", &c.synth.d_speaker},
        {"use_cte", &c.use_cte},
        {"use_mfte", &c.use_mfte},
        {"use_cae", &c.use_cae},
        {"use_mfae", &c.use_mfae},
        {"binary_labels", &c.binary_labels},
        {"ablation", &c.ablation},
        {"train_synthesizer", &c.train_synthesizer},
        {"context_length", &c.context_length},
        {"lambda_emp", &c.lambda_emp},
        {"binarize_threshold", &c.binarize_threshold},
        {"train.lr", &c.lr},
        {"train.beta1", &c.beta1},
        {"train.beta2", &c.beta2},
        {"train.adam_eps", &c.adam_eps},
        {"train.grad_clip", &c.grad_clip},
        {"train.batch_size", &c.batch_size},
        {"train.steps", &c.steps},
        {"seed", &c.seed},
        {"griffin_lim.iterations", &c.griffin_lim_iterations},
    };
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : config_fields(cfg)) {
        if (f.key == key) {
            assign(f, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string get_config_value(RunConfig& cfg, const std::string& key) {
    for (const auto& f : config_fields(cfg)) {
        if (f.key == key) return render(f);
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> config_to_map(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::map<std::string, std::string> out;
    for (const auto& f : config_fields(copy)) out[f.key] = render(f);
    return out;
}

RunConfig config_from_map(const std::map<std::string, std::string>& values) {
    auto it = values.find("preset");
    RunConfig cfg = preset_config(it == values.end() ? "toy" : it->second);
    for (const auto& [k, v] : values) {
        if (k != "preset") set_config_value(cfg, k, v);
    }
    return cfg;
}

RunConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> values;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        if (values.count(key)) throw ConfigError("config key '" + key + "' given twice");
        values[key] = trim(line.substr(eq + 1));
    }
    return config_from_map(values);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::string out;
    for (const auto& f : config_fields(copy)) out += f.key + " = " + render(f) + "\n";
    return out;
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write config " + path.string());
    out << format_config(cfg);
}

std::string ablation_name(int experiment) {
    switch (experiment) {
        case 0: return "full model";
        case 1: return "w/o coarse-grained encoders (CTE & CAE)";
        case 2: return "w/o fine-grained encoders (MFTE & MFAE)";
        case 3: case 19: return "w/o hybrid-grained fusion";
        case 4: case 20: return "w/o cross-modality fusion";
        case 5: case 17: return "w/o bidirectional context modeling";
        case 6: case 18: return "w/o memory enhancement";
        case 7: return "w/o emphasis intensity (0/1 labels)";
        case 8: return "no context encoders";
        case 9: return "CTE only";
        case 10: return "MFTE only";
        case 11: return "CTE + MFTE";
        case 12: return "CAE only";
        case 13: return "MFAE only";
        case 14: return "CAE + MFAE";
        case 15: return "CTE + CAE";
        case 16: return "MFTE + MFAE";
        default: throw ConfigError("ablation id must be in 0..20, got " + std::to_string(experiment));
    }
}

RunConfig ablation_config(const RunConfig& base, int experiment) {
    ablation_name(experiment);
    RunConfig cfg = base;
    cfg.ablation = experiment;
    // Rendering experiments keep the synthesizer; prediction experiments only
    // train the emphasis branch.
    cfg.train_synthesizer = experiment <= 7;

    auto mask = [&](bool cte, bool mfte, bool cae, bool mfae) {
        cfg.use_cte = cte;
        cfg.use_mfte = mfte;
        cfg.use_cae = cae;
        cfg.use_mfae = mfae;
    };
    switch (experiment) {
        case 1: mask(false, true, false, true); break;
        case 2: mask(true, false, true, false); break;
        case 3: case 19: cfg.fusion.hybrid = false; break;
        case 4: case 20: cfg.fusion.cross = false; break;
        case 5: case 17: cfg.encoder.bidirectional = false; break;
        case 6: case 18: cfg.encoder.memory = false; break;
        case 7: cfg.binary_labels = true; break;
        case 8: mask(false, false, false, false); break;
        case 9: mask(true, false, false, false); break;
        case 10: mask(false, true, false, false); break;
        case 11: mask(true, true, false, false); break;
        case 12: mask(false, false, true, false); break;
        case 13: mask(false, false, false, true); break;
        case 14: mask(false, false, true, true); break;
        case 15: mask(true, false, true, false); break;
        case 16: mask(false, true, false, true); break;
        default: break;
    }
    return cfg;
}

}  // namespace emphtts
