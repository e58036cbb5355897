#include "emphtts/annotation_service.hpp"
#include "emphtts/error.hpp"
#include "emphtts/metrics.hpp"
#include "emphtts/plot.hpp"
#include "emphtts/runner.hpp"
#include "emphtts/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace emphtts;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// --config FILE plus one --<key> flag per config key.
struct ConfigOptions {
    std::string file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> flags;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
        for (const auto& [key, _] : config_to_map(toy_config())) {
            flags[key] = app->add_option("--" + key, values[key], "config override")->group("Config overrides");
        }
    }
    bool given(const std::string& key) const { return flags.at(key)->count() > 0; }

    RunConfig build() const {
        RunConfig cfg = file.empty() ? preset_config(given("preset") ? values.at("preset") : "toy") : load_config(file);
        if (!file.empty() && given("preset") && values.at("preset") != cfg.preset) {
            throw ConfigError("--preset cannot change the preset of " + file);
        }
        for (const auto& [key, opt] : flags) {
            if (opt->count() > 0 && key != "preset") set_config_value(cfg, key, values.at(key));
        }
        cfg.validate();
        return cfg;
    }
    // Overrides applied on top of an existing config (checkpoint resume).
    RunConfig apply(RunConfig cfg) const {
        for (const auto& [key, opt] : flags) {
            if (opt->count() > 0 && key != "preset") set_config_value(cfg, key, values.at(key));
        }
        cfg.validate();
        return cfg;
    }
};

struct CorpusOptions {
    std::string corpus;
    std::string audio_root;

    void attach(CLI::App* app) {
        app->add_option("--corpus", corpus, "corpus .jsonl")->required()->check(CLI::ExistingFile);
        app->add_option("--audio-root", audio_root, "directory audio paths are relative to (default: corpus dir)");
    }
    std::vector<Conversation> load() const { return load_corpus(corpus); }
    AudioSource audio() const {
        return audio_from_directory(audio_root.empty() ? fs::path(corpus).parent_path() : fs::path(audio_root));
    }
};

json split_json(const CorpusSplit& s) {
    return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}, {"seed", s.seed}};
}

CorpusSplit load_split(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw NotFoundError("cannot read split file " + path);
    const json j = json::parse(f);
    CorpusSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

std::vector<std::string> subset(const std::string& split_path, const std::string& which,
                                const std::vector<Conversation>& corpus) {
    if (split_path.empty()) {
        std::vector<std::string> all;
        for (const auto& c : corpus) all.push_back(c.conversation_id);
        return all;
    }
    const auto s = load_split(split_path);
    if (which == "train") return s.train;
    if (which == "validation") return s.validation;
    if (which == "test") return s.test;
    throw ConfigError("unknown subset '" + which + "'");
}

const Conversation& find_conversation(const std::vector<Conversation>& corpus, const std::string& id) {
    for (const auto& c : corpus) {
        if (c.conversation_id == id) return c;
    }
    throw NotFoundError("no conversation '" + id + "' in the corpus");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto dash = item.find('-');
        if (dash != std::string::npos && dash > 0) {
            for (int i = std::stoi(item.substr(0, dash)); i <= std::stoi(item.substr(dash + 1)); ++i) out.push_back(i);
        } else if (!item.empty()) {
            out.push_back(std::stoi(item));
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

void write_mel_csv(const fs::path& path, const Matrix& mel) {
    std::ostringstream s;
    s.precision(8);
    for (Index r = 0; r < mel.rows(); ++r) {
        for (Index c = 0; c < mel.cols(); ++c) s << (c ? "," : "") << mel(r, c);
        s << '\n';
    }
    write_text(path, s.str());
}

std::string word_line(const std::vector<std::string>& words, const std::vector<double>& values) {
    std::string s;
    for (std::size_t w = 0; w < words.size(); ++w) s += (w ? " " : "") + words[w] + "(" + format_intensity(values[w]) + ")";
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emphasis-aware conversational TTS toolkit"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "validate a corpus, write a split, or generate the toy corpus");
    std::string prep_corpus, toy_dir, split_out;
    int toy_n = 20, toy_min = 3, toy_max = 6;
    std::uint64_t prep_seed = 0;
    std::vector<double> ratios{0.7, 0.2, 0.1};
    prepare->add_option("--corpus", prep_corpus, "corpus to validate");
    prepare->add_option("--toy", toy_dir, "write a planted toy corpus into this directory");
    prepare->add_option("--conversations", toy_n, "toy conversations")->check(CLI::PositiveNumber);
    prepare->add_option("--min-turns", toy_min, "toy turns per conversation, lower bound");
    prepare->add_option("--max-turns", toy_max, "toy turns per conversation, upper bound");
    prepare->add_option("--seed", prep_seed, "toy corpus and split seed");
    prepare->add_option("--split-out", split_out, "write a train/validation/test split (JSON)");
    prepare->add_option("--ratios", ratios, "split ratios")->expected(3);

    // aggregate
    auto* aggregate = app.add_subcommand("aggregate", "annotation log -> per-word intensities");
    std::string agg_corpus, agg_log, agg_out;
    int agg_quorum = 6;
    aggregate->add_option("--corpus", agg_corpus)->required()->check(CLI::ExistingFile);
    aggregate->add_option("--log", agg_log, "annotation log .jsonl")->required()->check(CLI::ExistingFile);
    aggregate->add_option("--quorum", agg_quorum, "annotators needed per turn");
    aggregate->add_option("--out", agg_out, "write the annotated corpus here");

    // kappa
    auto* kappa = app.add_subcommand("kappa", "Fleiss kappa of an annotation log");
    std::string kappa_log;
    kappa->add_option("--log", kappa_log)->required()->check(CLI::ExistingFile);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    ConfigOptions train_cfg;
    CorpusOptions train_corpus;
    std::string train_out, train_split, train_resume;
    int log_every = 10;
    train_cfg.attach(train_cmd);
    train_corpus.attach(train_cmd);
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--split", train_split, "split file; trains on its train set");
    train_cmd->add_option("--resume", train_resume, "continue from this checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--log-every", log_every, "print the loss every N steps");

    // predict
    auto* predict = app.add_subcommand("predict", "chained per-turn emphasis prediction");
    std::string pred_ckpt, pred_conv;
    bool gold_history = false, as_json = false;
    CorpusOptions pred_corpus;
    pred_corpus.attach(predict);
    predict->add_option("--checkpoint", pred_ckpt)->required()->check(CLI::ExistingFile);
    predict->add_option("--conversation", pred_conv)->required();
    predict->add_flag("--gold-history", gold_history, "feed gold instead of predicted history intensities");
    predict->add_flag("--json", as_json);

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "mel, waveform and word report for one turn");
    std::string syn_ckpt, syn_conv, syn_out;
    int syn_turn = 1;
    bool syn_no_wave = false, syn_plot = false, syn_gold = false;
    CorpusOptions syn_corpus;
    syn_corpus.attach(synth);
    synth->add_option("--checkpoint", syn_ckpt)->required()->check(CLI::ExistingFile);
    synth->add_option("--conversation", syn_conv)->required();
    synth->add_option("--turn", syn_turn)->required();
    synth->add_option("--out-dir", syn_out, "output directory")->required();
    synth->add_flag("--no-waveform", syn_no_wave, "skip Griffin-Lim reconstruction");
    synth->add_flag("--plot", syn_plot, "also write plot.png");
    synth->add_flag("--gold-history", syn_gold);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Match/F1/ROC-AUC and MAE-P/E/D on a subset");
    std::string eval_ckpt, eval_split, eval_subset = "test";
    bool eval_json = false, eval_gold = false;
    CorpusOptions eval_corpus;
    eval_corpus.attach(eval);
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--split", eval_split, "split file (default: whole corpus)");
    eval->add_option("--subset", eval_subset, "train | validation | test");
    eval->add_flag("--json", eval_json);
    eval->add_flag("--gold-history", eval_gold);

    // sweep-context
    auto* sweep = app.add_subcommand("sweep-context", "train and evaluate per context length");
    ConfigOptions sweep_cfg;
    CorpusOptions sweep_corpus;
    std::string sweep_split, sweep_lengths = "4,6,8,10,12,14,16";
    sweep_cfg.attach(sweep);
    sweep_corpus.attach(sweep);
    sweep->add_option("--split", sweep_split, "split file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--lengths", sweep_lengths, "comma-separated context lengths");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run ablation experiments 1..20");
    ConfigOptions abl_cfg;
    std::string abl_corpus_path, abl_audio, abl_split, abl_ids = "1-20";
    bool abl_dry = false;
    abl_cfg.attach(ablate);
    ablate->add_option("--corpus", abl_corpus_path)->check(CLI::ExistingFile);
    ablate->add_option("--audio-root", abl_audio);
    ablate->add_option("--split", abl_split, "split file; evaluates on its test set");
    ablate->add_option("--experiments", abl_ids, "e.g. 1-7,11");
    ablate->add_flag("--dry-run", abl_dry, "print the configurations only");

    // plot
    auto* plot = app.add_subcommand("plot", "mel + F0 figure with emphasis boxes");
    std::string plot_ckpt, plot_conv, plot_out;
    int plot_turn = 1;
    bool plot_recorded = false;
    ConfigOptions plot_cfg;
    CorpusOptions plot_corpus;
    plot_corpus.attach(plot);
    plot_cfg.attach(plot);
    plot->add_option("--checkpoint", plot_ckpt, "synthesize with this model")->check(CLI::ExistingFile);
    plot->add_option("--conversation", plot_conv)->required();
    plot->add_option("--turn", plot_turn)->required();
    plot->add_option("--out", plot_out, "PNG path")->required();
    plot->add_flag("--recorded", plot_recorded, "plot the recorded audio with its annotated emphasis");

    // serve-annotation
    auto* serve = app.add_subcommand("serve-annotation", "HTTP annotation service");
    std::string srv_corpus, srv_log, srv_tokens, srv_audio, srv_host = "127.0.0.1";
    int srv_port = 8080, srv_quorum = 6;
    serve->add_option("--corpus", srv_corpus)->required()->check(CLI::ExistingFile);
    serve->add_option("--log", srv_log, "append-only annotation log")->required();
    serve->add_option("--tokens", srv_tokens, "token file: '<token> <annotator_id>' per line")->required()->check(CLI::ExistingFile);
    serve->add_option("--audio-root", srv_audio);
    serve->add_option("--host", srv_host);
    serve->add_option("--port", srv_port);
    serve->add_option("--quorum", srv_quorum);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) {
            if (!toy_dir.empty()) {
                ToyCorpusOptions o;
                o.num_conversations = toy_n;
                o.min_turns = toy_min;
                o.max_turns = toy_max;
                o.seed = prep_seed;
                write_toy_corpus(make_toy_corpus(o), toy_dir);
                prep_corpus = (fs::path(toy_dir) / "corpus.jsonl").string();
                std::cout << "wrote " << prep_corpus << "\n";
            }
            if (prep_corpus.empty()) throw ConfigError("prepare needs --corpus or --toy");
            const auto corpus = load_corpus(prep_corpus);
            std::size_t turns = 0, words = 0, annotated = 0;
            for (const auto& c : corpus) {
                turns += c.turns.size();
                for (const auto& u : c.turns) {
                    words += u.words.size();
                    annotated += u.emphasis_intensity.has_value();
                }
            }
            std::cout << corpus.size() << " conversations, " << turns << " turns, " << words << " words, " << annotated
                      << " annotated turns\n";
            if (annotated > 0) {
                std::printf("emphasized words (> 0.5): %.2f%%\n", 100.0 * emphasized_word_fraction(corpus));
            }
            if (!split_out.empty()) {
                const auto s = split_corpus(corpus, {ratios[0], ratios[1], ratios[2]}, prep_seed);
                write_text(split_out, split_json(s).dump(2) + "\n");
                std::cout << "split " << s.train.size() << "/" << s.validation.size() << "/" << s.test.size() << " -> "
                          << split_out << "\n";
            }
        } else if (aggregate->parsed()) {
            const auto corpus = apply_annotations(load_corpus(agg_corpus), load_annotation_log(agg_log), agg_quorum);
            for (const auto& c : corpus) {
                for (const auto& u : c.turns) {
                    if (!u.emphasis_intensity) continue;
                    std::cout << c.conversation_id << " #" << u.index << " "
                              << word_line(u.words, u.emphasis_intensity->values()) << "\n";
                }
            }
            if (!agg_out.empty()) save_corpus(corpus, agg_out);
        } else if (kappa->parsed()) {
            const auto k = fleiss_kappa(load_annotation_log(kappa_log));
            std::printf("observed agreement %.6f\nexpected agreement %.6f\n", k.observed_agreement, k.expected_agreement);
            if (k.kappa) {
                std::printf("kappa %.6f\n", *k.kappa);
            } else {
                std::printf("kappa undefined (expected agreement is 1)\n");
            }
        } else if (train_cmd->parsed()) {
            const auto corpus = train_corpus.load();
            std::optional<Checkpoint> resume;
            RunConfig cfg;
            if (!train_resume.empty()) {
                resume = load_checkpoint(train_resume);
                cfg = train_cfg.apply(resume->config);
                resume->config = cfg;
            } else {
                cfg = train_cfg.build();
            }
            Featurizer featurizer(cfg, train_corpus.audio());
            FeatureBank bank(featurizer, corpus);
            auto trainer = resume ? std::make_unique<Trainer>(*resume, bank)
                                  : std::make_unique<Trainer>(cfg, bank, subset(train_split, "train", corpus));
            while (trainer->steps_done() < cfg.steps) {
                const auto r = trainer->step();
                if (r.step % log_every == 0 || r.step == cfg.steps) {
                    std::printf("step %5lld  total %.5f  emphasis %.5f  tts %.5f\n", static_cast<long long>(r.step),
                                r.total, r.emphasis, r.tts);
                    std::fflush(stdout);
                }
            }
            save_checkpoint(trainer->checkpoint(), train_out);
            std::cout << "checkpoint -> " << train_out << "\n";
        } else if (predict->parsed()) {
            const auto ckpt = load_checkpoint(pred_ckpt);
            const auto model = restore_model(ckpt);
            const auto corpus = pred_corpus.load();
            Featurizer featurizer(ckpt.config, pred_corpus.audio());
            const auto conv = featurizer.conversation(find_conversation(corpus, pred_conv));
            const auto out = predict_dialogue(*model, conv, gold_history ? HistoryMode::Gold : HistoryMode::Predicted);
            if (as_json) {
                json turns = json::array();
                for (std::size_t t = 0; t < out.size(); ++t) {
                    turns.push_back({{"turn", t + 1}, {"words", conv.turns[t].words}, {"intensity", out[t]}});
                }
                std::cout << json{{"conversation_id", pred_conv}, {"turns", turns}}.dump(2) << "\n";
            } else {
                for (std::size_t t = 0; t < out.size(); ++t) {
                    std::cout << "turn " << t + 1 << " [" << conv.turns[t].speaker << "] "
                              << word_line(conv.turns[t].words, out[t]) << "\n";
                }
            }
        } else if (synth->parsed()) {
            const auto ckpt = load_checkpoint(syn_ckpt);
            const auto model = restore_model(ckpt);
            const auto corpus = syn_corpus.load();
            Featurizer featurizer(ckpt.config, syn_corpus.audio());
            const auto conv = featurizer.conversation(find_conversation(corpus, syn_conv));
            SynthesisOptions o;
            o.waveform = !syn_no_wave;
            o.history = syn_gold ? HistoryMode::Gold : HistoryMode::Predicted;
            const auto r = synthesize(*model, ckpt.prosody, conv, syn_turn, o);
            const fs::path dir = syn_out;
            fs::create_directories(dir);
            write_mel_csv(dir / "mel.csv", r.mel);
            if (!r.waveform.empty()) write_wav(dir / "audio.wav", r.waveform, ckpt.config.frame.sample_rate);
            json words = json::array();
            for (const auto& w : r.words) {
                words.push_back({{"word", w.word}, {"intensity", w.intensity}, {"frames", w.frames},
                                 {"mean_energy", w.mean_energy}, {"mean_pitch", w.mean_pitch}});
            }
            write_text(dir / "report.json", json{{"conversation_id", syn_conv}, {"turn", syn_turn},
                                                 {"frames", r.mel.rows()}, {"durations", r.durations},
                                                 {"words", words}}.dump(2) + "\n");
            if (syn_plot) {
                const auto& cur = conv.turns[static_cast<std::size_t>(syn_turn - 1)];
                std::vector<bool> flags;
                for (const auto& w : r.words) flags.push_back(w.intensity > ckpt.config.binarize_threshold);
                plot_spectrogram(r.mel, r.pitch_hz, word_frame_spans(r.durations, cur.spans, flags), dir / "plot.png");
            }
            for (const auto& w : r.words) {
                std::printf("%-14s intensity %.3f  frames %3d  energy %+.3f  pitch %+.3f\n", w.word.c_str(), w.intensity,
                            w.frames, w.mean_energy, w.mean_pitch);
            }
            std::cout << r.mel.rows() << " frames -> " << dir.string() << "\n";
        } else if (eval->parsed()) {
            const auto ckpt = load_checkpoint(eval_ckpt);
            const auto model = restore_model(ckpt);
            const auto corpus = eval_corpus.load();
            Featurizer featurizer(ckpt.config, eval_corpus.audio());
            FeatureBank bank(featurizer, corpus);
            const auto r = evaluate(*model, ckpt.prosody, bank, subset(eval_split, eval_subset, corpus),
                                    eval_gold ? HistoryMode::Gold : HistoryMode::Predicted);
            std::cout << (eval_json ? report_json(r) + "\n" : format_report(r));
        } else if (sweep->parsed()) {
            const auto cfg = sweep_cfg.build();
            const auto corpus = sweep_corpus.load();
            Featurizer featurizer(cfg, sweep_corpus.audio());
            FeatureBank bank(featurizer, corpus);
            std::cout << format_sweep(sweep_context(cfg, bank, load_split(sweep_split), parse_int_list(sweep_lengths)));
        } else if (ablate->parsed()) {
            const auto cfg = abl_cfg.build();
            const auto ids = parse_int_list(abl_ids);
            if (abl_dry) {
                for (int e : ids) {
                    std::cout << "# Exp." << e << ": " << ablation_name(e) << "\n"
                              << format_config(ablation_config(cfg, e)) << "\n";
                }
                return 0;
            }
            if (abl_corpus_path.empty()) throw ConfigError("ablate needs --corpus unless --dry-run");
            CorpusOptions co{abl_corpus_path, abl_audio};
            const auto corpus = co.load();
            Featurizer featurizer(cfg, co.audio());
            FeatureBank bank(featurizer, corpus);
            const auto train_ids = subset(abl_split, "train", corpus);
            const auto test_ids = abl_split.empty() ? std::vector<std::string>{} : load_split(abl_split).test;
            std::vector<AblationRun> runs;
            for (int e : ids) {
                std::cerr << "Exp." << e << " ...\n";
                runs.push_back(run_ablation(cfg, e, bank, train_ids, test_ids));
            }
            std::cout << format_ablation(runs);
        } else if (plot->parsed()) {
            const auto corpus = plot_corpus.load();
            const auto& conv = find_conversation(corpus, plot_conv);
            const auto& u = find_turn(conv, plot_turn);
            if (plot_recorded) {
                const auto cfg = plot_cfg.build();
                const auto wave = plot_corpus.audio()(u);
                if (!wave) throw NotFoundError("turn has no recorded audio");
                if (!u.phoneme_durations) throw StructuralError("turn has no phoneme durations");
                const auto t = extract_targets(*wave, *u.phoneme_durations, cfg.frame);
                std::vector<bool> flags(u.words.size(), false);
                if (u.emphasis_intensity) flags = binarize_intensity(*u.emphasis_intensity, cfg.binarize_threshold);
                plot_spectrogram(t.mel, t.pitch, word_frame_spans(t.durations, u.word_phoneme_spans, flags), plot_out);
            } else {
                if (plot_ckpt.empty()) throw ConfigError("plot needs --checkpoint or --recorded");
                const auto ckpt = load_checkpoint(plot_ckpt);
                const auto model = restore_model(ckpt);
                Featurizer featurizer(ckpt.config, plot_corpus.audio());
                SynthesisOptions o;
                o.waveform = false;
                const auto r = synthesize(*model, ckpt.prosody, featurizer.conversation(conv), plot_turn, o);
                std::vector<bool> flags;
                for (const auto& w : r.words) flags.push_back(w.intensity > ckpt.config.binarize_threshold);
                plot_spectrogram(r.mel, r.pitch_hz, word_frame_spans(r.durations, u.word_phoneme_spans, flags), plot_out);
            }
            std::cout << "plot -> " << plot_out << "\n";
        } else if (serve->parsed()) {
            const auto tokens = load_token_file(srv_tokens);
            std::set<std::string> annotators;
            for (const auto& [_, who] : tokens) annotators.insert(who);
            AnnotationStore store(load_corpus(srv_corpus), srv_log, srv_quorum, annotators);
            AnnotationServer server(store, tokens, srv_audio.empty() ? fs::path(srv_corpus).parent_path() : fs::path(srv_audio));
            const int port = server.bind(srv_host, srv_port);
            std::cout << "annotation service on http://" << srv_host << ":" << port << " (quorum " << srv_quorum << ")\n";
            std::cout.flush();
            server.serve();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
