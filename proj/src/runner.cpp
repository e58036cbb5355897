#include "emphtts/runner.hpp"

#include "emphtts/error.hpp"

#include <json.hpp>

#include <cstdio>

namespace emphtts {

namespace {

std::vector<double> column_values(const Matrix& m) {
    return {m.data(), m.data() + m.rows()};
}

std::vector<bool> threshold(const std::vector<double>& v, double t) {
    std::vector<bool> out;
    for (double x : v) out.push_back(x > t);
    return out;
}

// Mean of `series` over each phoneme's frames.
std::vector<double> per_phoneme(const Eigen::VectorXd& series, const std::vector<int>& durations) {
    std::vector<double> out;
    Index f = 0;
    for (int d : durations) {
        out.push_back(series.segment(f, d).mean());
        f += d;
    }
    return out;
}

std::string fixed(double v, int decimals = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

struct TurnRun {
    EmphasisPrediction prediction;
    ModelInput input;
};

// Predictions for turns 1..last, reusing earlier predictions as history.
std::vector<TurnRun> run_turns(const EmphasisTts& model, const ConversationFeatures& conv, int last, HistoryMode mode) {
    std::vector<TurnRun> runs;
    std::vector<std::vector<double>> predicted;
    for (int t = 1; t <= last; ++t) {
        auto in = make_input(conv, t, model.config().context_length, mode == HistoryMode::Predicted ? &predicted : nullptr);
        auto p = model.predict(in);
        predicted.push_back(column_values(p.intensities.value()));
        runs.push_back({std::move(p), std::move(in)});
    }
    return runs;
}

}  // namespace

std::vector<std::vector<double>> predict_dialogue(const EmphasisTts& model, const ConversationFeatures& conv,
                                                  HistoryMode mode) {
    ag::NoGradGuard guard;
    std::vector<std::vector<double>> out;
    for (const auto& r : run_turns(model, conv, static_cast<int>(conv.turns.size()), mode)) {
        out.push_back(column_values(r.prediction.intensities.value()));
    }
    return out;
}

SynthesisResult synthesize(const EmphasisTts& model, const ProsodyStats& prosody, const ConversationFeatures& conv,
                           int turn, const SynthesisOptions& options) {
    ag::NoGradGuard guard;
    if (turn < 1 || turn > static_cast<int>(conv.turns.size())) {
        throw NotFoundError("conversation '" + conv.conversation_id + "' has no turn " + std::to_string(turn));
    }
    const auto runs = run_turns(model, conv, turn, options.history);
    const auto& run = runs.back();
    const TurnFeatures& cur = *run.input.current;
    const auto intensities = column_values(run.prediction.intensities.value());
    const auto& cfg = model.config();
    const Var h = model.emphasis_features(run.prediction, threshold(intensities, cfg.binarize_threshold));
    const auto out = model.synthesize(cur, h, nullptr);

    SynthesisResult r;
    r.mel = out.mel.value();
    r.durations = out.durations;
    const Eigen::VectorXd pitch = out.pitch.value().col(0);
    const Eigen::VectorXd energy = out.energy.value().col(0);
    for (Index f = 0; f < pitch.size(); ++f) r.pitch_hz.push_back(prosody.pitch_hz(pitch(f)));
    r.energy = {energy.data(), energy.data() + energy.size()};

    const auto starts = cumulative_frames(r.durations);
    for (std::size_t w = 0; w < cur.words.size(); ++w) {
        WordReport wr;
        wr.word = cur.words[w];
        wr.intensity = intensities[w];
        const int a = starts[cur.spans[w].begin];
        const int b = starts[cur.spans[w].end];
        wr.frames = b - a;
        wr.mean_energy = energy.segment(a, b - a).mean();
        wr.mean_pitch = pitch.segment(a, b - a).mean();
        r.words.push_back(wr);
    }
    if (options.waveform) {
        r.waveform = reconstruct_waveform(r.mel, cfg.frame, cfg.griffin_lim_iterations);
        for (double s : r.waveform) {
            if (!std::isfinite(s)) throw NumericError("reconstructed waveform is not finite");
        }
    }
    return r;
}

EvaluationReport evaluate(const EmphasisTts& model, const ProsodyStats& prosody, const FeatureBank& bank,
                          const std::vector<std::string>& conversation_ids, HistoryMode mode) {
    ag::NoGradGuard guard;
    const auto& cfg = model.config();
    std::vector<EmphasisTestInstance> instances;
    std::vector<double> scores;
    std::vector<bool> labels;
    std::vector<double> p_pred, p_true, e_pred, e_true, d_err;
    for (const auto& id : conversation_ids) {
        const auto& conv = bank.conversation(id);
        const auto runs = run_turns(model, conv, static_cast<int>(conv.turns.size()), mode);
        for (std::size_t t = 0; t < runs.size(); ++t) {
            const auto& cur = conv.turns[t];
            if (!cur.intensity) continue;
            const auto predicted = column_values(runs[t].prediction.intensities.value());
            instances.push_back({*cur.intensity, predicted});
            if (t > 0) {
                for (std::size_t w = 0; w < predicted.size(); ++w) {
                    scores.push_back(predicted[w]);
                    labels.push_back((*cur.intensity)[w] > cfg.binarize_threshold);
                }
            }
            if (cfg.train_synthesizer && cur.targets) {
                const Var h = model.emphasis_features(runs[t].prediction, threshold(predicted, cfg.binarize_threshold));
                const auto out = model.synthesize(cur, h, nullptr);
                const auto gold = prosody.normalize(*cur.targets);
                const auto pp = per_phoneme(out.pitch.value().col(0), out.durations);
                const auto pe = per_phoneme(out.energy.value().col(0), out.durations);
                const auto tp = per_phoneme(gold.pitch, gold.durations);
                const auto te = per_phoneme(gold.energy, gold.durations);
                p_pred.insert(p_pred.end(), pp.begin(), pp.end());
                p_true.insert(p_true.end(), tp.begin(), tp.end());
                e_pred.insert(e_pred.end(), pe.begin(), pe.end());
                e_true.insert(e_true.end(), te.begin(), te.end());
                d_err.push_back(mae_duration(out.durations, gold.durations));
            }
        }
    }
    if (instances.empty()) throw EmptyInputError("evaluation set has no annotated turns");
    EvaluationReport r;
    r.instances = instances.size();
    r.match1 = match_m(instances, 1);
    r.match2 = match_m(instances, 2);
    r.match_mean = (r.match1 + r.match2) / 2;
    r.f1_1 = f1_m(instances, 1);
    r.f1_2 = f1_m(instances, 2);
    r.f1_mean = (r.f1_1 + r.f1_2) / 2;
    r.auc = roc_auc(scores, labels);
    if (!p_pred.empty()) {
        r.mae_p = mae(p_pred, p_true);
        r.mae_e = mae(e_pred, e_true);
        double sum = 0;
        for (double d : d_err) sum += d;
        r.mae_d = sum / static_cast<double>(d_err.size());
    }
    return r;
}

std::string format_report(const EvaluationReport& r) {
    std::string s = "instances  " + std::to_string(r.instances) + "\n";
    s += "Match_1    " + fixed(r.match1) + "\nMatch_2    " + fixed(r.match2) + "\nMatch_mean " + fixed(r.match_mean) + "\n";
    s += "F1_1       " + fixed(r.f1_1) + "\nF1_2       " + fixed(r.f1_2) + "\nF1_mean    " + fixed(r.f1_mean) + "\n";
    s += "ROC-AUC    " + (r.auc ? fixed(*r.auc) : std::string("n/a")) + "\n";
    if (r.mae_p) s += "MAE-P      " + fixed(*r.mae_p) + "\nMAE-E      " + fixed(*r.mae_e) + "\nMAE-D      " + fixed(*r.mae_d) + "\n";
    return s;
}

std::string report_json(const EvaluationReport& r) {
    nlohmann::json j;
    j["instances"] = r.instances;
    j["match_1"] = r.match1;
    j["match_2"] = r.match2;
    j["match_mean"] = r.match_mean;
    j["f1_1"] = r.f1_1;
    j["f1_2"] = r.f1_2;
    j["f1_mean"] = r.f1_mean;
    j["roc_auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
    if (r.mae_p) {
        j["mae_p"] = *r.mae_p;
        j["mae_e"] = *r.mae_e;
        j["mae_d"] = *r.mae_d;
    }
    return j.dump(2);
}

std::vector<SweepRow> sweep_context(const RunConfig& cfg, const FeatureBank& bank, const CorpusSplit& split,
                                    const std::vector<int>& lengths) {
    if (split.test.empty()) throw EmptyInputError("context sweep needs test conversations");
    std::vector<SweepRow> rows;
    for (int length : lengths) {
        RunConfig c = cfg;
        c.context_length = length;
        Trainer trainer(c, bank, split.train);
        trainer.run(c.steps);
        rows.push_back({length, evaluate(trainer.model(), trainer.prosody(), bank, split.test)});
    }
    return rows;
}

std::string format_sweep(const std::vector<SweepRow>& rows) {
    std::string s = "Context Length | Match_1 | Match_2 | Match_mean | F1_1 | F1_2 | F1_mean\n";
    for (const auto& r : rows) {
        const auto& m = r.report;
        s += std::to_string(r.context_length) + " | " + fixed(m.match1) + " | " + fixed(m.match2) + " | " +
             fixed(m.match_mean) + " | " + fixed(m.f1_1) + " | " + fixed(m.f1_2) + " | " + fixed(m.f1_mean) + "\n";
    }
    return s;
}

AblationRun run_ablation(const RunConfig& base, int experiment, const FeatureBank& bank,
                         const std::vector<std::string>& train_ids, const std::vector<std::string>& test_ids) {
    AblationRun run;
    run.experiment = experiment;
    run.name = ablation_name(experiment);
    run.config = ablation_config(base, experiment);
    Trainer trainer(run.config, bank, train_ids);
    trainer.run(run.config.steps);
    run.history = trainer.history();
    if (!test_ids.empty()) run.report = evaluate(trainer.model(), trainer.prosody(), bank, test_ids);
    return run;
}

std::string format_ablation(const std::vector<AblationRun>& runs) {
    std::string s = "Exp | Setup | CTE MFTE CAE MFAE | final loss | Match_1 | Match_2 | F1_1 | F1_2 | MAE-P | MAE-E | MAE-D\n";
    auto mark = [](bool on) { return on ? std::string("+") : std::string("-"); };
    for (const auto& r : runs) {
        const auto& c = r.config;
        s += "Exp." + std::to_string(r.experiment) + " | " + r.name + " | " + mark(c.use_cte) + " " + mark(c.use_mfte) +
             " " + mark(c.use_cae) + " " + mark(c.use_mfae) + " | " +
             (r.history.empty() ? std::string("n/a") : fixed(r.history.back().total));
        if (r.report) {
            const auto& m = *r.report;
            s += " | " + fixed(m.match1) + " | " + fixed(m.match2) + " | " + fixed(m.f1_1) + " | " + fixed(m.f1_2);
            s += m.mae_p ? " | " + fixed(*m.mae_p) + " | " + fixed(*m.mae_e) + " | " + fixed(*m.mae_d) : " | - | - | -";
        }
        s += "\n";
    }
    return s;
}

}  // namespace emphtts
