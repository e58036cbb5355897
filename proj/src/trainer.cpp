#include "emphtts/trainer.hpp"

#include "emphtts/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace emphtts {

using json = nlohmann::json;

namespace {

constexpr char kMagic[] = "EMPHTTS-CHECKPOINT 1\n";

std::vector<bool> labels_of(const std::vector<double>& intensity, double threshold) {
    std::vector<bool> out;
    for (double v : intensity) out.push_back(v > threshold);
    return out;
}

std::vector<double> training_target(const RunConfig& cfg, const std::vector<double>& intensity) {
    if (!cfg.binary_labels) return intensity;
    std::vector<double> out;
    for (double v : intensity) out.push_back(v > cfg.binarize_threshold ? 1.0 : 0.0);
    return out;
}

void write_matrix(std::ofstream& out, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in, Index rows, Index cols, const std::string& name) {
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw StructuralError("checkpoint truncated while reading '" + name + "'");
    return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json h;
    h["config"] = config_to_map(ckpt.config);
    h["phonemes"] = ckpt.phonemes;
    h["speakers"] = ckpt.speakers;
    h["prosody"] = {ckpt.prosody.pitch_mean, ckpt.prosody.pitch_std, ckpt.prosody.energy_mean, ckpt.prosody.energy_std};
    h["train_ids"] = ckpt.train_ids;
    h["step"] = ckpt.step;
    json hist = json::array();
    for (const auto& r : ckpt.history) hist.push_back({r.step, r.total, r.emphasis, r.tts});
    h["history"] = hist;
    json tensors = json::array();
    for (const auto& [name, m] : ckpt.parameters) tensors.push_back({name, m.rows(), m.cols()});
    h["tensors"] = tensors;
    h["adam_t"] = ckpt.optimizer.t;
    h["adam_state"] = !ckpt.optimizer.m.empty();

    // Doubles are stored in exact binary form and header numbers as round-trip
    // decimal, so a reload resumes bit-for-bit.
    const std::string header = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic - 1);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(header.data(), static_cast<std::streamsize>(n));
    for (const auto& [name, m] : ckpt.parameters) write_matrix(out, m);
    if (!ckpt.optimizer.m.empty()) {
        for (const auto& [name, m] : ckpt.parameters) write_matrix(out, ckpt.optimizer.m.at(name));
        for (const auto& [name, m] : ckpt.parameters) write_matrix(out, ckpt.optimizer.v.at(name));
    }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open checkpoint " + path.string());
    std::string magic(sizeof kMagic - 1, '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) throw StructuralError(path.string() + " is not a checkpoint");
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    std::string header(n, '\0');
    in.read(header.data(), static_cast<std::streamsize>(n));
    if (!in) throw StructuralError("checkpoint header truncated");
    const json h = json::parse(header);

    Checkpoint c;
    c.config = config_from_map(h.at("config").get<std::map<std::string, std::string>>());
    c.phonemes = h.at("phonemes").get<std::vector<std::string>>();
    c.speakers = h.at("speakers").get<std::vector<std::string>>();
    const auto p = h.at("prosody").get<std::vector<double>>();
    c.prosody = {p.at(0), p.at(1), p.at(2), p.at(3)};
    c.train_ids = h.at("train_ids").get<std::vector<std::string>>();
    c.step = h.at("step").get<std::int64_t>();
    for (const auto& r : h.at("history")) {
        c.history.push_back({r.at(0).get<std::int64_t>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()});
    }
    std::vector<std::tuple<std::string, Index, Index>> tensors;
    for (const auto& t : h.at("tensors")) tensors.emplace_back(t.at(0).get<std::string>(), t.at(1).get<Index>(), t.at(2).get<Index>());
    for (const auto& [name, r, cols] : tensors) c.parameters[name] = read_matrix(in, r, cols, name);
    c.optimizer.t = h.at("adam_t").get<std::int64_t>();
    if (h.at("adam_state").get<bool>()) {
        for (const auto& [name, r, cols] : tensors) c.optimizer.m[name] = read_matrix(in, r, cols, name);
        for (const auto& [name, r, cols] : tensors) c.optimizer.v[name] = read_matrix(in, r, cols, name);
    }
    return c;
}

std::unique_ptr<EmphasisTts> restore_model(const Checkpoint& ckpt) {
    auto model = std::make_unique<EmphasisTts>(ckpt.config, PhonemeInventory(ckpt.phonemes), ckpt.speakers);
    const auto& params = model->store().all();
    if (params.size() != ckpt.parameters.size()) {
        throw StructuralError("checkpoint holds " + std::to_string(ckpt.parameters.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
    }
    for (const auto& [name, var] : params) {
        auto it = ckpt.parameters.find(name);
        if (it == ckpt.parameters.end()) throw StructuralError("checkpoint lacks parameter '" + name + "'");
        if (it->second.rows() != var.rows() || it->second.cols() != var.cols()) {
            throw StructuralError("checkpoint parameter '" + name + "' has the wrong shape");
        }
        Var v = var;
        v.mutable_value() = it->second;
    }
    return model;
}

ExampleLoss example_loss(const EmphasisTts& model, const ConversationFeatures& conv, int turn, const ProsodyStats& prosody) {
    const RunConfig& cfg = model.config();
    const ModelInput in = make_input(conv, turn, cfg.context_length);
    const TurnFeatures& cur = *in.current;
    if (!cur.intensity) {
        throw StructuralError("conversation '" + conv.conversation_id + "' turn " + std::to_string(turn) + " has no intensity");
    }
    const auto prediction = model.predict(in);
    ExampleLoss out;
    out.emphasis = emphasis_loss(prediction.intensities, training_target(cfg, *cur.intensity));
    if (!cfg.train_synthesizer) {
        out.total = ag::affine(out.emphasis, cfg.lambda_emp, 0.0);
        return out;
    }
    if (!cur.targets) {
        throw StructuralError("conversation '" + conv.conversation_id + "' turn " + std::to_string(turn) +
                              " has no acoustic targets");
    }
    const NormalizedTargets targets = prosody.normalize(*cur.targets);
    // Teacher forcing: the label embedding takes the gold labels in training.
    const Var h = model.emphasis_features(prediction, labels_of(*cur.intensity, cfg.binarize_threshold));
    const auto synth = model.synthesize(cur, h, &targets);
    const auto tts = tts_loss(synth, targets);
    out.tts = tts.total;
    out.total = total_loss(tts, out.emphasis, cfg.lambda_emp);
    return out;
}

Trainer::Trainer(const RunConfig& cfg, const FeatureBank& bank, std::vector<std::string> train_ids)
    : cfg_(cfg), bank_(&bank), train_ids_(std::move(train_ids)) {
    if (train_ids_.empty()) {
        for (const auto& c : bank.conversations()) train_ids_.push_back(c.conversation_id);
    }
    std::set<std::string> phonemes;
    std::set<std::string> speakers;
    for (const auto& c : bank.conversations()) {
        for (const auto& t : c.turns) {
            phonemes.insert(t.phonemes.begin(), t.phonemes.end());
            speakers.insert(t.speaker);
        }
    }
    init(cfg, {phonemes.begin(), phonemes.end()}, {speakers.begin(), speakers.end()});
    std::vector<AcousticTargets> targets;
    for (const auto& ex : examples_) {
        const auto& t = bank.conversations()[ex.conversation].turns[static_cast<std::size_t>(ex.turn - 1)];
        if (t.targets) targets.push_back(*t.targets);
    }
    if (!targets.empty()) prosody_ = ProsodyStats::fit(targets);
}

Trainer::Trainer(const Checkpoint& ckpt, const FeatureBank& bank)
    : cfg_(ckpt.config), bank_(&bank), train_ids_(ckpt.train_ids), prosody_(ckpt.prosody), step_(ckpt.step),
      history_(ckpt.history) {
    init(ckpt.config, ckpt.phonemes, ckpt.speakers);
    model_ = restore_model(ckpt);
    adam_ = std::make_unique<nn::Adam>(model_->store(),
                                       nn::AdamOptions{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps, cfg_.grad_clip});
    adam_->load_state(ckpt.optimizer);
}

void Trainer::init(const RunConfig& cfg, std::vector<std::string> phonemes, std::vector<std::string> speakers) {
    cfg.validate();
    for (const auto& id : train_ids_) {
        const auto& conv = bank_->conversation(id);
        std::size_t index = 0;
        while (&bank_->conversations()[index] != &conv) ++index;
        for (const auto& t : conv.turns) {
            if (!t.intensity) continue;
            if (cfg.train_synthesizer && !t.targets) continue;
            examples_.push_back({index, t.index});
        }
    }
    if (examples_.empty()) throw EmptyInputError("no training examples: turns need intensities (and audio for synthesis)");
    model_ = std::make_unique<EmphasisTts>(cfg, PhonemeInventory(std::move(phonemes)), std::move(speakers));
    adam_ = std::make_unique<nn::Adam>(model_->store(),
                                       nn::AdamOptions{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.grad_clip});
}

std::vector<TrainingExample> Trainer::batch(std::int64_t step) const {
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(step));
    std::vector<std::size_t> order(examples_.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(order.size(), static_cast<std::size_t>(cfg_.batch_size));
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < take; ++i) out.push_back(examples_[order[i]]);
    return out;
}

LossRecord Trainer::step() {
    const std::int64_t next = step_ + 1;
    const auto examples = batch(next);
    model_->store().zero_grad();

    std::vector<Var> totals, emphasis, tts;
    for (const auto& ex : examples) {
        auto l = example_loss(*model_, bank_->conversations()[ex.conversation], ex.turn, prosody_);
        totals.push_back(l.total);
        emphasis.push_back(l.emphasis);
        if (l.tts) tts.push_back(*l.tts);
    }
    const double scale = 1.0 / static_cast<double>(examples.size());
    const Var total = ag::affine(ag::sum_all(ag::concat_rows(totals)), scale, 0.0);

    auto describe = [&] {
        std::string s = "step " + std::to_string(next) + ", batch [";
        for (std::size_t i = 0; i < examples.size(); ++i) {
            s += (i ? ", " : "") + bank_->conversations()[examples[i].conversation].conversation_id + "#" +
                 std::to_string(examples[i].turn);
        }
        return s + "]";
    };
    if (!std::isfinite(total.item())) throw NumericError("non-finite loss at " + describe());
    total.backward();
    for (const auto& [name, p] : model_->store().all()) {
        if (p.has_grad() && !p.grad().allFinite()) {
            throw NumericError("non-finite gradient for '" + name + "' at " + describe());
        }
    }
    adam_->step();

    LossRecord r;
    r.step = next;
    r.total = total.item();
    for (const auto& v : emphasis) r.emphasis += v.item() * scale;
    for (const auto& v : tts) r.tts += v.item() * scale;
    step_ = next;
    history_.push_back(r);
    return r;
}

void Trainer::run(int steps) {
    for (int i = 0; i < steps; ++i) step();
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.config = cfg_;
    c.phonemes = model_->inventory().symbols();
    c.speakers = model_->speakers();
    c.prosody = prosody_;
    c.train_ids = train_ids_;
    c.step = step_;
    c.history = history_;
    for (const auto& [name, p] : model_->store().all()) c.parameters[name] = p.value();
    c.optimizer = adam_->state();
    return c;
}

Checkpoint train(const RunConfig& cfg, const FeatureBank& bank, const std::vector<std::string>& train_ids) {
    Trainer trainer(cfg, bank, train_ids);
    trainer.run(cfg.steps);
    return trainer.checkpoint();
}

}  // namespace emphtts
