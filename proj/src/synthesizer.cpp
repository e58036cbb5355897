#include "emphtts/synthesizer.hpp"

#include "emphtts/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace emphtts {

void SynthConfig::validate() const {
    if (d_model < 1 || ffn < 1 || n_mels < 1 || d_emp < 1 || d_speaker < 1) throw ConfigError("synthesizer dimensions must be >= 1");
    if (encoder_layers < 0 || decoder_layers < 0) throw ConfigError("synthesizer layer counts must be >= 0");
    if (heads < 1 || d_model % heads != 0) throw ConfigError("synth.d_model must be divisible by synth.heads");
    if (pitch_bins < 2 || energy_bins < 2) throw ConfigError("pitch/energy bins must be >= 2");
}

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (!index_.emplace(symbols_[i], static_cast<Index>(i)).second) {
            throw ConfigError("duplicate phoneme symbol '" + symbols_[i] + "'");
        }
    }
}

PhonemeInventory PhonemeInventory::from_corpus(const std::vector<Conversation>& corpus) {
    std::set<std::string> seen;
    for (const auto& c : corpus) {
        for (const auto& u : c.turns) seen.insert(u.phonemes.begin(), u.phonemes.end());
    }
    return PhonemeInventory(std::vector<std::string>(seen.begin(), seen.end()));
}

Index PhonemeInventory::id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw NotFoundError("unknown phoneme '" + symbol + "'");
    return it->second;
}

std::vector<Index> PhonemeInventory::ids(const std::vector<std::string>& phonemes) const {
    std::vector<Index> out;
    out.reserve(phonemes.size());
    for (const auto& p : phonemes) out.push_back(id(p));
    return out;
}

void AcousticTargets::validate() const {
    const int total = std::accumulate(durations.begin(), durations.end(), 0);
    if (total != frames() || pitch.size() != static_cast<std::size_t>(total) ||
        energy.size() != static_cast<std::size_t>(total)) {
        throw StructuralError("acoustic targets: durations sum to " + std::to_string(total) + " but series have " +
                              std::to_string(frames()) + "/" + std::to_string(pitch.size()) + "/" +
                              std::to_string(energy.size()) + " frames");
    }
    for (int d : durations) {
        if (d < 1) throw StructuralError("acoustic targets: durations must be >= 1");
    }
}

AcousticTargets extract_targets(const Waveform& wave, std::vector<int> durations, const audio::FrameConfig& cfg) {
    if (durations.empty()) throw EmptyInputError("extract_targets: no phoneme durations");
    const int frames = audio::frame_count(wave.size(), cfg);
    if (frames < 1) throw EmptyInputError("extract_targets: audio shorter than one analysis window");
    const int total = std::accumulate(durations.begin(), durations.end(), 0);
    const int diff = frames - total;
    if (std::abs(diff) > 2 || durations.back() + diff < 1) {
        throw StructuralError("extract_targets: durations sum to " + std::to_string(total) + " but audio has " +
                              std::to_string(frames) + " frames");
    }
    durations.back() += diff;
    AcousticTargets t;
    t.durations = std::move(durations);
    t.mel = audio::log_mel(wave, cfg);
    t.pitch = audio::f0_track(wave, cfg);
    t.energy = audio::frame_energy(wave, cfg);
    return t;
}

std::vector<double> interpolate_unvoiced(const std::vector<double>& f0) {
    std::vector<double> out = f0;
    std::vector<std::size_t> voiced;
    for (std::size_t i = 0; i < f0.size(); ++i) {
        if (f0[i] > 0) voiced.push_back(i);
    }
    if (voiced.empty()) return out;
    for (std::size_t i = 0; i < f0.size(); ++i) {
        if (f0[i] > 0) continue;
        auto hi = std::lower_bound(voiced.begin(), voiced.end(), i);
        if (hi == voiced.begin()) {
            out[i] = f0[*hi];
        } else if (hi == voiced.end()) {
            out[i] = f0[voiced.back()];
        } else {
            const std::size_t a = *(hi - 1), b = *hi;
            const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
            out[i] = (1 - w) * f0[a] + w * f0[b];
        }
    }
    return out;
}

ProsodyStats ProsodyStats::fit(const std::vector<AcousticTargets>& targets) {
    double ps = 0, pq = 0, es = 0, eq = 0;
    std::size_t pn = 0, en = 0;
    for (const auto& t : targets) {
        for (double p : t.pitch) {
            if (p > 0) {
                ps += p;
                pq += p * p;
                ++pn;
            }
        }
        for (double e : t.energy) {
            es += e;
            eq += e * e;
            ++en;
        }
    }
    ProsodyStats s;
    if (pn > 0) {
        s.pitch_mean = ps / static_cast<double>(pn);
        s.pitch_std = std::sqrt(std::max(0.0, pq / static_cast<double>(pn) - s.pitch_mean * s.pitch_mean));
    }
    if (en > 0) {
        s.energy_mean = es / static_cast<double>(en);
        s.energy_std = std::sqrt(std::max(0.0, eq / static_cast<double>(en) - s.energy_mean * s.energy_mean));
    }
    if (s.pitch_std < 1e-8) s.pitch_std = 1.0;
    if (s.energy_std < 1e-8) s.energy_std = 1.0;
    return s;
}

NormalizedTargets ProsodyStats::normalize(const AcousticTargets& t) const {
    t.validate();
    NormalizedTargets n;
    n.durations = t.durations;
    n.log_duration.resize(static_cast<Index>(t.durations.size()));
    for (std::size_t i = 0; i < t.durations.size(); ++i) n.log_duration(static_cast<Index>(i)) = std::log(t.durations[i]);
    const auto pitch = interpolate_unvoiced(t.pitch);
    const bool any_voiced = std::any_of(t.pitch.begin(), t.pitch.end(), [](double p) { return p > 0; });
    n.pitch.resize(static_cast<Index>(pitch.size()));
    n.energy.resize(static_cast<Index>(t.energy.size()));
    for (std::size_t i = 0; i < pitch.size(); ++i) {
        n.pitch(static_cast<Index>(i)) = any_voiced ? (pitch[i] - pitch_mean) / pitch_std : 0.0;
        n.energy(static_cast<Index>(i)) = (t.energy[i] - energy_mean) / energy_std;
    }
    n.mel = t.mel;
    return n;
}

Var length_regulate(const Var& x, const std::vector<int>& durations) {
    if (static_cast<Index>(durations.size()) != x.rows()) {
        throw StructuralError("length regulator: " + std::to_string(durations.size()) + " durations for " +
                              std::to_string(x.rows()) + " phonemes");
    }
    std::vector<Index> idx;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        if (durations[i] < 0) throw StructuralError("length regulator: negative duration");
        idx.insert(idx.end(), static_cast<std::size_t>(durations[i]), static_cast<Index>(i));
    }
    if (idx.empty()) throw EmptyInputError("length regulator: durations sum to zero");
    return ag::gather_rows(x, idx);
}

std::vector<int> durations_from_log(const Matrix& log_duration) {
    std::vector<int> out(static_cast<std::size_t>(log_duration.size()));
    for (Index i = 0; i < log_duration.size(); ++i) {
        const double d = std::round(std::exp(std::min(log_duration.data()[i], 10.0)));
        out[static_cast<std::size_t>(i)] = std::max(1, static_cast<int>(d));
    }
    return out;
}

Index quantize(double value, int bins) {
    const double pos = (value + 3.0) / 6.0 * bins;
    if (!(pos > 0)) return 0;
    return std::min<Index>(bins - 1, static_cast<Index>(pos));
}

std::vector<int> cumulative_frames(const std::vector<int>& durations) {
    std::vector<int> out(durations.size() + 1, 0);
    std::partial_sum(durations.begin(), durations.end(), out.begin() + 1);
    return out;
}

FftBlock::FftBlock(nn::ParameterStore& store, const std::string& name, Index d_model, Index ffn, int heads)
    : attention_(store, name + ".attn", d_model, d_model, d_model, d_model, heads),
      norm1_(store, name + ".norm1", d_model),
      ffn_in_(store, name + ".ffn_in", d_model, ffn),
      ffn_out_(store, name + ".ffn_out", ffn, d_model),
      norm2_(store, name + ".norm2", d_model) {}

Var FftBlock::operator()(const Var& x) const {
    const Var h = norm1_(ag::add(x, attention_.attend(x, x)));
    return norm2_(ag::add(h, ffn_out_(ag::relu(ffn_in_(h)))));
}

Synthesizer::Synthesizer(nn::ParameterStore& store, const std::string& name, const SynthConfig& cfg,
                         PhonemeInventory inventory)
    : cfg_(cfg), inventory_(std::move(inventory)) {
    cfg.validate();
    if (inventory_.size() == 0) throw ConfigError("synthesizer needs a non-empty phoneme inventory");
    const Index d = cfg.d_model;
    phoneme_embedding_ = nn::Embedding(store, name + ".phoneme_embedding", static_cast<Index>(inventory_.size()), d,
                                       1.0 / std::sqrt(static_cast<double>(d)));
    for (int l = 0; l < cfg.encoder_layers; ++l) encoder_.emplace_back(store, name + ".encoder." + std::to_string(l), d, cfg.ffn, cfg.heads);
    emphasis_proj_ = nn::Linear(store, name + ".regulator.emphasis", cfg.d_emp, d);
    speaker_proj_ = nn::Linear(store, name + ".regulator.speaker", cfg.d_speaker, d);
    duration_hidden_ = nn::Linear(store, name + ".duration.hidden", d, d);
    duration_out_ = nn::Linear(store, name + ".duration.out", d, 1);
    pitch_hidden_ = nn::Linear(store, name + ".pitch.hidden", d, d);
    pitch_out_ = nn::Linear(store, name + ".pitch.out", d, 1);
    pitch_embedding_ = nn::Embedding(store, name + ".pitch.embedding", cfg.pitch_bins, d, 0.1);
    energy_hidden_ = nn::Linear(store, name + ".energy.hidden", d, d);
    energy_out_ = nn::Linear(store, name + ".energy.out", d, 1);
    energy_embedding_ = nn::Embedding(store, name + ".energy.embedding", cfg.energy_bins, d, 0.1);
    for (int l = 0; l < cfg.decoder_layers; ++l) decoder_.emplace_back(store, name + ".decoder." + std::to_string(l), d, cfg.ffn, cfg.heads);
    mel_out_ = nn::Linear(store, name + ".mel_out", d, cfg.n_mels);
}

Var Synthesizer::encode(const std::vector<std::string>& phonemes) const {
    if (phonemes.empty()) throw EmptyInputError("tts_encode: empty phoneme sequence");
    const auto ids = inventory_.ids(phonemes);
    Var x = ag::add(phoneme_embedding_(ids),
                    ag::constant(nn::sinusoid_positions(static_cast<Index>(ids.size()), cfg_.d_model)));
    for (const auto& block : encoder_) x = block(x);
    return x;
}

Var Synthesizer::regulate(const Var& encoded, const Var& h_emp, const std::vector<PhonemeSpan>& spans,
                          const Var& speaker) const {
    if (h_emp.rows() != static_cast<Index>(spans.size())) {
        throw StructuralError("emphasis regulator: " + std::to_string(h_emp.rows()) + " emphasis rows for " +
                              std::to_string(spans.size()) + " word spans");
    }
    std::vector<Index> word_of(static_cast<std::size_t>(encoded.rows()), -1);
    std::size_t expected = 0;
    for (std::size_t w = 0; w < spans.size(); ++w) {
        if (spans[w].begin != expected || spans[w].end <= spans[w].begin || spans[w].end > word_of.size()) {
            throw StructuralError("emphasis regulator: word spans must partition the phoneme range");
        }
        for (std::size_t p = spans[w].begin; p < spans[w].end; ++p) word_of[p] = static_cast<Index>(w);
        expected = spans[w].end;
    }
    if (expected != word_of.size()) throw StructuralError("emphasis regulator: word spans must partition the phoneme range");
    const Var offsets = ag::gather_rows(emphasis_proj_(h_emp), word_of);
    return ag::add_row(ag::add(encoded, offsets), speaker_proj_(speaker));
}

SynthOutput Synthesizer::adapt_and_decode(const Var& regulated, const NormalizedTargets* targets) const {
    SynthOutput out;
    out.regulated = regulated;
    out.log_duration = duration_out_(ag::relu(duration_hidden_(regulated)));
    if (targets) {
        if (static_cast<Index>(targets->durations.size()) != regulated.rows()) {
            throw StructuralError("variance adaptor: target durations do not match the phoneme count");
        }
        out.durations = targets->durations;
    } else {
        out.durations = durations_from_log(out.log_duration.value());
    }
    Var frames = length_regulate(regulated, out.durations);

    out.pitch = pitch_out_(ag::relu(pitch_hidden_(frames)));
    std::vector<Index> pitch_ids(static_cast<std::size_t>(frames.rows()));
    for (Index f = 0; f < frames.rows(); ++f) {
        const double v = targets ? targets->pitch(f) : out.pitch.value()(f, 0);
        pitch_ids[static_cast<std::size_t>(f)] = quantize(v, cfg_.pitch_bins);
    }
    frames = ag::add(frames, pitch_embedding_(pitch_ids));

    out.energy = energy_out_(ag::relu(energy_hidden_(frames)));
    std::vector<Index> energy_ids(static_cast<std::size_t>(frames.rows()));
    for (Index f = 0; f < frames.rows(); ++f) {
        const double v = targets ? targets->energy(f) : out.energy.value()(f, 0);
        energy_ids[static_cast<std::size_t>(f)] = quantize(v, cfg_.energy_bins);
    }
    frames = ag::add(frames, energy_embedding_(energy_ids));
    out.mel = decode(frames);
    return out;
}

Var Synthesizer::decode(const Var& frames) const {
    Var x = ag::add(frames, ag::constant(nn::sinusoid_positions(frames.rows(), cfg_.d_model)));
    for (const auto& block : decoder_) x = block(x);
    return mel_out_(x);
}

SynthOutput Synthesizer::operator()(const std::vector<std::string>& phonemes, const Var& h_emp,
                                    const std::vector<PhonemeSpan>& spans, const Var& speaker,
                                    const NormalizedTargets* targets) const {
    const Var encoded = encode(phonemes);
    SynthOutput out = adapt_and_decode(regulate(encoded, h_emp, spans, speaker), targets);
    out.encoded = encoded;
    return out;
}

namespace {

Var mse(const Var& predicted, const Eigen::VectorXd& target) {
    if (predicted.rows() != target.size() || predicted.cols() != 1) throw StructuralError("tts loss: series length mismatch");
    return ag::mean_all(ag::square(ag::sub(predicted, ag::constant(target))));
}

}  // namespace

TtsLoss tts_loss(const SynthOutput& predicted, const NormalizedTargets& targets, const TtsLossWeights& weights) {
    if (predicted.mel.rows() != targets.mel.rows() || predicted.mel.cols() != targets.mel.cols()) {
        throw StructuralError("tts loss: mel shape " + std::to_string(predicted.mel.rows()) + "x" +
                              std::to_string(predicted.mel.cols()) + " vs target " + std::to_string(targets.mel.rows()) +
                              "x" + std::to_string(targets.mel.cols()));
    }
    TtsLoss l;
    l.mel = ag::mean_all(ag::abs(ag::sub(predicted.mel, ag::constant(targets.mel))));
    l.duration = mse(predicted.log_duration, targets.log_duration);
    l.pitch = mse(predicted.pitch, targets.pitch);
    l.energy = mse(predicted.energy, targets.energy);
    l.total = ag::add(ag::add(ag::affine(l.mel, weights.mel, 0.0), ag::affine(l.duration, weights.duration, 0.0)),
                      ag::add(ag::affine(l.pitch, weights.pitch, 0.0), ag::affine(l.energy, weights.energy, 0.0)));
    return l;
}

Var total_loss(const TtsLoss& tts, const Var& emphasis, double lambda) {
    return ag::add(tts.total, ag::affine(emphasis, lambda, 0.0));
}

Waveform reconstruct_waveform(const Matrix& mel, const audio::FrameConfig& cfg, int iterations) {
    return audio::griffin_lim(mel, cfg, iterations);
}

}  // namespace emphtts
