#include "emphtts/frontends.hpp"

#include "emphtts/error.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace emphtts {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double unit_open(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) / 9007199254740992.0; }

Matrix hashed_matrix(std::uint64_t key, Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * hashed_normal(key, static_cast<std::uint64_t>(i));
    return m;
}

constexpr double kPowerFloor = 1e-10;
constexpr double kRmsFloor = 1e-5;

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

double hashed_normal(std::uint64_t key, std::uint64_t index) {
    const std::uint64_t a = splitmix64(key ^ splitmix64(2 * index));
    const std::uint64_t b = splitmix64(key ^ splitmix64(2 * index + 1));
    return std::sqrt(-2.0 * std::log(unit_open(a))) * std::cos(2.0 * M_PI * unit_open(b));
}

void EmbedderConfig::validate() const {
    for (int d : {d_sentence_text, d_word_history, d_word_current, d_frame_audio, d_sentence_audio, d_speaker}) {
        if (d < 1) throw ConfigError("embedding dimensions must be >= 1");
    }
}

RowVector ToyTextEmbedder::token_vector(const std::string& token, int dim) const {
    const std::uint64_t key = fnv1a(token) ^ splitmix64(cfg_.seed);
    RowVector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = hashed_normal(key, static_cast<std::uint64_t>(i)) ;
    return v;
}

RowVector ToyTextEmbedder::position_vector(std::size_t position, int dim) const {
    const std::uint64_t key = fnv1a("#position") ^ splitmix64(cfg_.seed + 1) ^ splitmix64(position + 1);
    RowVector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = 0.25 * hashed_normal(key, static_cast<std::uint64_t>(i)) ;
    return v;
}

RowVector ToyTextEmbedder::sentence(const Utterance& u) const {
    const auto tokens = tokenize_words(u.text);
    if (tokens.empty()) throw EmptyInputError("sentence embedding of empty text");
    RowVector v = RowVector::Zero(cfg_.d_sentence_text);
    for (const auto& t : tokens) v += token_vector(t, cfg_.d_sentence_text);
    const double n = v.norm();
    if (n <= 0.0) throw NumericError("degenerate sentence embedding");
    return v / n;
}

FeatureMatrix ToyTextEmbedder::words(const Utterance& u, WordRole role) const {
    if (u.words.empty()) throw EmptyInputError("word embedding of an utterance without words");
    const int d = role == WordRole::Current ? cfg_.d_word_current : cfg_.d_word_history;
    FeatureMatrix out{Axis::Word, Matrix(static_cast<Eigen::Index>(u.words.size()), d)};
    for (std::size_t i = 0; i < u.words.size(); ++i) {
        out.values.row(static_cast<Eigen::Index>(i)) = token_vector(u.words[i], d) + position_vector(i, d);
    }
    return out;
}

RowVector AudioSummary::as_row() const {
    RowVector r(5);
    r << log_energy / 10.0, f0_mean / 100.0, f0_std / 100.0, spectral_centroid / 1000.0, voiced_fraction;
    return r;
}

ToyAudioEmbedder::ToyAudioEmbedder(EmbedderConfig cfg, audio::FrameConfig frames)
    : cfg_(cfg),
      frame_cfg_(frames),
      sentence_projection_(hashed_matrix(fnv1a("#audio-sentence") ^ cfg.seed, 5, cfg.d_sentence_audio, 1.0 / std::sqrt(5.0))),
      frame_projection_(hashed_matrix(fnv1a("#audio-frame") ^ cfg.seed, frames.n_mels + 2, cfg.d_frame_audio,
                                      1.0 / std::sqrt(static_cast<double>(frames.n_mels + 2)))) {}

AudioSummary ToyAudioEmbedder::summary(const Waveform& wave) const {
    if (audio::frame_count(wave.size(), frame_cfg_) < 1) {
        throw EmptyInputError("audio shorter than one analysis window");
    }
    AudioSummary s;
    double power = 0.0;
    for (double v : wave) power += v * v;
    power /= static_cast<double>(wave.size());
    s.log_energy = power > kPowerFloor ? std::log(power / kPowerFloor) : 0.0;

    const auto f0 = audio::f0_track(wave, frame_cfg_);
    double sum = 0.0, sq = 0.0;
    int voiced = 0;
    for (double f : f0) {
        if (f > 0) {
            sum += f;
            sq += f * f;
            ++voiced;
        }
    }
    if (voiced > 0) {
        s.f0_mean = sum / voiced;
        s.f0_std = std::sqrt(std::max(0.0, sq / voiced - s.f0_mean * s.f0_mean));
        s.voiced_fraction = static_cast<double>(voiced) / static_cast<double>(f0.size());
    }
    const Matrix mag = audio::stft_magnitude(wave, frame_cfg_);
    const Eigen::RowVectorXd avg = mag.array().square().colwise().mean();
    const double total = avg.sum();
    if (total > 0) {
        double c = 0.0;
        for (Eigen::Index k = 0; k < avg.size(); ++k) c += avg(k) * static_cast<double>(k) * frame_cfg_.sample_rate / frame_cfg_.n_fft;
        s.spectral_centroid = c / total;
    }
    return s;
}

RowVector ToyAudioEmbedder::sentence(const Waveform& wave) const { return summary(wave).as_row() * sentence_projection_; }

Matrix ToyAudioEmbedder::frame_features(const Waveform& wave) const {
    const int frames = audio::frame_count(wave.size(), frame_cfg_);
    if (frames < 1) throw EmptyInputError("audio shorter than one analysis window");
    Matrix feats(frames, frame_cfg_.n_mels + 2);
    const double floor_log = std::log(audio::kMelFloor);
    feats.leftCols(frame_cfg_.n_mels) = (audio::log_mel(wave, frame_cfg_).array() - floor_log) / 10.0;
    const auto f0 = audio::f0_track(wave, frame_cfg_);
    const auto energy = audio::frame_energy(wave, frame_cfg_);
    for (int f = 0; f < frames; ++f) {
        const auto i = static_cast<std::size_t>(f);
        feats(f, f0_column()) = f0[i] / 100.0;
        feats(f, energy_column()) = energy[i] > kRmsFloor ? std::log(energy[i] / kRmsFloor) / 10.0 : 0.0;
    }
    return feats;
}

FeatureMatrix ToyAudioEmbedder::frames(const Waveform& wave) const {
    return FeatureMatrix{Axis::Frame, frame_features(wave) * frame_projection_};
}

namespace {

struct Registry {
    std::mutex mu;
    std::map<std::string, TextEmbedderFactory> text;
    std::map<std::string, AudioEmbedderFactory> audio;

    Registry() {
        text["toy"] = [](const EmbedderConfig& c) { return std::make_unique<ToyTextEmbedder>(c); };
        audio["toy"] = [](const EmbedderConfig& c, const audio::FrameConfig& f) {
            return std::make_unique<ToyAudioEmbedder>(c, f);
        };
    }
};

Registry& registry() {
    static Registry r;
    return r;
}

}  // namespace

void register_text_embedder(const std::string& kind, TextEmbedderFactory factory) {
    std::lock_guard lock(registry().mu);
    registry().text[kind] = std::move(factory);
}

void register_audio_embedder(const std::string& kind, AudioEmbedderFactory factory) {
    std::lock_guard lock(registry().mu);
    registry().audio[kind] = std::move(factory);
}

std::unique_ptr<TextEmbedder> make_text_embedder(const std::string& kind, const EmbedderConfig& cfg) {
    cfg.validate();
    std::lock_guard lock(registry().mu);
    auto it = registry().text.find(kind);
    if (it == registry().text.end()) throw ConfigError("unknown text frontend kind '" + kind + "'");
    return it->second(cfg);
}

std::unique_ptr<AudioEmbedder> make_audio_embedder(const std::string& kind, const EmbedderConfig& cfg,
                                                   const audio::FrameConfig& frames) {
    cfg.validate();
    std::lock_guard lock(registry().mu);
    auto it = registry().audio.find(kind);
    if (it == registry().audio.end()) throw ConfigError("unknown audio frontend kind '" + kind + "'");
    return it->second(cfg, frames);
}

SpeakerTable::SpeakerTable(nn::ParameterStore& store, const std::string& name, std::vector<std::string> speakers, int dim)
    : speakers_(std::move(speakers)) {
    if (speakers_.empty()) throw ConfigError("speaker table needs at least one speaker");
    table_ = nn::Embedding(store, name, static_cast<nn::Index>(speakers_.size()), dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

std::size_t SpeakerTable::index_of(const std::string& speaker_id) const {
    for (std::size_t i = 0; i < speakers_.size(); ++i) {
        if (speakers_[i] == speaker_id) return i;
    }
    throw NotFoundError("unknown speaker '" + speaker_id + "'");
}

nn::Var SpeakerTable::embed(const std::string& speaker_id) const {
    return table_.row(static_cast<nn::Index>(index_of(speaker_id)));
}

}  // namespace emphtts
