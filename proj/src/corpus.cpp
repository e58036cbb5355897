#include "emphtts/corpus.hpp"

#include "emphtts/error.hpp"
#include "emphtts/wav.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace emphtts {

using nlohmann::json;

namespace {

constexpr const char* kCorpusFormat = "emphtts-corpus";
constexpr int kCorpusVersion = 1;

}  // namespace

IntensityVector::IntensityVector(std::vector<int> counts, int annotator_count)
    : counts_(std::move(counts)), annotator_count_(annotator_count) {
    if (annotator_count_ < 1) throw StructuralError("intensity needs at least one annotator");
    for (int c : counts_) {
        if (c < 0 || c > annotator_count_) {
            throw StructuralError("intensity count " + std::to_string(c) + " outside [0, " +
                                  std::to_string(annotator_count_) + "]");
        }
    }
}

double IntensityVector::value(std::size_t word) const {
    return static_cast<double>(counts_.at(word)) / static_cast<double>(annotator_count_);
}

std::vector<double> IntensityVector::values() const {
    std::vector<double> out(counts_.size());
    for (std::size_t i = 0; i < counts_.size(); ++i) out[i] = value(i);
    return out;
}

std::string format_intensity(double value, int decimals) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(decimals);
    ss << value;
    return ss.str();
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

void validate_utterance(const Utterance& u, const std::string& cid) {
    if (u.index < 1) throw SchemaError(cid, u.index, "index", "must be >= 1");
    if (u.speaker_id.empty()) throw SchemaError(cid, u.index, "speaker_id", "empty");
    if (u.words != tokenize_words(u.text)) {
        throw SchemaError(cid, u.index, "words", "must equal the whitespace tokenization of text");
    }
    if (u.word_phoneme_spans.size() != u.words.size()) {
        throw SchemaError(cid, u.index, "word_phoneme_spans",
                          "has " + std::to_string(u.word_phoneme_spans.size()) + " spans for " +
                              std::to_string(u.words.size()) + " words");
    }
    std::size_t expected = 0;
    for (std::size_t w = 0; w < u.word_phoneme_spans.size(); ++w) {
        const auto& s = u.word_phoneme_spans[w];
        if (s.begin != expected) {
            throw SchemaError(cid, u.index, "word_phoneme_spans",
                              "span " + std::to_string(w) + " starts at " + std::to_string(s.begin) +
                                  ", expected " + std::to_string(expected) + " (gap or overlap)");
        }
        if (s.end <= s.begin) {
            throw SchemaError(cid, u.index, "word_phoneme_spans", "span " + std::to_string(w) + " is empty");
        }
        expected = s.end;
    }
    if (expected != u.phonemes.size()) {
        throw SchemaError(cid, u.index, "word_phoneme_spans",
                          "spans cover " + std::to_string(expected) + " of " + std::to_string(u.phonemes.size()) +
                              " phonemes");
    }
    if (u.phoneme_durations) {
        if (u.phoneme_durations->size() != u.phonemes.size()) {
            throw SchemaError(cid, u.index, "phoneme_durations", "length differs from phoneme count");
        }
        for (int d : *u.phoneme_durations) {
            if (d < 1) throw SchemaError(cid, u.index, "phoneme_durations", "entries must be >= 1");
        }
    }
    if (u.emphasis_intensity && u.emphasis_intensity->size() != u.words.size()) {
        throw SchemaError(cid, u.index, "emphasis_intensity", "length differs from word count");
    }
}

void validate_conversation(const Conversation& c) {
    if (c.conversation_id.empty()) throw SchemaError("", 0, "conversation_id", "empty");
    for (std::size_t i = 0; i < c.turns.size(); ++i) {
        if (c.turns[i].index != static_cast<int>(i) + 1) {
            throw SchemaError(c.conversation_id, c.turns[i].index, "index",
                              "turn indices must be 1..N consecutive; expected " + std::to_string(i + 1));
        }
        validate_utterance(c.turns[i], c.conversation_id);
    }
}

IntensityVector aggregate_intensity(const std::vector<AnnotationRecord>& records) {
    if (records.empty()) throw EmptyInputError("aggregate_intensity: no annotation records");
    const auto& first = records.front();
    std::vector<int> counts(first.labels.size(), 0);
    for (const auto& r : records) {
        if (r.conversation_id != first.conversation_id || r.turn_index != first.turn_index) {
            throw StructuralError("aggregate_intensity: record from annotator '" + r.annotator_id +
                                  "' belongs to a different utterance");
        }
        if (r.labels.size() != counts.size()) {
            throw StructuralError("aggregate_intensity: annotator '" + r.annotator_id + "' labeled " +
                                  std::to_string(r.labels.size()) + " words, expected " +
                                  std::to_string(counts.size()));
        }
        for (std::size_t w = 0; w < counts.size(); ++w) counts[w] += r.labels[w] == Label::I ? 1 : 0;
    }
    return IntensityVector(std::move(counts), static_cast<int>(records.size()));
}

std::vector<bool> binarize_intensity(const IntensityVector& v, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarize threshold must lie in (0, 1)");
    std::vector<bool> out(v.size());
    // Exact rational comparison count/n > threshold.
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<double>(v.counts()[i]) > threshold * v.annotator_count();
    }
    return out;
}

double emphasized_word_fraction(const std::vector<Conversation>& corpus, double threshold) {
    std::size_t total = 0;
    std::size_t emphasized = 0;
    for (const auto& c : corpus) {
        for (const auto& u : c.turns) {
            if (!u.emphasis_intensity) continue;
            for (bool b : binarize_intensity(*u.emphasis_intensity, threshold)) {
                ++total;
                emphasized += b ? 1 : 0;
            }
        }
    }
    if (total == 0) throw EmptyInputError("no annotated words in corpus");
    return static_cast<double>(emphasized) / static_cast<double>(total);
}

CorpusSplit split_corpus(const std::vector<Conversation>& conversations, SplitRatios ratios, std::uint64_t seed) {
    const double sum = ratios.train + ratios.validation + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) throw ConfigError("negative split ratio");
    const std::size_t n = conversations.size();
    if (n < 3) throw EmptyInputError("split_corpus needs at least 3 conversations, got " + std::to_string(n));

    std::vector<std::string> ids;
    for (const auto& c : conversations) ids.push_back(c.conversation_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw StructuralError("duplicate conversation ids");
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(ids[i], ids[j]);
    }

    // Largest-remainder rounding keeps every split within one conversation of
    // its exact share.
    const double shares[3] = {ratios.train * n, ratios.validation * n, ratios.test * n};
    std::size_t sizes[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(std::floor(shares[i] + 1e-9));
        assigned += sizes[i];
    }
    std::vector<int> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return shares[a] - std::floor(shares[a] + 1e-9) > shares[b] - std::floor(shares[b] + 1e-9);
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
    // Every split with a positive ratio gets at least one conversation.
    for (int i = 0; i < 3; ++i) {
        const double r = i == 0 ? ratios.train : (i == 1 ? ratios.validation : ratios.test);
        if (sizes[i] == 0 && r > 0) {
            const int donor = static_cast<int>(std::max_element(sizes, sizes + 3) - sizes);
            --sizes[donor];
            ++sizes[i];
        }
    }

    CorpusSplit split;
    split.seed = seed;
    auto it = ids.begin();
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    split.test.assign(it, ids.end());
    return split;
}

namespace {

json utterance_to_json(const Utterance& u) {
    json j;
    j["index"] = u.index;
    j["speaker_id"] = u.speaker_id;
    j["text"] = u.text;
    j["words"] = u.words;
    j["phonemes"] = u.phonemes;
    json spans = json::array();
    for (const auto& s : u.word_phoneme_spans) spans.push_back({s.begin, s.end});
    j["word_phoneme_spans"] = spans;
    if (u.phoneme_durations) j["phoneme_durations"] = *u.phoneme_durations;
    if (u.audio_path) j["audio_path"] = *u.audio_path;
    if (u.emphasis_intensity) {
        j["emphasis_intensity"] = {{"counts", u.emphasis_intensity->counts()},
                                   {"annotator_count", u.emphasis_intensity->annotator_count()}};
    }
    return j;
}

template <typename T>
T field(const json& j, const char* name, const std::string& cid, int turn) {
    auto it = j.find(name);
    if (it == j.end()) throw SchemaError(cid, turn, name, "missing");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(cid, turn, name, e.what());
    }
}

Utterance utterance_from_json(const json& j, const std::string& cid, int position) {
    Utterance u;
    u.index = field<int>(j, "index", cid, position);
    const int t = u.index;
    u.speaker_id = field<std::string>(j, "speaker_id", cid, t);
    u.text = field<std::string>(j, "text", cid, t);
    u.words = field<std::vector<std::string>>(j, "words", cid, t);
    u.phonemes = field<std::vector<std::string>>(j, "phonemes", cid, t);
    for (const auto& pair : field<std::vector<std::vector<long long>>>(j, "word_phoneme_spans", cid, t)) {
        if (pair.size() != 2 || pair[0] < 0 || pair[1] < 0) {
            throw SchemaError(cid, t, "word_phoneme_spans", "each span must be a [begin, end) pair");
        }
        u.word_phoneme_spans.push_back({static_cast<std::size_t>(pair[0]), static_cast<std::size_t>(pair[1])});
    }
    if (j.contains("phoneme_durations")) u.phoneme_durations = field<std::vector<int>>(j, "phoneme_durations", cid, t);
    if (j.contains("audio_path")) u.audio_path = field<std::string>(j, "audio_path", cid, t);
    if (j.contains("emphasis_intensity")) {
        const json& e = j["emphasis_intensity"];
        const auto counts = field<std::vector<int>>(e, "counts", cid, t);
        const int n = field<int>(e, "annotator_count", cid, t);
        try {
            u.emphasis_intensity = IntensityVector(counts, n);
        } catch (const StructuralError& err) {
            throw SchemaError(cid, t, "emphasis_intensity", err.what());
        }
    }
    return u;
}

}  // namespace

std::string serialize_conversation(const Conversation& c) {
    json j;
    j["conversation_id"] = c.conversation_id;
    json turns = json::array();
    for (const auto& u : c.turns) turns.push_back(utterance_to_json(u));
    j["turns"] = turns;
    return j.dump();
}

Conversation parse_conversation(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError("", 0, "<line>", e.what());
    }
    Conversation c;
    c.conversation_id = field<std::string>(j, "conversation_id", "", 0);
    const auto turns = j.find("turns");
    if (turns == j.end() || !turns->is_array()) throw SchemaError(c.conversation_id, 0, "turns", "missing or not a list");
    int position = 1;
    for (const auto& t : *turns) c.turns.push_back(utterance_from_json(t, c.conversation_id, position++));
    validate_conversation(c);
    return c;
}

std::vector<Conversation> load_corpus(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw NotFoundError("cannot open corpus " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw SchemaError("", 0, "<header>", "missing header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError("", 0, "<header>", e.what());
    }
    if (header.value("format", "") != kCorpusFormat || header.value("version", 0) != kCorpusVersion) {
        throw SchemaError("", 0, "<header>", "unrecognized corpus header");
    }
    std::vector<Conversation> out;
    std::set<std::string> seen;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(parse_conversation(line));
        if (!seen.insert(out.back().conversation_id).second) {
            throw SchemaError(out.back().conversation_id, 0, "conversation_id", "duplicate id");
        }
    }
    return out;
}

void save_corpus(const std::vector<Conversation>& conversations, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write corpus " + path.string());
    f << json{{"format", kCorpusFormat}, {"version", kCorpusVersion}}.dump() << '\n';
    for (const auto& c : conversations) {
        validate_conversation(c);
        f << serialize_conversation(c) << '\n';
    }
}

std::string label_to_string(Label l) { return l == Label::I ? "I" : "O"; }

Label label_from_string(const std::string& s) {
    if (s == "I") return Label::I;
    if (s == "O") return Label::O;
    throw StructuralError("label must be I or O, got '" + s + "'");
}

std::string serialize_record(const AnnotationRecord& r) {
    json labels = json::array();
    for (Label l : r.labels) labels.push_back(label_to_string(l));
    json j{{"conversation_id", r.conversation_id},
           {"turn_index", r.turn_index},
           {"annotator_id", r.annotator_id},
           {"labels", labels},
           {"submitted_at", r.submitted_at}};
    return j.dump();
}

AnnotationRecord parse_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError("", 0, "<line>", e.what());
    }
    AnnotationRecord r;
    r.conversation_id = field<std::string>(j, "conversation_id", "", 0);
    r.turn_index = field<int>(j, "turn_index", r.conversation_id, 0);
    r.annotator_id = field<std::string>(j, "annotator_id", r.conversation_id, r.turn_index);
    for (const auto& s : field<std::vector<std::string>>(j, "labels", r.conversation_id, r.turn_index)) {
        try {
            r.labels.push_back(label_from_string(s));
        } catch (const StructuralError& e) {
            throw SchemaError(r.conversation_id, r.turn_index, "labels", e.what());
        }
    }
    r.submitted_at = field<std::string>(j, "submitted_at", r.conversation_id, r.turn_index);
    return r;
}

std::vector<AnnotationRecord> load_annotation_log(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    std::ifstream f(path);
    if (!f) return out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) out.push_back(parse_record(line));
    }
    return out;
}

const Utterance& find_turn(const Conversation& c, int turn_index) {
    if (turn_index < 1 || turn_index > static_cast<int>(c.turns.size())) {
        throw NotFoundError("conversation '" + c.conversation_id + "' has no turn " + std::to_string(turn_index));
    }
    return c.turns[static_cast<std::size_t>(turn_index - 1)];
}

// ---------------------------------------------------------------------------
// Toy corpus

namespace {

std::vector<std::string> make_vocabulary(int size, std::mt19937_64& rng) {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    std::set<std::string> seen;
    std::vector<std::string> vocab;
    while (static_cast<int>(vocab.size()) < size) {
        const int syllables = 2 + static_cast<int>(rng() % 2);
        std::string w;
        for (int s = 0; s < syllables; ++s) {
            w += consonants[rng() % consonants.size()];
            w += vowels[rng() % vowels.size()];
        }
        if (seen.insert(w).second) vocab.push_back(w);
    }
    return vocab;
}

Utterance toy_utterance(int index, const std::string& speaker, std::vector<std::string> words,
                        std::size_t emphasized, std::mt19937_64& rng, const std::string& audio_path) {
    Utterance u;
    u.index = index;
    u.speaker_id = speaker;
    for (std::size_t i = 0; i < words.size(); ++i) u.text += (i ? " " : "") + words[i];
    u.words = std::move(words);
    std::vector<int> durations;
    std::vector<int> counts(u.words.size(), 0);
    for (std::size_t w = 0; w < u.words.size(); ++w) {
        const std::size_t begin = u.phonemes.size();
        for (char ch : u.words[w]) {
            u.phonemes.emplace_back(1, ch);
            durations.push_back(2 + static_cast<int>(rng() % 3) + (w == emphasized ? 1 : 0));
        }
        u.word_phoneme_spans.push_back({begin, u.phonemes.size()});
        if (w == emphasized) {
            counts[w] = 4 + static_cast<int>(rng() % 3);
        } else {
            counts[w] = (rng() % 100) < 15 ? 1 : 0;
        }
    }
    u.phoneme_durations = durations;
    u.emphasis_intensity = IntensityVector(counts, 6);
    u.audio_path = audio_path;
    return u;
}

}  // namespace

Utterance make_toy_utterance(int index, const std::string& speaker, std::vector<std::string> words,
                             std::optional<std::size_t> emphasized, std::uint64_t seed, const std::string& audio_path) {
    if (words.empty()) throw EmptyInputError("toy utterance without words");
    if (emphasized && *emphasized >= words.size()) throw StructuralError("emphasized word index out of range");
    std::mt19937_64 rng(seed);
    const std::size_t target = emphasized.value_or(words.size());
    return toy_utterance(index, speaker, std::move(words), target, rng, audio_path);
}

ToyCorpus make_toy_corpus(const ToyCorpusOptions& o) {
    if (o.min_turns < 1 || o.max_turns < o.min_turns) throw ConfigError("invalid toy turn range");
    if (o.min_words < 2 || o.max_words < o.min_words) throw ConfigError("invalid toy word range");
    if (o.vocabulary_size < 2 * o.max_words + 2) throw ConfigError("toy vocabulary too small for utterance length");
    std::mt19937_64 rng(o.seed * 0x9E3779B97F4A7C15ULL + 17);
    const auto vocab = make_vocabulary(o.vocabulary_size, rng);
    const std::string speakers[2] = {"spk_a", "spk_b"};

    auto uniform = [&rng](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };

    ToyCorpus out;
    for (int c = 0; c < o.num_conversations; ++c) {
        Conversation conv;
        char id[32];
        std::snprintf(id, sizeof id, "toy_%04d", c);
        conv.conversation_id = id;
        const int turns = uniform(o.min_turns, o.max_turns);
        std::vector<std::string> previous;
        for (int t = 1; t <= turns; ++t) {
            const int n = uniform(o.min_words, o.max_words);
            std::vector<std::string> words;
            std::size_t emphasized;
            std::set<std::string> banned(previous.begin(), previous.end());
            std::string repeated;
            if (!previous.empty()) {
                repeated = previous[rng() % previous.size()];
                banned.insert(repeated);
            }
            while (static_cast<int>(words.size()) < n - (repeated.empty() ? 0 : 1)) {
                const std::string& w = vocab[rng() % vocab.size()];
                if (banned.insert(w).second) words.push_back(w);
            }
            if (repeated.empty()) {
                emphasized = rng() % words.size();
            } else {
                emphasized = rng() % (words.size() + 1);
                words.insert(words.begin() + static_cast<std::ptrdiff_t>(emphasized), repeated);
            }
            const std::string path = "audio/" + conv.conversation_id + "_" + std::to_string(t) + ".wav";
            conv.turns.push_back(toy_utterance(t, speakers[(t - 1) % 2], words, emphasized, rng, path));
            out.audio[path] = render_toy_audio(conv.turns.back(), o);
            previous = words;
        }
        out.conversations.push_back(std::move(conv));
    }
    return out;
}

std::vector<Conversation> make_toy_corpus(int num_conversations, int min_turns, int max_turns, std::uint64_t seed) {
    ToyCorpusOptions o;
    o.num_conversations = num_conversations;
    o.min_turns = min_turns;
    o.max_turns = max_turns;
    o.seed = seed;
    return make_toy_corpus(o).conversations;
}

void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_corpus(corpus.conversations, dir / "corpus.jsonl");
    for (const auto& [path, wave] : corpus.audio) write_wav(dir / path, wave);
}

Waveform render_toy_audio(const Utterance& u, const ToyCorpusOptions& o) {
    if (!u.phoneme_durations) throw StructuralError("toy audio needs phoneme durations");
    const auto& durations = *u.phoneme_durations;
    const int frames = std::accumulate(durations.begin(), durations.end(), 0);
    const std::size_t samples = static_cast<std::size_t>((frames - 1) * o.shift + o.window);
    Waveform wave(samples, 0.0);

    std::vector<bool> emphasized(u.words.size(), false);
    if (u.emphasis_intensity) emphasized = binarize_intensity(*u.emphasis_intensity, 0.5);
    std::vector<std::size_t> word_of(u.phonemes.size(), 0);
    for (std::size_t w = 0; w < u.word_phoneme_spans.size(); ++w) {
        for (std::size_t p = u.word_phoneme_spans[w].begin; p < u.word_phoneme_spans[w].end; ++p) word_of[p] = w;
    }

    double base = 150.0;
    if (u.speaker_id == "spk_a") base = 110.0;
    if (u.speaker_id == "spk_b") base = 190.0;
    static const std::string vowels = "aeiou";

    double phase = 0.0;
    std::size_t start = 0;
    int frame = 0;
    for (std::size_t p = 0; p < u.phonemes.size(); ++p) {
        frame += durations[p];
        const std::size_t end = p + 1 == u.phonemes.size() ? samples : static_cast<std::size_t>(frame * o.shift);
        const bool emph = emphasized[word_of[p]];
        const int code = u.phonemes[p].empty() ? 0 : static_cast<unsigned char>(u.phonemes[p][0]);
        const bool vowel = vowels.find(static_cast<char>(code)) != std::string::npos;
        const double f0 = base * (1.0 + 0.04 * ((code % 5) - 2)) * (emph ? 1.25 : 1.0);
        const double amp = 0.08 * (vowel ? 1.0 : 0.5) * (emph ? 2.5 : 1.0);
        const double h2 = 0.3 + 0.1 * (code % 3);
        const double h3 = 0.15 + 0.05 * (code % 4);
        for (std::size_t s = start; s < end; ++s) {
            phase += 2.0 * M_PI * f0 / o.sample_rate;
            wave[s] = amp * (std::sin(phase) + h2 * std::sin(2 * phase) + h3 * std::sin(3 * phase));
        }
        start = end;
    }
    return wave;
}

}  // namespace emphtts
