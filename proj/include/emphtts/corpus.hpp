#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace emphtts {

// Per-word emphasis intensity held as exact rationals count/annotator_count.
class IntensityVector {
public:
    IntensityVector() = default;
    IntensityVector(std::vector<int> counts, int annotator_count);

    std::size_t size() const { return counts_.size(); }
    int annotator_count() const { return annotator_count_; }
    const std::vector<int>& counts() const { return counts_; }
    double value(std::size_t word) const;
    std::vector<double> values() const;

    bool operator==(const IntensityVector&) const = default;

private:
    std::vector<int> counts_;
    int annotator_count_ = 1;
};

// Renders a value with `decimals` places ("0.83" for 5/6 at two decimals).
std::string format_intensity(double value, int decimals = 2);

enum class Label { I, O };

struct PhonemeSpan {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    bool operator==(const PhonemeSpan&) const = default;
};

struct Utterance {
    int index = 1;
    std::string speaker_id;
    std::string text;
    std::vector<std::string> words;
    std::vector<std::string> phonemes;
    std::vector<PhonemeSpan> word_phoneme_spans;
    std::optional<std::vector<int>> phoneme_durations;
    std::optional<std::string> audio_path;
    std::optional<IntensityVector> emphasis_intensity;

    bool operator==(const Utterance&) const = default;
};

struct Conversation {
    std::string conversation_id;
    std::vector<Utterance> turns;

    bool operator==(const Conversation&) const = default;
};

struct AnnotationRecord {
    std::string conversation_id;
    int turn_index = 1;
    std::string annotator_id;
    std::vector<Label> labels;
    std::string submitted_at;  // ISO-8601 UTC

    bool operator==(const AnnotationRecord&) const = default;
};

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

std::vector<std::string> tokenize_words(const std::string& text);

// Throws SchemaError naming the conversation, turn and offending field.
void validate_utterance(const Utterance& u, const std::string& conversation_id);
void validate_conversation(const Conversation& c);

IntensityVector aggregate_intensity(const std::vector<AnnotationRecord>& records);
std::vector<bool> binarize_intensity(const IntensityVector& v, double threshold = 0.5);
// Fraction of all words across the corpus whose intensity exceeds the threshold.
double emphasized_word_fraction(const std::vector<Conversation>& corpus, double threshold = 0.5);

struct SplitRatios {
    double train = 0.7;
    double validation = 0.2;
    double test = 0.1;
};
CorpusSplit split_corpus(const std::vector<Conversation>& conversations, SplitRatios ratios, std::uint64_t seed);

// Line-delimited JSON: a header line followed by one conversation per line.
std::vector<Conversation> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<Conversation>& conversations, const std::filesystem::path& path);
std::string serialize_conversation(const Conversation& c);
Conversation parse_conversation(const std::string& line);

std::string label_to_string(Label l);
Label label_from_string(const std::string& s);
std::string serialize_record(const AnnotationRecord& r);
AnnotationRecord parse_record(const std::string& line);
std::vector<AnnotationRecord> load_annotation_log(const std::filesystem::path& path);

using Waveform = std::vector<double>;

// Synthetic conversational corpus with planted emphasis: every turn after the
// first emphasizes exactly the one word it repeats from the previous turn; the
// first turn emphasizes a random word. Audio renders emphasized words louder,
// higher and longer.
struct ToyCorpusOptions {
    int num_conversations = 20;
    int min_turns = 3;
    int max_turns = 6;
    int min_words = 3;
    int max_words = 6;
    int vocabulary_size = 48;
    std::uint64_t seed = 0;
    int sample_rate = 22050;
    int window = 551;
    int shift = 220;
};

struct ToyCorpus {
    std::vector<Conversation> conversations;
    std::map<std::string, Waveform> audio;  // keyed by audio_path
};

ToyCorpus make_toy_corpus(const ToyCorpusOptions& options);
std::vector<Conversation> make_toy_corpus(int num_conversations, int min_turns, int max_turns, std::uint64_t seed);
// Writes corpus.jsonl plus the referenced WAV files under `dir`.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

// One toy-corpus utterance with characters as phonemes, durations drawn from
// `seed`, and the planted intensity on `emphasized` (none when nullopt).
Utterance make_toy_utterance(int index, const std::string& speaker, std::vector<std::string> words,
                             std::optional<std::size_t> emphasized, std::uint64_t seed, const std::string& audio_path);

// Renders one utterance of the toy corpus; emphasized words are those whose
// intensity exceeds 0.5.
Waveform render_toy_audio(const Utterance& u, const ToyCorpusOptions& options);

const Utterance& find_turn(const Conversation& c, int turn_index);

}  // namespace emphtts
