#pragma once

#include "emphtts/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace emphtts {

enum class TaskStatus { NotStarted, InProgress, Complete };
std::string task_status_name(TaskStatus s);

struct ConversationSummary {
    std::string conversation_id;
    int turns = 0;
    int annotated = 0;  // by the requesting annotator
    TaskStatus status = TaskStatus::NotStarted;
};

struct ConversationList {
    std::vector<ConversationSummary> conversations;
    std::optional<std::string> hint;  // set for unregistered annotators
};

struct SubmitResult {
    bool duplicate = false;     // exact resubmission, nothing written
    int next_turn = 1;          // annotator's next unannotated turn
    bool complete = false;
};

struct TurnStatus {
    int turn_index = 1;
    int annotators = 0;
    std::optional<IntensityVector> intensity;  // once annotators >= quorum
};

struct ConversationStatus {
    std::string conversation_id;
    int quorum = 6;
    std::vector<TurnStatus> turns;
};

// Conversations plus the append-only annotation log. An existing log is
// replayed on construction so a restarted service resumes where it stopped.
class AnnotationStore {
public:
    using Clock = std::function<std::string()>;

    AnnotationStore(std::vector<Conversation> conversations, std::filesystem::path log_path, int quorum = 6,
                    std::set<std::string> annotators = {}, Clock clock = {});

    ConversationList list_conversations(const std::string& annotator_id) const;
    const Conversation& get_conversation(const std::string& conversation_id) const;
    SubmitResult submit(const std::string& annotator_id, const std::string& conversation_id, int turn_index,
                        const std::vector<Label>& labels);
    ConversationStatus status(const std::string& conversation_id) const;
    int next_turn(const std::string& annotator_id, const std::string& conversation_id) const;

    bool registered(const std::string& annotator_id) const;
    int quorum() const { return quorum_; }
    const std::filesystem::path& log_path() const { return log_path_; }

private:
    using TaskKey = std::pair<std::string, std::string>;  // annotator, conversation

    void record(const AnnotationRecord& r);

    std::vector<Conversation> conversations_;
    std::map<std::string, std::size_t> by_id_;
    std::filesystem::path log_path_;
    int quorum_;
    std::set<std::string> annotators_;
    Clock clock_;

    mutable std::shared_mutex state_mutex_;
    std::map<TaskKey, std::vector<std::vector<Label>>> done_;  // labels per turn, in order
    std::map<std::pair<std::string, int>, std::vector<AnnotationRecord>> per_turn_;
    std::ofstream log_;
};

std::string utc_timestamp();

// Whitespace separated "token annotator_id" lines; '#' starts a comment.
std::map<std::string, std::string> load_token_file(const std::filesystem::path& path);

// Corpus copy with emphasis_intensity set on every turn that has at least
// `quorum` records. Records are validated against their turn's word count.
std::vector<Conversation> apply_annotations(std::vector<Conversation> corpus,
                                            const std::vector<AnnotationRecord>& records, int quorum);

// HTTP front end. Every endpoint requires "Authorization: Bearer <token>".
class AnnotationServer {
public:
    AnnotationServer(AnnotationStore& store, std::map<std::string, std::string> tokens,
                     std::filesystem::path audio_root);
    ~AnnotationServer();

    // Returns the bound port; serve() then blocks until stop().
    int bind(const std::string& host, int port = 0);
    void serve();
    void stop();

private:
    void routes();

    AnnotationStore& store_;
    std::map<std::string, std::string> tokens_;
    std::filesystem::path audio_root_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace emphtts
