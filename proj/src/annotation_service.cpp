#include "emphtts/annotation_service.hpp"

#include "emphtts/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <sstream>

namespace emphtts {

using nlohmann::json;

std::string task_status_name(TaskStatus s) {
    switch (s) {
    case TaskStatus::NotStarted: return "not started";
    case TaskStatus::InProgress: return "in progress";
    case TaskStatus::Complete: return "complete";
    }
    return "";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

AnnotationStore::AnnotationStore(std::vector<Conversation> conversations, std::filesystem::path log_path, int quorum,
                                 std::set<std::string> annotators, Clock clock)
    : conversations_(std::move(conversations)), log_path_(std::move(log_path)), quorum_(quorum),
      annotators_(std::move(annotators)), clock_(clock ? std::move(clock) : Clock(utc_timestamp)) {
    if (quorum_ < 1) throw ConfigError("quorum must be >= 1, got " + std::to_string(quorum_));
    for (std::size_t i = 0; i < conversations_.size(); ++i) {
        validate_conversation(conversations_[i]);
        if (!by_id_.emplace(conversations_[i].conversation_id, i).second) {
            throw StructuralError("duplicate conversation id '" + conversations_[i].conversation_id + "'");
        }
    }
    std::size_t line = 0;
    for (const auto& r : load_annotation_log(log_path_)) {
        ++line;
        const auto& conv = get_conversation(r.conversation_id);
        const auto& turn = find_turn(conv, r.turn_index);
        auto& done = done_[{r.annotator_id, r.conversation_id}];
        if (r.labels.size() != turn.words.size() || r.turn_index != static_cast<int>(done.size()) + 1) {
            throw SchemaError(r.conversation_id, r.turn_index, "labels",
                              "log line " + std::to_string(line) + " from '" + r.annotator_id +
                                  "' is out of order or has the wrong word count");
        }
        done.push_back(r.labels);
        per_turn_[{r.conversation_id, r.turn_index}].push_back(r);
    }
    if (!log_path_.parent_path().empty()) std::filesystem::create_directories(log_path_.parent_path());
    log_.open(log_path_, std::ios::app | std::ios::binary);
    if (!log_) throw Error("cannot open annotation log " + log_path_.string());
}

bool AnnotationStore::registered(const std::string& annotator_id) const {
    return annotators_.empty() || annotators_.count(annotator_id) > 0;
}

ConversationList AnnotationStore::list_conversations(const std::string& annotator_id) const {
    ConversationList out;
    if (!registered(annotator_id)) {
        out.hint = "annotator '" + annotator_id + "' is not registered; ask the administrator to add a token for it";
        return out;
    }
    std::shared_lock lock(state_mutex_);
    for (const auto& c : conversations_) {
        ConversationSummary s;
        s.conversation_id = c.conversation_id;
        s.turns = static_cast<int>(c.turns.size());
        const auto it = done_.find({annotator_id, c.conversation_id});
        s.annotated = it == done_.end() ? 0 : static_cast<int>(it->second.size());
        s.status = s.annotated == 0 ? TaskStatus::NotStarted
                   : s.annotated < s.turns ? TaskStatus::InProgress
                                           : TaskStatus::Complete;
        out.conversations.push_back(s);
    }
    return out;
}

const Conversation& AnnotationStore::get_conversation(const std::string& conversation_id) const {
    const auto it = by_id_.find(conversation_id);
    if (it == by_id_.end()) throw NotFoundError("no conversation '" + conversation_id + "'");
    return conversations_[it->second];
}

int AnnotationStore::next_turn(const std::string& annotator_id, const std::string& conversation_id) const {
    get_conversation(conversation_id);
    std::shared_lock lock(state_mutex_);
    const auto it = done_.find({annotator_id, conversation_id});
    return it == done_.end() ? 1 : static_cast<int>(it->second.size()) + 1;
}

void AnnotationStore::record(const AnnotationRecord& r) {
    log_ << serialize_record(r) << '\n';
    log_.flush();
    if (!log_) throw Error("write to annotation log " + log_path_.string() + " failed");
}

SubmitResult AnnotationStore::submit(const std::string& annotator_id, const std::string& conversation_id,
                                     int turn_index, const std::vector<Label>& labels) {
    if (!registered(annotator_id)) throw AuthError("annotator '" + annotator_id + "' is not registered");
    const auto& conv = get_conversation(conversation_id);
    const auto& turn = find_turn(conv, turn_index);
    if (labels.size() != turn.words.size()) {
        throw StructuralError("turn " + std::to_string(turn_index) + " of '" + conversation_id + "' has " +
                              std::to_string(turn.words.size()) + " words, got " + std::to_string(labels.size()) +
                              " labels");
    }
    std::unique_lock lock(state_mutex_);
    auto& done = done_[{annotator_id, conversation_id}];
    const int total = static_cast<int>(conv.turns.size());
    SubmitResult result;
    if (turn_index <= static_cast<int>(done.size())) {
        if (done[static_cast<std::size_t>(turn_index - 1)] != labels) {
            throw ConflictError("turn " + std::to_string(turn_index) + " of '" + conversation_id +
                                "' is already annotated by '" + annotator_id + "'; annotations are immutable");
        }
        result.duplicate = true;
    } else {
        const int expected = static_cast<int>(done.size()) + 1;
        if (turn_index != expected) {
            throw OrderingError("annotate turns in order: '" + annotator_id + "' must submit turn " +
                                std::to_string(expected) + " of '" + conversation_id + "' before turn " +
                                std::to_string(turn_index));
        }
        AnnotationRecord r{conversation_id, turn_index, annotator_id, labels, clock_()};
        record(r);
        done.push_back(labels);
        per_turn_[{conversation_id, turn_index}].push_back(std::move(r));
    }
    result.next_turn = static_cast<int>(done.size()) + 1;
    result.complete = static_cast<int>(done.size()) == total;
    return result;
}

ConversationStatus AnnotationStore::status(const std::string& conversation_id) const {
    const auto& conv = get_conversation(conversation_id);
    ConversationStatus s;
    s.conversation_id = conversation_id;
    s.quorum = quorum_;
    std::shared_lock lock(state_mutex_);
    for (const auto& u : conv.turns) {
        TurnStatus t;
        t.turn_index = u.index;
        const auto it = per_turn_.find({conversation_id, u.index});
        if (it != per_turn_.end()) {
            t.annotators = static_cast<int>(it->second.size());
            if (t.annotators >= quorum_) t.intensity = aggregate_intensity(it->second);
        }
        s.turns.push_back(std::move(t));
    }
    return s;
}

std::map<std::string, std::string> load_token_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw NotFoundError("cannot read token file " + path.string());
    std::map<std::string, std::string> tokens;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
        ++n;
        line = line.substr(0, line.find('#'));
        std::istringstream in(line);
        std::string token, annotator, extra;
        if (!(in >> token)) continue;
        if (!(in >> annotator) || (in >> extra)) {
            throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected '<token> <annotator_id>'");
        }
        if (!tokens.emplace(token, annotator).second) {
            throw ConfigError(path.string() + ":" + std::to_string(n) + ": duplicate token");
        }
    }
    return tokens;
}

std::vector<Conversation> apply_annotations(std::vector<Conversation> corpus,
                                            const std::vector<AnnotationRecord>& records, int quorum) {
    if (quorum < 1) throw ConfigError("quorum must be >= 1");
    std::map<std::pair<std::string, int>, std::vector<AnnotationRecord>> groups;
    for (const auto& r : records) groups[{r.conversation_id, r.turn_index}].push_back(r);
    std::map<std::string, Conversation*> by_id;
    for (auto& c : corpus) by_id[c.conversation_id] = &c;
    for (const auto& [key, group] : groups) {
        const auto it = by_id.find(key.first);
        if (it == by_id.end()) throw NotFoundError("annotation log names unknown conversation '" + key.first + "'");
        auto& turn = const_cast<Utterance&>(find_turn(*it->second, key.second));
        std::set<std::string> seen;
        for (const auto& r : group) {
            if (!seen.insert(r.annotator_id).second) {
                throw StructuralError("annotator '" + r.annotator_id + "' labeled turn " + std::to_string(key.second) +
                                      " of '" + key.first + "' twice");
            }
            if (r.labels.size() != turn.words.size()) {
                throw StructuralError("annotator '" + r.annotator_id + "' gave " + std::to_string(r.labels.size()) +
                                      " labels for a " + std::to_string(turn.words.size()) + "-word turn");
            }
        }
        if (static_cast<int>(group.size()) >= quorum) turn.emphasis_intensity = aggregate_intensity(group);
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
}

json intensity_json(const IntensityVector& v) {
    json values = json::array(), shown = json::array();
    for (double x : v.values()) {
        values.push_back(x);
        shown.push_back(format_intensity(x));
    }
    return {{"counts", v.counts()}, {"annotator_count", v.annotator_count()}, {"values", values}, {"display", shown}};
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, std::map<std::string, std::string> tokens,
                                   std::filesystem::path audio_root)
    : store_(store), tokens_(std::move(tokens)), audio_root_(std::move(audio_root)),
      server_(std::make_unique<httplib::Server>()) {
    routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void AnnotationServer::serve() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (server_) server_->stop();
}

void AnnotationServer::routes() {
    using Handler = std::function<void(const std::string& annotator, const httplib::Request&, httplib::Response&)>;
    auto guarded = [this](Handler h) {
        return [this, h](const httplib::Request& req, httplib::Response& res) {
            const std::string auth = req.get_header_value("Authorization");
            const std::string prefix = "Bearer ";
            const auto it = auth.rfind(prefix, 0) == 0 ? tokens_.find(auth.substr(prefix.size())) : tokens_.end();
            if (it == tokens_.end()) {
                reply(res, 401, {{"error", "missing or unknown bearer token"},
                                 {"hint", "log in with a token issued in the service's token file"}});
                return;
            }
            try {
                h(it->second, req, res);
            } catch (const NotFoundError& e) {
                fail(res, 404, e.what());
            } catch (const OrderingError& e) {
                fail(res, 409, e.what());
            } catch (const ConflictError& e) {
                fail(res, 409, e.what());
            } catch (const AuthError& e) {
                fail(res, 403, e.what());
            } catch (const StructuralError& e) {
                fail(res, 400, e.what());
            } catch (const json::exception& e) {
                fail(res, 400, std::string("malformed request body: ") + e.what());
            } catch (const std::exception& e) {
                fail(res, 500, e.what());
            }
        };
    };

    server_->Get("/conversations", guarded([this](const std::string& who, const httplib::Request&,
                                                  httplib::Response& res) {
        const auto list = store_.list_conversations(who);
        json items = json::array();
        for (const auto& s : list.conversations) {
            items.push_back({{"conversation_id", s.conversation_id},
                             {"turns", s.turns},
                             {"annotated", s.annotated},
                             {"next_turn", s.annotated + 1},
                             {"status", task_status_name(s.status)}});
        }
        json body{{"annotator_id", who}, {"conversations", items}};
        if (list.hint) body["hint"] = *list.hint;
        reply(res, 200, body);
    }));

    server_->Get(R"(/conversations/([^/]+))", guarded([this](const std::string& who, const httplib::Request& req,
                                                            httplib::Response& res) {
        const auto& c = store_.get_conversation(req.matches[1]);
        json turns = json::array();
        for (const auto& u : c.turns) {
            turns.push_back({{"index", u.index},
                             {"speaker_id", u.speaker_id},
                             {"text", u.text},
                             {"words", u.words},
                             {"audio_url", "/audio/" + c.conversation_id + "/" + std::to_string(u.index)}});
        }
        reply(res, 200, {{"conversation_id", c.conversation_id},
                         {"next_turn", store_.next_turn(who, c.conversation_id)},
                         {"turns", turns}});
    }));

    server_->Get(R"(/conversations/([^/]+)/status)", guarded([this](const std::string&, const httplib::Request& req,
                                                                   httplib::Response& res) {
        const auto s = store_.status(req.matches[1]);
        json turns = json::array();
        for (const auto& t : s.turns) {
            json j{{"turn_index", t.turn_index}, {"annotators", t.annotators}};
            j["intensity"] = t.intensity ? intensity_json(*t.intensity) : json(nullptr);
            turns.push_back(j);
        }
        reply(res, 200, {{"conversation_id", s.conversation_id}, {"quorum", s.quorum}, {"turns", turns}});
    }));

    server_->Get(R"(/audio/([^/]+)/(\d+))", guarded([this](const std::string&, const httplib::Request& req,
                                                          httplib::Response& res) {
        const auto& c = store_.get_conversation(req.matches[1]);
        const auto& u = find_turn(c, std::stoi(req.matches[2]));
        if (!u.audio_path) throw NotFoundError("turn has no audio");
        const auto path = audio_root_ / *u.audio_path;
        std::ifstream f(path, std::ios::binary);
        if (!f) throw NotFoundError("audio file " + path.string() + " is missing");
        std::ostringstream bytes;
        bytes << f.rdbuf();
        res.status = 200;
        res.set_content(bytes.str(), "audio/wav");
    }));

    server_->Post("/annotations", guarded([this](const std::string& who, const httplib::Request& req,
                                                 httplib::Response& res) {
        const json body = json::parse(req.body);
        std::vector<Label> labels;
        for (const auto& l : body.at("labels")) labels.push_back(label_from_string(l.get<std::string>()));
        const std::string id = body.at("conversation_id").get<std::string>();
        const int turn = body.at("turn_index").get<int>();
        const auto r = store_.submit(who, id, turn, labels);
        reply(res, 200, {{"status", r.duplicate ? "duplicate" : "recorded"},
                         {"conversation_id", id},
                         {"turn_index", turn},
                         {"next_turn", r.next_turn},
                         {"complete", r.complete}});
    }));
}

}  // namespace emphtts
