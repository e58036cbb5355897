#include "emphtts/annotation_service.hpp"
#include "emphtts/error.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace emphtts;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "emphtts_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<Label> labels(const std::string& s) {
    std::vector<Label> out;
    for (char c : s) out.push_back(c == 'I' ? Label::I : Label::O);
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Three-turn conversation whose second turn is the six-annotator fixture utterance.
Conversation table_one_conversation() {
    Conversation c;
    c.conversation_id = "t1";
    c.turns.push_back(make_toy_utterance(1, "A", {"hello", "there"}, std::nullopt, 1, "t1_1.wav"));
    c.turns.push_back(make_toy_utterance(2, "B", {"what", "are", "you", "working", "on"}, std::nullopt, 2, "t1_2.wav"));
    c.turns.push_back(make_toy_utterance(3, "A", {"a", "report"}, std::nullopt, 3, "t1_3.wav"));
    for (auto& u : c.turns) u.emphasis_intensity.reset();
    return c;
}

std::string fixed_clock() { return "2024-05-01T12:00:00.000Z"; }

}  // namespace

TEST_CASE("fresh annotator sees every conversation not started") {
    const auto dir = fresh_dir("svc_fresh");
    AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {"A1"}, fixed_clock);
    const auto list = store.list_conversations("A1");
    REQUIRE(list.conversations.size() == 1);
    CHECK(list.conversations[0].status == TaskStatus::NotStarted);
    CHECK(list.conversations[0].annotated == 0);
    CHECK_FALSE(list.hint);

    const auto unknown = store.list_conversations("nobody");
    CHECK(unknown.conversations.empty());
    CHECK(unknown.hint);
}

TEST_CASE("submission advances progress and enforces order") {
    const auto dir = fresh_dir("svc_order");
    AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {}, fixed_clock);
    CHECK_THROWS_AS(store.submit("A1", "t1", 2, labels("OOOIO")), OrderingError);
    const auto r = store.submit("A1", "t1", 1, labels("OI"));
    CHECK_FALSE(r.duplicate);
    CHECK(r.next_turn == 2);
    const auto s = store.list_conversations("A1").conversations[0];
    CHECK(s.annotated == 1);
    CHECK(s.turns == 3);
    CHECK(s.status == TaskStatus::InProgress);
    CHECK_THROWS_AS(store.submit("A1", "t1", 3, labels("OO")), OrderingError);
    CHECK_THROWS_AS(store.submit("A1", "t1", 2, labels("OOO")), StructuralError);
    CHECK_THROWS_AS(store.submit("A1", "missing", 1, labels("OI")), NotFoundError);
    store.submit("A1", "t1", 2, labels("OOOIO"));
    const auto done = store.submit("A1", "t1", 3, labels("OO"));
    CHECK(done.complete);
    CHECK(store.list_conversations("A1").conversations[0].status == TaskStatus::Complete);
}

TEST_CASE("duplicate payload is acknowledged without a second log line") {
    const auto dir = fresh_dir("svc_dup");
    const auto log = dir / "log.jsonl";
    AnnotationStore store({table_one_conversation()}, log, 6, {}, fixed_clock);
    store.submit("A1", "t1", 1, labels("OI"));
    const std::string before = read_file(log);
    const auto again = store.submit("A1", "t1", 1, labels("OI"));
    CHECK(again.duplicate);
    CHECK(again.next_turn == 2);
    CHECK(read_file(log) == before);
    CHECK_THROWS_AS(store.submit("A1", "t1", 1, labels("IO")), ConflictError);
    CHECK(read_file(log) == before);
    CHECK(std::count(before.begin(), before.end(), '\n') == 1);
}

TEST_CASE("six annotators reproduce the fixture intensities and quorum gates intensities") {
    const auto dir = fresh_dir("svc_quorum");
    AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {}, fixed_clock);
    const auto empty = store.status("t1");
    for (const auto& t : empty.turns) {
        CHECK(t.annotators == 0);
        CHECK_FALSE(t.intensity);
    }
    const std::vector<std::string> columns{"OOOIO", "OOOOO", "OOOIO", "OOOIO", "OOOII", "OOOIO"};
    for (std::size_t a = 0; a < columns.size(); ++a) {
        const std::string who = "A" + std::to_string(a + 1);
        store.submit(who, "t1", 1, labels("OO"));
        store.submit(who, "t1", 2, labels(columns[a]));
        if (a == 4) CHECK_FALSE(store.status("t1").turns[1].intensity);
    }
    const auto s = store.status("t1");
    CHECK(s.turns[1].annotators == 6);
    REQUIRE(s.turns[1].intensity);
    CHECK(s.turns[1].intensity->counts() == std::vector<int>{0, 0, 0, 5, 1});
    CHECK(format_intensity(s.turns[1].intensity->value(3)) == "0.83");
    CHECK(format_intensity(s.turns[1].intensity->value(4)) == "0.17");
    CHECK_FALSE(s.turns[2].intensity);

    const auto dir1 = fresh_dir("svc_quorum1");
    AnnotationStore single({table_one_conversation()}, dir1 / "log.jsonl", 1, {}, fixed_clock);
    single.submit("A1", "t1", 1, labels("IO"));
    REQUIRE(single.status("t1").turns[0].intensity);
    CHECK(single.status("t1").turns[0].intensity->values() == std::vector<double>{1.0, 0.0});
}

TEST_CASE("store replays its log after restart") {
    const auto dir = fresh_dir("svc_replay");
    {
        AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {}, fixed_clock);
        store.submit("A1", "t1", 1, labels("OI"));
        store.submit("A1", "t1", 2, labels("OOOIO"));
    }
    AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {}, fixed_clock);
    CHECK(store.next_turn("A1", "t1") == 3);
    CHECK(store.submit("A1", "t1", 2, labels("OOOIO")).duplicate);
    CHECK(store.status("t1").turns[0].annotators == 1);
}

TEST_CASE("apply_annotations fills intensities at quorum") {
    std::vector<AnnotationRecord> records;
    for (const auto& [who, l] : std::vector<std::pair<std::string, std::string>>{{"A1", "OOOIO"}, {"A2", "OOOII"}}) {
        records.push_back({"t1", 2, who, labels(l), "x"});
    }
    const auto out = apply_annotations({table_one_conversation()}, records, 2);
    REQUIRE(out[0].turns[1].emphasis_intensity);
    CHECK(out[0].turns[1].emphasis_intensity->counts() == std::vector<int>{0, 0, 0, 2, 1});
    CHECK_FALSE(out[0].turns[0].emphasis_intensity);
    CHECK_FALSE(apply_annotations({table_one_conversation()}, records, 3)[0].turns[1].emphasis_intensity);
    records.push_back({"t1", 2, "A1", labels("OOOIO"), "y"});
    CHECK_THROWS_AS(apply_annotations({table_one_conversation()}, records, 2), StructuralError);
}

TEST_CASE("token file parsing") {
    const auto dir = fresh_dir("svc_tokens");
    std::ofstream(dir / "tokens.txt") << "# token annotator\nabc A1\n\ndef A2  # second\n";
    const auto t = load_token_file(dir / "tokens.txt");
    CHECK(t.size() == 2);
    CHECK(t.at("def") == "A2");
    std::ofstream(dir / "bad.txt") << "abc\n";
    CHECK_THROWS_AS(load_token_file(dir / "bad.txt"), ConfigError);
}

TEST_CASE("concurrent submissions to the same turn both persist") {
    const auto dir = fresh_dir("svc_concurrent");
    AnnotationStore store({table_one_conversation()}, dir / "log.jsonl", 6, {}, fixed_clock);
    std::vector<std::thread> threads;
    for (int a = 0; a < 8; ++a) {
        threads.emplace_back([&store, a] { store.submit("A" + std::to_string(a), "t1", 1, labels(a % 2 ? "IO" : "OI")); });
    }
    for (auto& t : threads) t.join();
    CHECK(store.status("t1").turns[0].annotators == 8);
    CHECK(load_annotation_log(dir / "log.jsonl").size() == 8);
}

TEST_CASE("HTTP interface") {
    const auto dir = fresh_dir("svc_http");
    auto conv = table_one_conversation();
    for (const auto& u : conv.turns) {
        std::ofstream(dir / *u.audio_path, std::ios::binary) << "RIFF-" << u.index;
    }
    AnnotationStore store({conv}, dir / "log.jsonl", 6, {"A1", "A2"}, fixed_clock);
    AnnotationServer server(store, {{"tok1", "A1"}, {"tok2", "A2"}}, dir);
    const int port = server.bind("127.0.0.1");
    REQUIRE(port > 0);
    std::thread serving([&] { server.serve(); });

    httplib::Client client("127.0.0.1", port);
    const httplib::Headers a1{{"Authorization", "Bearer tok1"}};
    const httplib::Headers a2{{"Authorization", "Bearer tok2"}};
    auto post = [&](const httplib::Headers& h, const json& body) {
        return client.Post("/annotations", h, body.dump(), "application/json");
    };

    {
        auto res = client.Get("/conversations");
        REQUIRE(res);
        CHECK(res->status == 401);
        CHECK(json::parse(res->body).contains("hint"));

        res = client.Get("/conversations", a1);
        REQUIRE(res);
        CHECK(res->status == 200);
        auto body = json::parse(res->body);
        CHECK(body["conversations"][0]["status"] == "not started");

        res = client.Get("/conversations/t1", a1);
        REQUIRE(res);
        body = json::parse(res->body);
        REQUIRE(body["turns"].size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(body["turns"][i]["index"] == i + 1);
        CHECK(body["turns"][1]["words"] == json({"what", "are", "you", "working", "on"}));

        const std::string url = body["turns"][1]["audio_url"];
        res = client.Get(url, a1);
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body == read_file(dir / "t1_2.wav"));

        CHECK(client.Get("/conversations/nope", a1)->status == 404);
        CHECK(client.Get("/audio/t1/9", a1)->status == 404);

        const std::string log_before = read_file(dir / "log.jsonl");
        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 2}, {"labels", {"O", "O", "O", "I", "O"}}});
        CHECK(res->status == 409);
        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"O"}}});
        CHECK(res->status == 400);
        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"O", "X"}}});
        CHECK(res->status == 400);
        CHECK(client.Post("/annotations", a1, "{not json", "application/json")->status == 400);
        CHECK(read_file(dir / "log.jsonl") == log_before);

        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"O", "I"}}});
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(json::parse(res->body)["status"] == "recorded");
        CHECK(json::parse(res->body)["next_turn"] == 2);
        const std::string after_one = read_file(dir / "log.jsonl");

        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"O", "I"}}});
        CHECK(json::parse(res->body)["status"] == "duplicate");
        res = post(a1, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"I", "I"}}});
        CHECK(res->status == 409);
        CHECK(read_file(dir / "log.jsonl") == after_one);

        body = json::parse(client.Get("/conversations", a1)->body);
        CHECK(body["conversations"][0]["annotated"] == 1);
        CHECK(body["conversations"][0]["turns"] == 3);
        CHECK(body["conversations"][0]["status"] == "in progress");

        post(a2, {{"conversation_id", "t1"}, {"turn_index", 1}, {"labels", {"I", "O"}}});
        body = json::parse(client.Get("/conversations/t1/status", a2)->body);
        CHECK(body["quorum"] == 6);
        CHECK(body["turns"][0]["annotators"] == 2);
        CHECK(body["turns"][0]["intensity"].is_null());

        // Append-only: every earlier byte of the log is unchanged.
        const std::string final_log = read_file(dir / "log.jsonl");
        CHECK(final_log.compare(0, after_one.size(), after_one) == 0);
        CHECK(std::hash<std::string>{}(final_log.substr(0, log_before.size())) == std::hash<std::string>{}(log_before));
    }

    server.stop();
    serving.join();
}
