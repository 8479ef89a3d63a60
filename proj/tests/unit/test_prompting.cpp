#include <doctest.h>

#include "hetgraph/digest.hpp"
#include "hetgraph/error.hpp"
#include "hetgraph/prompting.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hetgraph;

namespace {

const std::string kExample =
    "I have to be straight if I want things in life. Being a lesbian will mean having a life where everything I "
    "want will be extremely hard to get.";

std::string read_golden(const std::string& name) {
    std::ifstream in(std::filesystem::path(HETGRAPH_GOLDEN_DIR) / name, std::ios::binary);
    REQUIRE(in);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<LabeledExample> pool_of(std::size_t pos, std::size_t neg) {
    std::vector<LabeledExample> pool;
    for (std::size_t i = 0; i < pos; ++i) pool.push_back({"p" + std::to_string(i), "positive " + std::to_string(i), 1});
    for (std::size_t i = 0; i < neg; ++i) pool.push_back({"n" + std::to_string(i), "negative " + std::to_string(i), 0});
    return pool;
}

std::size_t count_of(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto at = s.find(needle); at != std::string::npos; at = s.find(needle, at + 1)) ++n;
    return n;
}

std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p;
}

BatchOptions quiet_options() {
    BatchOptions o;
    o.sleep = [](std::chrono::duration<double>) {};
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
}

}  // namespace

TEST_CASE("zero-shot prompt matches the golden bytes") {
    CHECK(build_zero_shot(kExample) == read_golden("zero_shot.txt"));
    CHECK(build_zero_shot(kExample) == build_zero_shot(kExample));
    CHECK(build_zero_shot("x") ==
          "Task: Classify the following input text into one of the following two categories: "
          "[minority stress, no minority stress]\n\nInput Text:\nx\n\nOutput:");
    CHECK(build_zero_shot("x  \r\n") == build_zero_shot("x"));
    CHECK_THROWS_AS(build_zero_shot("   \n"), DataError);
}

TEST_CASE("canonical text") {
    CHECK(canonicalize_text("a \r\nb\t\n\n") == "a\nb");
    CHECK(canonicalize_text("plain") == "plain");
}

TEST_CASE("ten-shot prompt matches the golden bytes") {
    ShotSet shots;
    shots.k = 10;
    for (int i = 0; i < 10; ++i) {
        shots.examples.push_back({"s" + std::to_string(i), "shot example number " + std::to_string(i), i % 2 == 0 ? 1 : 0});
    }
    shots.positives = shots.negatives = 5;
    CHECK(build_few_shot(shots, kExample) == read_golden("ten_shot.txt"));
}

TEST_CASE("few-shot structure") {
    CHECK(build_few_shot(ShotSet{}, "x") == build_zero_shot("x"));
    const auto three = compose_shots(pool_of(10, 10), 3, 4);
    const auto prompt = build_few_shot(three, "query");
    CHECK(count_of(prompt, "Output:") == 4);
    CHECK(count_of(prompt, "Output:\n") == 3);
}

TEST_CASE("shot composition") {
    const auto full = compose_shots(pool_of(5, 5), 10, 0);
    CHECK(full.examples.size() == 10);
    CHECK(full.positives == 5);
    CHECK(full.negatives == 5);

    CHECK_THROWS_AS(compose_shots(pool_of(1, 5), 3, 0), DataError);
    CHECK_THROWS_AS(compose_shots(pool_of(5, 5), 4, 0), UsageError);

    const auto a = compose_shots(pool_of(10, 10), 3, 9);
    const auto b = compose_shots(pool_of(10, 10), 3, 9);
    REQUIRE(a.examples.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.examples[i].id == b.examples[i].id);

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (std::size_t k : {std::size_t{3}, std::size_t{10}}) {
            const auto s = compose_shots(pool_of(12, 9), k, seed, {"p0", "n0"});
            std::size_t pos = 0;
            for (const auto& ex : s.examples) {
                pos += ex.label == 1;
                CHECK(ex.id != "p0");
                CHECK(ex.id != "n0");
            }
            CHECK(pos == (k == 3 ? 2 : 5));
            CHECK(s.examples.size() == k);
        }
    }
    CHECK(compose_shots(pool_of(0, 0), 0, 1).examples.empty());
}

TEST_CASE("label parsing") {
    CHECK(parse_label("no minority stress") == 0);
    CHECK(parse_label("  Minority Stress\n") == 1);
    CHECK_FALSE(parse_label("it depends").has_value());
    CHECK(parse_label("Output: No Minority Stress.") == 0);
    CHECK_FALSE(parse_label("minority stress or no minority stress").has_value());
    const PromptSpec spec;
    for (int y : {0, 1}) CHECK(parse_label(spec.category_for(y), spec) == y);
}

TEST_CASE("transcript json") {
    CompletionTranscript t{sha256_hex("p"), "p", "minority stress", 1, {3, "m", "ts", 1, TranscriptStatus::ok, ""}};
    CHECK(transcript_from_json(to_json(t)) == t);
    auto j = to_json(t);
    j["label"] = nullptr;
    CHECK_THROWS_AS(transcript_from_json(j), DataError);
}

TEST_CASE("batch over 869 prompts") {
    std::vector<std::string> prompts;
    for (int i = 0; i < 869; ++i) prompts.push_back(build_zero_shot("post " + std::to_string(i)));
    CannedClient client("minority stress");
    client.always_fail(prompts[5]);
    client.set_response(prompts[7], "unclear");
    const auto out = run_batch(client, prompts, quiet_options());
    REQUIRE(out.size() == 869);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].meta.index == i);
        CHECK(out[i].prompt == prompts[i]);
        CHECK(out[i].prompt_sha256 == sha256_hex(prompts[i]));
    }
    CHECK(out[0].label == 1);
    CHECK(out[5].meta.status == TranscriptStatus::transport_failure);
    CHECK(out[5].meta.attempts == 3);
    CHECK_FALSE(out[5].label.has_value());
    CHECK(out[7].meta.status == TranscriptStatus::parse_failure);

    std::vector<int> labels(869, 1);
    const auto ev = evaluate_transcripts(out, labels);
    CHECK(ev.transport_failures == 1);
    CHECK(ev.parse_failures == 1);
    CHECK(ev.confusion.tp == 867);
    const auto ev_neg = evaluate_transcripts(out, labels, true);
    CHECK(ev_neg.confusion.fn == 2);
}

TEST_CASE("batch retries with exponential backoff and pacing") {
    const std::vector<std::string> prompts{"a", "b"};
    CannedClient client("no minority stress");
    client.fail_next(2);
    std::vector<double> sleeps;
    auto opts = quiet_options();
    opts.rate = 4.0;
    opts.backoff_seconds = 0.5;
    opts.sleep = [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); };
    const auto out = run_batch(client, prompts, opts);
    CHECK(out[0].meta.attempts == 3);
    CHECK(out[0].label == 0);
    CHECK(out[1].meta.attempts == 1);
    CHECK(sleeps == std::vector<double>{0.5, 1.0, 0.25});
}

TEST_CASE("batch resumes from the store") {
    const auto path = temp_file("hetgraph_transcripts.jsonl");
    std::vector<std::string> prompts;
    for (int i = 0; i < 20; ++i) prompts.push_back("prompt " + std::to_string(i));
    auto opts = quiet_options();
    opts.store = path;

    CannedClient first("minority stress");
    first.always_fail(prompts[3]);
    run_batch(first, prompts, opts);
    CHECK(first.calls() == 19 + 3);

    // interrupted write leaves a partial line
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"prompt_sha256\": \"abc";
    }

    CannedClient second("minority stress");
    const auto out = run_batch(second, prompts, opts);
    CHECK(second.calls() == 1);
    CHECK(out[3].meta.status == TranscriptStatus::ok);
    CHECK(out.size() == 20);
    const auto latest = latest_transcripts(TranscriptStore(path).load());
    CHECK(latest.size() == 20);

    std::vector<std::string> changed = prompts;
    changed[0] = "something else";
    CannedClient third("minority stress");
    CHECK_THROWS_AS(run_batch(third, changed, opts), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("transcript store rejects corrupt interior lines") {
    const auto path = temp_file("hetgraph_bad_store.jsonl");
    {
        std::ofstream out(path);
        out << "not json\n{}\n";
    }
    CHECK_THROWS_AS((void)TranscriptStore(path).load(), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("http client request and response handling") {
    HttpClientConfig cfg;
    cfg.endpoint = "https://example.invalid/v1/chat/completions";
    cfg.model = "m1";
    cfg.token_env = "HETGRAPH_TEST_TOKEN_UNSET";
    CHECK_THROWS_AS(HttpChatClient{cfg}, UsageError);
    cfg.token_env = "HETGRAPH_TEST_TOKEN";
    ::setenv("HETGRAPH_TEST_TOKEN", "dummy", 1);
    const HttpChatClient client(cfg);
    const auto body = nlohmann::json::parse(client.request_body("hello"));
    CHECK(body["model"] == "m1");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["messages"][0]["content"] == "hello");
    CHECK(client.model_tag() == "m1");

    CHECK(HttpChatClient::parse_response(R"({"choices":[{"message":{"content":"minority stress"}}]})") ==
          "minority stress");
    CHECK_THROWS_AS(HttpChatClient::parse_response("{}"), TransportError);
    CHECK_THROWS_AS(HttpChatClient::parse_response("<html>"), TransportError);
}
