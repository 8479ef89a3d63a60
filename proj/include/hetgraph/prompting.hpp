#pragma once

#include "hetgraph/error.hpp"
#include "hetgraph/eval.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hetgraph {

/// Categories[0] is the positive class (label 1), categories[1] the negative class.
struct PromptSpec {
    std::vector<std::string> categories{"minority stress", "no minority stress"};
    std::string instruction = "Classify the following input text into one of the following two categories";

    void validate() const;
    [[nodiscard]] const std::string& category_for(int label) const;
};

struct LabeledExample {
    std::string id;
    std::string text;
    int label = 0;
};

struct ShotSet {
    std::vector<LabeledExample> examples;
    std::size_t k = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Unix newlines, trailing whitespace removed.
std::string canonicalize_text(std::string_view text);

/// Task line, then "Input Text:" with the text, then an empty "Output:".
std::string build_zero_shot(std::string_view text, const PromptSpec& spec = {});

/// Shots as Input/Output exemplar pairs in ShotSet order, then the query.
std::string build_few_shot(const ShotSet& shots, std::string_view text, const PromptSpec& spec = {});

/// k = 3 takes 2 positives and 1 negative, k = 10 takes 5 and 5, k = 0 is empty.
/// Examples whose ids are in `exclude` are never chosen. Selection and final
/// order come from the seed: positive block, negative block, then a seeded shuffle.
ShotSet compose_shots(const std::vector<LabeledExample>& pool, std::size_t k, std::uint64_t seed,
                      const std::unordered_set<std::string>& exclude = {});

/// 1 or 0, or nullopt when the response names neither category or both.
std::optional<int> parse_label(std::string_view response, const PromptSpec& spec = {});

/// Raised by completion clients when a request could not be completed.
class TransportError : public Error {
public:
    using Error::Error;
};

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    [[nodiscard]] virtual std::string model_tag() const = 0;
};

/// Replays fixed responses: per-prompt overrides, else the default response.
class CannedClient : public CompletionClient {
public:
    explicit CannedClient(std::string default_response = "", std::string tag = "canned");

    void set_response(const std::string& prompt, std::string response);
    /// The next `n` calls throw TransportError.
    void fail_next(std::size_t n) { pending_failures_ = n; }
    /// Every call whose prompt matches throws TransportError.
    void always_fail(const std::string& prompt) { failing_.insert(prompt); }

    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::string model_tag() const override { return tag_; }
    [[nodiscard]] std::size_t calls() const { return calls_; }

private:
    std::string default_;
    std::string tag_;
    std::unordered_map<std::string, std::string> responses_;
    std::unordered_set<std::string> failing_;
    std::size_t pending_failures_ = 0;
    std::size_t calls_ = 0;
};

struct HttpClientConfig {
    std::string endpoint;                         // e.g. https://host/v1/chat/completions
    std::string model;
    std::string token_env = "HETGRAPH_API_TOKEN";
    double temperature = 0.0;
    int timeout_seconds = 60;
};

/// Generic chat-completion client over HTTP(S).
class HttpChatClient : public CompletionClient {
public:
    explicit HttpChatClient(HttpClientConfig config);
    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::string model_tag() const override { return config_.model; }

    /// Request body sent for one prompt.
    [[nodiscard]] std::string request_body(const std::string& prompt) const;
    /// Extracts choices[0].message.content; TransportError when absent.
    static std::string parse_response(const std::string& body);

private:
    HttpClientConfig config_;
    std::string token_;
    std::string scheme_host_;
    std::string path_;
};

enum class TranscriptStatus { ok, parse_failure, transport_failure };
std::string_view to_string(TranscriptStatus s);
TranscriptStatus parse_transcript_status(std::string_view name);

struct TranscriptMeta {
    std::size_t index = 0;
    std::string model;
    std::string timestamp;
    std::size_t attempts = 0;
    TranscriptStatus status = TranscriptStatus::ok;
    std::string error;

    bool operator==(const TranscriptMeta&) const = default;
};

struct CompletionTranscript {
    std::string prompt_sha256;
    std::string prompt;
    std::string response;
    std::optional<int> label;   // set exactly when status is ok
    TranscriptMeta meta;

    bool operator==(const CompletionTranscript&) const = default;
};

nlohmann::json to_json(const CompletionTranscript& t);
CompletionTranscript transcript_from_json(const nlohmann::json& j);

/// Append-only JSONL store. A truncated final line from an interrupted write is ignored.
class TranscriptStore {
public:
    explicit TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {}

    [[nodiscard]] std::vector<CompletionTranscript> load() const;
    void append(const CompletionTranscript& t) const;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Latest record per prompt index.
std::vector<CompletionTranscript> latest_transcripts(const std::vector<CompletionTranscript>& records);

struct BatchOptions {
    double rate = 0.0;          // requests per second; 0 disables pacing
    std::size_t retries = 2;    // extra attempts after the first
    double backoff_seconds = 1.0;
    PromptSpec spec;
    std::optional<std::filesystem::path> store;
    std::function<void(std::chrono::duration<double>)> sleep;   // defaults to sleeping the thread
    std::function<std::string()> clock;                         // timestamp source
};

/// Sends every prompt in order and returns one transcript per prompt. With a
/// store, completed records are reused and transport failures are retried.
std::vector<CompletionTranscript> run_batch(CompletionClient& client, const std::vector<std::string>& prompts,
                                            const BatchOptions& options = {});

struct TranscriptEvaluation {
    ConfusionMatrix confusion;
    std::size_t parse_failures = 0;
    std::size_t transport_failures = 0;
};

/// Failures are excluded unless `failures_as_negative`, which maps them to label 0.
TranscriptEvaluation evaluate_transcripts(const std::vector<CompletionTranscript>& transcripts,
                                          const std::vector<int>& labels, bool failures_as_negative = false);

}  // namespace hetgraph
