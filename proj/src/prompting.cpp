#include "hetgraph/prompting.hpp"

#include "hetgraph/digest.hpp"
#include "hetgraph/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

namespace hetgraph {

void PromptSpec::validate() const {
    if (categories.size() != 2) throw UsageError("a prompt spec needs exactly two categories");
    for (const auto& c : categories) {
        if (c.empty()) throw UsageError("category names must be nonempty");
    }
    if (categories[0] == categories[1]) throw UsageError("category names must differ");
    if (instruction.empty()) throw UsageError("prompt instruction must be nonempty");
}

const std::string& PromptSpec::category_for(int label) const {
    if (label == 1) return categories.at(0);
    if (label == 0) return categories.at(1);
    throw DataError("label must be 0 or 1, got " + std::to_string(label));
}

std::string canonicalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            out.push_back('\n');
        } else {
            out.push_back(text[i]);
        }
    }
    // trailing whitespace on each line, then at the end
    std::string trimmed;
    trimmed.reserve(out.size());
    std::size_t line_start = 0;
    while (line_start <= out.size()) {
        std::size_t nl = out.find('\n', line_start);
        if (nl == std::string::npos) nl = out.size();
        std::size_t end = nl;
        while (end > line_start && (out[end - 1] == ' ' || out[end - 1] == '\t')) --end;
        trimmed.append(out, line_start, end - line_start);
        if (nl < out.size()) trimmed.push_back('\n');
        line_start = nl + 1;
    }
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
    return trimmed;
}

namespace {

std::string task_line(const PromptSpec& spec) {
    return "Task: " + spec.instruction + ": [" + spec.categories[0] + ", " + spec.categories[1] + "]";
}

void append_query(std::string& out, std::string_view text) {
    out += "\n\nInput Text:\n";
    out += canonicalize_text(text);
    out += "\n\nOutput:";
}

}  // namespace

std::string build_zero_shot(std::string_view text, const PromptSpec& spec) {
    spec.validate();
    if (canonicalize_text(text).empty()) throw DataError("prompt text is empty");
    std::string out = task_line(spec);
    append_query(out, text);
    return out;
}

std::string build_few_shot(const ShotSet& shots, std::string_view text, const PromptSpec& spec) {
    spec.validate();
    if (canonicalize_text(text).empty()) throw DataError("prompt text is empty");
    std::string out = task_line(spec);
    for (const auto& ex : shots.examples) {
        append_query(out, ex.text);
        out += "\n";
        out += spec.category_for(ex.label);
    }
    append_query(out, text);
    return out;
}

ShotSet compose_shots(const std::vector<LabeledExample>& pool, std::size_t k, std::uint64_t seed,
                      const std::unordered_set<std::string>& exclude) {
    std::size_t want_pos = 0, want_neg = 0;
    switch (k) {
        case 0: break;
        case 3: want_pos = 2; want_neg = 1; break;
        case 10: want_pos = 5; want_neg = 5; break;
        default: throw UsageError("shot count must be 0, 3 or 10, got " + std::to_string(k));
    }
    std::vector<std::size_t> pos, neg;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& ex = pool[i];
        if (exclude.contains(ex.id)) continue;
        if (!seen.insert(ex.id).second) throw DataError("duplicate shot pool id '" + ex.id + "'");
        if (ex.label == 1) pos.push_back(i);
        else if (ex.label == 0) neg.push_back(i);
        else throw DataError("shot pool labels must be 0 or 1");
    }
    if (pos.size() < want_pos || neg.size() < want_neg) {
        throw DataError("shot pool has " + std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) +
                        " negative examples; " + std::to_string(k) + "-shot needs " + std::to_string(want_pos) +
                        " and " + std::to_string(want_neg));
    }
    Rng rng(derive_seed(seed, 21));
    rng.shuffle(std::span<std::size_t>(pos));
    rng.shuffle(std::span<std::size_t>(neg));
    std::vector<std::size_t> chosen(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(want_pos));
    chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(want_neg));
    rng.shuffle(std::span<std::size_t>(chosen));

    ShotSet set;
    set.k = k;
    set.positives = want_pos;
    set.negatives = want_neg;
    for (std::size_t i : chosen) set.examples.push_back(pool[i]);
    return set;
}

namespace {

std::string lower_trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string erase_all(std::string s, const std::string& needle) {
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos)) s.erase(pos, needle.size());
    return s;
}

}  // namespace

std::optional<int> parse_label(std::string_view response, const PromptSpec& spec) {
    spec.validate();
    const std::string text = lower_trim(response);
    const std::string pos = lower_trim(spec.categories[0]);
    const std::string neg = lower_trim(spec.categories[1]);
    // the longer name may contain the shorter one, so it is matched first and
    // removed before looking for the other
    const bool neg_first = pos.find(neg) == std::string::npos;
    const std::string& outer = neg_first ? neg : pos;
    const std::string& inner = neg_first ? pos : neg;
    const int outer_label = neg_first ? 0 : 1;
    const bool has_outer = text.find(outer) != std::string::npos;
    const bool has_inner = erase_all(text, outer).find(inner) != std::string::npos;
    if (has_outer && has_inner) return std::nullopt;
    if (has_outer) return outer_label;
    if (has_inner) return 1 - outer_label;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

CannedClient::CannedClient(std::string default_response, std::string tag)
    : default_(std::move(default_response)), tag_(std::move(tag)) {}

void CannedClient::set_response(const std::string& prompt, std::string response) {
    responses_[prompt] = std::move(response);
}

std::string CannedClient::complete(const std::string& prompt) {
    ++calls_;
    if (pending_failures_ > 0) {
        --pending_failures_;
        throw TransportError("canned transport failure");
    }
    if (failing_.contains(prompt)) throw TransportError("canned transport failure");
    const auto it = responses_.find(prompt);
    return it == responses_.end() ? default_ : it->second;
}

// ---------------------------------------------------------------------------

std::string_view to_string(TranscriptStatus s) {
    switch (s) {
        case TranscriptStatus::ok: return "ok";
        case TranscriptStatus::parse_failure: return "parse_failure";
        case TranscriptStatus::transport_failure: return "transport_failure";
    }
    return "ok";
}

TranscriptStatus parse_transcript_status(std::string_view name) {
    if (name == "ok") return TranscriptStatus::ok;
    if (name == "parse_failure") return TranscriptStatus::parse_failure;
    if (name == "transport_failure") return TranscriptStatus::transport_failure;
    throw DataError("unknown transcript status '" + std::string(name) + "'");
}

nlohmann::json to_json(const CompletionTranscript& t) {
    nlohmann::json meta = {{"index", t.meta.index},
                           {"model", t.meta.model},
                           {"timestamp", t.meta.timestamp},
                           {"attempts", t.meta.attempts},
                           {"status", to_string(t.meta.status)}};
    if (!t.meta.error.empty()) meta["error"] = t.meta.error;
    nlohmann::json j = {{"prompt_sha256", t.prompt_sha256}, {"prompt", t.prompt}, {"response", t.response}};
    j["label"] = t.label ? nlohmann::json(*t.label) : nlohmann::json(nullptr);
    j["meta"] = std::move(meta);
    return j;
}

CompletionTranscript transcript_from_json(const nlohmann::json& j) {
    try {
        CompletionTranscript t;
        t.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
        t.prompt = j.at("prompt").get<std::string>();
        t.response = j.at("response").get<std::string>();
        if (!j.at("label").is_null()) t.label = j.at("label").get<int>();
        const auto& m = j.at("meta");
        t.meta.index = m.value("index", std::size_t{0});
        t.meta.model = m.value("model", std::string{});
        t.meta.timestamp = m.value("timestamp", std::string{});
        t.meta.attempts = m.value("attempts", std::size_t{0});
        t.meta.status = parse_transcript_status(m.value("status", t.label ? std::string("ok") : std::string("parse_failure")));
        t.meta.error = m.value("error", std::string{});
        if (t.label.has_value() != (t.meta.status == TranscriptStatus::ok)) {
            throw DataError("transcript label and status disagree");
        }
        if (t.label && *t.label != 0 && *t.label != 1) throw DataError("transcript label must be 0, 1 or null");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed transcript record: ") + e.what());
    }
}

std::vector<CompletionTranscript> TranscriptStore::load() const {
    std::vector<CompletionTranscript> out;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return out;
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < content.size()) {
        ++line_no;
        const auto nl = content.find('\n', start);
        const bool complete = nl != std::string::npos;
        const std::string line = content.substr(start, complete ? nl - start : std::string::npos);
        start = complete ? nl + 1 : content.size();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            if (!complete) break;   // interrupted write
            throw DataError(path_.string() + ":" + std::to_string(line_no) + ": malformed transcript line");
        }
        out.push_back(transcript_from_json(j));
    }
    return out;
}

void TranscriptStore::append(const CompletionTranscript& t) const {
    // drop a partial last line left by an interrupted write
    std::error_code ec;
    if (std::filesystem::exists(path_, ec)) {
        std::ifstream in(path_, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string content = buf.str();
        if (!content.empty() && content.back() != '\n') {
            const auto nl = content.rfind('\n');
            in.close();
            std::filesystem::resize_file(path_, nl == std::string::npos ? 0 : nl + 1);
        }
    }
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to transcript store " + path_.string());
    out << to_json(t).dump() << '\n';
    out.flush();
    if (!out) throw DataError("failed writing transcript store " + path_.string());
}

std::vector<CompletionTranscript> latest_transcripts(const std::vector<CompletionTranscript>& records) {
    std::vector<CompletionTranscript> out;
    std::unordered_map<std::size_t, std::size_t> pos;
    for (const auto& r : records) {
        auto [it, inserted] = pos.emplace(r.meta.index, out.size());
        if (inserted) out.push_back(r);
        else out[it->second] = r;
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.meta.index < b.meta.index; });
    return out;
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::vector<CompletionTranscript> run_batch(CompletionClient& client, const std::vector<std::string>& prompts,
                                            const BatchOptions& options) {
    options.spec.validate();
    if (options.rate < 0.0) throw UsageError("rate must be nonnegative");
    if (options.backoff_seconds < 0.0) throw UsageError("backoff must be nonnegative");
    const auto sleep = options.sleep ? options.sleep : [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
    const auto clock = options.clock ? options.clock : utc_now;

    std::vector<std::optional<CompletionTranscript>> done(prompts.size());
    std::optional<TranscriptStore> store;
    if (options.store) {
        store.emplace(*options.store);
        for (auto& rec : latest_transcripts(store->load())) {
            if (rec.meta.index >= prompts.size()) {
                throw DataError("transcript store has a record for prompt " + std::to_string(rec.meta.index) +
                                " but the batch has " + std::to_string(prompts.size()) + " prompts");
            }
            if (rec.prompt_sha256 != sha256_hex(prompts[rec.meta.index])) {
                throw DataError("transcript store record " + std::to_string(rec.meta.index) +
                                " was made for a different prompt");
            }
            if (rec.meta.status != TranscriptStatus::transport_failure) done[rec.meta.index] = std::move(rec);
        }
    }

    const auto interval = options.rate > 0.0 ? std::chrono::duration<double>(1.0 / options.rate)
                                             : std::chrono::duration<double>(0.0);
    bool first_request = true;
    std::vector<CompletionTranscript> out;
    out.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (done[i]) {
            out.push_back(std::move(*done[i]));
            continue;
        }
        CompletionTranscript t;
        t.prompt = prompts[i];
        t.prompt_sha256 = sha256_hex(prompts[i]);
        t.meta.index = i;
        t.meta.model = client.model_tag();
        bool delivered = false;
        for (std::size_t attempt = 0; attempt <= options.retries && !delivered; ++attempt) {
            if (attempt > 0) sleep(std::chrono::duration<double>(options.backoff_seconds * double(1ULL << std::min<std::size_t>(attempt - 1, 20))));
            else if (!first_request && interval.count() > 0) sleep(interval);
            first_request = false;
            ++t.meta.attempts;
            try {
                t.response = client.complete(prompts[i]);
                delivered = true;
            } catch (const TransportError& e) {
                t.meta.error = e.what();
            }
        }
        t.meta.timestamp = clock();
        if (delivered) {
            t.meta.error.clear();
            t.label = parse_label(t.response, options.spec);
            t.meta.status = t.label ? TranscriptStatus::ok : TranscriptStatus::parse_failure;
        } else {
            t.meta.status = TranscriptStatus::transport_failure;
        }
        if (store) store->append(t);
        out.push_back(std::move(t));
    }
    return out;
}

TranscriptEvaluation evaluate_transcripts(const std::vector<CompletionTranscript>& transcripts,
                                          const std::vector<int>& labels, bool failures_as_negative) {
    if (transcripts.size() != labels.size()) {
        throw DataError("have " + std::to_string(transcripts.size()) + " transcripts but " +
                        std::to_string(labels.size()) + " labels");
    }
    TranscriptEvaluation ev;
    std::vector<int> pred, truth;
    for (std::size_t i = 0; i < transcripts.size(); ++i) {
        const auto& t = transcripts[i];
        if (t.meta.status == TranscriptStatus::parse_failure) ++ev.parse_failures;
        if (t.meta.status == TranscriptStatus::transport_failure) ++ev.transport_failures;
        if (t.label) pred.push_back(*t.label);
        else if (failures_as_negative) pred.push_back(0);
        else continue;
        truth.push_back(labels[i]);
    }
    ev.confusion = confusion(pred, truth);
    return ev;
}

}  // namespace hetgraph
