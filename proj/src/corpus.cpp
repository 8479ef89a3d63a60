#include "hetgraph/corpus.hpp"

#include "hetgraph/error.hpp"
#include "hetgraph/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace hetgraph {

using nlohmann::json;

CorpusFormat parse_corpus_format(std::string_view name) {
    if (name == "jsonl") return CorpusFormat::jsonl;
    if (name == "csv") return CorpusFormat::csv;
    throw UsageError("unknown corpus format '" + std::string(name) + "' (expected jsonl or csv)");
}

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

int checked_label(long long value, std::size_t line) {
    if (value != 0 && value != 1) {
        throw DataError(at_line(line) + "label must be 0 or 1, got " + std::to_string(value));
    }
    return static_cast<int>(value);
}

void check_unique_ids(const std::vector<RawDocument>& docs, const std::vector<std::size_t>& lines) {
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto [it, inserted] = seen.emplace(docs[i].id, lines[i]);
        if (!inserted) {
            throw DataError(at_line(lines[i]) + "duplicate id '" + docs[i].id + "' (first seen on line " +
                            std::to_string(it->second) + ")");
        }
    }
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<RawDocument> read_corpus_jsonl(std::istream& in) {
    std::vector<RawDocument> docs;
    std::vector<std::size_t> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(at_line(line_no) + "malformed JSON: " + e.what());
        }
        if (!rec.is_object()) throw DataError(at_line(line_no) + "record is not a JSON object");
        if (!rec.contains("id") || !rec["id"].is_string()) {
            throw DataError(at_line(line_no) + "missing string field 'id'");
        }
        if (!rec.contains("text") || !rec["text"].is_string()) {
            throw DataError(at_line(line_no) + "missing string field 'text'");
        }
        RawDocument doc;
        doc.id = rec["id"].get<std::string>();
        doc.text = rec["text"].get<std::string>();
        if (auto it = rec.find("label"); it != rec.end() && !it->is_null()) {
            if (!it->is_number_integer()) throw DataError(at_line(line_no) + "label must be an integer");
            doc.label = checked_label(it->get<long long>(), line_no);
        }
        if (auto it = rec.find("source"); it != rec.end() && !it->is_null()) {
            if (!it->is_string()) throw DataError(at_line(line_no) + "source must be a string");
            doc.source = it->get<std::string>();
        }
        docs.push_back(std::move(doc));
        lines.push_back(line_no);
    }
    check_unique_ids(docs, lines);
    return docs;
}

namespace {

// RFC 4180 record reader. Returns false at end of input.
bool next_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no,
                     std::size_t& record_line) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    ++line_no;
    record_line = line_no;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    for (;;) {
        const int ch = in.get();
        if (ch == std::char_traits<char>::eof()) {
            if (quoted) throw DataError(at_line(record_line) + "unterminated quoted field");
            fields.push_back(std::move(field));
            return true;
        }
        const char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !field_started_quoted) {
            quoted = true;
            field_started_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started_quoted = false;
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get();
            fields.push_back(std::move(field));
            return true;
        } else {
            if (field_started_quoted) throw DataError(at_line(record_line) + "text after closing quote");
            field.push_back(c);
        }
    }
}

}  // namespace

std::vector<RawDocument> read_corpus_csv(std::istream& in) {
    std::vector<RawDocument> docs;
    std::vector<std::size_t> lines;
    std::vector<std::string> fields;
    std::size_t line_no = 0;
    std::size_t record_line = 0;
    if (!next_csv_record(in, fields, line_no, record_line)) return docs;

    int id_col = -1, text_col = -1, label_col = -1, source_col = -1;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto& h = fields[i];
        if (h == "id") id_col = static_cast<int>(i);
        else if (h == "text") text_col = static_cast<int>(i);
        else if (h == "label") label_col = static_cast<int>(i);
        else if (h == "source") source_col = static_cast<int>(i);
    }
    if (id_col < 0 || text_col < 0) throw DataError(at_line(record_line) + "CSV header must contain id and text");

    while (next_csv_record(in, fields, line_no, record_line)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() < static_cast<std::size_t>(std::max({id_col, text_col, label_col, source_col})) + 1) {
            throw DataError(at_line(record_line) + "expected at least " +
                            std::to_string(std::max({id_col, text_col, label_col, source_col}) + 1) +
                            " fields, got " + std::to_string(fields.size()));
        }
        RawDocument doc;
        doc.id = fields[static_cast<std::size_t>(id_col)];
        doc.text = fields[static_cast<std::size_t>(text_col)];
        if (label_col >= 0) {
            const auto& raw = fields[static_cast<std::size_t>(label_col)];
            if (!raw.empty()) {
                std::size_t used = 0;
                long long v = 0;
                try {
                    v = std::stoll(raw, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != raw.size()) throw DataError(at_line(record_line) + "label '" + raw + "' is not an integer");
                doc.label = checked_label(v, record_line);
            }
        }
        if (source_col >= 0) doc.source = fields[static_cast<std::size_t>(source_col)];
        docs.push_back(std::move(doc));
        lines.push_back(record_line);
    }
    check_unique_ids(docs, lines);
    return docs;
}

std::vector<RawDocument> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file " + path.string());
    return format == CorpusFormat::jsonl ? read_corpus_jsonl(in) : read_corpus_csv(in);
}

// ---------------------------------------------------------------------------
// Tokenization

const std::unordered_set<std::string>& english_stopwords() {
    static const std::unordered_set<std::string> words = {
        "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've", "you'll",
        "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "she's",
        "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them", "their", "theirs",
        "themselves", "what", "which", "who", "whom", "this", "that", "that'll", "these", "those", "am",
        "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do", "does",
        "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until", "while",
        "of", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during",
        "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
        "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
        "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor",
        "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just",
        "don", "don't", "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain",
        "aren", "aren't", "couldn", "couldn't", "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't",
        "hasn", "hasn't", "haven", "haven't", "isn", "isn't", "ma", "mightn", "mightn't", "mustn",
        "mustn't", "needn", "needn't", "shan", "shan't", "shouldn", "shouldn't", "wasn", "wasn't",
        "weren", "weren't", "won", "won't", "wouldn", "wouldn't"};
    return words;
}

TokenizerConfig TokenizerConfig::defaults() {
    TokenizerConfig c;
    c.stopwords = english_stopwords();
    return c;
}

namespace {

constexpr char32_t kInvalid = 0xFFFD;

char32_t decode_utf8(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return kInvalid;
    }
    if (pos + static_cast<std::size_t>(extra) >= s.size()) {
        pos = s.size();
        return kInvalid;
    }
    for (int k = 1; k <= extra; ++k) {
        const auto b = static_cast<unsigned char>(s[pos + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) {
            pos += static_cast<std::size_t>(k);
            return kInvalid;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    pos += static_cast<std::size_t>(extra) + 1;
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Word characters: ASCII letters and digits, plus non-ASCII code points outside
// the punctuation, symbol, space and emoji blocks.
bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp == kInvalid) return false;
    if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;   // punctuation, symbols, arrows, shapes
    if (cp >= 0x3000 && cp <= 0x303F) return false;   // CJK punctuation
    if (cp >= 0xFE10 && cp <= 0xFE6F) return false;   // vertical/small forms
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;   // fullwidth punctuation
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false; // emoji and pictographs
    return true;
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp < 0xC0) return cp;
    if (cp <= 0xDE && cp != 0xD7) return cp + 0x20;                       // Latin-1
    if (cp >= 0x100 && cp <= 0x137 && cp % 2 == 0) return cp + 1;         // Latin Extended-A
    if (cp >= 0x139 && cp <= 0x148 && cp % 2 == 1) return cp + 1;
    if (cp >= 0x14A && cp <= 0x177 && cp % 2 == 0) return cp + 1;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x179 && cp <= 0x17E && cp % 2 == 1) return cp + 1;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;      // Greek
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;                     // Cyrillic
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& rules) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        if (!(rules.remove_stopwords && rules.stopwords.contains(current))) out.push_back(current);
        current.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = decode_utf8(text, pos);
        if (is_word_char(cp)) {
            if (rules.lowercase) cp = to_lower(cp);
            encode_utf8(cp, current);
        } else {
            flush();
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = index.find(std::string(token));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, std::size_t min_df) {
    if (min_df < 1) throw UsageError("min_df must be at least 1");
    std::unordered_map<std::string, std::size_t> df;
    std::vector<std::string> first_seen;
    for (const auto& doc : docs) {
        std::unordered_set<std::string_view> in_doc;
        for (const auto& tok : doc) {
            if (!in_doc.insert(tok).second) continue;
            auto [it, inserted] = df.emplace(tok, 0);
            if (inserted) first_seen.push_back(tok);
            ++it->second;
        }
    }
    Vocabulary vocab;
    vocab.n_docs = docs.size();
    for (const auto& tok : first_seen) {
        const auto count = df.at(tok);
        if (count < min_df) continue;
        vocab.index.emplace(tok, static_cast<TokenId>(vocab.tokens.size()));
        vocab.tokens.push_back(tok);
        vocab.doc_freq.push_back(count);
    }
    if (vocab.tokens.empty()) {
        throw DataError("vocabulary is empty after applying min_df=" + std::to_string(min_df));
    }
    return vocab;
}

std::vector<std::size_t> TokenizedCorpus::empty_documents() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].empty()) out.push_back(i);
    }
    return out;
}

TokenizedCorpus index_corpus(const std::vector<std::vector<std::string>>& docs, Vocabulary vocab) {
    TokenizedCorpus corpus;
    corpus.docs.reserve(docs.size());
    for (const auto& doc : docs) {
        std::vector<TokenId> ids;
        ids.reserve(doc.size());
        for (const auto& tok : doc) {
            if (auto it = vocab.index.find(tok); it != vocab.index.end()) ids.push_back(it->second);
        }
        corpus.docs.push_back(std::move(ids));
    }
    corpus.vocab = std::move(vocab);
    return corpus;
}

TokenizedCorpus tokenize_corpus(const std::vector<RawDocument>& docs, const TokenizerConfig& rules,
                                std::size_t min_df) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(docs.size());
    for (const auto& d : docs) tokens.push_back(tokenize(d.text, rules));
    auto vocab = build_vocabulary(tokens, min_df);
    return index_corpus(tokens, std::move(vocab));
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<std::size_t> SplitAssignment::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == s) out.push_back(i);
    }
    return out;
}

std::vector<bool> SplitAssignment::mask(Split s) const {
    std::vector<bool> out(assignment.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) out[i] = assignment[i] == s;
    return out;
}

std::array<std::size_t, 3> split_quota(std::size_t n, const SplitRatios& ratios) {
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const double exact = r[s] * static_cast<double>(n);
        // guard against 0.7 * 10 = 7.000000000000001 style representation error
        const double fl = std::floor(exact + 1e-9);
        quota[s] = static_cast<std::size_t>(fl);
        frac[s] = std::max(0.0, exact - fl);
        assigned += quota[s];
    }
    std::size_t remainder = n - std::min(n, assigned);
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
    for (std::size_t k = 0; remainder > 0; k = (k + 1) % 3) {
        if (r[order[k]] <= 0.0) continue;
        ++quota[order[k]];
        --remainder;
    }
    return quota;
}

SplitAssignment stratified_split(const std::vector<int>& labels, const SplitRatios& ratios, std::uint64_t seed) {
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    if (std::any_of(r.begin(), r.end(), [](double x) { return !(x >= 0.0) || !std::isfinite(x); })) {
        throw UsageError("split ratios must be finite and non-negative");
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
    const auto active_splits = static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double x) { return x > 0.0; }));

    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    SplitAssignment out;
    out.assignment.assign(labels.size(), Split::train);
    out.ratios = ratios;
    out.seed = seed;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == classes[ci]) members.push_back(i);
        }
        if (members.size() < active_splits) {
            throw DataError("class " + std::to_string(classes[ci]) + " has " + std::to_string(members.size()) +
                            " documents, fewer than the " + std::to_string(active_splits) + " splits");
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(classes[ci])) ^ 0x5eedULL));
        rng.shuffle(std::span<std::size_t>(members));
        const auto quota = split_quota(members.size(), ratios);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < quota[s]; ++k) out.assignment[members[pos++]] = static_cast<Split>(s);
        }
    }
    return out;
}

void write_split_jsonl(std::ostream& out, const std::vector<std::string>& ids, const SplitAssignment& split) {
    if (ids.size() != split.assignment.size()) throw DataError("split assignment does not match id count");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        json rec = {{"id", ids[i]}, {"split", std::string(to_string(split.assignment[i]))}};
        out << rec.dump() << '\n';
    }
}

SplitAssignment read_split_jsonl(std::istream& in, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, Split> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json rec;
        try {
            rec = json::parse(line);
            by_id[rec.at("id").get<std::string>()] = parse_split(rec.at("split").get<std::string>());
        } catch (const json::exception& e) {
            throw DataError(at_line(line_no) + "malformed split record: " + e.what());
        }
    }
    SplitAssignment out;
    out.assignment.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("split file has no entry for document '" + id + "'");
        out.assignment.push_back(it->second);
    }
    return out;
}

}  // namespace hetgraph
