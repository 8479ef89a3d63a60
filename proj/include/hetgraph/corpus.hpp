#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hetgraph {

using TokenId = std::uint32_t;

/// One labeled (or unlabeled) input document. Label 1 marks minority stress present.
struct RawDocument {
    std::string id;
    std::string text;
    std::optional<int> label;
    std::string source;

    bool operator==(const RawDocument&) const = default;
};

enum class CorpusFormat { jsonl, csv };

CorpusFormat parse_corpus_format(std::string_view name);

/// Reads a corpus file. Documents come back in file order; errors carry the
/// 1-based line number of the offending record.
std::vector<RawDocument> load_corpus(const std::filesystem::path& path, CorpusFormat format);
std::vector<RawDocument> read_corpus_jsonl(std::istream& in);
std::vector<RawDocument> read_corpus_csv(std::istream& in);

struct TokenizerConfig {
    bool lowercase = true;
    bool remove_stopwords = true;
    std::unordered_set<std::string> stopwords;

    /// Lowercasing and stopword removal on, with the English stopword list.
    static TokenizerConfig defaults();
};

const std::unordered_set<std::string>& english_stopwords();

/// Splits on runs of non-alphanumeric code points, folds case and drops
/// stopwords according to `rules`. Duplicates are kept.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& rules);

struct Vocabulary {
    std::vector<std::string> tokens;                  // index -> token
    std::unordered_map<std::string, TokenId> index;   // token -> index
    std::vector<std::size_t> doc_freq;                // per index
    std::size_t n_docs = 0;

    [[nodiscard]] std::size_t size() const { return tokens.size(); }
    [[nodiscard]] std::optional<TokenId> find(std::string_view token) const;
};

/// Retains tokens with df >= min_df; indices follow first occurrence.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, std::size_t min_df);

struct TokenizedCorpus {
    Vocabulary vocab;
    std::vector<std::vector<TokenId>> docs;   // ingestion order

    [[nodiscard]] std::size_t n_docs() const { return docs.size(); }
    [[nodiscard]] std::size_t n_words() const { return vocab.size(); }
    /// Indices of documents with no in-vocabulary tokens. They stay in the
    /// corpus as isolated graph nodes.
    [[nodiscard]] std::vector<std::size_t> empty_documents() const;
};

/// Maps token strings through `vocab`, dropping out-of-vocabulary tokens.
TokenizedCorpus index_corpus(const std::vector<std::vector<std::string>>& docs, Vocabulary vocab);

/// tokenize + build_vocabulary + index_corpus.
TokenizedCorpus tokenize_corpus(const std::vector<RawDocument>& docs, const TokenizerConfig& rules,
                                std::size_t min_df);

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;

    bool operator==(const SplitRatios&) const = default;
};

struct SplitAssignment {
    std::vector<Split> assignment;   // per document, corpus order
    SplitRatios ratios;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<std::size_t> indices(Split s) const;
    [[nodiscard]] std::vector<bool> mask(Split s) const;
    bool operator==(const SplitAssignment&) const = default;
};

/// Stratified split. Per class, each split receives floor(ratio * n) documents
/// and the leftover documents go to the splits with the largest fractional
/// parts, with ties resolved train, then val, then test. Within-class order
/// is shuffled by `seed`.
SplitAssignment stratified_split(const std::vector<int>& labels, const SplitRatios& ratios, std::uint64_t seed);

/// Per-class quota for one class of size n (exposed for tests).
std::array<std::size_t, 3> split_quota(std::size_t n, const SplitRatios& ratios);

/// JSONL `{id, split}` lines.
void write_split_jsonl(std::ostream& out, const std::vector<std::string>& ids, const SplitAssignment& split);
/// Reads `{id, split}` lines and orders them against `ids`.
SplitAssignment read_split_jsonl(std::istream& in, const std::vector<std::string>& ids);

}  // namespace hetgraph
