#pragma once

#include "hetgraph/corpus.hpp"
#include "hetgraph/graph.hpp"
#include "hetgraph/sparse.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace hetgraph {

struct FrequencyEntry {
    TokenId token = 0;
    std::string word;
    std::size_t count = 0;

    bool operator==(const FrequencyEntry&) const = default;
};

struct FrequencyTable {
    int label = 0;
    std::vector<FrequencyEntry> entries;   // count descending, then token index ascending
};

/// Token counts over the documents carrying `label`.
FrequencyTable label_word_frequencies(const TokenizedCorpus& corpus, const std::vector<int>& labels, int label);

struct ScoredWord {
    TokenId token = 0;
    double weight = 0.0;

    bool operator==(const ScoredWord&) const = default;
};

/// The k largest TF-IDF entries of row `doc`; ties go to the lower token index.
std::vector<ScoredWord> top_k_words(const SparseMatrix& tfidf, std::size_t doc, std::size_t k);

enum class SalienceNodeKind { doc, word };
enum class SalienceEdgeKind { doc_word, word_word };

struct SalienceNode {
    std::string id;   // "d:<doc id>" or "w:<token>"
    SalienceNodeKind kind = SalienceNodeKind::doc;

    bool operator==(const SalienceNode&) const = default;
};

struct SalienceEdge {
    std::string a;
    std::string b;
    double w = 0.0;
    SalienceEdgeKind kind = SalienceEdgeKind::doc_word;

    bool operator==(const SalienceEdge&) const = default;
};

struct SalienceGraph {
    std::vector<SalienceNode> nodes;
    std::vector<SalienceEdge> edges;

    bool operator==(const SalienceGraph&) const = default;

    [[nodiscard]] nlohmann::json to_json() const;
    static SalienceGraph from_json(const nlohmann::json& j);
    [[nodiscard]] std::string to_dot() const;
};

/// Documents `selected` (ids from `doc_ids`) with their top-k words, plus the
/// positive word-word edges among the included words.
SalienceGraph export_salience_graph(const std::vector<std::string>& selected, const std::vector<std::string>& doc_ids,
                                    const Vocabulary& vocab, const SparseMatrix& tfidf,
                                    const std::vector<WordEdge>& word_edges, std::size_t k);

/// JSON `{label, words:[{token, word, count}]}`.
nlohmann::json to_json(const FrequencyTable& table);

}  // namespace hetgraph
