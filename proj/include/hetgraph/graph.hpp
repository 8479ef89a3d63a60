#pragma once

#include "hetgraph/corpus.hpp"
#include "hetgraph/sparse.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hetgraph {

/// Document-word TF-IDF weights, N_doc x N_word. entry(d, w) = tf(w, d) * ln(N_doc / df(w)),
/// with tf the raw in-document count. Zero entries are omitted.
SparseMatrix compute_tfidf(const TokenizedCorpus& corpus, unsigned threads = 1);

struct PairCount {
    TokenId first = 0;    // first < second
    TokenId second = 0;
    std::uint64_t windows = 0;

    bool operator==(const PairCount&) const = default;
};

/// Sliding-window co-occurrence counts. A token or pair counts at most once
/// per window.
struct WindowStats {
    std::size_t window_size = 0;
    std::uint64_t total_windows = 0;
    std::vector<std::uint64_t> token_windows;   // #W(i), indexed by token id
    std::vector<PairCount> pair_windows;        // #W(i,j), sorted by (first, second)

    [[nodiscard]] std::uint64_t pair(TokenId i, TokenId j) const;
    bool operator==(const WindowStats&) const = default;
};

/// Stride-1 windows of `window_size` tokens within each document; a document
/// shorter than the window (including an empty one) contributes a single window.
WindowStats slide_windows(const TokenizedCorpus& corpus, std::size_t window_size, unsigned threads = 1);

/// ln(p(i,j) / (p(i) p(j))) when strictly positive, nullopt otherwise.
std::optional<double> ppmi(const WindowStats& stats, TokenId i, TokenId j);

struct WordEdge {
    TokenId a = 0;
    TokenId b = 0;
    double weight = 0.0;

    bool operator==(const WordEdge&) const = default;
};

/// Every positive-PPMI pair with a < b, sorted.
std::vector<WordEdge> ppmi_edges(const WindowStats& stats);

/// Heterogeneous adjacency over (N_doc + N_word) nodes: documents first, then
/// words. Unit self-loops, symmetric TF-IDF doc-word blocks, symmetric PPMI
/// word-word block, empty doc-doc block.
SparseMatrix assemble_adjacency(const SparseMatrix& tfidf, const std::vector<WordEdge>& word_edges,
                                std::size_t n_doc, std::size_t n_word);

/// D^-1/2 A D^-1/2 with D the row sums of A.
SparseMatrix normalize(const SparseMatrix& adjacency);

using EmbeddingMatrix = Matrix;

enum class FeatureMode { external, identity };

/// Node feature matrix X. External mode stacks the document embeddings over a
/// zero block for the word rows; identity mode is the (N_doc + N_word) identity.
/// Neither is materialised unless `dense()` is called.
class NodeFeatures {
public:
    static NodeFeatures external(EmbeddingMatrix doc_embeddings, std::size_t n_word);
    static NodeFeatures identity(std::size_t n_doc, std::size_t n_word);

    [[nodiscard]] FeatureMode mode() const { return mode_; }
    [[nodiscard]] std::size_t n_doc() const { return n_doc_; }
    [[nodiscard]] std::size_t n_word() const { return n_word_; }
    [[nodiscard]] std::size_t n_nodes() const { return n_doc_ + n_word_; }
    [[nodiscard]] std::size_t dim() const;
    /// Z_doc in external mode.
    [[nodiscard]] const Matrix& doc_embeddings() const { return embeddings_; }

    /// X * w for a dim() x k matrix w.
    [[nodiscard]] Matrix multiply(const Matrix& w) const;
    /// Document rows of X times w.
    [[nodiscard]] Matrix doc_rows_multiply(const Matrix& w) const;
    /// X^T * g for an n_nodes() x k matrix g.
    [[nodiscard]] Matrix transpose_multiply(const Matrix& g) const;
    /// (doc rows of X)^T * g for an N_doc x k matrix g.
    [[nodiscard]] Matrix doc_rows_transpose_multiply(const Matrix& g) const;

    [[nodiscard]] Matrix dense() const;

private:
    FeatureMode mode_ = FeatureMode::identity;
    std::size_t n_doc_ = 0;
    std::size_t n_word_ = 0;
    Matrix embeddings_;
};

/// Checks row alignment and builds X. Without embeddings, identity mode.
NodeFeatures build_node_features(const std::optional<EmbeddingMatrix>& embeddings, std::size_t n_doc,
                                 std::size_t n_word);

struct GraphConfig {
    std::size_t window_size = 20;
    unsigned threads = 1;
};

struct TextGraph {
    std::size_t n_doc = 0;
    std::size_t n_word = 0;
    SparseMatrix tfidf;
    std::vector<WordEdge> word_edges;
    SparseMatrix adjacency;
    SparseMatrix normalized;
};

TextGraph build_text_graph(const TokenizedCorpus& corpus, const GraphConfig& config = {});
/// Rebuilds the derived matrices of a graph from its adjacency.
TextGraph graph_from_adjacency(SparseMatrix adjacency, std::size_t n_doc);

// Embedding files: "TGEM" binary (version u32, rows u64, dim u64, row-major
// little-endian float32) or CSV with one row per document.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings_binary(std::istream& in);
EmbeddingMatrix read_embeddings_csv(std::istream& in);

/// JSON with `nodes` [{index, kind, id}] and `edges` [{a, b, w}] (upper triangle of A).
std::string export_graph_json(const TextGraph& graph, const std::vector<std::string>& doc_ids,
                              const Vocabulary& vocab);
/// Parses export_graph_json output back into a graph; optionally returns the
/// document ids and word strings in node order.
TextGraph import_graph_json(const std::string& text, std::vector<std::string>* doc_ids = nullptr,
                            std::vector<std::string>* words = nullptr);

}  // namespace hetgraph
