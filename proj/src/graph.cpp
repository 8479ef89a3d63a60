#include "hetgraph/graph.hpp"

#include "binary_io.hpp"
#include "parallel.hpp"
#include "hetgraph/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <unordered_map>

namespace hetgraph {

using nlohmann::json;

SparseMatrix compute_tfidf(const TokenizedCorpus& corpus, unsigned threads) {
    const std::size_t n_doc = corpus.n_docs();
    const std::size_t n_word = corpus.n_words();

    std::vector<std::size_t> df(n_word, 0);
    std::vector<std::vector<std::pair<TokenId, std::uint64_t>>> tf(n_doc);
    detail::for_each_chunk(n_doc, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t d = begin; d < end; ++d) {
            std::vector<TokenId> sorted = corpus.docs[d];
            std::sort(sorted.begin(), sorted.end());
            auto& counts = tf[d];
            for (std::size_t i = 0; i < sorted.size();) {
                std::size_t j = i;
                while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
                if (sorted[i] >= n_word) throw DataError("token id out of vocabulary range");
                counts.emplace_back(sorted[i], j - i);
                i = j;
            }
        }
    });
    for (const auto& counts : tf) {
        for (const auto& [w, c] : counts) ++df[w];
    }

    std::vector<SparseEntry> entries;
    for (std::size_t d = 0; d < n_doc; ++d) {
        for (const auto& [w, c] : tf[d]) {
            const double idf = std::log(static_cast<double>(n_doc) / static_cast<double>(df[w]));
            const double value = static_cast<double>(c) * idf;
            if (value != 0.0) entries.push_back({d, w, value});
        }
    }
    return SparseMatrix::from_entries(n_doc, n_word, std::move(entries));
}

std::uint64_t WindowStats::pair(TokenId i, TokenId j) const {
    if (i > j) std::swap(i, j);
    auto it = std::lower_bound(pair_windows.begin(), pair_windows.end(), std::pair{i, j},
                               [](const PairCount& p, const std::pair<TokenId, TokenId>& key) {
                                   return p.first != key.first ? p.first < key.first : p.second < key.second;
                               });
    if (it == pair_windows.end() || it->first != i || it->second != j) return 0;
    return it->windows;
}

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

struct WindowAccumulator {
    std::uint64_t windows = 0;
    std::vector<std::uint64_t> tokens;
    std::unordered_map<std::uint64_t, std::uint64_t> pairs;

    void add_window(std::span<const TokenId> window, std::vector<TokenId>& scratch) {
        ++windows;
        scratch.assign(window.begin(), window.end());
        std::sort(scratch.begin(), scratch.end());
        scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
        for (std::size_t a = 0; a < scratch.size(); ++a) {
            ++tokens[scratch[a]];
            for (std::size_t b = a + 1; b < scratch.size(); ++b) ++pairs[pair_key(scratch[a], scratch[b])];
        }
    }
};

}  // namespace

WindowStats slide_windows(const TokenizedCorpus& corpus, std::size_t window_size, unsigned threads) {
    if (window_size < 1) throw UsageError("window size must be at least 1");
    const std::size_t n_word = corpus.n_words();
    const std::size_t workers = std::max<std::size_t>(1, threads);
    std::vector<WindowAccumulator> parts(workers);
    for (auto& p : parts) p.tokens.assign(n_word, 0);

    detail::for_each_chunk(corpus.n_docs(), static_cast<unsigned>(workers),
                           [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& acc = parts[chunk];
        std::vector<TokenId> scratch;
        for (std::size_t d = begin; d < end; ++d) {
            const auto& doc = corpus.docs[d];
            for (TokenId t : doc) {
                if (t >= n_word) throw DataError("token id out of vocabulary range");
            }
            const std::span<const TokenId> tokens(doc);
            if (doc.size() <= window_size) {
                acc.add_window(tokens, scratch);
                continue;
            }
            for (std::size_t start = 0; start + window_size <= doc.size(); ++start) {
                acc.add_window(tokens.subspan(start, window_size), scratch);
            }
        }
    });

    WindowStats stats;
    stats.window_size = window_size;
    stats.token_windows.assign(n_word, 0);
    std::unordered_map<std::uint64_t, std::uint64_t> merged;
    for (const auto& p : parts) {
        stats.total_windows += p.windows;
        for (std::size_t t = 0; t < n_word; ++t) stats.token_windows[t] += p.tokens[t];
        for (const auto& [k, v] : p.pairs) merged[k] += v;
    }
    stats.pair_windows.reserve(merged.size());
    for (const auto& [k, v] : merged) {
        stats.pair_windows.push_back({static_cast<TokenId>(k >> 32), static_cast<TokenId>(k & 0xFFFFFFFFu), v});
    }
    std::sort(stats.pair_windows.begin(), stats.pair_windows.end(), [](const PairCount& a, const PairCount& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
    return stats;
}

namespace {

std::optional<double> ppmi_from_counts(std::uint64_t total, std::uint64_t wi, std::uint64_t wj, std::uint64_t wij) {
    if (wij == 0 || wi == 0 || wj == 0) return std::nullopt;
    // p(i,j) / (p(i) p(j)) = #W(i,j) #W / (#W(i) #W(j)); decide positivity on exact integers.
    const auto num = static_cast<unsigned __int128>(wij) * total;
    const auto den = static_cast<unsigned __int128>(wi) * wj;
    if (num <= den) return std::nullopt;
    const double n = static_cast<double>(total);
    const double p_ij = static_cast<double>(wij) / n;
    const double p_i = static_cast<double>(wi) / n;
    const double p_j = static_cast<double>(wj) / n;
    return std::log(p_ij / (p_i * p_j));
}

}  // namespace

std::optional<double> ppmi(const WindowStats& stats, TokenId i, TokenId j) {
    if (stats.total_windows == 0) throw NumericalError("ppmi: corpus has no sliding windows");
    if (i == j) throw UsageError("ppmi: i and j must differ");
    if (i >= stats.token_windows.size() || j >= stats.token_windows.size()) {
        throw UsageError("ppmi: token id out of range");
    }
    return ppmi_from_counts(stats.total_windows, stats.token_windows[i], stats.token_windows[j], stats.pair(i, j));
}

std::vector<WordEdge> ppmi_edges(const WindowStats& stats) {
    if (stats.total_windows == 0) throw NumericalError("ppmi: corpus has no sliding windows");
    std::vector<WordEdge> edges;
    for (const auto& p : stats.pair_windows) {
        if (auto w = ppmi_from_counts(stats.total_windows, stats.token_windows[p.first],
                                      stats.token_windows[p.second], p.windows)) {
            edges.push_back({p.first, p.second, *w});
        }
    }
    return edges;
}

SparseMatrix assemble_adjacency(const SparseMatrix& tfidf, const std::vector<WordEdge>& word_edges,
                                std::size_t n_doc, std::size_t n_word) {
    if (tfidf.rows() != n_doc || tfidf.cols() != n_word) {
        throw DataError("tfidf shape " + std::to_string(tfidf.rows()) + "x" + std::to_string(tfidf.cols()) +
                        " does not match " + std::to_string(n_doc) + " docs x " + std::to_string(n_word) + " words");
    }
    const std::size_t n = n_doc + n_word;
    std::vector<SparseEntry> entries;
    entries.reserve(n + 2 * tfidf.nnz() + 2 * word_edges.size());
    for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
    for (const auto& e : tfidf.entries()) {
        entries.push_back({e.row, n_doc + e.col, e.value});
        entries.push_back({n_doc + e.col, e.row, e.value});
    }
    std::map<std::pair<TokenId, TokenId>, double> seen;
    for (const auto& e : word_edges) {
        if (e.a == e.b) throw DataError("word edge (" + std::to_string(e.a) + "," + std::to_string(e.b) + ") conflicts with the self-loop");
        if (e.a >= n_word || e.b >= n_word) throw DataError("word edge index out of range");
        const auto key = std::minmax(e.a, e.b);
        auto [it, inserted] = seen.emplace(key, e.weight);
        if (!inserted) {
            if (it->second != e.weight) {
                throw DataError("conflicting weights for word edge (" + std::to_string(key.first) + "," +
                                std::to_string(key.second) + ")");
            }
            continue;
        }
    }
    for (const auto& [key, w] : seen) {
        entries.push_back({n_doc + key.first, n_doc + key.second, w});
        entries.push_back({n_doc + key.second, n_doc + key.first, w});
    }
    return SparseMatrix::from_entries(n, n, std::move(entries));
}

SparseMatrix normalize(const SparseMatrix& adjacency) {
    if (adjacency.rows() != adjacency.cols()) throw DataError("normalize: adjacency must be square");
    std::vector<double> degree(adjacency.rows(), 0.0);
    for (const auto& e : adjacency.entries()) degree[e.row] += e.value;
    for (std::size_t i = 0; i < degree.size(); ++i) {
        if (!(degree[i] > 0.0)) {
            throw NumericalError("normalize: node " + std::to_string(i) + " has non-positive degree");
        }
    }
    std::vector<SparseEntry> entries;
    entries.reserve(adjacency.nnz());
    for (const auto& e : adjacency.entries()) {
        entries.push_back({e.row, e.col, e.value / std::sqrt(degree[e.row] * degree[e.col])});
    }
    return SparseMatrix::from_entries(adjacency.rows(), adjacency.cols(), std::move(entries));
}

// ---------------------------------------------------------------------------
// Node features

NodeFeatures NodeFeatures::external(EmbeddingMatrix doc_embeddings, std::size_t n_word) {
    NodeFeatures f;
    f.mode_ = FeatureMode::external;
    f.n_doc_ = static_cast<std::size_t>(doc_embeddings.rows());
    f.n_word_ = n_word;
    f.embeddings_ = std::move(doc_embeddings);
    return f;
}

NodeFeatures NodeFeatures::identity(std::size_t n_doc, std::size_t n_word) {
    NodeFeatures f;
    f.mode_ = FeatureMode::identity;
    f.n_doc_ = n_doc;
    f.n_word_ = n_word;
    return f;
}

std::size_t NodeFeatures::dim() const {
    return mode_ == FeatureMode::identity ? n_nodes() : static_cast<std::size_t>(embeddings_.cols());
}

namespace {

void check_rows(const Matrix& m, std::size_t expected, const char* what) {
    if (static_cast<std::size_t>(m.rows()) != expected) {
        throw DataError(std::string(what) + ": expected " + std::to_string(expected) + " rows, got " +
                        std::to_string(m.rows()));
    }
}

}  // namespace

Matrix NodeFeatures::multiply(const Matrix& w) const {
    check_rows(w, dim(), "NodeFeatures::multiply");
    if (mode_ == FeatureMode::identity) return w;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_nodes()), w.cols());
    out.topRows(static_cast<Eigen::Index>(n_doc_)).noalias() = embeddings_ * w;
    return out;
}

Matrix NodeFeatures::doc_rows_multiply(const Matrix& w) const {
    check_rows(w, dim(), "NodeFeatures::doc_rows_multiply");
    if (mode_ == FeatureMode::identity) return w.topRows(static_cast<Eigen::Index>(n_doc_));
    return embeddings_ * w;
}

Matrix NodeFeatures::transpose_multiply(const Matrix& g) const {
    check_rows(g, n_nodes(), "NodeFeatures::transpose_multiply");
    if (mode_ == FeatureMode::identity) return g;
    return embeddings_.transpose() * g.topRows(static_cast<Eigen::Index>(n_doc_));
}

Matrix NodeFeatures::doc_rows_transpose_multiply(const Matrix& g) const {
    check_rows(g, n_doc_, "NodeFeatures::doc_rows_transpose_multiply");
    if (mode_ == FeatureMode::identity) {
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_nodes()), g.cols());
        out.topRows(static_cast<Eigen::Index>(n_doc_)) = g;
        return out;
    }
    return embeddings_.transpose() * g;
}

Matrix NodeFeatures::dense() const {
    const auto n = static_cast<Eigen::Index>(n_nodes());
    if (mode_ == FeatureMode::identity) return Matrix::Identity(n, n);
    Matrix out = Matrix::Zero(n, embeddings_.cols());
    out.topRows(static_cast<Eigen::Index>(n_doc_)) = embeddings_;
    return out;
}

NodeFeatures build_node_features(const std::optional<EmbeddingMatrix>& embeddings, std::size_t n_doc,
                                 std::size_t n_word) {
    if (!embeddings) return NodeFeatures::identity(n_doc, n_word);
    if (static_cast<std::size_t>(embeddings->rows()) != n_doc) {
        throw DataError("embedding matrix has " + std::to_string(embeddings->rows()) + " rows but the corpus has " +
                        std::to_string(n_doc) + " documents");
    }
    if (!embeddings->allFinite()) throw DataError("embedding matrix contains non-finite values");
    return NodeFeatures::external(*embeddings, n_word);
}

// ---------------------------------------------------------------------------
// Graph assembly

TextGraph build_text_graph(const TokenizedCorpus& corpus, const GraphConfig& config) {
    TextGraph g;
    g.n_doc = corpus.n_docs();
    g.n_word = corpus.n_words();
    g.tfidf = compute_tfidf(corpus, config.threads);
    const auto stats = slide_windows(corpus, config.window_size, config.threads);
    g.word_edges = ppmi_edges(stats);
    g.adjacency = assemble_adjacency(g.tfidf, g.word_edges, g.n_doc, g.n_word);
    g.normalized = normalize(g.adjacency);
    return g;
}

TextGraph graph_from_adjacency(SparseMatrix adjacency, std::size_t n_doc) {
    if (adjacency.rows() != adjacency.cols() || adjacency.rows() < n_doc) {
        throw DataError("adjacency shape inconsistent with document count");
    }
    TextGraph g;
    g.n_doc = n_doc;
    g.n_word = adjacency.rows() - n_doc;
    std::vector<SparseEntry> tfidf;
    for (const auto& e : adjacency.entries()) {
        if (e.row == e.col) {
            if (e.value != 1.0) throw DataError("adjacency self-loop at node " + std::to_string(e.row) + " is not 1");
            continue;
        }
        const bool row_doc = e.row < n_doc;
        const bool col_doc = e.col < n_doc;
        if (row_doc && col_doc) throw DataError("adjacency has a doc-doc edge");
        if (row_doc) tfidf.push_back({e.row, e.col - n_doc, e.value});
        if (!row_doc && !col_doc && e.row < e.col) {
            g.word_edges.push_back({static_cast<TokenId>(e.row - n_doc), static_cast<TokenId>(e.col - n_doc), e.value});
        }
    }
    g.tfidf = SparseMatrix::from_entries(n_doc, g.n_word, std::move(tfidf));
    if (!adjacency.is_symmetric()) throw DataError("adjacency is not symmetric");
    g.adjacency = std::move(adjacency);
    g.normalized = normalize(g.adjacency);
    return g;
}

// ---------------------------------------------------------------------------
// Embedding files

namespace {
constexpr char kEmbeddingMagic[5] = "TGEM";
constexpr std::uint32_t kEmbeddingVersion = 1;
}  // namespace

void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kEmbeddingMagic, 4);
    detail::write_le<std::uint32_t>(out, kEmbeddingVersion);
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) detail::write_f32(out, static_cast<float>(m(r, c)));
    }
    if (!out) throw DataError("failed writing " + path.string());
}

EmbeddingMatrix read_embeddings_binary(std::istream& in) {
    detail::expect_magic(in, kEmbeddingMagic, "embedding file");
    const auto version = detail::read_le<std::uint32_t>(in, "version");
    if (version != kEmbeddingVersion) throw DataError("embedding file: unsupported version " + std::to_string(version));
    const auto rows = detail::read_le<std::uint64_t>(in, "row count");
    const auto dim = detail::read_le<std::uint64_t>(in, "dimension");
    if (rows > (1ULL << 32) || dim > (1ULL << 24)) throw DataError("embedding file: implausible shape");
    EmbeddingMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::read_f32(in, "embedding payload");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("embedding file: trailing bytes after payload");
    return m;
}

EmbeddingMatrix read_embeddings_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0) throw DataError("embedding CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DataError("embedding CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " values, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    const auto dim = rows.empty() ? 0 : rows.front().size();
    EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding file " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    const bool binary = in.gcount() == 4 && std::equal(magic, magic + 4, kEmbeddingMagic);
    in.clear();
    in.seekg(0);
    return binary ? read_embeddings_binary(in) : read_embeddings_csv(in);
}

// ---------------------------------------------------------------------------
// Graph JSON

std::string export_graph_json(const TextGraph& graph, const std::vector<std::string>& doc_ids,
                              const Vocabulary& vocab) {
    if (doc_ids.size() != graph.n_doc || vocab.size() != graph.n_word) {
        throw DataError("graph export: ids do not match graph dimensions");
    }
    json nodes = json::array();
    for (std::size_t i = 0; i < graph.n_doc; ++i) nodes.push_back({{"index", i}, {"kind", "doc"}, {"id", doc_ids[i]}});
    for (std::size_t w = 0; w < graph.n_word; ++w) {
        nodes.push_back({{"index", graph.n_doc + w}, {"kind", "word"}, {"id", vocab.tokens[w]}});
    }
    json edges = json::array();
    for (const auto& e : graph.adjacency.entries()) {
        if (e.row <= e.col) edges.push_back({{"a", e.row}, {"b", e.col}, {"w", e.value}});
    }
    json doc = {{"n_doc", graph.n_doc}, {"n_word", graph.n_word}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
    return doc.dump() + "\n";
}

TextGraph import_graph_json(const std::string& text, std::vector<std::string>* doc_ids, std::vector<std::string>* words) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("graph JSON: ") + e.what());
    }
    try {
        const auto n_doc = doc.at("n_doc").get<std::size_t>();
        const auto n_word = doc.at("n_word").get<std::size_t>();
        const std::size_t n = n_doc + n_word;
        if (doc_ids) doc_ids->assign(n_doc, {});
        if (words) words->assign(n_word, {});
        for (const auto& node : doc.at("nodes")) {
            const auto idx = node.at("index").get<std::size_t>();
            const auto kind = node.at("kind").get<std::string>();
            if (idx >= n || (kind == "doc") != (idx < n_doc)) throw DataError("graph JSON: inconsistent node entry");
            if (kind == "doc" && doc_ids) (*doc_ids)[idx] = node.at("id").get<std::string>();
            if (kind == "word" && words) (*words)[idx - n_doc] = node.at("id").get<std::string>();
        }
        std::vector<SparseEntry> entries;
        for (const auto& e : doc.at("edges")) {
            const auto a = e.at("a").get<std::size_t>();
            const auto b = e.at("b").get<std::size_t>();
            const auto w = e.at("w").get<double>();
            entries.push_back({a, b, w});
            if (a != b) entries.push_back({b, a, w});
        }
        return graph_from_adjacency(SparseMatrix::from_entries(n, n, std::move(entries)), n_doc);
    } catch (const json::exception& e) {
        throw DataError(std::string("graph JSON: ") + e.what());
    }
}

}  // namespace hetgraph
