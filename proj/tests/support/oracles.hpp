#pragma once

// Reference implementations and generators shared by unit and acceptance tests.

#include "hetgraph/conv_head.hpp"
#include "hetgraph/corpus.hpp"
#include "hetgraph/gcn.hpp"
#include "hetgraph/graph.hpp"
#include "hetgraph/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using hetgraph::Matrix;
using hetgraph::TokenId;

// Explicit list of windows, each as the set of tokens it contains.
inline std::vector<std::set<TokenId>> enumerate_windows(const std::vector<std::vector<TokenId>>& docs, std::size_t k) {
    std::vector<std::set<TokenId>> windows;
    for (const auto& doc : docs) {
        if (doc.size() <= k) {
            windows.emplace_back(doc.begin(), doc.end());
            continue;
        }
        for (std::size_t s = 0; s + k <= doc.size(); ++s) windows.emplace_back(doc.begin() + s, doc.begin() + s + k);
    }
    return windows;
}

struct BruteCounts {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> single;
    std::map<std::pair<TokenId, TokenId>, std::uint64_t> pair;
};

inline BruteCounts brute_counts(const std::vector<std::vector<TokenId>>& docs, std::size_t k) {
    BruteCounts c;
    for (const auto& w : enumerate_windows(docs, k)) {
        ++c.total;
        for (TokenId a : w) {
            ++c.single[a];
            for (TokenId b : w) {
                if (a < b) ++c.pair[{a, b}];
            }
        }
    }
    return c;
}

inline std::optional<double> brute_ppmi(const BruteCounts& c, TokenId i, TokenId j) {
    if (i > j) std::swap(i, j);
    const auto it = c.pair.find({i, j});
    if (it == c.pair.end()) return std::nullopt;
    const std::uint64_t wij = it->second, wi = c.single.at(i), wj = c.single.at(j);
    if (wij * c.total <= wi * wj) return std::nullopt;
    return std::log(double(wij)) + std::log(double(c.total)) - std::log(double(wi)) - std::log(double(wj));
}

inline hetgraph::TokenizedCorpus random_corpus(hetgraph::Rng& rng, std::size_t max_docs, std::size_t max_tokens,
                                               std::size_t vocab) {
    const std::size_t n_docs = 1 + rng.below(max_docs);
    std::vector<std::vector<std::string>> docs(n_docs);
    for (auto& d : docs) {
        const std::size_t len = rng.below(max_tokens + 1);
        for (std::size_t t = 0; t < len; ++t) d.push_back("t" + std::to_string(rng.below(vocab)));
    }
    // guarantee a nonempty vocabulary
    if (std::all_of(docs.begin(), docs.end(), [](const auto& d) { return d.empty(); })) docs[0].push_back("t0");
    return hetgraph::index_corpus(docs, hetgraph::build_vocabulary(docs, 1));
}

inline Matrix random_matrix(hetgraph::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

/// Largest per-coordinate relative error between `analytic` and central
/// differences of `loss` with respect to `param`. Coordinates where both
/// values are below `floor` in magnitude are compared on that floor.
inline double max_relative_error(const std::function<double()>& loss, Matrix& param, const Matrix& analytic,
                                 double step = 1e-5, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double saved = param.data()[i];
        param.data()[i] = saved + step;
        const double up = loss();
        param.data()[i] = saved - step;
        const double down = loss();
        param.data()[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.data()[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

/// Small random GCN instance: graph from a random corpus, optional external features.
struct GcnInstance {
    hetgraph::TextGraph graph;
    hetgraph::NodeFeatures features = hetgraph::NodeFeatures::identity(0, 0);
    hetgraph::Propagation propagation;
    hetgraph::ModelParameters params;
    std::vector<int> labels;
    std::vector<bool> mask;
};

inline GcnInstance random_gcn_instance(std::uint64_t seed, std::size_t dim, std::size_t hidden, bool identity) {
    hetgraph::Rng rng(seed);
    GcnInstance inst;
    auto corpus = random_corpus(rng, 5, 8, 6);
    while (corpus.n_docs() < 2) corpus = random_corpus(rng, 5, 8, 6);
    inst.graph = hetgraph::build_text_graph(corpus, {3, 1});
    const std::size_t n_doc = inst.graph.n_doc;
    if (identity) {
        inst.features = hetgraph::NodeFeatures::identity(n_doc, inst.graph.n_word);
    } else {
        inst.features = hetgraph::NodeFeatures::external(random_matrix(rng, Eigen::Index(n_doc), Eigen::Index(dim)),
                                                         inst.graph.n_word);
    }
    inst.propagation = hetgraph::Propagation::from(inst.graph.normalized, n_doc);
    inst.params = hetgraph::init_parameters(inst.features.dim(), hidden, 2, seed);
    // nonzero biases so their gradients are exercised
    inst.params.gcn.b1 = random_matrix(rng, 1, Eigen::Index(hidden), 0.3);
    inst.params.gcn.b2 = random_matrix(rng, 1, 2, 0.3);
    inst.params.head.b = random_matrix(rng, 1, 2, 0.3);
    inst.labels.resize(n_doc);
    inst.mask.resize(n_doc);
    for (std::size_t i = 0; i < n_doc; ++i) {
        inst.labels[i] = int(rng.below(2));
        inst.mask[i] = rng.uniform() < 0.75;
    }
    inst.mask[0] = true;
    return inst;
}

/// Corpus of documents drawn from two disjoint topic vocabularies.
struct TopicCorpus {
    std::vector<hetgraph::RawDocument> docs;
    std::vector<int> topic;   // true topic per document
};

inline TopicCorpus topic_corpus(std::size_t n_docs, std::size_t vocab_per_topic, std::size_t doc_len, std::uint64_t seed) {
    hetgraph::Rng rng(seed);
    TopicCorpus c;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const int t = int(i % 2);
        std::string text;
        for (std::size_t w = 0; w < doc_len; ++w) {
            if (w) text += ' ';
            text += (t ? "beta" : "alpha") + std::to_string(rng.below(vocab_per_topic));
        }
        c.docs.push_back({"doc" + std::to_string(i), text, t, "synthetic"});
        c.topic.push_back(t);
    }
    return c;
}

/// Flips each selected label with probability `rate`.
inline std::vector<int> with_label_noise(std::vector<int> labels, const std::vector<bool>& eligible, double rate,
                                         std::uint64_t seed) {
    hetgraph::Rng rng(seed);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (eligible[i] && rng.uniform() < rate) labels[i] = 1 - labels[i];
    }
    return labels;
}

/// Document embeddings whose first coordinate carries the topic signal, plus noise.
inline Matrix topic_embeddings(const std::vector<int>& topic, std::size_t dim, double signal, std::uint64_t seed) {
    hetgraph::Rng rng(seed);
    Matrix z(Eigen::Index(topic.size()), Eigen::Index(dim));
    for (std::size_t i = 0; i < topic.size(); ++i) {
        for (std::size_t c = 0; c < dim; ++c) z(Eigen::Index(i), Eigen::Index(c)) = rng.normal();
        z(Eigen::Index(i), 0) += topic[i] ? signal : -signal;
    }
    return z;
}

/// Token sequences where positive documents contain a planted motif.
inline std::vector<Matrix> motif_sequences(const std::vector<int>& labels, std::size_t dim, std::size_t len,
                                           std::uint64_t seed) {
    hetgraph::Rng rng(seed);
    std::vector<Matrix> out;
    for (int y : labels) {
        Matrix m(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.3 * rng.normal();
        const auto at = Eigen::Index(rng.below(len - 2));
        for (Eigen::Index r = at; r < at + 3; ++r) m(r, 0) += y ? 2.0 : -2.0;
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace oracle
