#include "hetgraph/interpret.hpp"

#include "hetgraph/error.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

namespace hetgraph {

FrequencyTable label_word_frequencies(const TokenizedCorpus& corpus, const std::vector<int>& labels, int label) {
    if (labels.size() != corpus.docs.size()) throw DataError("labels and corpus differ in length");
    std::vector<std::size_t> counts(corpus.vocab.size(), 0);
    bool any = false;
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        if (labels[d] != label) continue;
        any = true;
        for (TokenId t : corpus.docs[d]) ++counts[t];
    }
    if (!any) throw DataError("no documents carry label " + std::to_string(label));
    FrequencyTable table;
    table.label = label;
    for (std::size_t t = 0; t < counts.size(); ++t) {
        if (counts[t] > 0) table.entries.push_back({static_cast<TokenId>(t), corpus.vocab.tokens[t], counts[t]});
    }
    std::sort(table.entries.begin(), table.entries.end(), [](const auto& a, const auto& b) {
        return a.count != b.count ? a.count > b.count : a.token < b.token;
    });
    return table;
}

std::vector<ScoredWord> top_k_words(const SparseMatrix& tfidf, std::size_t doc, std::size_t k) {
    if (doc >= tfidf.rows()) throw DataError("document index " + std::to_string(doc) + " out of range");
    std::vector<ScoredWord> out;
    for (const auto& e : tfidf.row_entries(doc)) out.push_back({static_cast<TokenId>(e.col), e.value});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.token < b.token;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

namespace {

std::string_view kind_name(SalienceNodeKind k) { return k == SalienceNodeKind::doc ? "doc" : "word"; }
std::string_view kind_name(SalienceEdgeKind k) { return k == SalienceEdgeKind::doc_word ? "doc_word" : "word_word"; }

std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') { out += "\\n"; continue; }
        out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

nlohmann::json SalienceGraph::to_json() const {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes) j["nodes"].push_back({{"id", n.id}, {"kind", kind_name(n.kind)}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : edges) j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"w", e.w}, {"kind", kind_name(e.kind)}});
    return j;
}

SalienceGraph SalienceGraph::from_json(const nlohmann::json& j) {
    try {
        SalienceGraph g;
        for (const auto& n : j.at("nodes")) {
            const auto kind = n.at("kind").get<std::string>();
            if (kind != "doc" && kind != "word") throw DataError("unknown node kind '" + kind + "'");
            g.nodes.push_back({n.at("id").get<std::string>(), kind == "doc" ? SalienceNodeKind::doc : SalienceNodeKind::word});
        }
        for (const auto& e : j.at("edges")) {
            const auto kind = e.at("kind").get<std::string>();
            if (kind != "doc_word" && kind != "word_word") throw DataError("unknown edge kind '" + kind + "'");
            g.edges.push_back({e.at("a").get<std::string>(), e.at("b").get<std::string>(), e.at("w").get<double>(),
                               kind == "doc_word" ? SalienceEdgeKind::doc_word : SalienceEdgeKind::word_word});
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed salience graph: ") + e.what());
    }
}

std::string SalienceGraph::to_dot() const {
    std::ostringstream out;
    out.precision(17);
    out << "graph salience {\n";
    for (const auto& n : nodes) {
        const bool doc = n.kind == SalienceNodeKind::doc;
        out << "  " << dot_quote(n.id) << " [kind=" << kind_name(n.kind) << ", shape=" << (doc ? "box" : "ellipse")
            << ", color=" << (doc ? "red" : "green") << "];\n";
    }
    for (const auto& e : edges) {
        out << "  " << dot_quote(e.a) << " -- " << dot_quote(e.b) << " [weight=" << e.w << ", kind=" << kind_name(e.kind)
            << (e.kind == SalienceEdgeKind::word_word ? ", style=dashed" : "") << "];\n";
    }
    out << "}\n";
    return out.str();
}

SalienceGraph export_salience_graph(const std::vector<std::string>& selected, const std::vector<std::string>& doc_ids,
                                    const Vocabulary& vocab, const SparseMatrix& tfidf,
                                    const std::vector<WordEdge>& word_edges, std::size_t k) {
    if (doc_ids.size() != tfidf.rows()) throw DataError("document ids do not match the TF-IDF matrix");
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < doc_ids.size(); ++i) doc_index.emplace(doc_ids[i], i);

    SalienceGraph g;
    std::vector<SalienceEdge> doc_edges;
    std::vector<TokenId> words;
    std::vector<bool> included(vocab.size(), false);
    std::unordered_map<std::string, bool> seen_docs;
    for (const auto& id : selected) {
        const auto it = doc_index.find(id);
        if (it == doc_index.end()) throw DataError("unknown document id '" + id + "'");
        if (seen_docs.contains(id)) continue;
        seen_docs[id] = true;
        g.nodes.push_back({"d:" + id, SalienceNodeKind::doc});
        for (const auto& sw : top_k_words(tfidf, it->second, k)) {
            if (sw.token >= vocab.size()) throw DataError("TF-IDF column outside the vocabulary");
            doc_edges.push_back({"d:" + id, "w:" + vocab.tokens[sw.token], sw.weight, SalienceEdgeKind::doc_word});
            if (!included[sw.token]) {
                included[sw.token] = true;
                words.push_back(sw.token);
            }
        }
    }
    for (TokenId t : words) g.nodes.push_back({"w:" + vocab.tokens[t], SalienceNodeKind::word});
    g.edges = std::move(doc_edges);
    for (const auto& e : word_edges) {
        if (e.a < included.size() && e.b < included.size() && included[e.a] && included[e.b] && e.weight > 0.0) {
            g.edges.push_back({"w:" + vocab.tokens[e.a], "w:" + vocab.tokens[e.b], e.weight, SalienceEdgeKind::word_word});
        }
    }
    return g;
}

nlohmann::json to_json(const FrequencyTable& table) {
    nlohmann::json j;
    j["label"] = table.label;
    j["words"] = nlohmann::json::array();
    for (const auto& e : table.entries) j["words"].push_back({{"token", e.token}, {"word", e.word}, {"count", e.count}});
    return j;
}

}  // namespace hetgraph
