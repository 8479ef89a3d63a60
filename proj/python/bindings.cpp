#include "cli.hpp"
#include "hetgraph/corpus.hpp"
#include "hetgraph/error.hpp"
#include "hetgraph/eval.hpp"
#include "hetgraph/gcn.hpp"
#include "hetgraph/graph.hpp"
#include "hetgraph/prompting.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace hetgraph;

namespace {

py::object to_py(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::null: return py::none();
        case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
        case nlohmann::json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
        case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
        case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
        case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
        case nlohmann::json::value_t::array: {
            py::list out;
            for (const auto& v : j) out.append(to_py(v));
            return out;
        }
        default: {
            py::dict out;
            for (const auto& [k, v] : j.items()) out[py::str(k)] = to_py(v);
            return out;
        }
    }
}

TokenizerConfig tokenizer(bool lowercase, bool remove_stopwords) {
    auto rules = TokenizerConfig::defaults();
    rules.lowercase = lowercase;
    rules.remove_stopwords = remove_stopwords;
    return rules;
}

TokenizedCorpus corpus_from(const std::vector<std::string>& texts, bool lowercase, bool remove_stopwords,
                            std::size_t min_df) {
    std::vector<RawDocument> docs;
    for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({"d" + std::to_string(i), texts[i], std::nullopt, ""});
    return tokenize_corpus(docs, tokenizer(lowercase, remove_stopwords), min_df);
}

py::dict sparse_to_py(const SparseMatrix& m) {
    std::vector<std::size_t> rows, cols;
    std::vector<double> vals;
    for (const auto& e : m.entries()) {
        rows.push_back(e.row);
        cols.push_back(e.col);
        vals.push_back(e.value);
    }
    py::dict d;
    d["shape"] = py::make_tuple(m.rows(), m.cols());
    d["rows"] = rows;
    d["cols"] = cols;
    d["values"] = vals;
    return d;
}

SplitAssignment split_from(const std::vector<std::string>& names) {
    SplitAssignment s;
    for (const auto& n : names) s.assignment.push_back(parse_split(n));
    return s;
}

ShotSet shots_from(const std::vector<std::pair<std::string, int>>& shots) {
    ShotSet s;
    s.k = shots.size();
    for (std::size_t i = 0; i < shots.size(); ++i) {
        s.examples.push_back({"shot" + std::to_string(i), shots[i].first, shots[i].second});
        (shots[i].second == 1 ? s.positives : s.negatives) += 1;
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_hetgraph, m) {
    m.doc() = "Heterogeneous document-word graph classification toolkit";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def("tokenize", [](const std::string& text, bool lowercase, bool remove_stopwords) {
        return tokenize(text, tokenizer(lowercase, remove_stopwords));
    }, py::arg("text"), py::arg("lowercase") = true, py::arg("remove_stopwords") = true);

    m.def("build_graph", [](const std::vector<std::string>& texts, std::size_t window_size, std::size_t min_df,
                            bool lowercase, bool remove_stopwords) {
        const auto corpus = corpus_from(texts, lowercase, remove_stopwords, min_df);
        const auto g = build_text_graph(corpus, {window_size, 1});
        py::dict d;
        d["n_doc"] = g.n_doc;
        d["n_word"] = g.n_word;
        d["vocab"] = corpus.vocab.tokens;
        d["tfidf"] = sparse_to_py(g.tfidf);
        d["adjacency"] = sparse_to_py(g.adjacency);
        d["normalized"] = sparse_to_py(g.normalized);
        return d;
    }, py::arg("texts"), py::arg("window_size") = 20, py::arg("min_df") = 1, py::arg("lowercase") = true,
       py::arg("remove_stopwords") = true);

    m.def("stratified_split", [](const std::vector<int>& labels, double train, double val, double test,
                                 std::uint64_t seed) {
        const auto s = stratified_split(labels, {train, val, test}, seed);
        std::vector<std::string> out;
        for (auto a : s.assignment) out.emplace_back(to_string(a));
        return out;
    }, py::arg("labels"), py::arg("train") = 0.7, py::arg("val") = 0.15, py::arg("test") = 0.15, py::arg("seed") = 0);

    m.def("train_gcn", [](const std::vector<std::string>& texts, const std::vector<int>& labels,
                          const std::vector<std::string>& split, std::optional<Matrix> embeddings, double lambda,
                          std::size_t epochs, std::size_t hidden, double dropout, double learning_rate,
                          std::uint64_t seed, std::size_t window_size, std::size_t min_df) {
        const auto corpus = corpus_from(texts, true, true, min_df);
        const auto g = build_text_graph(corpus, {window_size, 1});
        auto splits = split_from(split);
        const auto data = GcnData::make(g, embeddings, labels, splits);
        TrainingConfig cfg;
        cfg.lambda = lambda;
        cfg.epochs = epochs;
        cfg.hidden = hidden;
        cfg.dropout = dropout;
        cfg.adam.learning_rate = learning_rate;
        cfg.seed = seed;
        TrainResult r;
        {
            py::gil_scoped_release release;
            r = train(data, cfg);
        }
        const auto st = forward(data.features, data.propagation, r.params, lambda);
        py::list history;
        for (const auto& h : r.history) {
            history.append(py::dict(py::arg("epoch") = h.epoch, py::arg("loss") = h.loss,
                                    py::arg("val_accuracy") = h.val_accuracy, py::arg("val_f1") = h.val_f1));
        }
        py::dict d;
        d["history"] = history;
        d["best_epoch"] = r.best_epoch;
        d["probabilities"] = st.final_probs;
        d["predictions"] = predict(st.final_probs);
        d["test"] = to_py(to_json(evaluate(data, r.params, lambda, Split::test)));
        return d;
    }, py::arg("texts"), py::arg("labels"), py::arg("split"), py::arg("embeddings") = std::nullopt,
       py::arg("lambda_") = 0.2, py::arg("epochs") = 200, py::arg("hidden") = 200, py::arg("dropout") = 0.5,
       py::arg("learning_rate") = 1e-3, py::arg("seed") = 0, py::arg("window_size") = 20, py::arg("min_df") = 1);

    m.def("metrics", [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn, const std::string& averaging) {
        return to_py(to_json(metrics(ConfusionMatrix{tp, fp, fn, tn}, parse_averaging(averaging))));
    }, py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"), py::arg("averaging") = "weighted");

    m.def("confusion", [](const std::vector<int>& predictions, const std::vector<int>& labels) {
        return to_py(to_json(confusion(predictions, labels)));
    }, py::arg("predictions"), py::arg("labels"));

    m.def("paired_ttest", [](const std::vector<double>& a, const std::vector<double>& b, int comparisons) {
        return to_py(to_json(paired_ttest(a, b, comparisons)));
    }, py::arg("a"), py::arg("b"), py::arg("comparisons") = 1);

    m.def("build_zero_shot", [](const std::string& text) { return build_zero_shot(text); }, py::arg("text"));
    m.def("build_few_shot", [](const std::vector<std::pair<std::string, int>>& shots, const std::string& text) {
        return build_few_shot(shots_from(shots), text);
    }, py::arg("shots"), py::arg("text"));
    m.def("compose_shots", [](const std::vector<std::tuple<std::string, std::string, int>>& pool, std::size_t k,
                              std::uint64_t seed) {
        std::vector<LabeledExample> examples;
        for (const auto& [id, text, label] : pool) examples.push_back({id, text, label});
        std::vector<std::tuple<std::string, std::string, int>> out;
        for (const auto& e : compose_shots(examples, k, seed).examples) out.emplace_back(e.id, e.text, e.label);
        return out;
    }, py::arg("pool"), py::arg("k"), py::arg("seed") = 0);
    m.def("parse_label", [](const std::string& response) { return parse_label(response); }, py::arg("response"));

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = cli::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
