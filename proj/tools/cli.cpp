#include "cli.hpp"

#include "hetgraph/conv_head.hpp"
#include "hetgraph/digest.hpp"
#include "hetgraph/error.hpp"
#include "hetgraph/eval.hpp"
#include "hetgraph/gcn.hpp"
#include "hetgraph/interpret.hpp"
#include "hetgraph/prompting.hpp"
#include "parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace hetgraph::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// PipelineConfig

void PipelineConfig::validate() const {
    if (min_df < 1) throw UsageError("min_df must be at least 1");
    if (window_size < 1) throw UsageError("window_size must be at least 1");
    if (seeds.empty()) throw UsageError("at least one seed is required");
    if (threads < 1) throw UsageError("threads must be at least 1");
    if (jobs < 1) throw UsageError("jobs must be at least 1");
    if (conv_batch < 1) throw UsageError("conv_batch must be at least 1");
    if (conv_dim < 1 || conv_filters < 1 || conv_max_len < 1) throw UsageError("conv dimensions must be positive");
    if (!(conv_dropout >= 0.0 && conv_dropout < 1.0)) throw UsageError("conv_dropout must lie in [0, 1)");
    if (!(conv_learning_rate > 0.0)) throw UsageError("conv_learning_rate must be positive");
    TrainingConfig t;
    t.lambda = lambda;
    t.epochs = epochs;
    t.hidden = hidden;
    t.dropout = dropout;
    t.adam = {learning_rate, beta1, beta2, epsilon, weight_decay};
    hetgraph::validate(t);
}

json to_json(const PipelineConfig& c) {
    return {
        {"lowercase", c.lowercase},
        {"remove_stopwords", c.remove_stopwords},
        {"min_df", c.min_df},
        {"window_size", c.window_size},
        {"hidden", c.hidden},
        {"lambda", c.lambda},
        {"epochs", c.epochs},
        {"dropout", c.dropout},
        {"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"epsilon", c.epsilon},
        {"weight_decay", c.weight_decay},
        {"patience", c.patience},
        {"conv_dim", c.conv_dim},
        {"conv_filters", c.conv_filters},
        {"conv_epochs", c.conv_epochs},
        {"conv_batch", c.conv_batch},
        {"conv_dropout", c.conv_dropout},
        {"conv_learning_rate", c.conv_learning_rate},
        {"conv_max_len", c.conv_max_len},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
        {"split_seed", c.split_seed},
        {"seeds", c.seeds},
        {"threads", c.threads},
        {"jobs", c.jobs},
    };
}

PipelineConfig merge_config(PipelineConfig c, const json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    const json known = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("lowercase", c.lowercase);
        get("remove_stopwords", c.remove_stopwords);
        get("min_df", c.min_df);
        get("window_size", c.window_size);
        get("hidden", c.hidden);
        get("lambda", c.lambda);
        get("epochs", c.epochs);
        get("dropout", c.dropout);
        get("learning_rate", c.learning_rate);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
        get("epsilon", c.epsilon);
        get("weight_decay", c.weight_decay);
        get("patience", c.patience);
        get("conv_dim", c.conv_dim);
        get("conv_filters", c.conv_filters);
        get("conv_epochs", c.conv_epochs);
        get("conv_batch", c.conv_batch);
        get("conv_dropout", c.conv_dropout);
        get("conv_learning_rate", c.conv_learning_rate);
        get("conv_max_len", c.conv_max_len);
        get("split_seed", c.split_seed);
        get("seeds", c.seeds);
        get("threads", c.threads);
        get("jobs", c.jobs);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            for (const auto& [key, value] : s.items()) {
                if (key != "train" && key != "val" && key != "test") throw UsageError("unknown split key '" + key + "'");
            }
            c.split.train = s.value("train", c.split.train);
            c.split.val = s.value("val", c.split.val);
            c.split.test = s.value("test", c.split.test);
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what());
    }
    return c;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UsageError("config " + path.string() + " is not valid JSON");
    return merge_config(std::move(base), j);
}

// ---------------------------------------------------------------------------
// Corpus artifacts

void write_corpus_artifacts(const fs::path& dir, const CorpusArtifacts& a) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "vocab.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "vocab.tsv").string());
        out << "token\tdoc_freq\n";
        for (std::size_t i = 0; i < a.corpus.vocab.size(); ++i) {
            out << a.corpus.vocab.tokens[i] << '\t' << a.corpus.vocab.doc_freq[i] << '\n';
        }
    }
    std::ofstream out(dir / "corpus.jsonl", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "corpus.jsonl").string());
    for (std::size_t d = 0; d < a.ids.size(); ++d) {
        json j = {{"id", a.ids[d]}, {"label", a.labels[d] < 0 ? json(nullptr) : json(a.labels[d])}, {"tokens", a.corpus.docs[d]}};
        out << j.dump() << '\n';
    }
}

CorpusArtifacts read_corpus_artifacts(const fs::path& dir) {
    CorpusArtifacts a;
    std::ifstream vin(dir / "vocab.tsv", std::ios::binary);
    if (!vin) throw DataError("missing " + (dir / "vocab.tsv").string() + " (run ingest first)");
    std::string line;
    std::size_t line_no = 0;
    auto& vocab = a.corpus.vocab;
    while (std::getline(vin, line)) {
        if (line_no++ == 0) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("vocab.tsv:" + std::to_string(line_no) + ": expected token<TAB>doc_freq");
        const std::string token = line.substr(0, tab);
        if (!vocab.index.emplace(token, static_cast<TokenId>(vocab.tokens.size())).second) {
            throw DataError("vocab.tsv:" + std::to_string(line_no) + ": duplicate token '" + token + "'");
        }
        vocab.tokens.push_back(token);
        vocab.doc_freq.push_back(std::stoull(line.substr(tab + 1)));
    }
    std::ifstream cin(dir / "corpus.jsonl", std::ios::binary);
    if (!cin) throw DataError("missing " + (dir / "corpus.jsonl").string() + " (run ingest first)");
    line_no = 0;
    while (std::getline(cin, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("corpus.jsonl:" + std::to_string(line_no) + ": malformed JSON");
        try {
            a.ids.push_back(j.at("id").get<std::string>());
            a.labels.push_back(j.at("label").is_null() ? -1 : j.at("label").get<int>());
            auto tokens = j.at("tokens").get<std::vector<TokenId>>();
            for (TokenId t : tokens) {
                if (t >= vocab.size()) throw DataError("corpus.jsonl:" + std::to_string(line_no) + ": token id out of range");
            }
            a.corpus.docs.push_back(std::move(tokens));
        } catch (const json::exception& e) {
            throw DataError("corpus.jsonl:" + std::to_string(line_no) + ": " + e.what());
        }
    }
    vocab.n_docs = a.ids.size();
    return a;
}

namespace {

// ---------------------------------------------------------------------------
// Helpers

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t");
        const auto e = cur.find_last_not_of(" \t");
        if (b == std::string::npos) throw UsageError("empty element in list '" + s + "'");
        out.push_back(cur.substr(b, e - b + 1));
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw UsageError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw UsageError("not a number: '" + s + "'");
    return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw UsageError("not a nonnegative integer: '" + s + "'");
    }
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw UsageError("integer out of range: '" + s + "'");
    }
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw UsageError("not a boolean: '" + s + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("failed writing " + path.string());
}

std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext) {
    return stem + "_seed" + std::to_string(seed) + ext;
}

/// Flags that override PipelineConfig keys; each is stored as text and typed
/// against the config when resolved.
class ConfigFlags {
public:
    ConfigFlags(CLI::App* cmd, std::initializer_list<const char*> keys) {
        const json defaults = to_json(PipelineConfig{});
        cmd->add_option("--config", config_path_, "JSON config file (overridden by flags)");
        for (const char* key : keys) {
            std::string flag = std::string("--") + key;
            for (auto& ch : flag) {
                if (ch == '_') ch = '-';
            }
            std::string help = "config key " + std::string(key) + " (default " + defaults.at(key).dump() + ")";
            options_.emplace_back(key, cmd->add_option(flag, values_[key], help));
        }
    }

    [[nodiscard]] PipelineConfig resolve() const {
        PipelineConfig cfg;
        if (!config_path_.empty()) cfg = load_config(config_path_, cfg);
        const json current = to_json(cfg);
        json overlay = json::object();
        for (const auto& [key, opt] : options_) {
            if (opt->count() == 0) continue;
            const std::string& text = values_.at(key);
            const json& slot = current.at(key);
            if (key == "seeds") {
                json seeds = json::array();
                for (const auto& s : split_list(text)) seeds.push_back(parse_unsigned(s));
                overlay[key] = seeds;
            } else if (key == "split") {
                const auto parts = split_list(text);
                if (parts.size() != 3) throw UsageError("--split needs train,val,test ratios");
                overlay[key] = {{"train", parse_double(parts[0])}, {"val", parse_double(parts[1])}, {"test", parse_double(parts[2])}};
            } else if (slot.is_boolean()) {
                overlay[key] = parse_bool(text);
            } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
                overlay[key] = parse_unsigned(text);
            } else {
                overlay[key] = parse_double(text);
            }
        }
        cfg = merge_config(cfg, overlay);
        cfg.validate();
        return cfg;
    }

    [[nodiscard]] const std::string& config_path() const { return config_path_; }

private:
    std::string config_path_;
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, CLI::Option*>> options_;
};

/// Records inputs/outputs of one command and writes `manifest.<command>.json`.
class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> args)
        : command_(std::move(command)), args_(std::move(args)), start_(std::chrono::steady_clock::now()) {}

    void input(const fs::path& p) { inputs_[p.string()] = sha256_file(p); }
    void output(const fs::path& p) { outputs_.push_back(p); }
    void config(const PipelineConfig& c) { config_ = to_json(c); threads_ = c.threads; jobs_ = c.jobs; seeds_ = c.seeds; }
    void extra(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write(const fs::path& dir) const {
        json outputs = json::object();
        for (const auto& p : outputs_) outputs[p.string()] = sha256_file(p);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json j = {{"command", command_},   {"args", args_},       {"config", config_},
                  {"seeds", seeds_},       {"inputs", inputs_},   {"outputs", outputs},
                  {"threads", threads_},   {"jobs", jobs_},       {"wall_clock_seconds", wall},
                  {"version", "0.1.0"}};
        if (!extra_.empty()) j["details"] = extra_;
        write_file(dir / ("manifest." + command_ + ".json"), j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::chrono::steady_clock::time_point start_;
    json config_ = json::object();
    json inputs_ = json::object();
    std::vector<fs::path> outputs_;
    json extra_ = json::object();
    unsigned threads_ = 1;
    unsigned jobs_ = 1;
    std::vector<std::uint64_t> seeds_;
};

fs::path manifest_dir(const fs::path& output) {
    return output.has_parent_path() ? output.parent_path() : fs::path(".");
}

CorpusFormat guess_format(const fs::path& path, const std::string& flag) {
    if (!flag.empty()) return parse_corpus_format(flag);
    return path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

TrainingConfig training_config(const PipelineConfig& c, std::uint64_t seed) {
    TrainingConfig t;
    t.lambda = c.lambda;
    t.epochs = c.epochs;
    t.hidden = c.hidden;
    t.dropout = c.dropout;
    t.patience = c.patience;
    t.adam = {c.learning_rate, c.beta1, c.beta2, c.epsilon, c.weight_decay};
    t.seed = seed;
    return t;
}

std::string csv_history(const std::vector<EpochRecord>& h) {
    std::ostringstream out;
    write_history_csv(out, h);
    return out.str();
}

/// Graph file plus the digest of the corpus it was built from.
struct GraphInputs {
    CorpusArtifacts artifacts;
    TextGraph graph;
    SplitAssignment splits;
};

GraphInputs load_graph_inputs(const fs::path& corpus_dir, const fs::path& graph_path, const fs::path& split_path,
                              Manifest& manifest) {
    GraphInputs in;
    in.artifacts = read_corpus_artifacts(corpus_dir);
    manifest.input(corpus_dir / "corpus.jsonl");
    manifest.input(corpus_dir / "vocab.tsv");
    const std::string text = read_file(graph_path);
    manifest.input(graph_path);
    const json meta = json::parse(text, nullptr, false);
    if (meta.is_discarded()) throw DataError(graph_path.string() + " is not valid JSON");
    const std::string corpus_digest = sha256_file(corpus_dir / "corpus.jsonl");
    if (meta.value("corpus_sha256", std::string{}) != corpus_digest) {
        throw DataError("graph " + graph_path.string() + " was not built from " + (corpus_dir / "corpus.jsonl").string() +
                        " (digest mismatch)");
    }
    std::vector<std::string> ids, words;
    in.graph = import_graph_json(text, &ids, &words);
    if (ids != in.artifacts.ids || words != in.artifacts.corpus.vocab.tokens) {
        throw DataError("graph nodes do not match the corpus artifacts");
    }
    std::ifstream sin(split_path, std::ios::binary);
    if (!sin) throw DataError("cannot open split file " + split_path.string() + " (run split first)");
    in.splits = read_split_jsonl(sin, in.artifacts.ids);
    manifest.input(split_path);
    return in;
}

std::optional<EmbeddingMatrix> load_optional_embeddings(const std::string& path, Manifest& manifest) {
    if (path.empty()) return std::nullopt;
    manifest.input(path);
    return read_embeddings(path);
}

std::vector<double> default_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    return g;
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
    std::vector<std::string> args;
    std::ostream& out;
    std::ostream& err;
};

struct IngestCmd {
    std::string corpus, format, out_dir;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("ingest", "tokenize a corpus and build the vocabulary");
        c->add_option("--corpus", corpus, "JSONL or CSV corpus")->required();
        c->add_option("--format", format, "jsonl or csv (default from extension)");
        c->add_option("--out", out_dir, "output directory")->required();
        flags = std::make_unique<ConfigFlags>(c, std::initializer_list<const char*>{"lowercase", "remove_stopwords", "min_df"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        Manifest manifest("ingest", ctx.args);
        manifest.config(cfg);
        const auto raw = load_corpus(corpus, guess_format(corpus, format));
        manifest.input(corpus);
        TokenizerConfig rules = TokenizerConfig::defaults();
        rules.lowercase = cfg.lowercase;
        rules.remove_stopwords = cfg.remove_stopwords;
        CorpusArtifacts a;
        a.corpus = tokenize_corpus(raw, rules, cfg.min_df);
        for (const auto& d : raw) {
            a.ids.push_back(d.id);
            a.labels.push_back(d.label.value_or(-1));
        }
        write_corpus_artifacts(out_dir, a);
        manifest.output(fs::path(out_dir) / "corpus.jsonl");
        manifest.output(fs::path(out_dir) / "vocab.tsv");
        const auto empty = a.corpus.empty_documents();
        manifest.extra("documents", a.ids.size());
        manifest.extra("vocabulary", a.corpus.vocab.size());
        manifest.extra("empty_documents", empty.size());
        manifest.write(out_dir);
        ctx.err << "ingested " << a.ids.size() << " documents, vocabulary " << a.corpus.vocab.size();
        if (!empty.empty()) ctx.err << ", " << empty.size() << " empty documents kept as isolated nodes";
        ctx.err << '\n';
        return 0;
    }
};

struct SplitCmd {
    std::string corpus_dir, out;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("split", "stratified train/val/test split");
        c->add_option("--corpus-dir", corpus_dir, "ingest output directory")->required();
        c->add_option("--out", out, "split file (default <corpus-dir>/split.jsonl)");
        flags = std::make_unique<ConfigFlags>(c, std::initializer_list<const char*>{"split", "split_seed"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        Manifest manifest("split", ctx.args);
        manifest.config(cfg);
        const auto a = read_corpus_artifacts(corpus_dir);
        manifest.input(fs::path(corpus_dir) / "corpus.jsonl");
        const auto splits = stratified_split(a.labels, cfg.split, cfg.split_seed);
        const fs::path path = out.empty() ? fs::path(corpus_dir) / "split.jsonl" : fs::path(out);
        std::ostringstream buf;
        write_split_jsonl(buf, a.ids, splits);
        write_file(path, buf.str());
        manifest.output(path);
        manifest.write(manifest_dir(path));
        ctx.err << "split " << a.ids.size() << " documents: " << splits.indices(Split::train).size() << " train, "
                << splits.indices(Split::val).size() << " val, " << splits.indices(Split::test).size() << " test\n";
        return 0;
    }
};

struct BuildGraphCmd {
    std::string corpus_dir, out;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("build-graph", "build the document-word graph");
        c->add_option("--corpus-dir", corpus_dir, "ingest output directory")->required();
        c->add_option("--out", out, "graph file (default <corpus-dir>/graph.json)");
        flags = std::make_unique<ConfigFlags>(c, std::initializer_list<const char*>{"window_size", "threads"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        Manifest manifest("build-graph", ctx.args);
        manifest.config(cfg);
        const auto a = read_corpus_artifacts(corpus_dir);
        manifest.input(fs::path(corpus_dir) / "corpus.jsonl");
        manifest.input(fs::path(corpus_dir) / "vocab.tsv");
        const auto graph = build_text_graph(a.corpus, {cfg.window_size, cfg.threads});
        json j = json::parse(export_graph_json(graph, a.ids, a.corpus.vocab));
        j["corpus_sha256"] = sha256_file(fs::path(corpus_dir) / "corpus.jsonl");
        j["window_size"] = cfg.window_size;
        const fs::path path = out.empty() ? fs::path(corpus_dir) / "graph.json" : fs::path(out);
        write_file(path, j.dump() + "\n");
        manifest.output(path);
        manifest.extra("nodes", graph.n_doc + graph.n_word);
        manifest.extra("word_edges", graph.word_edges.size());
        manifest.write(manifest_dir(path));
        ctx.err << "graph: " << graph.n_doc << " documents, " << graph.n_word << " words, " << graph.tfidf.nnz()
                << " doc-word edges, " << graph.word_edges.size() << " word-word edges\n";
        return 0;
    }
};

struct GraphInputFlags {
    std::string corpus_dir, graph, split, embeddings;

    void setup(CLI::App* c) {
        c->add_option("--corpus-dir", corpus_dir, "ingest output directory")->required();
        c->add_option("--graph", graph, "graph file (default <corpus-dir>/graph.json)");
        c->add_option("--split", split, "split file (default <corpus-dir>/split.jsonl)");
        c->add_option("--embeddings", embeddings, "document embeddings (TGEM binary or CSV); identity features if absent");
    }

    [[nodiscard]] fs::path graph_path() const { return graph.empty() ? fs::path(corpus_dir) / "graph.json" : fs::path(graph); }
    [[nodiscard]] fs::path split_path() const { return split.empty() ? fs::path(corpus_dir) / "split.jsonl" : fs::path(split); }
};

struct TrainGcnCmd {
    GraphInputFlags inputs;
    std::string out_dir;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("train-gcn", "train the graph model, one run per seed");
        inputs.setup(c);
        c->add_option("--out", out_dir, "output directory")->required();
        flags = std::make_unique<ConfigFlags>(
            c, std::initializer_list<const char*>{"lambda", "epochs", "hidden", "dropout", "learning_rate", "beta1", "beta2",
                                                  "epsilon", "weight_decay", "patience", "seeds", "jobs", "threads"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        Manifest manifest("train-gcn", ctx.args);
        manifest.config(cfg);
        auto in = load_graph_inputs(inputs.corpus_dir, inputs.graph_path(), inputs.split_path(), manifest);
        const auto emb = load_optional_embeddings(inputs.embeddings, manifest);
        const auto data = GcnData::make(in.graph, emb, in.artifacts.labels, in.splits);

        const auto& seeds = cfg.seeds;
        std::vector<TrainResult> results(seeds.size());
        std::vector<MetricsReport> test_reports(seeds.size());
        std::vector<std::optional<MetricsReport>> val_reports(seeds.size());
        const bool has_val = !in.splits.indices(Split::val).empty();
        detail::for_each_chunk(seeds.size(), cfg.jobs, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                results[i] = train(data, training_config(cfg, seeds[i]));
                test_reports[i] = evaluate(data, results[i].params, cfg.lambda, Split::test);
                if (has_val) {
                    try {
                        val_reports[i] = evaluate(data, results[i].params, cfg.lambda, Split::val);
                    } catch (const DataError&) {
                    }
                }
            }
        });

        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            const auto ck = dir / seed_file("checkpoint", seeds[i], ".bin");
            save_checkpoint(ck, results[i].params);
            manifest.output(ck);
            const auto hist = dir / seed_file("history", seeds[i], ".csv");
            write_file(hist, csv_history(results[i].history));
            manifest.output(hist);
            json m = {{"seed", seeds[i]}, {"lambda", cfg.lambda}, {"best_epoch", results[i].best_epoch},
                      {"test", to_json(test_reports[i])}};
            if (val_reports[i]) m["val"] = to_json(*val_reports[i]);
            const auto mp = dir / seed_file("metrics", seeds[i], ".json");
            write_file(mp, m.dump(2) + "\n");
            manifest.output(mp);
        }
        const auto agg = aggregate(test_reports);
        const auto ap = dir / "aggregate.json";
        write_file(ap, to_json(agg).dump(2) + "\n");
        manifest.output(ap);
        manifest.write(dir);
        ctx.out << render_table({{"gcn (lambda=" + json(cfg.lambda).dump() + ")", agg}});
        return 0;
    }
};

struct AblateCmd {
    GraphInputFlags inputs;
    std::string out, grid;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("ablate", "test-split accuracy and F1 over a grid of lambda values");
        inputs.setup(c);
        c->add_option("--out", out, "ablation CSV")->required();
        c->add_option("--grid", grid, "comma-separated lambda values (default 0,0.1,...,1)");
        flags = std::make_unique<ConfigFlags>(
            c, std::initializer_list<const char*>{"epochs", "hidden", "dropout", "learning_rate", "beta1", "beta2", "epsilon",
                                                  "weight_decay", "patience", "seeds", "jobs", "threads"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        std::vector<double> values;
        if (grid.empty()) values = default_grid();
        else for (const auto& s : split_list(grid)) values.push_back(parse_double(s));
        Manifest manifest("ablate", ctx.args);
        manifest.config(cfg);
        manifest.extra("grid", values);
        auto in = load_graph_inputs(inputs.corpus_dir, inputs.graph_path(), inputs.split_path(), manifest);
        const auto emb = load_optional_embeddings(inputs.embeddings, manifest);
        const auto data = GcnData::make(in.graph, emb, in.artifacts.labels, in.splits);
        const auto rows = ablate_lambda(data, values, training_config(cfg, 0), cfg.seeds, cfg.jobs);
        std::ostringstream csv;
        write_ablation_csv(csv, rows);
        write_file(out, csv.str());
        manifest.output(out);
        manifest.write(manifest_dir(out));
        char line[128];
        ctx.out << "lambda  accuracy         f1\n";
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%6.3f  %.4f_{%.4f}  %.4f_{%.4f}\n", r.lambda, r.accuracy, r.accuracy_std, r.f1,
                          r.f1_std);
            ctx.out << line;
        }
        return 0;
    }
};

struct TrainConvCmd {
    std::string corpus_dir, split, sequences, out_dir;
    std::unique_ptr<ConfigFlags> flags;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("train-conv", "train the convolutional head on token embeddings");
        c->add_option("--corpus-dir", corpus_dir, "ingest output directory")->required();
        c->add_option("--split", split, "split file (default <corpus-dir>/split.jsonl)");
        c->add_option("--sequences", sequences, "token-embedding file (TGSE)")->required();
        c->add_option("--out", out_dir, "output directory")->required();
        flags = std::make_unique<ConfigFlags>(
            c, std::initializer_list<const char*>{"conv_dim", "conv_filters", "conv_epochs", "conv_batch", "conv_dropout",
                                                  "conv_learning_rate", "conv_max_len", "beta1", "beta2", "epsilon",
                                                  "seeds", "jobs"});
    }

    int run(Context& ctx) const {
        const auto cfg = flags->resolve();
        Manifest manifest("train-conv", ctx.args);
        manifest.config(cfg);
        const auto a = read_corpus_artifacts(corpus_dir);
        manifest.input(fs::path(corpus_dir) / "corpus.jsonl");
        const fs::path split_path = split.empty() ? fs::path(corpus_dir) / "split.jsonl" : fs::path(split);
        std::ifstream sin(split_path, std::ios::binary);
        if (!sin) throw DataError("cannot open split file " + split_path.string());
        const auto splits = read_split_jsonl(sin, a.ids);
        manifest.input(split_path);

        std::unordered_set<std::string> known(a.ids.begin(), a.ids.end());
        auto seqs = load_token_embeddings(sequences, cfg.conv_dim, cfg.conv_max_len, &known);
        manifest.input(sequences);
        std::unordered_map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < a.ids.size(); ++i) pos.emplace(a.ids[i], i);
        std::vector<Matrix> aligned(a.ids.size());
        for (auto& s : seqs) {
            auto& slot = aligned[pos.at(s.id)];
            if (slot.rows() > 0) throw DataError("token-embedding file repeats id '" + s.id + "'");
            slot = std::move(s.values);
        }

        ConvTrainConfig base;
        base.head.dim = cfg.conv_dim;
        base.head.filters = cfg.conv_filters;
        base.head.dropout = cfg.conv_dropout;
        base.head.max_len = cfg.conv_max_len;
        base.adam = {cfg.conv_learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, 0.0};
        base.epochs = cfg.conv_epochs;
        base.batch_size = cfg.conv_batch;

        const auto& seeds = cfg.seeds;
        std::vector<ConvTrainResult> results(seeds.size());
        std::vector<MetricsReport> reports(seeds.size());
        detail::for_each_chunk(seeds.size(), cfg.jobs, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                auto c = base;
                c.seed = seeds[i];
                results[i] = train_conv(aligned, a.labels, splits, c);
                reports[i] = evaluate_conv(aligned, a.labels, splits, results[i].params, Split::test);
            }
        });
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            const auto ck = dir / seed_file("conv_checkpoint", seeds[i], ".bin");
            save_conv_checkpoint(ck, results[i].params);
            manifest.output(ck);
            const auto hist = dir / seed_file("conv_history", seeds[i], ".csv");
            write_file(hist, csv_history(results[i].history));
            manifest.output(hist);
            const auto mp = dir / seed_file("conv_metrics", seeds[i], ".json");
            write_file(mp, json({{"seed", seeds[i]}, {"test", to_json(reports[i])}}).dump(2) + "\n");
            manifest.output(mp);
        }
        const auto agg = aggregate(reports);
        const auto ap = dir / "conv_aggregate.json";
        write_file(ap, to_json(agg).dump(2) + "\n");
        manifest.output(ap);
        manifest.write(dir);
        ctx.out << render_table({{"conv head", agg}});
        return 0;
    }
};

struct PromptsCmd {
    std::string corpus, format, split, out, store, canned, endpoint, model, token_env = "HETGRAPH_API_TOKEN";
    std::size_t k = 0;
    std::uint64_t shot_seed = 0;
    double rate = 1.0;
    std::size_t retries = 2;
    double backoff = 1.0;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("prompts", "build zero/few-shot prompts for the test split and optionally send them");
        c->add_option("--corpus", corpus, "raw JSONL or CSV corpus")->required();
        c->add_option("--format", format, "jsonl or csv (default from extension)");
        c->add_option("--split", split, "split file")->required();
        c->add_option("--k", k, "shots: 0, 3 or 10")->check(CLI::IsMember({0, 3, 10}));
        c->add_option("--shot-seed", shot_seed, "seed for shot selection");
        c->add_option("--out", out, "prompt JSONL")->required();
        c->add_option("--store", store, "transcript store (JSONL); required when sending");
        c->add_option("--canned", canned, "answer every prompt with this response instead of calling a model");
        c->add_option("--endpoint", endpoint, "chat-completion endpoint URL");
        c->add_option("--model", model, "model tag sent to the endpoint");
        c->add_option("--token-env", token_env, "environment variable holding the API token");
        c->add_option("--rate", rate, "requests per second (0 = unpaced)");
        c->add_option("--retries", retries, "retries after a transport failure");
        c->add_option("--backoff", backoff, "initial retry backoff in seconds");
    }

    int run(Context& ctx) const {
        Manifest manifest("prompts", ctx.args);
        const auto raw = load_corpus(corpus, guess_format(corpus, format));
        manifest.input(corpus);
        std::vector<std::string> ids;
        for (const auto& d : raw) ids.push_back(d.id);
        std::ifstream sin(split, std::ios::binary);
        if (!sin) throw DataError("cannot open split file " + split);
        const auto splits = read_split_jsonl(sin, ids);
        manifest.input(split);

        std::vector<LabeledExample> pool;
        std::vector<std::size_t> eval_docs;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (!raw[i].label) continue;
            if (splits.assignment[i] == Split::train) pool.push_back({raw[i].id, raw[i].text, *raw[i].label});
            else if (splits.assignment[i] == Split::test) eval_docs.push_back(i);
        }
        if (eval_docs.empty()) throw DataError("the test split has no labeled documents");
        std::unordered_set<std::string> exclude;
        for (std::size_t i : eval_docs) exclude.insert(raw[i].id);
        const auto shots = compose_shots(pool, k, shot_seed, exclude);

        std::vector<std::string> prompts;
        std::ostringstream lines;
        for (std::size_t n = 0; n < eval_docs.size(); ++n) {
            const auto& doc = raw[eval_docs[n]];
            prompts.push_back(k == 0 ? build_zero_shot(doc.text) : build_few_shot(shots, doc.text));
            lines << json({{"index", n}, {"id", doc.id}, {"label", *doc.label}, {"prompt", prompts.back()}}).dump() << '\n';
        }
        write_file(out, lines.str());
        manifest.output(out);
        json shot_ids = json::array();
        for (const auto& ex : shots.examples) shot_ids.push_back({{"id", ex.id}, {"label", ex.label}});
        manifest.extra("k", k);
        manifest.extra("shot_seed", shot_seed);
        manifest.extra("shots", shot_ids);

        const bool send = !canned.empty() || !endpoint.empty();
        if (send) {
            if (store.empty()) throw UsageError("--store is required when sending prompts");
            if (!canned.empty() && !endpoint.empty()) throw UsageError("--canned and --endpoint are exclusive");
            std::unique_ptr<CompletionClient> client;
            if (!canned.empty()) client = std::make_unique<CannedClient>(canned);
            else client = std::make_unique<HttpChatClient>(HttpClientConfig{endpoint, model, token_env});
            BatchOptions opts;
            opts.rate = rate;
            opts.retries = retries;
            opts.backoff_seconds = backoff;
            opts.store = fs::path(store);
            const auto transcripts = run_batch(*client, prompts, opts);
            std::size_t parse_fail = 0, transport_fail = 0;
            for (const auto& t : transcripts) {
                parse_fail += t.meta.status == TranscriptStatus::parse_failure;
                transport_fail += t.meta.status == TranscriptStatus::transport_failure;
            }
            manifest.output(store);
            ctx.err << transcripts.size() << " transcripts, " << parse_fail << " parse failures, " << transport_fail
                    << " transport failures\n";
        }
        manifest.write(manifest_dir(out));
        ctx.err << "wrote " << prompts.size() << " prompts (" << k << "-shot)\n";
        return 0;
    }
};

struct EvalCmd {
    std::string counts, predictions, transcripts, prompts, averaging = "weighted", out, ttest_a, ttest_b;
    bool failures_as_negative = false;
    int comparisons = 1;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("eval", "metrics from counts, predictions or transcripts; optional paired t-test");
        auto* oc = c->add_option("--counts", counts, "JSON {tp, fp, fn, tn}");
        auto* op = c->add_option("--predictions", predictions, "CSV with label and prediction columns");
        auto* ot = c->add_option("--transcripts", transcripts, "transcript store from prompts");
        oc->excludes(op)->excludes(ot);
        op->excludes(ot);
        c->add_option("--prompts", prompts, "prompt JSONL holding the labels for --transcripts");
        c->add_option("--averaging", averaging, "weighted, macro or per_class");
        c->add_flag("--failures-as-negative", failures_as_negative, "count parse/transport failures as negative predictions");
        c->add_option("--ttest-a", ttest_a, "per-seed scores of system A, one number per line");
        c->add_option("--ttest-b", ttest_b, "per-seed scores of system B");
        c->add_option("--comparisons", comparisons, "number of comparisons for Bonferroni correction")->check(CLI::PositiveNumber);
        c->add_option("--out", out, "write the JSON report here instead of stdout");
    }

    static std::vector<double> read_scores(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        std::vector<double> out;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto e = line.find_last_not_of(" \t\r");
            try {
                out.push_back(parse_double(line.substr(b, e - b + 1)));
            } catch (const UsageError&) {
                throw DataError(path + ":" + std::to_string(n) + ": not a number");
            }
        }
        return out;
    }

    static ConfusionMatrix read_predictions(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError(path + ": empty predictions file");
        auto header = split_list(line);
        std::size_t li = header.size(), pi = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == "label") li = i;
            if (header[i] == "prediction") pi = i;
        }
        if (li == header.size() || pi == header.size()) throw DataError(path + ": header needs label and prediction columns");
        std::vector<int> labels, preds;
        std::size_t n = 1;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty() || line == "\r") continue;
            if (line.back() == '\r') line.pop_back();
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream ss(line);
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() != header.size()) throw DataError(path + ":" + std::to_string(n) + ": wrong column count");
            auto bin = [&](const std::string& s) {
                if (s != "0" && s != "1") throw DataError(path + ":" + std::to_string(n) + ": expected 0 or 1");
                return s == "1" ? 1 : 0;
            };
            labels.push_back(bin(cells[li]));
            preds.push_back(bin(cells[pi]));
        }
        return confusion(preds, labels);
    }

    int run(Context& ctx) const {
        const auto avg = parse_averaging(averaging);
        json report = json::object();
        if (!counts.empty()) {
            const json j = json::parse(read_file(counts), nullptr, false);
            if (j.is_discarded()) throw DataError(counts + " is not valid JSON");
            const auto cm = confusion_from_json(j);
            report["confusion"] = to_json(cm);
            report["metrics"] = to_json(metrics(cm, avg));
        } else if (!predictions.empty()) {
            const auto cm = read_predictions(predictions);
            report["confusion"] = to_json(cm);
            report["metrics"] = to_json(metrics(cm, avg));
        } else if (!transcripts.empty()) {
            if (prompts.empty()) throw UsageError("--transcripts needs --prompts for the labels");
            std::vector<int> labels;
            std::vector<std::string> prompt_texts;
            std::istringstream in(read_file(prompts));
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const json j = json::parse(line, nullptr, false);
                if (j.is_discarded()) throw DataError(prompts + ": malformed line");
                labels.push_back(j.at("label").get<int>());
                prompt_texts.push_back(j.at("prompt").get<std::string>());
            }
            const auto records = latest_transcripts(TranscriptStore(transcripts).load());
            if (records.size() != labels.size()) {
                throw DataError("store has " + std::to_string(records.size()) + " transcripts for " +
                                std::to_string(labels.size()) + " prompts");
            }
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (records[i].meta.index != i || records[i].prompt != prompt_texts[i]) {
                    throw DataError("transcript " + std::to_string(i) + " does not match the prompt file");
                }
            }
            const auto ev = evaluate_transcripts(records, labels, failures_as_negative);
            report["confusion"] = to_json(ev.confusion);
            report["metrics"] = to_json(metrics(ev.confusion, avg));
            report["parse_failures"] = ev.parse_failures;
            report["transport_failures"] = ev.transport_failures;
        }
        if (!ttest_a.empty() || !ttest_b.empty()) {
            if (ttest_a.empty() || ttest_b.empty()) throw UsageError("--ttest-a and --ttest-b go together");
            const auto a = read_scores(ttest_a);
            const auto b = read_scores(ttest_b);
            report["ttest"] = to_json(paired_ttest(a, b, comparisons));
        }
        if (report.empty()) throw UsageError("eval needs --counts, --predictions, --transcripts or a t-test");
        const std::string text = report.dump(2) + "\n";
        if (out.empty()) ctx.out << text;
        else write_file(out, text);
        return 0;
    }
};

struct ExportCmd {
    std::string corpus_dir, graph, doc_ids, dot, json_out, frequencies;
    std::size_t docs = 10;
    std::size_t k = 5;
    std::size_t top = 0;

    void setup(CLI::App& app) {
        auto* c = app.add_subcommand("export", "salience graph (DOT/JSON) and label word frequencies");
        c->add_option("--corpus-dir", corpus_dir, "ingest output directory")->required();
        c->add_option("--graph", graph, "graph file (default <corpus-dir>/graph.json)");
        c->add_option("--docs", docs, "use the first N documents");
        c->add_option("--doc-ids", doc_ids, "comma-separated document ids (overrides --docs)");
        c->add_option("--k", k, "top words per document");
        c->add_option("--dot", dot, "DOT output");
        c->add_option("--json", json_out, "JSON output");
        c->add_option("--frequencies", frequencies, "label word-frequency JSON output");
        c->add_option("--top", top, "keep only the N most frequent words per label (0 = all)");
    }

    int run(Context& ctx) const {
        if (dot.empty() && json_out.empty() && frequencies.empty()) {
            throw UsageError("export needs at least one of --dot, --json, --frequencies");
        }
        Manifest manifest("export", ctx.args);
        const auto a = read_corpus_artifacts(corpus_dir);
        manifest.input(fs::path(corpus_dir) / "corpus.jsonl");
        fs::path first_output;
        auto note = [&](const fs::path& p) {
            manifest.output(p);
            if (first_output.empty()) first_output = p;
        };
        if (!dot.empty() || !json_out.empty()) {
            const fs::path gp = graph.empty() ? fs::path(corpus_dir) / "graph.json" : fs::path(graph);
            const std::string text = read_file(gp);
            manifest.input(gp);
            const json meta = json::parse(text, nullptr, false);
            if (meta.is_discarded() || meta.value("corpus_sha256", std::string{}) != sha256_file(fs::path(corpus_dir) / "corpus.jsonl")) {
                throw DataError("graph " + gp.string() + " does not belong to this corpus (digest mismatch)");
            }
            const auto g = import_graph_json(text);
            std::vector<std::string> selected;
            if (!doc_ids.empty()) selected = split_list(doc_ids);
            else selected.assign(a.ids.begin(), a.ids.begin() + static_cast<std::ptrdiff_t>(std::min(docs, a.ids.size())));
            const auto sg = export_salience_graph(selected, a.ids, a.corpus.vocab, g.tfidf, g.word_edges, k);
            if (!dot.empty()) {
                write_file(dot, sg.to_dot());
                note(dot);
            }
            if (!json_out.empty()) {
                write_file(json_out, sg.to_json().dump(2) + "\n");
                note(json_out);
            }
            ctx.err << "salience graph: " << sg.nodes.size() << " nodes, " << sg.edges.size() << " edges\n";
        }
        if (!frequencies.empty()) {
            json tables = json::array();
            for (int label : {0, 1}) {
                try {
                    auto t = label_word_frequencies(a.corpus, a.labels, label);
                    if (top > 0 && t.entries.size() > top) t.entries.resize(top);
                    tables.push_back(to_json(t));
                } catch (const DataError&) {
                    // a label with no documents simply has no table
                }
            }
            if (tables.empty()) throw DataError("corpus has no labeled documents");
            write_file(frequencies, json({{"tables", tables}}).dump(2) + "\n");
            note(frequencies);
        }
        manifest.write(manifest_dir(first_output));
        return 0;
    }
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    return 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("hetgraph: document-word graph classification pipeline", "hetgraph");
    app.require_subcommand(1);
    app.set_version_flag("--version", "hetgraph 0.1.0");
    IngestCmd ingest;
    SplitCmd split;
    BuildGraphCmd build;
    TrainGcnCmd train_gcn;
    TrainConvCmd train_conv;
    AblateCmd ablate;
    PromptsCmd prompts;
    EvalCmd eval;
    ExportCmd export_cmd;
    ingest.setup(app);
    split.setup(app);
    build.setup(app);
    train_gcn.setup(app);
    train_conv.setup(app);
    ablate.setup(app);
    prompts.setup(app);
    eval.setup(app);
    export_cmd.setup(app);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? 0 : 1;
    }

    Context ctx{args, out, err};
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "ingest") return ingest.run(ctx);
        if (name == "split") return split.run(ctx);
        if (name == "build-graph") return build.run(ctx);
        if (name == "train-gcn") return train_gcn.run(ctx);
        if (name == "train-conv") return train_conv.run(ctx);
        if (name == "ablate") return ablate.run(ctx);
        if (name == "prompts") return prompts.run(ctx);
        if (name == "eval") return eval.run(ctx);
        if (name == "export") return export_cmd.run(ctx);
    } catch (const Error& e) {
        err << "hetgraph " << name << ": " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const json::exception& e) {
        err << "hetgraph " << name << ": malformed JSON input: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "hetgraph " << name << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "hetgraph " << name << ": " << e.what() << '\n';
        return 2;
    }
    err << "unknown command " << name << '\n';
    return 1;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace hetgraph::cli
