#include <doctest.h>

#include "cli_fixture.hpp"
#include "hetgraph/error.hpp"
#include "hetgraph/gcn.hpp"
#include "hetgraph/interpret.hpp"

#include <fstream>

using namespace hetgraph;
using fixture::run;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFast{"--epochs", "15", "--hidden", "8", "--learning-rate", "0.01", "--seeds", "0,1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::size_t line_count(const std::string& s) {
    return std::size_t(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("ingest writes artifacts and reruns identically") {
    const auto dir = fixture::scratch("cli_ingest");
    const auto raw = fixture::write_topic_corpus(dir, 30, 1);
    const auto a = dir / "a", b = dir / "b";
    REQUIRE(run({"ingest", "--corpus", raw.string(), "--out", a.string(), "--min-df", "1"}).code == 0);
    REQUIRE(run({"ingest", "--corpus", raw.string(), "--out", b.string(), "--min-df", "1"}).code == 0);
    CHECK(fs::exists(a / "vocab.tsv"));
    CHECK(fs::exists(a / "manifest.ingest.json"));
    CHECK(fixture::artifact_digests(a) == fixture::artifact_digests(b));

    const auto art = cli::read_corpus_artifacts(a);
    CHECK(art.ids.size() == 30);
    CHECK(art.labels[1] == 1);

    const auto manifest = nlohmann::json::parse(fixture::slurp(a / "manifest.ingest.json"));
    CHECK(manifest["command"] == "ingest");
    CHECK(manifest["inputs"].contains(raw.string()));
    CHECK(manifest["outputs"][(a / "corpus.jsonl").string()] == sha256_file(a / "corpus.jsonl"));
}

TEST_CASE("malformed corpus line gives a data error naming the line") {
    const auto dir = fixture::scratch("cli_bad");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"id":"a","text":"x","label":1})" << "\n" << "{oops\n";
    }
    const auto r = run({"ingest", "--corpus", (dir / "bad.jsonl").string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(run({"bogus"}).code == 1);
    CHECK(run({}).code == 1);
    CHECK(run({"ingest", "--corpus", "/nonexistent/x.jsonl", "--out", "/tmp/hetgraph_never"}).code == 2);
    const auto dir = fixture::scratch("cli_codes");
    const auto raw = fixture::write_topic_corpus(dir, 30, 2);
    const auto d = (dir / "c").string();
    REQUIRE(fixture::prepare(raw, dir / "c"));
    CHECK(run({"train-gcn", "--corpus-dir", d, "--out", d + "/r", "--lambda", "2"}).code == 1);
    CHECK(run({"train-gcn", "--corpus-dir", d, "--out", d + "/r", "--learning-rate", "1e300", "--epochs", "3",
               "--hidden", "4", "--seeds", "0"})
              .code == 3);
}

TEST_CASE("train-gcn, lambda boundary and ablation") {
    const auto dir = fixture::scratch("cli_train");
    const auto raw = fixture::write_topic_corpus(dir, 40, 3);
    const auto c = dir / "c";
    REQUIRE(fixture::prepare(raw, c));
    const auto d = c.string();

    const auto r = run(with({"train-gcn", "--corpus-dir", d, "--out", d + "/gcn"}, kFast));
    REQUIRE(r.code == 0);
    for (int s : {0, 1}) {
        CHECK(fs::exists(c / "gcn" / ("checkpoint_seed" + std::to_string(s) + ".bin")));
        CHECK(fs::exists(c / "gcn" / ("metrics_seed" + std::to_string(s) + ".json")));
        CHECK(fs::exists(c / "gcn" / ("history_seed" + std::to_string(s) + ".csv")));
    }
    CHECK(r.out.find("Precision") != std::string::npos);

    // --lambda 0 reproduces the head-only predictions of the saved parameters
    REQUIRE(run(with({"train-gcn", "--corpus-dir", d, "--out", d + "/lin", "--lambda", "0"}, kFast)).code == 0);
    const auto ck = load_checkpoint(c / "lin" / "checkpoint_seed0.bin");
    const auto art = cli::read_corpus_artifacts(c);
    std::ifstream sin(c / "split.jsonl");
    const auto splits = read_split_jsonl(sin, art.ids);
    std::vector<std::string> words;
    const auto graph = import_graph_json(fixture::slurp(c / "graph.json"), nullptr, &words);
    const auto data = GcnData::make(graph, std::nullopt, art.labels, splits);
    const auto st = forward(data.features, data.propagation, ck, 0.0);
    CHECK(predict(st.final_probs) == predict(st.head_probs));
    const auto m = nlohmann::json::parse(fixture::slurp(c / "lin" / "metrics_seed0.json"));
    CHECK(m["test"]["f1"].get<double>() == evaluate(data, ck, 0.0, Split::test).f1);

    // --seeds 1: single run, zero spread
    REQUIRE(run({"train-gcn", "--corpus-dir", d, "--out", d + "/one", "--epochs", "15", "--hidden", "8", "--seeds", "1"}).code == 0);
    const auto agg = nlohmann::json::parse(fixture::slurp(c / "one" / "aggregate.json"));
    CHECK(agg["runs"] == 1);

    const auto csv = c / "ablate.csv";
    REQUIRE(run(with({"ablate", "--corpus-dir", d, "--out", csv.string()}, kFast)).code == 0);
    const auto text = fixture::slurp(csv);
    CHECK(line_count(text) == 12);
    REQUIRE(run(with({"ablate", "--corpus-dir", d, "--out", csv.string(), "--grid", "0.2"}, kFast)).code == 0);
    CHECK(line_count(fixture::slurp(csv)) == 2);
    REQUIRE(run(with({"ablate", "--corpus-dir", d, "--out", csv.string(), "--grid", "1,0.5,0"}, kFast)).code == 0);
    const auto sorted = fixture::slurp(csv);
    CHECK(sorted.find("\n0,") < sorted.find("\n0.5,"));
    CHECK(sorted.find("\n0.5,") < sorted.find("\n1,"));
}

TEST_CASE("train-gcn rejects a graph from another corpus") {
    const auto dir = fixture::scratch("cli_digest");
    REQUIRE(fixture::prepare(fixture::write_topic_corpus(dir, 30, 4), dir / "a"));
    REQUIRE(fixture::prepare(fixture::write_topic_corpus(dir, 32, 5), dir / "b"));
    const auto r = run(with({"train-gcn", "--corpus-dir", (dir / "a").string(), "--graph", (dir / "b" / "graph.json").string(),
                             "--out", (dir / "r").string()},
                            kFast));
    CHECK(r.code == 2);
}

TEST_CASE("manifest arguments reproduce the run") {
    const auto dir = fixture::scratch("cli_manifest");
    const auto c = dir / "c";
    REQUIRE(fixture::prepare(fixture::write_topic_corpus(dir, 30, 6), c));
    const auto out = (c / "gcn").string();
    REQUIRE(run(with({"train-gcn", "--corpus-dir", c.string(), "--out", out}, kFast)).code == 0);
    const auto manifest = nlohmann::json::parse(fixture::slurp(c / "gcn" / "manifest.train-gcn.json"));
    CHECK(manifest["config"]["epochs"] == 15);
    CHECK(manifest["seeds"] == nlohmann::json::array({0, 1}));
    fs::remove_all(out);
    REQUIRE(run(manifest["args"].get<std::vector<std::string>>()).code == 0);
    for (const auto& [path, digest] : manifest["outputs"].items()) CHECK(sha256_file(path) == digest);
}

TEST_CASE("config precedence: flag over file over default") {
    const auto dir = fixture::scratch("cli_config");
    const auto c = dir / "c";
    REQUIRE(fixture::prepare(fixture::write_topic_corpus(dir, 30, 7), c));
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"epochs": 4, "hidden": 6, "lambda": 0.7, "seeds": [3]})";
    }
    REQUIRE(run({"train-gcn", "--corpus-dir", c.string(), "--out", (c / "r").string(), "--config",
                 (dir / "cfg.json").string(), "--lambda", "0.3"})
                .code == 0);
    const auto m = nlohmann::json::parse(fixture::slurp(c / "r" / "manifest.train-gcn.json"));
    CHECK(m["config"]["lambda"] == 0.3);
    CHECK(m["config"]["epochs"] == 4);
    CHECK(m["config"]["dropout"] == 0.5);
    CHECK(fs::exists(c / "r" / "checkpoint_seed3.bin"));

    {
        std::ofstream cfg(dir / "bad.json");
        cfg << R"({"epochz": 4})";
    }
    CHECK(run({"train-gcn", "--corpus-dir", c.string(), "--out", (c / "r").string(), "--config", (dir / "bad.json").string()})
              .code == 1);

    cli::PipelineConfig base;
    CHECK(cli::merge_config(base, nlohmann::json::parse(R"({"min_df": 2})")).min_df == 2);
    CHECK_THROWS_AS(cli::merge_config(base, nlohmann::json::parse(R"({"lambda": 3})")).validate(), UsageError);
}

TEST_CASE("prompts, canned transcripts and eval") {
    const auto dir = fixture::scratch("cli_prompts");
    const auto raw = fixture::write_topic_corpus(dir, 40, 8);
    const auto c = dir / "c";
    REQUIRE(fixture::prepare(raw, c));
    const auto prompts = (dir / "p3.jsonl").string();
    REQUIRE(run({"prompts", "--corpus", raw.string(), "--split", (c / "split.jsonl").string(), "--k", "3", "--out",
                 prompts, "--store", (dir / "t.jsonl").string(), "--canned", "minority stress"})
                .code == 0);
    std::istringstream in(fixture::slurp(prompts));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const auto p = j["prompt"].get<std::string>();
        std::size_t pos = 0, neg = 0;
        for (auto at = p.find("Output:\n"); at != std::string::npos; at = p.find("Output:\n", at + 1)) {
            const auto rest = p.substr(at + 8, 18);
            if (rest.rfind("no minority stress", 0) == 0) ++neg;
            else ++pos;
        }
        CHECK(pos == 2);
        CHECK(neg == 1);
        ++n;
    }
    CHECK(n == 6);   // 15% of each 20-document class

    const auto r = run({"eval", "--transcripts", (dir / "t.jsonl").string(), "--prompts", prompts});
    REQUIRE(r.code == 0);
    const auto rep = nlohmann::json::parse(r.out);
    CHECK(rep["confusion"]["tp"] == 3);
    CHECK(rep["confusion"]["fp"] == 3);

    CHECK(run({"prompts", "--corpus", raw.string(), "--split", (c / "split.jsonl").string(), "--k", "4", "--out",
               prompts})
              .code == 1);
}

TEST_CASE("eval on the 10-shot confusion counts") {
    const auto dir = fixture::scratch("cli_eval");
    {
        std::ofstream out(dir / "counts.json");
        out << R"({"tp": 27, "fp": 18, "fn": 159, "tn": 665})";
    }
    const auto r = run({"eval", "--counts", (dir / "counts.json").string()});
    REQUIRE(r.code == 0);
    const auto m = nlohmann::json::parse(r.out)["metrics"];
    CHECK(std::abs(m["precision"].get<double>() - 0.7627) < 5e-4);
    CHECK(std::abs(m["recall"].get<double>() - 0.7963) < 5e-4);
    CHECK(std::abs(m["f1"].get<double>() - 0.7437) < 5e-4);
    CHECK(std::abs(m["accuracy"].get<double>() - 0.7963) < 5e-4);

    {
        std::ofstream a(dir / "a.txt"), b(dir / "b.txt");
        a << "1\n0\n1\n0\n1\n";
        b << "0\n0\n0\n0\n0\n";
    }
    const auto t = run({"eval", "--ttest-a", (dir / "a.txt").string(), "--ttest-b", (dir / "b.txt").string(),
                        "--comparisons", "3"});
    REQUIRE(t.code == 0);
    const auto tt = nlohmann::json::parse(t.out)["ttest"];
    CHECK(tt["t"].get<double>() == doctest::Approx(2.4495).epsilon(1e-4));
    CHECK(tt["p_corrected"].get<double>() == doctest::Approx(3 * tt["p"].get<double>()));

    {
        std::ofstream p(dir / "pred.csv");
        p << "id,label,prediction\nx,1,1\ny,0,1\n";
    }
    const auto pr = run({"eval", "--predictions", (dir / "pred.csv").string()});
    REQUIRE(pr.code == 0);
    CHECK(nlohmann::json::parse(pr.out)["confusion"]["fp"] == 1);
}

TEST_CASE("export salience graph and frequencies") {
    const auto dir = fixture::scratch("cli_export");
    const auto c = dir / "c";
    REQUIRE(fixture::prepare(fixture::write_topic_corpus(dir, 30, 9), c));
    const auto dot = dir / "g.dot", js = dir / "g.json", fq = dir / "f.json";
    REQUIRE(run({"export", "--corpus-dir", c.string(), "--docs", "10", "--k", "5", "--dot", dot.string(), "--json",
                 js.string(), "--frequencies", fq.string()})
                .code == 0);
    const auto g = SalienceGraph::from_json(nlohmann::json::parse(fixture::slurp(js)));
    std::size_t docs = 0, doc_word = 0;
    for (const auto& n : g.nodes) docs += n.kind == SalienceNodeKind::doc;
    for (const auto& e : g.edges) doc_word += e.kind == SalienceEdgeKind::doc_word;
    CHECK(docs == 10);
    CHECK(doc_word <= 50);
    CHECK(doc_word >= 10);
    CHECK(fixture::slurp(dot).rfind("graph", 0) == 0);
    const auto f = nlohmann::json::parse(fixture::slurp(fq));
    CHECK(f["tables"].size() == 2);
}
