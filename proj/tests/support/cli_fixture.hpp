#pragma once

#include "cli.hpp"
#include "hetgraph/digest.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fixture {

namespace fs = std::filesystem;

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliRun run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliRun r;
    r.code = hetgraph::cli::run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("hetgraph_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Two-topic JSONL corpus; returns its path.
inline fs::path write_topic_corpus(const fs::path& dir, std::size_t n_docs, std::uint64_t seed) {
    const auto tc = oracle::topic_corpus(n_docs, 12, 14, seed);
    const auto path = dir / "corpus.raw.jsonl";
    std::ofstream out(path, std::ios::binary);
    for (const auto& d : tc.docs) {
        nlohmann::json j = {{"id", d.id}, {"text", d.text}, {"label", *d.label}};
        out << j.dump() << "\n";
    }
    return path;
}

/// sha256 of every regular file under `dir` except run manifests, keyed by relative path.
inline std::map<std::string, std::string> artifact_digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        if (name.rfind("manifest.", 0) == 0) continue;
        out[fs::relative(e.path(), dir).string()] = hetgraph::sha256_file(e.path());
    }
    return out;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// ingest + split + build-graph with small-corpus settings.
inline bool prepare(const fs::path& raw, const fs::path& dir) {
    const auto d = dir.string();
    return run({"ingest", "--corpus", raw.string(), "--out", d, "--min-df", "1"}).code == 0 &&
           run({"split", "--corpus-dir", d}).code == 0 &&
           run({"build-graph", "--corpus-dir", d, "--window-size", "5"}).code == 0;
}

}  // namespace fixture
