#pragma once

#include "hetgraph/corpus.hpp"
#include "hetgraph/graph.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hetgraph::cli {

struct PipelineConfig {
    // tokenization
    bool lowercase = true;
    bool remove_stopwords = true;
    std::size_t min_df = 5;
    // graph
    std::size_t window_size = 20;
    // gcn
    std::size_t hidden = 200;
    double lambda = 0.2;
    std::size_t epochs = 200;
    double dropout = 0.5;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::size_t patience = 0;
    // conv head
    std::size_t conv_dim = 768;
    std::size_t conv_filters = 100;
    std::size_t conv_epochs = 10;
    std::size_t conv_batch = 32;
    double conv_dropout = 0.5;
    double conv_learning_rate = 1e-3;
    std::size_t conv_max_len = 512;
    // splits and seeds
    SplitRatios split;
    std::uint64_t split_seed = 0;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    unsigned threads = 1;
    unsigned jobs = 1;

    void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Overlays the keys present in `j` onto `base`; unknown keys are a usage error.
PipelineConfig merge_config(PipelineConfig base, const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Output of `ingest`: `corpus.jsonl` ({id, label, tokens}) and `vocab.tsv` (token, df).
struct CorpusArtifacts {
    std::vector<std::string> ids;
    std::vector<int> labels;   // -1 when unlabeled
    TokenizedCorpus corpus;
};

void write_corpus_artifacts(const std::filesystem::path& dir, const CorpusArtifacts& a);
CorpusArtifacts read_corpus_artifacts(const std::filesystem::path& dir);

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace hetgraph::cli
