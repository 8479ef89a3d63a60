#pragma once

#include "hetgraph/corpus.hpp"
#include "hetgraph/eval.hpp"
#include "hetgraph/gcn.hpp"
#include "hetgraph/optim.hpp"
#include "hetgraph/random.hpp"
#include "hetgraph/sparse.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <vector>

namespace hetgraph {

struct TokenEmbeddingSequence {
    std::string id;
    Matrix values;   // L x d, one row per token
};

struct ConvHeadConfig {
    std::size_t dim = 768;
    std::vector<std::size_t> kernel_sizes{3, 4, 5};
    std::size_t filters = 100;
    double dropout = 0.5;
    std::size_t max_len = 512;

    [[nodiscard]] std::size_t feature_size() const { return kernel_sizes.size() * filters; }
    [[nodiscard]] std::size_t max_kernel() const;
};

struct FilterBank {
    std::size_t kernel = 0;
    Matrix weights;   // filters x (kernel * d); row f is filter f flattened time-major
    Matrix bias;      // 1 x filters
};

struct ConvHeadParams {
    std::vector<FilterBank> banks;
    Matrix dense_w;   // 1 x feature_size
    Matrix dense_b;   // 1 x 1

    bool operator==(const ConvHeadParams& other) const;
};

ConvHeadParams init_conv_params(const ConvHeadConfig& config, std::uint64_t seed);

// Token-embedding files: "TGSE", version u32, record count u64, then per record
// id (u16 length + UTF-8), L u32, d u32, row-major little-endian float32.
void write_token_embeddings(std::ostream& out, const std::vector<TokenEmbeddingSequence>& seqs);
void write_token_embeddings(const std::filesystem::path& path, const std::vector<TokenEmbeddingSequence>& seqs);

/// Reads sequences, truncating each to `max_len` rows. An empty file yields no
/// sequences. When `known_ids` is given every id must belong to it.
std::vector<TokenEmbeddingSequence> read_token_embeddings(std::istream& in, std::size_t dim, std::size_t max_len = 512,
                                                          const std::unordered_set<std::string>* known_ids = nullptr);
std::vector<TokenEmbeddingSequence> load_token_embeddings(const std::filesystem::path& path, std::size_t dim,
                                                          std::size_t max_len = 512,
                                                          const std::unordered_set<std::string>* known_ids = nullptr);

/// Right zero-padding to at least `min_len` rows.
Matrix pad_sequence(const Matrix& seq, std::size_t min_len);

struct ConvForwardState {
    Matrix padded;                                // input after padding
    std::vector<std::vector<Eigen::Index>> argmax; // per bank, per filter: time index of the max
    std::vector<std::vector<double>> max_pre;      // per bank, per filter: pre-activation at argmax
    RowVector pooled;                              // concatenated ReLU-max features
    RowVector dropout_scale;                       // empty when no dropout
    RowVector features;                            // after dropout, input to the dense layer
};

/// Per bank: valid 1-D convolution, ReLU, max over time; concatenate; dropout
/// while training; dense layer to a single logit.
double conv_forward(const Matrix& seq, const ConvHeadParams& params, bool training = false, double dropout = 0.0,
                    Rng* rng = nullptr, ConvForwardState* state = nullptr);

/// Gradient of `upstream * logit` with respect to every parameter, given a
/// retained forward state.
ConvHeadParams conv_backward(const ConvHeadParams& params, const ConvForwardState& state, double upstream);

/// max(z, 0) - z y + ln(1 + e^-|z|).
double bce_with_logits(double logit, int label);
/// d bce / d logit = sigmoid(z) - y.
double bce_with_logits_grad(double logit, int label);
double sigmoid(double z);
/// sigmoid(logit) >= 0.5, i.e. logit >= 0.
int classify(double logit);

struct ConvTrainConfig {
    ConvHeadConfig head;
    AdamConfig adam;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct ConvTrainResult {
    ConvHeadParams params;
    std::vector<EpochRecord> history;
};

/// Minibatch Adam on mean BCE. `sequences[i]` belongs to document i; an empty
/// matrix marks a missing sequence, which is an error for training documents
/// and excluded from evaluation otherwise.
ConvTrainResult train_conv(const std::vector<Matrix>& sequences, const std::vector<int>& labels,
                           const SplitAssignment& splits, const ConvTrainConfig& config);

MetricsReport evaluate_conv(const std::vector<Matrix>& sequences, const std::vector<int>& labels,
                            const SplitAssignment& splits, const ConvHeadParams& params, Split split);

/// Checkpoint in the same block format as the GCN checkpoints ("TGCV" magic).
void save_conv_checkpoint(const std::filesystem::path& path, const ConvHeadParams& params);
ConvHeadParams load_conv_checkpoint(const std::filesystem::path& path);

}  // namespace hetgraph
