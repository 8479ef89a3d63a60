#pragma once

#include "hetgraph/corpus.hpp"
#include "hetgraph/eval.hpp"
#include "hetgraph/graph.hpp"
#include "hetgraph/optim.hpp"
#include "hetgraph/random.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace hetgraph {

/// Row-stochastic N_doc x C matrix of class probabilities.
using ProbabilityMatrix = Matrix;

/// Throws NumericalError unless every row sums to 1 (within `tol`) with entries in [0, 1].
void check_row_stochastic(const ProbabilityMatrix& p, double tol = 1e-9);

/// Two-layer graph convolution: d -> h -> C.
struct GcnParameters {
    Matrix w1;   // d x h
    Matrix b1;   // 1 x h
    Matrix w2;   // h x C
    Matrix b2;   // 1 x C
};

/// Softmax head over document features: d -> C.
struct LinearHead {
    Matrix w;    // d x C
    Matrix b;    // 1 x C
};

struct ModelParameters {
    GcnParameters gcn;
    LinearHead head;

    bool operator==(const ModelParameters& other) const;
};

/// Glorot-uniform weights and zero biases drawn from `seed`.
ModelParameters init_parameters(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed);

/// Sparse propagation matrices derived once from the normalised adjacency.
struct Propagation {
    CsrMatrix full;        // Ã
    CsrMatrix full_t;      // Ã^T
    CsrMatrix doc_rows;    // first N_doc rows of Ã
    CsrMatrix doc_rows_t;  // their transpose
    std::size_t n_doc = 0;

    static Propagation from(const SparseMatrix& normalized, std::size_t n_doc);
    [[nodiscard]] std::size_t n_nodes() const { return static_cast<std::size_t>(full.rows()); }
};

struct DropoutSpec {
    double rate = 0.0;
    Rng* rng = nullptr;   // required when training with rate > 0
};

/// Intermediate values of one forward pass, retained for the backward pass.
struct ForwardState {
    Matrix hidden_pre;      // Ã X W1 + b1, N x h
    Matrix hidden;          // after ReLU and dropout
    Matrix dropout_scale;   // per-entry multiplier (empty when no dropout)
    Matrix gcn_probs;       // Z_G
    Matrix head_probs;      // Z_B
    Matrix final_probs;     // Z_final
    double lambda = 0.0;
};

/// Z_G = softmax(Ã ReLU(Ã X W1 + b1) W2 + b2) over the document rows.
ProbabilityMatrix gcn_forward(const NodeFeatures& x, const Propagation& a, const GcnParameters& params,
                              const DropoutSpec& dropout = {}, bool training = false,
                              ForwardState* state = nullptr);

/// Z_B = softmax(Z_doc W + b).
ProbabilityMatrix linear_forward(const Matrix& doc_features, const LinearHead& head);

/// λ Z_G + (1 - λ) Z_B.
ProbabilityMatrix interpolate(const ProbabilityMatrix& gcn_probs, const ProbabilityMatrix& head_probs, double lambda);

/// Full model forward: both branches plus interpolation.
ForwardState forward(const NodeFeatures& x, const Propagation& a, const ModelParameters& params, double lambda,
                     const DropoutSpec& dropout = {}, bool training = false);

inline constexpr double kLogEpsilon = 1e-12;

/// Mean over masked documents of -ln(Z[doc, label] + 1e-12).
double nll_loss(const ProbabilityMatrix& probs, std::span<const int> labels, const std::vector<bool>& mask);

/// Analytic gradients of nll_loss(forward(...)) with respect to every parameter block.
ModelParameters gradients(const NodeFeatures& x, const Propagation& a, const ModelParameters& params,
                          const ForwardState& state, std::span<const int> labels, const std::vector<bool>& mask);

/// Argmax per row; ties go to the lower class index.
std::vector<int> predict(const ProbabilityMatrix& probs);

struct TrainingConfig {
    double lambda = 0.2;
    AdamConfig adam;
    std::size_t epochs = 200;
    double dropout = 0.5;
    std::size_t hidden = 200;
    std::size_t classes = 2;
    std::uint64_t seed = 0;
    /// Stop after this many epochs without a validation-F1 gain; 0 disables.
    std::size_t patience = 0;
    /// Return the parameters of the best validation epoch instead of the last.
    bool select_best_on_val = true;
};

/// Throws UsageError when a field violates its range.
void validate(const TrainingConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double val_accuracy = 0.0;
    double val_f1 = 0.0;
};

struct TrainResult {
    ModelParameters params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;   // 0 when no epoch ran
};

/// Inputs shared by every run on one corpus. Labels of -1 mark unlabeled documents.
struct GcnData {
    NodeFeatures features;
    Propagation propagation;
    std::vector<int> labels;
    SplitAssignment splits;

    static GcnData make(const TextGraph& graph, const std::optional<EmbeddingMatrix>& embeddings,
                        std::vector<int> labels, SplitAssignment splits);
};

/// Full-batch transductive Adam training. Only training-split labels enter the loss.
TrainResult train(const GcnData& data, const TrainingConfig& config);

/// Weighted metrics of argmax(Z_final) on one split.
MetricsReport evaluate(const GcnData& data, const ModelParameters& params, double lambda, Split split);

struct AblationRow {
    double lambda = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double accuracy_std = 0.0;
    double f1_std = 0.0;
};

/// One train/evaluate cycle on the test split per (λ, seed); rows sorted by λ.
std::vector<AblationRow> ablate_lambda(const GcnData& data, std::vector<double> grid, const TrainingConfig& base,
                                       const std::vector<std::uint64_t>& seeds, unsigned jobs = 1);

// Checkpoints: "TGCK", version u32, block count u32, then per block
// name (u16 length + bytes), rows u64, cols u64, little-endian float64 payload.
void write_checkpoint(std::ostream& out, const ModelParameters& params);
ModelParameters read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params);
ModelParameters load_checkpoint(const std::filesystem::path& path);

/// CSV `epoch,loss,val_acc,val_f1`.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);
/// CSV `lambda,accuracy,f1,acc_std,f1_std`.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace hetgraph
