#include "hetgraph/gcn.hpp"

#include "binary_io.hpp"
#include "parallel.hpp"
#include "hetgraph/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

namespace hetgraph {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

Matrix row_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            out(r, c) = std::exp(logits(r, c) - mx);
            sum += out(r, c);
        }
        out.row(r) /= sum;
    }
    return out;
}

// Backward through a row softmax: dlogits = P ⊙ (g - rowsum(g ⊙ P)).
Matrix softmax_backward(const Matrix& probs, const Matrix& grad) {
    Matrix out(probs.rows(), probs.cols());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const double dot = probs.row(r).dot(grad.row(r));
        for (Eigen::Index c = 0; c < probs.cols(); ++c) out(r, c) = probs(r, c) * (grad(r, c) - dot);
    }
    return out;
}

void require_finite(const Matrix& m, const char* layer) {
    if (!m.allFinite()) throw NumericalError(std::string("non-finite values in ") + layer);
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DataError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                        ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

Matrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(idx(fan_in), idx(fan_out));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
}

bool same_bytes(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

}  // namespace

void check_row_stochastic(const ProbabilityMatrix& p, double tol) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const double v = p(r, c);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw NumericalError("probability (" + std::to_string(r) + "," + std::to_string(c) + ") outside [0,1]");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) throw NumericalError("probability row " + std::to_string(r) + " does not sum to 1");
    }
}

bool ModelParameters::operator==(const ModelParameters& o) const {
    return same_bytes(gcn.w1, o.gcn.w1) && same_bytes(gcn.b1, o.gcn.b1) && same_bytes(gcn.w2, o.gcn.w2) &&
           same_bytes(gcn.b2, o.gcn.b2) && same_bytes(head.w, o.head.w) && same_bytes(head.b, o.head.b);
}

ModelParameters init_parameters(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    ModelParameters p;
    p.gcn.w1 = glorot(rng, dim, hidden);
    p.gcn.b1 = Matrix::Zero(1, idx(hidden));
    p.gcn.w2 = glorot(rng, hidden, classes);
    p.gcn.b2 = Matrix::Zero(1, idx(classes));
    p.head.w = glorot(rng, dim, classes);
    p.head.b = Matrix::Zero(1, idx(classes));
    return p;
}

Propagation Propagation::from(const SparseMatrix& normalized, std::size_t n_doc) {
    if (normalized.rows() != normalized.cols() || n_doc > normalized.rows()) {
        throw DataError("propagation: adjacency shape inconsistent with document count");
    }
    Propagation p;
    p.n_doc = n_doc;
    p.full = normalized.to_csr();
    p.full_t = CsrMatrix(p.full.transpose());
    p.doc_rows = CsrMatrix(p.full.topRows(idx(n_doc)));
    p.doc_rows_t = CsrMatrix(p.doc_rows.transpose());
    p.full_t.makeCompressed();
    p.doc_rows.makeCompressed();
    p.doc_rows_t.makeCompressed();
    return p;
}

ProbabilityMatrix gcn_forward(const NodeFeatures& x, const Propagation& a, const GcnParameters& params,
                              const DropoutSpec& dropout, bool training, ForwardState* state) {
    const auto n = idx(x.n_nodes());
    if (a.n_nodes() != x.n_nodes() || a.n_doc != x.n_doc()) {
        throw DataError("gcn_forward: adjacency has " + std::to_string(a.n_nodes()) + " nodes, features have " +
                        std::to_string(x.n_nodes()));
    }
    const auto h = params.w1.cols();
    const auto classes = params.w2.cols();
    require_shape(params.w1, idx(x.dim()), h, "gcn_forward W1");
    require_shape(params.b1, 1, h, "gcn_forward b1");
    require_shape(params.w2, h, classes, "gcn_forward W2");
    require_shape(params.b2, 1, classes, "gcn_forward b2");

    Matrix xw = x.multiply(params.w1);
    Matrix pre = a.full * xw;
    pre.rowwise() += params.b1.row(0);
    require_finite(pre, "gcn layer 1");

    Matrix hidden = pre.cwiseMax(0.0);
    Matrix scale;
    if (training && dropout.rate > 0.0) {
        if (!dropout.rng) throw UsageError("gcn_forward: dropout requires a random generator");
        const double keep = 1.0 / (1.0 - dropout.rate);
        scale.resize(n, h);
        for (Eigen::Index i = 0; i < scale.size(); ++i) scale.data()[i] = dropout.rng->uniform() >= dropout.rate ? keep : 0.0;
        hidden.array() *= scale.array();
    }

    Matrix projected = hidden * params.w2;
    Matrix logits = a.doc_rows * projected;
    logits.rowwise() += params.b2.row(0);
    require_finite(logits, "gcn layer 2");
    Matrix probs = row_softmax(logits);

    if (state) {
        state->hidden_pre = std::move(pre);
        state->hidden = std::move(hidden);
        state->dropout_scale = std::move(scale);
        state->gcn_probs = probs;
    }
    return probs;
}

ProbabilityMatrix linear_forward(const Matrix& doc_features, const LinearHead& head) {
    if (doc_features.cols() != head.w.rows()) {
        throw DataError("linear_forward: feature dimension " + std::to_string(doc_features.cols()) +
                        " does not match head input " + std::to_string(head.w.rows()));
    }
    require_shape(head.b, 1, head.w.cols(), "linear_forward bias");
    Matrix logits = doc_features * head.w;
    logits.rowwise() += head.b.row(0);
    require_finite(logits, "linear head");
    return row_softmax(logits);
}

ProbabilityMatrix interpolate(const ProbabilityMatrix& gcn_probs, const ProbabilityMatrix& head_probs, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must lie in [0, 1]");
    if (gcn_probs.rows() != head_probs.rows() || gcn_probs.cols() != head_probs.cols()) {
        throw DataError("interpolate: prediction matrices differ in shape");
    }
    return lambda * gcn_probs + (1.0 - lambda) * head_probs;
}

namespace {

Matrix head_forward(const NodeFeatures& x, const LinearHead& head) {
    if (head.w.rows() != idx(x.dim())) {
        throw DataError("linear head expects " + std::to_string(head.w.rows()) + " features, got " + std::to_string(x.dim()));
    }
    require_shape(head.b, 1, head.w.cols(), "linear head bias");
    Matrix logits = x.doc_rows_multiply(head.w);
    logits.rowwise() += head.b.row(0);
    require_finite(logits, "linear head");
    return row_softmax(logits);
}

}  // namespace

ForwardState forward(const NodeFeatures& x, const Propagation& a, const ModelParameters& params, double lambda,
                     const DropoutSpec& dropout, bool training) {
    ForwardState state;
    state.lambda = lambda;
    gcn_forward(x, a, params.gcn, dropout, training, &state);
    state.head_probs = head_forward(x, params.head);
    state.final_probs = interpolate(state.gcn_probs, state.head_probs, lambda);
    return state;
}

namespace {

std::size_t masked_count(std::span<const int> labels, const std::vector<bool>& mask, Eigen::Index rows,
                         Eigen::Index classes) {
    if (labels.size() != static_cast<std::size_t>(rows) || mask.size() != labels.size()) {
        throw DataError("loss: labels/mask do not match the prediction rows");
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i]) continue;
        if (labels[i] < 0 || labels[i] >= classes) throw DataError("loss: masked document " + std::to_string(i) + " has no valid label");
        ++n;
    }
    if (n == 0) throw DataError("loss: training mask selects no documents");
    return n;
}

}  // namespace

double nll_loss(const ProbabilityMatrix& probs, std::span<const int> labels, const std::vector<bool>& mask) {
    const std::size_t n = masked_count(labels, mask, probs.rows(), probs.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (mask[i]) total -= std::log(probs(idx(i), labels[i]) + kLogEpsilon);
    }
    return total / static_cast<double>(n);
}

ModelParameters gradients(const NodeFeatures& x, const Propagation& a, const ModelParameters& params,
                          const ForwardState& state, std::span<const int> labels, const std::vector<bool>& mask) {
    const auto& zf = state.final_probs;
    const std::size_t n = masked_count(labels, mask, zf.rows(), zf.cols());
    const double lambda = state.lambda;

    Matrix g = Matrix::Zero(zf.rows(), zf.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (mask[i]) g(idx(i), labels[i]) = -1.0 / (static_cast<double>(n) * (zf(idx(i), labels[i]) + kLogEpsilon));
    }

    ModelParameters grad;

    // linear head branch
    const Matrix d_head_logits = softmax_backward(state.head_probs, (1.0 - lambda) * g);
    grad.head.w = x.doc_rows_transpose_multiply(d_head_logits);
    grad.head.b = d_head_logits.colwise().sum();

    // graph branch
    const Matrix d_logits = softmax_backward(state.gcn_probs, lambda * g);
    grad.gcn.b2 = d_logits.colwise().sum();
    const Matrix d_projected = a.doc_rows_t * d_logits;               // N x C
    grad.gcn.w2 = state.hidden.transpose() * d_projected;              // h x C
    Matrix d_hidden = d_projected * params.gcn.w2.transpose();         // N x h
    if (state.dropout_scale.size() > 0) d_hidden.array() *= state.dropout_scale.array();
    d_hidden.array() *= (state.hidden_pre.array() > 0.0).cast<double>();
    grad.gcn.b1 = d_hidden.colwise().sum();
    const Matrix d_xw = a.full_t * d_hidden;
    grad.gcn.w1 = x.transpose_multiply(d_xw);
    return grad;
}

std::vector<int> predict(const ProbabilityMatrix& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(r, c) > probs(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

void validate(const TrainingConfig& c) {
    if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw UsageError("lambda must lie in [0, 1]");
    if (!(c.adam.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0) || !(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) {
        throw UsageError("Adam betas must lie in [0, 1)");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    if (!(c.adam.weight_decay >= 0.0)) throw UsageError("weight decay must be non-negative");
    if (c.hidden == 0) throw UsageError("hidden dimension must be positive");
    if (c.classes < 2) throw UsageError("at least two classes are required");
}

GcnData GcnData::make(const TextGraph& graph, const std::optional<EmbeddingMatrix>& embeddings, std::vector<int> labels,
                      SplitAssignment splits) {
    if (labels.size() != graph.n_doc || splits.assignment.size() != graph.n_doc) {
        throw DataError("labels/splits do not match the graph's " + std::to_string(graph.n_doc) + " documents");
    }
    return GcnData{build_node_features(embeddings, graph.n_doc, graph.n_word),
                   Propagation::from(graph.normalized, graph.n_doc), std::move(labels), std::move(splits)};
}

namespace {

MetricsReport split_metrics(const ProbabilityMatrix& probs, const std::vector<int>& labels, const SplitAssignment& splits,
                            Split split) {
    const auto pred = predict(probs);
    const auto classes = static_cast<std::size_t>(probs.cols());
    std::vector<std::vector<std::size_t>> counts(classes, std::vector<std::size_t>(classes, 0));
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (splits.assignment[i] != split || labels[i] < 0) continue;
        ++counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])];
        ++n;
    }
    if (n == 0) throw DataError("split '" + std::string(to_string(split)) + "' has no labeled documents");
    return metrics_from_counts(counts, Averaging::weighted);
}

bool has_labeled(const GcnData& data, Split split) {
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.splits.assignment[i] == split && data.labels[i] >= 0) return true;
    }
    return false;
}

}  // namespace

TrainResult train(const GcnData& data, const TrainingConfig& config) {
    validate(config);
    for (int y : data.labels) {
        if (y >= static_cast<int>(config.classes)) throw DataError("label " + std::to_string(y) + " exceeds the class count");
    }
    TrainResult result;
    result.params = init_parameters(data.features.dim(), config.hidden, config.classes, config.seed);
    if (config.epochs == 0) return result;

    std::vector<bool> train_mask(data.labels.size());
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        train_mask[i] = data.splits.assignment[i] == Split::train && data.labels[i] >= 0;
    }
    const bool has_val = has_labeled(data, Split::val);

    Rng dropout_rng(derive_seed(config.seed, 2));
    const DropoutSpec dropout{config.dropout, &dropout_rng};
    Adam adam(config.adam);
    ModelParameters& params = result.params;
    ModelParameters best = params;
    double best_f1 = -std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        ForwardState state;
        try {
            state = forward(data.features, data.propagation, params, config.lambda, dropout, true);
        } catch (const NumericalError& e) {
            throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double loss = nll_loss(state.final_probs, data.labels, train_mask);
        if (!std::isfinite(loss)) throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
        const ModelParameters grad = gradients(data.features, data.propagation, params, state, data.labels, train_mask);
        const ParamRef refs[] = {
            {&params.gcn.w1, &grad.gcn.w1, true}, {&params.gcn.b1, &grad.gcn.b1, false},
            {&params.gcn.w2, &grad.gcn.w2, true}, {&params.gcn.b2, &grad.gcn.b2, false},
            {&params.head.w, &grad.head.w, true}, {&params.head.b, &grad.head.b, false},
        };
        adam.step(refs);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss;
        if (has_val) {
            const auto eval_state = forward(data.features, data.propagation, params, config.lambda);
            const auto report = split_metrics(eval_state.final_probs, data.labels, data.splits, Split::val);
            rec.val_accuracy = report.accuracy;
            rec.val_f1 = report.f1;
        }
        result.history.push_back(rec);

        if (!has_val || rec.val_f1 > best_f1) {
            best_f1 = rec.val_f1;
            best = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (config.patience > 0 && since_best >= config.patience) break;
    }
    if (config.select_best_on_val) {
        params = std::move(best);
    } else {
        result.best_epoch = result.history.size();
    }
    return result;
}

MetricsReport evaluate(const GcnData& data, const ModelParameters& params, double lambda, Split split) {
    const auto state = forward(data.features, data.propagation, params, lambda);
    return split_metrics(state.final_probs, data.labels, data.splits, split);
}

std::vector<AblationRow> ablate_lambda(const GcnData& data, std::vector<double> grid, const TrainingConfig& base,
                                       const std::vector<std::uint64_t>& seeds, unsigned jobs) {
    if (grid.empty()) throw UsageError("ablation grid is empty");
    if (seeds.empty()) throw UsageError("ablation needs at least one seed");
    for (double l : grid) {
        if (!(l >= 0.0 && l <= 1.0)) throw UsageError("ablation grid values must lie in [0, 1]");
    }
    std::stable_sort(grid.begin(), grid.end());

    const std::size_t tasks = grid.size() * seeds.size();
    std::vector<MetricsReport> reports(tasks);
    detail::for_each_chunk(tasks, jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            TrainingConfig cfg = base;
            cfg.lambda = grid[t / seeds.size()];
            cfg.seed = seeds[t % seeds.size()];
            const auto trained = train(data, cfg);
            reports[t] = evaluate(data, trained.params, cfg.lambda, Split::test);
        }
    });

    std::vector<AblationRow> rows;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<double> acc, f1;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            acc.push_back(reports[g * seeds.size() + s].accuracy);
            f1.push_back(reports[g * seeds.size() + s].f1);
        }
        const auto a = summarize(acc);
        const auto f = summarize(f1);
        rows.push_back({grid[g], a.mean, f.mean, a.stddev, f.stddev});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints and CSV

namespace {

constexpr char kCheckpointMagic[5] = "TGCK";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_block(std::ostream& out, const std::string& name, const Matrix& m) {
    detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::write_f64(out, m.data()[i]);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParameters& p) {
    const std::pair<const char*, const Matrix*> blocks[] = {
        {"gcn.w1", &p.gcn.w1}, {"gcn.b1", &p.gcn.b1}, {"gcn.w2", &p.gcn.w2},
        {"gcn.b2", &p.gcn.b2}, {"head.w", &p.head.w}, {"head.b", &p.head.b},
    };
    out.write(kCheckpointMagic, 4);
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::size(blocks)));
    for (const auto& [name, m] : blocks) write_block(out, name, *m);
}

ModelParameters read_checkpoint(std::istream& in) {
    detail::expect_magic(in, kCheckpointMagic, "checkpoint");
    const auto version = detail::read_le<std::uint32_t>(in, "checkpoint version");
    if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = detail::read_le<std::uint32_t>(in, "block count");
    ModelParameters p;
    Matrix* const targets[] = {&p.gcn.w1, &p.gcn.b1, &p.gcn.w2, &p.gcn.b2, &p.head.w, &p.head.b};
    const char* const names[] = {"gcn.w1", "gcn.b1", "gcn.w2", "gcn.b2", "head.w", "head.b"};
    std::vector<bool> seen(std::size(targets), false);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = detail::read_le<std::uint16_t>(in, "block name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw DataError("checkpoint: truncated block name");
        const auto rows = detail::read_le<std::uint64_t>(in, "block rows");
        const auto cols = detail::read_le<std::uint64_t>(in, "block cols");
        if (rows * cols > (1ULL << 34)) throw DataError("checkpoint: implausible block size");
        Matrix m(idx(rows), idx(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::read_f64(in, "block payload");
        const auto it = std::find_if(std::begin(names), std::end(names), [&](const char* n) { return name == n; });
        if (it == std::end(names)) throw DataError("checkpoint: unknown block '" + name + "'");
        const auto pos = static_cast<std::size_t>(it - std::begin(names));
        *targets[pos] = std::move(m);
        seen[pos] = true;
    }
    for (std::size_t k = 0; k < seen.size(); ++k) {
        if (!seen[k]) throw DataError(std::string("checkpoint: missing block '") + names[k] + "'");
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_checkpoint(out, params);
    if (!out) throw DataError("failed writing " + path.string());
}

ModelParameters load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    return read_checkpoint(in);
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,loss,val_acc,val_f1\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.val_accuracy) << ','
            << format_double(r.val_f1) << '\n';
    }
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "lambda,accuracy,f1,acc_std,f1_std\n";
    for (const auto& r : rows) {
        out << format_double(r.lambda) << ',' << format_double(r.accuracy) << ',' << format_double(r.f1) << ','
            << format_double(r.accuracy_std) << ',' << format_double(r.f1_std) << '\n';
    }
}

}  // namespace hetgraph
