#include "hetgraph/conv_head.hpp"

#include "binary_io.hpp"
#include "hetgraph/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace hetgraph {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

using WindowMap = Eigen::Map<const Matrix, Eigen::Unaligned, Eigen::OuterStride<>>;

// Row t is the k consecutive token rows starting at t, flattened; row-major
// storage makes each window contiguous.
WindowMap windows(const Matrix& padded, std::size_t kernel) {
    const auto d = padded.cols();
    const auto count = padded.rows() - idx(kernel) + 1;
    return WindowMap(padded.data(), count, idx(kernel) * d, Eigen::OuterStride<>(d));
}

bool same_bytes(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

}  // namespace

std::size_t ConvHeadConfig::max_kernel() const {
    return kernel_sizes.empty() ? 1 : *std::max_element(kernel_sizes.begin(), kernel_sizes.end());
}

bool ConvHeadParams::operator==(const ConvHeadParams& o) const {
    if (banks.size() != o.banks.size()) return false;
    for (std::size_t b = 0; b < banks.size(); ++b) {
        if (banks[b].kernel != o.banks[b].kernel || !same_bytes(banks[b].weights, o.banks[b].weights) ||
            !same_bytes(banks[b].bias, o.banks[b].bias)) {
            return false;
        }
    }
    return same_bytes(dense_w, o.dense_w) && same_bytes(dense_b, o.dense_b);
}

ConvHeadParams init_conv_params(const ConvHeadConfig& config, std::uint64_t seed) {
    if (config.kernel_sizes.empty() || config.filters == 0 || config.dim == 0) {
        throw UsageError("conv head needs at least one kernel, one filter and a positive dimension");
    }
    Rng rng(derive_seed(seed, 11));
    ConvHeadParams p;
    for (std::size_t k : config.kernel_sizes) {
        if (k == 0) throw UsageError("kernel sizes must be positive");
        FilterBank bank;
        bank.kernel = k;
        const std::size_t fan_in = k * config.dim;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + config.filters));
        bank.weights.resize(idx(config.filters), idx(fan_in));
        for (Eigen::Index i = 0; i < bank.weights.size(); ++i) bank.weights.data()[i] = rng.uniform(-limit, limit);
        bank.bias = Matrix::Zero(1, idx(config.filters));
        p.banks.push_back(std::move(bank));
    }
    const std::size_t features = config.feature_size();
    const double limit = std::sqrt(6.0 / static_cast<double>(features + 1));
    p.dense_w.resize(1, idx(features));
    for (Eigen::Index i = 0; i < p.dense_w.size(); ++i) p.dense_w.data()[i] = rng.uniform(-limit, limit);
    p.dense_b = Matrix::Zero(1, 1);
    return p;
}

// ---------------------------------------------------------------------------
// Token-embedding files

namespace {
constexpr char kSequenceMagic[5] = "TGSE";
constexpr std::uint32_t kSequenceVersion = 1;
}  // namespace

void write_token_embeddings(std::ostream& out, const std::vector<TokenEmbeddingSequence>& seqs) {
    out.write(kSequenceMagic, 4);
    detail::write_le<std::uint32_t>(out, kSequenceVersion);
    detail::write_le<std::uint64_t>(out, seqs.size());
    for (const auto& s : seqs) {
        if (s.id.size() > 0xFFFF) throw DataError("sequence id too long: " + s.id.substr(0, 32) + "...");
        detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.id.size()));
        out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.values.rows()));
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.values.cols()));
        for (Eigen::Index i = 0; i < s.values.size(); ++i) detail::write_f32(out, static_cast<float>(s.values.data()[i]));
    }
}

void write_token_embeddings(const std::filesystem::path& path, const std::vector<TokenEmbeddingSequence>& seqs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_token_embeddings(out, seqs);
    if (!out) throw DataError("failed writing " + path.string());
}

std::vector<TokenEmbeddingSequence> read_token_embeddings(std::istream& in, std::size_t dim, std::size_t max_len,
                                                          const std::unordered_set<std::string>* known_ids) {
    std::vector<TokenEmbeddingSequence> out;
    if (in.peek() == std::char_traits<char>::eof()) return out;
    detail::expect_magic(in, kSequenceMagic, "token-embedding file");
    const auto version = detail::read_le<std::uint32_t>(in, "sequence file version");
    if (version != kSequenceVersion) throw DataError("token-embedding file: unsupported version " + std::to_string(version));
    const auto count = detail::read_le<std::uint64_t>(in, "record count");
    for (std::uint64_t r = 0; r < count; ++r) {
        TokenEmbeddingSequence seq;
        const auto id_len = detail::read_le<std::uint16_t>(in, "id length");
        seq.id.resize(id_len);
        if (!in.read(seq.id.data(), id_len)) throw DataError("token-embedding file: truncated id");
        const auto len = detail::read_le<std::uint32_t>(in, "sequence length");
        const auto d = detail::read_le<std::uint32_t>(in, "embedding dimension");
        if (d != dim) {
            throw DataError("token-embedding record '" + seq.id + "' has dimension " + std::to_string(d) +
                            ", expected " + std::to_string(dim));
        }
        if (len == 0) throw DataError("token-embedding record '" + seq.id + "' is empty");
        if (known_ids && !known_ids->contains(seq.id)) {
            throw DataError("token-embedding record '" + seq.id + "' does not match any corpus document");
        }
        const std::size_t keep = std::min<std::size_t>(len, max_len);
        seq.values.resize(idx(keep), idx(d));
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t c = 0; c < d; ++c) {
                const float v = detail::read_f32(in, "sequence payload");
                if (t < keep) seq.values(idx(t), idx(c)) = v;
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

std::vector<TokenEmbeddingSequence> load_token_embeddings(const std::filesystem::path& path, std::size_t dim,
                                                          std::size_t max_len,
                                                          const std::unordered_set<std::string>* known_ids) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open token-embedding file " + path.string());
    return read_token_embeddings(in, dim, max_len, known_ids);
}

// ---------------------------------------------------------------------------
// Forward / backward

Matrix pad_sequence(const Matrix& seq, std::size_t min_len) {
    if (static_cast<std::size_t>(seq.rows()) >= min_len) return seq;
    Matrix out = Matrix::Zero(idx(min_len), seq.cols());
    out.topRows(seq.rows()) = seq;
    return out;
}

double conv_forward(const Matrix& seq, const ConvHeadParams& params, bool training, double dropout, Rng* rng,
                    ConvForwardState* state) {
    if (params.banks.empty()) throw UsageError("conv head has no filter banks");
    const auto d = params.banks.front().weights.cols() / idx(params.banks.front().kernel);
    if (seq.cols() != d) {
        throw DataError("conv_forward: sequence dimension " + std::to_string(seq.cols()) + " does not match " +
                        std::to_string(d));
    }
    if (seq.rows() == 0) throw DataError("conv_forward: empty sequence");
    std::size_t max_kernel = 0;
    std::size_t features = 0;
    for (const auto& b : params.banks) {
        max_kernel = std::max(max_kernel, b.kernel);
        features += static_cast<std::size_t>(b.weights.rows());
    }
    if (params.dense_w.cols() != idx(features)) throw DataError("conv_forward: dense layer does not match filter count");

    ConvForwardState local;
    ConvForwardState& st = state ? *state : local;
    st.padded = pad_sequence(seq, max_kernel);
    st.argmax.assign(params.banks.size(), {});
    st.max_pre.assign(params.banks.size(), {});
    st.pooled.resize(idx(features));

    Eigen::Index offset = 0;
    for (std::size_t b = 0; b < params.banks.size(); ++b) {
        const auto& bank = params.banks[b];
        const auto win = windows(st.padded, bank.kernel);
        Matrix conv = win * bank.weights.transpose();   // T x filters
        conv.rowwise() += bank.bias.row(0);
        const auto filters = conv.cols();
        st.argmax[b].resize(static_cast<std::size_t>(filters));
        st.max_pre[b].resize(static_cast<std::size_t>(filters));
        for (Eigen::Index f = 0; f < filters; ++f) {
            Eigen::Index best = 0;
            for (Eigen::Index t = 1; t < conv.rows(); ++t) {
                if (conv(t, f) > conv(best, f)) best = t;
            }
            st.argmax[b][static_cast<std::size_t>(f)] = best;
            st.max_pre[b][static_cast<std::size_t>(f)] = conv(best, f);
            st.pooled(offset + f) = std::max(0.0, conv(best, f));
        }
        offset += filters;
    }

    st.features = st.pooled;
    st.dropout_scale.resize(0);
    if (training && dropout > 0.0) {
        if (!rng) throw UsageError("conv_forward: dropout requires a random generator");
        const double keep = 1.0 / (1.0 - dropout);
        st.dropout_scale.resize(idx(features));
        for (Eigen::Index i = 0; i < st.dropout_scale.size(); ++i) st.dropout_scale(i) = rng->uniform() >= dropout ? keep : 0.0;
        st.features.array() *= st.dropout_scale.array();
    }
    const double logit = params.dense_w.row(0).dot(st.features) + params.dense_b(0, 0);
    if (!std::isfinite(logit)) throw NumericalError("non-finite logit in conv head");
    return logit;
}

ConvHeadParams conv_backward(const ConvHeadParams& params, const ConvForwardState& state, double upstream) {
    ConvHeadParams g;
    g.dense_w = upstream * state.features;
    g.dense_b = Matrix::Constant(1, 1, upstream);
    RowVector d_pooled = upstream * params.dense_w.row(0);
    if (state.dropout_scale.size() > 0) d_pooled.array() *= state.dropout_scale.array();

    Eigen::Index offset = 0;
    for (std::size_t b = 0; b < params.banks.size(); ++b) {
        const auto& bank = params.banks[b];
        FilterBank gb;
        gb.kernel = bank.kernel;
        gb.weights = Matrix::Zero(bank.weights.rows(), bank.weights.cols());
        gb.bias = Matrix::Zero(1, bank.weights.rows());
        const auto win = windows(state.padded, bank.kernel);
        for (Eigen::Index f = 0; f < bank.weights.rows(); ++f) {
            if (!(state.max_pre[b][static_cast<std::size_t>(f)] > 0.0)) continue;   // ReLU inactive
            const double gf = d_pooled(offset + f);
            gb.bias(0, f) = gf;
            gb.weights.row(f) = gf * win.row(state.argmax[b][static_cast<std::size_t>(f)]);
        }
        offset += bank.weights.rows();
        g.banks.push_back(std::move(gb));
    }
    return g;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_with_logits(double logit, int label) {
    if (label != 0 && label != 1) throw DataError("bce_with_logits: label must be 0 or 1");
    return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

double bce_with_logits_grad(double logit, int label) { return sigmoid(logit) - static_cast<double>(label); }

int classify(double logit) { return logit >= 0.0 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Training

namespace {

void accumulate(ConvHeadParams& total, const ConvHeadParams& g) {
    for (std::size_t b = 0; b < total.banks.size(); ++b) {
        total.banks[b].weights += g.banks[b].weights;
        total.banks[b].bias += g.banks[b].bias;
    }
    total.dense_w += g.dense_w;
    total.dense_b += g.dense_b;
}

ConvHeadParams zeros_like(const ConvHeadParams& p) {
    ConvHeadParams z;
    for (const auto& b : p.banks) {
        z.banks.push_back({b.kernel, Matrix::Zero(b.weights.rows(), b.weights.cols()), Matrix::Zero(1, b.bias.cols())});
    }
    z.dense_w = Matrix::Zero(1, p.dense_w.cols());
    z.dense_b = Matrix::Zero(1, 1);
    return z;
}

std::vector<ParamRef> refs(ConvHeadParams& p, const ConvHeadParams& g) {
    std::vector<ParamRef> out;
    for (std::size_t b = 0; b < p.banks.size(); ++b) {
        out.push_back({&p.banks[b].weights, &g.banks[b].weights, true});
        out.push_back({&p.banks[b].bias, &g.banks[b].bias, false});
    }
    out.push_back({&p.dense_w, &g.dense_w, true});
    out.push_back({&p.dense_b, &g.dense_b, false});
    return out;
}

}  // namespace

MetricsReport evaluate_conv(const std::vector<Matrix>& sequences, const std::vector<int>& labels,
                            const SplitAssignment& splits, const ConvHeadParams& params, Split split) {
    std::vector<int> pred, truth;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (splits.assignment[i] != split || labels[i] < 0 || sequences[i].rows() == 0) continue;
        pred.push_back(classify(conv_forward(sequences[i], params)));
        truth.push_back(labels[i]);
    }
    if (truth.empty()) throw DataError("split '" + std::string(to_string(split)) + "' has no labeled sequences");
    return metrics(confusion(pred, truth));
}

ConvTrainResult train_conv(const std::vector<Matrix>& sequences, const std::vector<int>& labels,
                           const SplitAssignment& splits, const ConvTrainConfig& config) {
    if (sequences.size() != labels.size() || splits.assignment.size() != labels.size()) {
        throw DataError("train_conv: sequences, labels and splits must align");
    }
    if (config.batch_size == 0) throw UsageError("batch size must be positive");
    if (!(config.head.dropout >= 0.0 && config.head.dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    if (!(config.adam.learning_rate > 0.0)) throw UsageError("learning rate must be positive");

    ConvTrainResult result;
    result.params = init_conv_params(config.head, config.seed);
    std::vector<std::size_t> train_idx;
    bool has_val = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) continue;
        if (labels[i] > 1) throw DataError("train_conv: labels must be binary");
        if (splits.assignment[i] == Split::train) {
            if (sequences[i].rows() == 0) throw DataError("training document " + std::to_string(i) + " has no token embeddings");
            if (sequences[i].cols() != idx(config.head.dim)) throw DataError("training document " + std::to_string(i) + " has the wrong embedding dimension");
            train_idx.push_back(i);
        } else if (splits.assignment[i] == Split::val && sequences[i].rows() > 0) {
            has_val = true;
        }
    }
    if (config.epochs == 0) return result;
    if (train_idx.empty()) throw DataError("train_conv: no labeled training documents");

    Rng shuffle_rng(derive_seed(config.seed, 12));
    Rng dropout_rng(derive_seed(config.seed, 13));
    Adam adam(config.adam);
    auto& params = result.params;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(train_idx));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            ConvHeadParams grad = zeros_like(params);
            ConvForwardState st;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = train_idx[k];
                const double logit = conv_forward(sequences[i], params, true, config.head.dropout, &dropout_rng, &st);
                epoch_loss += bce_with_logits(logit, labels[i]);
                accumulate(grad, conv_backward(params, st, inv * bce_with_logits_grad(logit, labels[i])));
            }
            const auto r = refs(params, grad);
            adam.step(r);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = epoch_loss / static_cast<double>(train_idx.size());
        if (!std::isfinite(rec.loss)) throw NumericalError("conv training diverged at epoch " + std::to_string(epoch));
        if (has_val) {
            const auto report = evaluate_conv(sequences, labels, splits, params, Split::val);
            rec.val_accuracy = report.accuracy;
            rec.val_f1 = report.f1;
        }
        result.history.push_back(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kConvMagic[5] = "TGCV";
constexpr std::uint32_t kConvVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::write_f64(out, m.data()[i]);
}

Matrix read_matrix(std::istream& in) {
    const auto rows = detail::read_le<std::uint64_t>(in, "rows");
    const auto cols = detail::read_le<std::uint64_t>(in, "cols");
    if (rows * cols > (1ULL << 32)) throw DataError("conv checkpoint: implausible block size");
    Matrix m(idx(rows), idx(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::read_f64(in, "payload");
    return m;
}

void write_named(std::ostream& out, const std::string& name, const Matrix& m) {
    detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_matrix(out, m);
}

std::pair<std::string, Matrix> read_named(std::istream& in) {
    const auto len = detail::read_le<std::uint16_t>(in, "block name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("conv checkpoint: truncated block name");
    return {name, read_matrix(in)};
}
}  // namespace

void save_conv_checkpoint(const std::filesystem::path& path, const ConvHeadParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kConvMagic, 4);
    detail::write_le<std::uint32_t>(out, kConvVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(2 * p.banks.size() + 2));
    for (const auto& b : p.banks) {
        write_named(out, "conv" + std::to_string(b.kernel) + ".w", b.weights);
        write_named(out, "conv" + std::to_string(b.kernel) + ".b", b.bias);
    }
    write_named(out, "dense.w", p.dense_w);
    write_named(out, "dense.b", p.dense_b);
    if (!out) throw DataError("failed writing " + path.string());
}

ConvHeadParams load_conv_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open conv checkpoint " + path.string());
    detail::expect_magic(in, kConvMagic, "conv checkpoint");
    if (detail::read_le<std::uint32_t>(in, "version") != kConvVersion) throw DataError("conv checkpoint: unsupported version");
    const auto blocks = detail::read_le<std::uint32_t>(in, "block count");
    if (blocks < 4 || blocks % 2 != 0) throw DataError("conv checkpoint: bad block count");
    ConvHeadParams p;
    for (std::uint32_t b = 0; b + 2 < blocks; b += 2) {
        auto [wn, w] = read_named(in);
        auto [bn, bias] = read_named(in);
        if (wn.rfind("conv", 0) != 0 || wn.size() < 7) throw DataError("conv checkpoint: unexpected block " + wn);
        FilterBank bank;
        bank.kernel = std::stoul(wn.substr(4, wn.size() - 6));
        bank.weights = std::move(w);
        bank.bias = std::move(bias);
        p.banks.push_back(std::move(bank));
    }
    auto [dwn, dw] = read_named(in);
    auto [dbn, db] = read_named(in);
    if (dwn != "dense.w" || dbn != "dense.b") throw DataError("conv checkpoint: missing dense layer");
    p.dense_w = std::move(dw);
    p.dense_b = std::move(db);
    return p;
}

}  // namespace hetgraph
