#include <doctest.h>

#include "hetgraph/conv_head.hpp"
#include "hetgraph/error.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace hetgraph;

namespace {

ConvHeadConfig small_config() {
    ConvHeadConfig c;
    c.dim = 3;
    c.kernel_sizes = {2, 3};
    c.filters = 4;
    return c;
}

void randomize_biases(ConvHeadParams& p, Rng& rng) {
    for (auto& b : p.banks) b.bias = oracle::random_matrix(rng, 1, b.bias.cols(), 0.2);
    p.dense_b = oracle::random_matrix(rng, 1, 1, 0.2);
}

}  // namespace

TEST_CASE("zero sequence with zero biases gives a zero logit") {
    ConvHeadConfig cfg;
    cfg.dim = 4;
    cfg.filters = 5;
    const auto p = init_conv_params(cfg, 1);
    CHECK(conv_forward(Matrix::Zero(7, 4), p) == 0.0);
    CHECK(cfg.feature_size() == 15);
    CHECK(ConvHeadConfig{}.feature_size() == 300);
}

TEST_CASE("short sequences reach every bank") {
    ConvHeadConfig cfg;
    cfg.dim = 2;
    cfg.filters = 2;
    auto p = init_conv_params(cfg, 3);
    ConvForwardState st;
    Rng rng(2);
    const Matrix seq = oracle::random_matrix(rng, 3, 2);
    conv_forward(seq, p, false, 0.0, nullptr, &st);
    CHECK(st.padded.rows() == 5);
    CHECK(st.padded.topRows(3) == seq);
    CHECK(st.padded.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.pooled.size() == 6);
    CHECK(st.argmax.size() == 3);
    CHECK(st.argmax[2].size() == 2);
    CHECK(st.argmax[2][0] == 0);
}

TEST_CASE("bce examples") {
    CHECK(bce_with_logits(0.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_with_logits(0.0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_with_logits(20.0, 1) == doctest::Approx(2.06e-9).epsilon(1e-2));
    CHECK(bce_with_logits(20.0, 0) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(std::isfinite(bce_with_logits(-1000.0, 1)));
    CHECK(bce_with_logits(-1000.0, 1) == doctest::Approx(1000.0));
    CHECK_THROWS_AS(bce_with_logits(0.0, 2), DataError);
    CHECK(bce_with_logits_grad(0.0, 1) == -0.5);
}

TEST_CASE("classify threshold") {
    CHECK(classify(0.0) == 1);
    CHECK(classify(3.0) == 1);
    CHECK(classify(-3.0) == 0);
    CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("token embedding files") {
    Rng rng(5);
    std::vector<TokenEmbeddingSequence> seqs;
    Matrix a(3, 2);
    a << 0.5, -1, 2, 0.25, 0, 3;
    seqs.push_back({"a", a});
    Matrix big = Matrix::Constant(600, 2, 1.5);
    seqs.push_back({"b", big});
    std::stringstream buf;
    write_token_embeddings(buf, seqs);
    const auto back = read_token_embeddings(buf, 2);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].values == a);
    CHECK(back[1].values.rows() == 512);

    std::stringstream empty;
    CHECK(read_token_embeddings(empty, 2).empty());

    std::stringstream again;
    write_token_embeddings(again, seqs);
    CHECK_THROWS_AS(read_token_embeddings(again, 3), DataError);

    std::stringstream zero_len;
    write_token_embeddings(zero_len, {{"z", Matrix(0, 2)}});
    CHECK_THROWS_AS(read_token_embeddings(zero_len, 2), DataError);

    std::stringstream unknown;
    write_token_embeddings(unknown, seqs);
    const std::unordered_set<std::string> known{"a"};
    CHECK_THROWS_AS(read_token_embeddings(unknown, 2, 512, &known), DataError);
}

TEST_CASE("conv gradients match finite differences") {
    const auto cfg = small_config();
    for (std::uint64_t s = 0; s < 24; ++s) {
        Rng rng(300 + s);
        auto p = init_conv_params(cfg, s);
        randomize_biases(p, rng);
        const Matrix seq = oracle::random_matrix(rng, Eigen::Index(1 + rng.below(6)), 3);
        const int y = int(s % 2);
        ConvForwardState st;
        const double z = conv_forward(seq, p, false, 0.0, nullptr, &st);
        const auto g = conv_backward(p, st, bce_with_logits_grad(z, y));
        auto loss = [&] { return bce_with_logits(conv_forward(seq, p), y); };
        CAPTURE(s);
        for (std::size_t b = 0; b < p.banks.size(); ++b) {
            CHECK(oracle::max_relative_error(loss, p.banks[b].weights, g.banks[b].weights) < 1e-4);
            CHECK(oracle::max_relative_error(loss, p.banks[b].bias, g.banks[b].bias) < 1e-4);
        }
        CHECK(oracle::max_relative_error(loss, p.dense_w, g.dense_w) < 1e-4);
        CHECK(oracle::max_relative_error(loss, p.dense_b, g.dense_b) < 1e-4);
    }
}

TEST_CASE("conv gradients through dropout") {
    const auto cfg = small_config();
    Rng rng(9);
    auto p = init_conv_params(cfg, 4);
    randomize_biases(p, rng);
    const Matrix seq = oracle::random_matrix(rng, 6, 3);
    Rng drop(1);
    ConvForwardState st;
    const double z = conv_forward(seq, p, true, 0.5, &drop, &st);
    const auto g = conv_backward(p, st, bce_with_logits_grad(z, 1));
    // replay the same mask
    auto loss = [&] {
        Rng replay(1);
        return bce_with_logits(conv_forward(seq, p, true, 0.5, &replay), 1);
    };
    CHECK(oracle::max_relative_error(loss, p.dense_w, g.dense_w) < 1e-4);
    CHECK(oracle::max_relative_error(loss, p.banks[0].weights, g.banks[0].weights) < 1e-4);
}

TEST_CASE("padding beyond the first all-zero window does not change outputs") {
    const auto cfg = small_config();
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        auto p = init_conv_params(cfg, s);
        randomize_biases(p, rng);
        const auto len = Eigen::Index(1 + rng.below(8));
        const Matrix seq = oracle::random_matrix(rng, len, 3);
        const auto base = std::size_t(len) + cfg.max_kernel();
        const double ref = conv_forward(pad_sequence(seq, base), p);
        for (std::size_t extra = 1; extra < 5; ++extra) {
            CHECK(std::abs(conv_forward(pad_sequence(seq, base + extra), p) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("conv training learns a planted motif") {
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) labels.push_back(i % 2);
    const auto seqs = oracle::motif_sequences(labels, 4, 12, 3);
    const auto splits = stratified_split(labels, {0.7, 0.15, 0.15}, 1);
    ConvTrainConfig cfg;
    cfg.head.dim = 4;
    cfg.head.filters = 8;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.adam.learning_rate = 1e-2;
    const auto r = train_conv(seqs, labels, splits, cfg);
    CHECK(r.history.size() == 15);
    CHECK(evaluate_conv(seqs, labels, splits, r.params, Split::val).f1 >= 0.95);

    const auto again = train_conv(seqs, labels, splits, cfg);
    CHECK(again.params == r.params);

    cfg.epochs = 0;
    const auto none = train_conv(seqs, labels, splits, cfg);
    CHECK(none.history.empty());
    CHECK(none.params == init_conv_params(cfg.head, cfg.seed));
}

TEST_CASE("conv training needs sequences for training documents") {
    std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    auto seqs = oracle::motif_sequences(labels, 2, 6, 1);
    const auto splits = stratified_split(labels, {0.6, 0.2, 0.2}, 0);
    seqs[splits.indices(Split::train).front()] = Matrix();
    ConvTrainConfig cfg;
    cfg.head.dim = 2;
    cfg.head.filters = 2;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_conv(seqs, labels, splits, cfg), DataError);
}

TEST_CASE("conv checkpoint round trip") {
    const auto p = init_conv_params(small_config(), 8);
    const auto path = std::filesystem::temp_directory_path() / "hetgraph_conv_ckpt.bin";
    save_conv_checkpoint(path, p);
    CHECK(load_conv_checkpoint(path) == p);
    std::filesystem::remove(path);
}
