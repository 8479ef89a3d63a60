#include <doctest.h>

#include "hetgraph/error.hpp"
#include "hetgraph/eval.hpp"
#include "hetgraph/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef HETGRAPH_HAVE_BOOST_MATH
#include <boost/math/distributions/students_t.hpp>
#endif

using namespace hetgraph;

namespace {

// Closed form for df = 4.
double t_cdf_df4(double t) {
    const double u = t * t / 4.0;
    const double s = t / std::sqrt(1.0 + u);
    return 0.5 + 0.375 * s * (1.0 - u / (3.0 * (1.0 + u)));
}

}  // namespace

TEST_CASE("confusion examples") {
    const std::vector<int> a{1, 0};
    const auto cm = confusion(a, a);
    CHECK(cm.tp == 1);
    CHECK(cm.tn == 1);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
    const std::vector<int> p{1}, l{0};
    CHECK(confusion(p, l).fp == 1);
    const std::vector<int> two{1, 1};
    CHECK_THROWS_AS(confusion(two, l), DataError);
    const std::vector<int> three{2};
    CHECK_THROWS_AS(confusion(three, l), DataError);
}

TEST_CASE("10-shot confusion counts give the weighted metrics") {
    std::vector<int> preds, labels;
    auto add = [&](int y, int yhat, int n) {
        for (int i = 0; i < n; ++i) {
            labels.push_back(y);
            preds.push_back(yhat);
        }
    };
    add(0, 0, 665);
    add(0, 1, 18);
    add(1, 0, 159);
    add(1, 1, 27);
    const auto cm = confusion(preds, labels);
    CHECK(cm == ConfusionMatrix{27, 18, 159, 665});
    CHECK(cm.total() == 869);
    const auto m = metrics(cm);
    CHECK(std::abs(m.accuracy - 0.7963) < 5e-5);
    CHECK(std::abs(m.precision - 0.7627) < 5e-5);
    CHECK(std::abs(m.recall - 0.7963) < 5e-5);
    CHECK(std::abs(m.f1 - 0.7437) < 5e-5);

    const auto from_counts = metrics_from_counts({{665, 18}, {159, 27}}, Averaging::weighted);
    CHECK(from_counts.f1 == doctest::Approx(m.f1).epsilon(1e-15));
}

TEST_CASE("metrics edge cases") {
    const auto perfect = metrics(ConfusionMatrix{5, 0, 0, 5});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    const auto degenerate = metrics(ConfusionMatrix{0, 0, 3, 7}, Averaging::per_class);
    REQUIRE(degenerate.per_class.size() == 2);
    CHECK(degenerate.per_class[1].precision == 0.0);
    CHECK(degenerate.per_class[1].recall == 0.0);
    CHECK(degenerate.per_class[1].degenerate);
    CHECK(degenerate.precision == 0.0);

    const auto macro = metrics(ConfusionMatrix{1, 1, 1, 1}, Averaging::macro);
    CHECK(macro.f1 == doctest::Approx(0.5));
    CHECK_THROWS(metrics(ConfusionMatrix{}));
}

TEST_CASE("weighted recall equals accuracy; metrics are in range") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        ConfusionMatrix cm{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
        if (cm.total() == 0) cm.tp = 1;
        const auto m = metrics(cm);
        CHECK(std::abs(m.recall - m.accuracy) <= 1e-12);
        for (double v : {m.precision, m.recall, m.f1, m.accuracy}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("metrics are permutation invariant") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<int> p(n), l(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = int(rng.below(2));
            l[i] = int(rng.below(2));
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<std::size_t>(order));
        std::vector<int> p2, l2;
        for (auto i : order) {
            p2.push_back(p[i]);
            l2.push_back(l[i]);
        }
        CHECK(confusion(p, l) == confusion(p2, l2));
    }
}

TEST_CASE("aggregate") {
    MetricsReport a, b;
    a.f1 = 0.8;
    b.f1 = 0.9;
    const std::vector<MetricsReport> two{a, b};
    const auto agg = aggregate(two);
    CHECK(agg.runs == 2);
    CHECK(agg.metrics.at("f1").mean == doctest::Approx(0.85).epsilon(1e-14));
    CHECK(agg.metrics.at("f1").stddev == doctest::Approx(0.0707).epsilon(1e-3));
    const std::vector<MetricsReport> one{a};
    CHECK(aggregate(one).metrics.at("f1").stddev == 0.0);
    const std::vector<MetricsReport> same{a, a, a};
    CHECK(aggregate(same).metrics.at("f1").stddev == 0.0);
    CHECK_THROWS(aggregate(std::span<const MetricsReport>{}));
}

TEST_CASE("paired t-test") {
    const std::vector<double> a{1, 0, 1, 0, 1}, zero(5, 0.0);
    const auto r = paired_ttest(a, zero);
    CHECK(r.t == doctest::Approx(2.4495).epsilon(1e-4));
    CHECK(r.df == 4.0);
    CHECK(r.p == doctest::Approx(0.0705).epsilon(2e-3));
    const double oracle_p = 2.0 * (1.0 - t_cdf_df4(r.t));
    CHECK(std::abs(r.p - oracle_p) < 1e-10);

    const auto rev = paired_ttest(zero, a);
    CHECK(rev.t == -r.t);
    CHECK(rev.p == doctest::Approx(r.p).epsilon(1e-14));

    const auto same = paired_ttest(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);

    const std::vector<double> shifted{2, 1, 2, 1, 2};
    CHECK(paired_ttest(shifted, a).p == 0.0);

    const auto three = paired_ttest(a, zero, 3);
    CHECK(three.p_corrected == doctest::Approx(std::min(1.0, 3 * r.p)).epsilon(1e-15));
    CHECK(paired_ttest(a, zero, 100).p_corrected == 1.0);

    const std::vector<double> single{1};
    CHECK_THROWS(paired_ttest(single, single));
    CHECK_THROWS(paired_ttest(a, single));
}

TEST_CASE("t-test antisymmetry on random scores") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a[std::size_t(i)] = rng.uniform();
            b[std::size_t(i)] = rng.uniform();
        }
        const auto x = paired_ttest(a, b), y = paired_ttest(b, a);
        CHECK(std::abs(x.t + y.t) <= 1e-12 * std::max(1.0, std::abs(x.t)));
        CHECK(std::abs(x.p - y.p) <= 1e-12);
    }
}

TEST_CASE("student t cdf") {
    for (double t : {-6.0, -2.4495, -1.0, 0.0, 0.3, 1.5, 2.4495, 8.0}) {
        CHECK(std::abs(student_t_cdf(t, 4.0) - t_cdf_df4(t)) < 1e-10);
    }
    CHECK(student_t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-12));
#ifdef HETGRAPH_HAVE_BOOST_MATH
    for (double df : {1.0, 2.0, 3.5, 7.0, 19.0, 50.0, 100.0}) {
        boost::math::students_t dist(df);
        for (double t : {-10.0, -3.0, -0.7, 0.0, 0.2, 1.9, 4.0, 12.0}) {
            CHECK(std::abs(student_t_cdf(t, df) - boost::math::cdf(dist, t)) < 1e-10);
        }
    }
#endif
}

TEST_CASE("json and table") {
    const ConfusionMatrix cm{27, 18, 159, 665};
    CHECK(confusion_from_json(to_json(cm)) == cm);
    const auto j = to_json(metrics(cm));
    CHECK(j.contains("f1"));
    MetricsReport r = metrics(cm);
    const std::vector<MetricsReport> runs{r, r};
    const auto table = render_table({{"model", aggregate(runs)}});
    CHECK(table.find("Precision") != std::string::npos);
    CHECK(table.find("0.7627") != std::string::npos);
}
