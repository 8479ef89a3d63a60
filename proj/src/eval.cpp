#include "hetgraph/eval.hpp"

#include "hetgraph/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hetgraph {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw DataError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i];
        const int y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw DataError("confusion: values must be binary");
        if (p == 1 && y == 1) ++cm.tp;
        else if (p == 1) ++cm.fp;
        else if (y == 1) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

Averaging parse_averaging(std::string_view name) {
    if (name == "weighted") return Averaging::weighted;
    if (name == "macro") return Averaging::macro;
    if (name == "per_class") return Averaging::per_class;
    throw UsageError("unknown averaging '" + std::string(name) + "'");
}

std::string_view to_string(Averaging a) {
    switch (a) {
        case Averaging::weighted: return "weighted";
        case Averaging::macro: return "macro";
        case Averaging::per_class: return "per_class";
    }
    return "?";
}

MetricsReport metrics_from_counts(const std::vector<std::vector<std::size_t>>& counts, Averaging averaging) {
    const std::size_t classes = counts.size();
    for (const auto& row : counts) {
        if (row.size() != classes) throw DataError("metrics: confusion counts must be square");
    }
    MetricsReport r;
    r.averaging = averaging;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        correct += counts[c][c];
        for (std::size_t p = 0; p < classes; ++p) r.total += counts[c][p];
    }
    if (r.total == 0) throw DataError("metrics: confusion matrix is empty");
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);

    double wp = 0, wr = 0, wf = 0, mp = 0, mr = 0, mf = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t predicted = 0, support = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            predicted += counts[k][c];
            support += counts[c][k];
        }
        ClassMetrics m;
        m.label = static_cast<int>(c);
        m.support = support;
        const auto tp = static_cast<double>(counts[c][c]);
        if (predicted == 0) m.degenerate = true;
        else m.precision = tp / static_cast<double>(predicted);
        if (support == 0) m.degenerate = true;
        else m.recall = tp / static_cast<double>(support);
        if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        const double w = static_cast<double>(support) / static_cast<double>(r.total);
        wp += w * m.precision;
        wr += w * m.recall;
        wf += w * m.f1;
        mp += m.precision;
        mr += m.recall;
        mf += m.f1;
        r.per_class.push_back(m);
    }
    switch (averaging) {
        case Averaging::weighted:
            r.precision = wp;
            r.recall = wr;
            r.f1 = wf;
            break;
        case Averaging::macro:
            r.precision = mp / static_cast<double>(classes);
            r.recall = mr / static_cast<double>(classes);
            r.f1 = mf / static_cast<double>(classes);
            break;
        case Averaging::per_class: {
            const auto& pos = r.per_class.back();
            r.precision = pos.precision;
            r.recall = pos.recall;
            r.f1 = pos.f1;
            break;
        }
    }
    return r;
}

MetricsReport metrics(const ConfusionMatrix& cm, Averaging averaging) {
    return metrics_from_counts({{cm.tn, cm.fp}, {cm.fn, cm.tp}}, averaging);
}

SummaryStat summarize(std::span<const double> values) {
    if (values.empty()) throw DataError("summarize: no values");
    SummaryStat s;
    s.runs = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
        s.mean = values.front();
    } else if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

SeedAggregate aggregate(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw DataError("aggregate: no reports");
    SeedAggregate agg;
    agg.runs = reports.size();
    auto collect = [&](auto field) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(r.*field);
        return summarize(v);
    };
    agg.metrics["precision"] = collect(&MetricsReport::precision);
    agg.metrics["recall"] = collect(&MetricsReport::recall);
    agg.metrics["f1"] = collect(&MetricsReport::f1);
    agg.metrics["accuracy"] = collect(&MetricsReport::accuracy);
    return agg;
}

// ---------------------------------------------------------------------------
// Student t

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericalError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw UsageError("incomplete beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw UsageError("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw UsageError("student t: degrees of freedom must be positive");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, int comparisons) {
    if (a.size() != b.size()) throw DataError("paired t-test: score lists differ in length");
    if (a.size() < 2) throw DataError("paired t-test: need at least 2 paired runs");
    if (comparisons < 1) throw UsageError("paired t-test: comparisons must be >= 1");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const auto s = summarize(d);
    const double n = static_cast<double>(d.size());
    TTestResult r;
    r.df = n - 1.0;
    r.comparisons = comparisons;
    if (s.stddev == 0.0) {
        if (s.mean == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = s.mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
    } else {
        r.t = s.mean / (s.stddev / std::sqrt(n));
        r.p = incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t));
    }
    r.p_corrected = std::min(1.0, r.p * comparisons);
    return r;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const ConfusionMatrix& cm) { return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}; }

ConfusionMatrix confusion_from_json(const json& j) {
    try {
        ConfusionMatrix cm{j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("fn").get<std::size_t>(),
                           j.at("tn").get<std::size_t>()};
        return cm;
    } catch (const json::exception& e) {
        throw DataError(std::string("confusion counts: ") + e.what());
    }
}

json to_json(const MetricsReport& r) {
    json classes = json::array();
    for (const auto& c : r.per_class) {
        classes.push_back({{"label", c.label},
                           {"precision", c.precision},
                           {"recall", c.recall},
                           {"f1", c.f1},
                           {"support", c.support},
                           {"degenerate", c.degenerate}});
    }
    return {{"averaging", std::string(to_string(r.averaging))},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"accuracy", r.accuracy},
            {"total", r.total},
            {"per_class", std::move(classes)}};
}

json to_json(const SeedAggregate& agg) {
    json metrics = json::object();
    for (const auto& [name, s] : agg.metrics) metrics[name] = {{"mean", s.mean}, {"std", s.stddev}, {"runs", s.runs}};
    return {{"runs", agg.runs}, {"metrics", std::move(metrics)}};
}

json to_json(const TTestResult& t) {
    auto num = [](double v) -> json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    return {{"t", num(t.t)}, {"df", t.df}, {"p", t.p}, {"p_corrected", t.p_corrected}, {"comparisons", t.comparisons}};
}

std::string render_table(const std::vector<std::pair<std::string, SeedAggregate>>& rows) {
    static const char* const columns[] = {"precision", "recall", "f1", "accuracy"};
    static const char* const headers[] = {"Precision", "Recall", "F1", "Accuracy"};
    std::size_t name_width = 5;
    for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_width), "Model");
    out << buf;
    for (const char* h : headers) {
        std::snprintf(buf, sizeof buf, "  %-16s", h);
        out << buf;
    }
    out << '\n';
    for (const auto& [name, agg] : rows) {
        std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_width), name.c_str());
        out << buf;
        for (const char* c : columns) {
            const auto it = agg.metrics.find(c);
            const SummaryStat s = it == agg.metrics.end() ? SummaryStat{} : it->second;
            char cell[48];
            std::snprintf(cell, sizeof cell, "%.4f_{%.4f}", s.mean, s.stddev);
            std::snprintf(buf, sizeof buf, "  %-16s", cell);
            out << buf;
        }
        out << '\n';
    }
    std::string text = out.str();
    // strip trailing spaces per line
    std::string cleaned;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        while (!line.empty() && line.back() == ' ') line.pop_back();
        cleaned += line + '\n';
    }
    return cleaned;
}

}  // namespace hetgraph
