#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hetgraph {

/// Binary confusion counts, class 1 positive.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    [[nodiscard]] std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

enum class Averaging { weighted, macro, per_class };

Averaging parse_averaging(std::string_view name);
std::string_view to_string(Averaging a);

struct ClassMetrics {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    bool degenerate = false;   // a 0/0 denominator was replaced by 0
};

struct MetricsReport {
    Averaging averaging = Averaging::weighted;
    // Headline numbers under `averaging`; for per_class they are the positive
    // class's values.
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;   // ascending label
    std::size_t total = 0;
};

/// counts[true_class][predicted_class], classes 0..C-1.
MetricsReport metrics_from_counts(const std::vector<std::vector<std::size_t>>& counts, Averaging averaging);
MetricsReport metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::weighted);

struct SummaryStat {
    double mean = 0.0;
    double stddev = 0.0;   // sample (n - 1); 0 for a single run
    std::size_t runs = 0;
};

SummaryStat summarize(std::span<const double> values);

struct SeedAggregate {
    std::map<std::string, SummaryStat> metrics;   // precision, recall, f1, accuracy
    std::size_t runs = 0;
};

SeedAggregate aggregate(std::span<const MetricsReport> reports);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double p_corrected = 1.0;
    int comparisons = 1;
};

/// Two-tailed paired t-test over per-seed scores with Bonferroni correction.
/// Zero spread: p = 0 when the mean difference is nonzero, p = 1 otherwise.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, int comparisons = 1);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
/// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

nlohmann::json to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const SeedAggregate& agg);
nlohmann::json to_json(const TTestResult& t);

/// Fixed-width text table, columns Precision, Recall, F1, Accuracy, cells
/// rendered as mean_{std}.
std::string render_table(const std::vector<std::pair<std::string, SeedAggregate>>& rows);

}  // namespace hetgraph
