#pragma once

#include "adstage/cost.hpp"
#include "adstage/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace adstage {

/// Per-sample class probabilities from one model; rows sum to 1.
struct PredictionMatrix {
    Tensor probs; // [N, classes]
    std::string source;
};

/// Elementwise mean of member probability matrices. Throws EnsembleError
/// for fewer than two members, mismatched shapes or unnormalised rows.
PredictionMatrix ensemble_average(const std::vector<PredictionMatrix>& members);

std::vector<std::size_t> argmax_rows(const Tensor& probs);

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes);

    std::size_t classes() const noexcept { return classes_; }
    std::uint64_t& at(std::size_t truth, std::size_t predicted) { return cells_[truth * classes_ + predicted]; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return cells_[truth * classes_ + predicted]; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t c) const;
    std::uint64_t col_sum(std::size_t c) const;

    // one-vs-rest counts for class c
    std::uint64_t tp(std::size_t c) const { return at(c, c); }
    std::uint64_t fn(std::size_t c) const { return row_sum(c) - tp(c); }
    std::uint64_t fp(std::size_t c) const { return col_sum(c) - tp(c); }
    std::uint64_t tn(std::size_t c) const { return total() - tp(c) - fn(c) - fp(c); }

private:
    std::size_t classes_ = 0;
    std::vector<std::uint64_t> cells_;
};

/// Throws EvaluationError on length mismatch or an out-of-range label.
ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t classes = 4);

struct ClassMetrics {
    std::string name;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0, support = 0;
    double accuracy = 0.0; // (TP+TN)/all, one-vs-rest
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // set when the metric had a zero denominator and was reported as 0
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

struct Metrics {
    double accuracy = 0.0; // trace / N
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
};

/// Throws EvaluationError for an empty matrix.
Metrics metrics(const ConfusionMatrix& cm, const std::vector<std::string>& class_names = {});

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points; // threshold descending, from (0,0) to (1,1)
    double auc = 0.0;
    std::string scheme;
};

/// Binary ROC over (score, is_positive) pairs; ties in score form one step.
/// Throws EvaluationError unless both labels are present.
RocCurve roc_binary(const std::vector<double>& scores, const std::vector<bool>& positive);

/// Micro-averaged one-vs-rest ROC: every (sample, class) probability is a
/// score whose label is "class is the true class". Throws EvaluationError
/// when every sample has the same true class.
RocCurve roc_auc(const PredictionMatrix& predictions, const std::vector<std::size_t>& truth);

struct WilcoxonResult {
    std::size_t n = 0; // non-zero differences
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0; // min(w_plus, w_minus)
    double p_value = 1.0;   // two-sided
    bool exact = false;
};

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped and tied magnitudes share average ranks. Up to 25 non-zero
/// differences the null distribution is enumerated exactly; beyond that a
/// normal approximation with tie and continuity corrections is used.
/// Throws DegenerateTestError when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

/// 1.0 where predicted == truth, else 0.0; the pairing used to compare models.
std::vector<double> correctness(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);

struct EvaluationReport {
    std::string model;
    std::size_t samples = 0;
    ConfusionMatrix confusion;
    Metrics metrics;
    RocCurve roc;
    std::optional<CostReport> cost;
};

EvaluationReport evaluate(const PredictionMatrix& predictions, const std::vector<std::size_t>& truth,
                          const std::vector<std::string>& class_names);

} // namespace adstage
