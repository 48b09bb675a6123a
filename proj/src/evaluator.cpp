#include "adstage/evaluator.hpp"

#include "adstage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace adstage {

PredictionMatrix ensemble_average(const std::vector<PredictionMatrix>& members)
{
    if (members.size() < 2)
        throw EnsembleError("ensemble needs at least two members, got " + std::to_string(members.size()));
    const Shape shape = members.front().probs.shape();
    if (shape.size() != 2)
        throw EnsembleError("prediction matrices must be [N,classes]");
    std::vector<double> sum(shape_size(shape), 0.0);
    std::string source = "ensemble(";
    for (std::size_t m = 0; m < members.size(); ++m) {
        const auto& p = members[m].probs;
        if (p.shape() != shape)
            throw EnsembleError("member '" + members[m].source + "' has shape " + shape_string(p.shape()) + ", expected "
                                + shape_string(shape));
        for (std::size_t r = 0; r < shape[0]; ++r) {
            double row = 0.0;
            for (std::size_t c = 0; c < shape[1]; ++c)
                row += p[r * shape[1] + c];
            if (std::abs(row - 1.0) > 1e-4)
                throw EnsembleError("member '" + members[m].source + "' row " + std::to_string(r) + " sums to "
                                    + std::to_string(row));
        }
        for (std::size_t i = 0; i < sum.size(); ++i)
            sum[i] += p[i];
        source += (m ? "," : "") + members[m].source;
    }
    Tensor avg(shape);
    const double n = static_cast<double>(members.size());
    for (std::size_t i = 0; i < sum.size(); ++i)
        avg[i] = static_cast<float>(sum[i] / n);
    return {std::move(avg), source + ")"};
}

std::vector<std::size_t> argmax_rows(const Tensor& probs)
{
    if (probs.rank() != 2)
        throw ShapeError("argmax_rows expects [N,classes]");
    std::vector<std::size_t> out(probs.dim(0));
    const std::size_t c = probs.dim(1);
    for (std::size_t n = 0; n < out.size(); ++n) {
        const float* row = probs.raw() + n * c;
        out[n] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    }
    return out;
}

// ---- confusion / metrics --------------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes)
    , cells_(classes * classes, 0)
{
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const
{
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < classes_; ++c)
        t += at(c, c);
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const
{
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < classes_; ++j)
        s += at(c, j);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const
{
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i)
        s += at(i, c);
    return s;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t classes)
{
    if (truth.size() != predicted.size())
        throw EvaluationError("confusion: " + std::to_string(truth.size()) + " labels vs "
                              + std::to_string(predicted.size()) + " predictions");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= classes || predicted[i] >= classes)
            throw EvaluationError("confusion: label out of range at sample " + std::to_string(i));
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm, const std::vector<std::string>& class_names)
{
    const auto total = cm.total();
    if (total == 0)
        throw EvaluationError("cannot compute metrics of an empty confusion matrix");
    Metrics m;
    m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        ClassMetrics k;
        k.name = c < class_names.size() ? class_names[c] : std::to_string(c);
        k.tp = cm.tp(c);
        k.fp = cm.fp(c);
        k.fn = cm.fn(c);
        k.tn = cm.tn(c);
        k.support = cm.row_sum(c);
        k.accuracy = static_cast<double>(k.tp + k.tn) / static_cast<double>(total);
        if (k.tp + k.fp == 0)
            k.precision_undefined = true;
        else
            k.precision = static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp);
        if (k.tp + k.fn == 0)
            k.recall_undefined = true;
        else
            k.recall = static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn);
        if (k.precision + k.recall == 0.0)
            k.f1_undefined = true;
        else
            k.f1 = 2.0 * k.precision * k.recall / (k.precision + k.recall);
        m.macro_precision += k.precision;
        m.macro_recall += k.recall;
        m.macro_f1 += k.f1;
        m.per_class.push_back(std::move(k));
    }
    const double n = static_cast<double>(cm.classes());
    m.macro_precision /= n;
    m.macro_recall /= n;
    m.macro_f1 /= n;
    return m;
}

// ---- ROC ---------------------------------------------------------------------------------

RocCurve roc_binary(const std::vector<double>& scores, const std::vector<bool>& positive)
{
    if (scores.size() != positive.size())
        throw EvaluationError("roc: score and label counts differ");
    const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    const std::size_t neg = positive.size() - pos;
    if (pos == 0 || neg == 0)
        throw EvaluationError("roc needs both positive and negative samples");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.scheme = "binary";
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (positive[order[i]])
                ++tp;
            else
                ++fp;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, s});
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return curve;
}

RocCurve roc_auc(const PredictionMatrix& predictions, const std::vector<std::size_t>& truth)
{
    const auto& p = predictions.probs;
    if (p.rank() != 2 || p.dim(0) != truth.size())
        throw EvaluationError("roc: prediction rows do not match label count");
    if (std::adjacent_find(truth.begin(), truth.end(), std::not_equal_to<>()) == truth.end())
        throw EvaluationError("roc needs at least two distinct true classes");
    const std::size_t c = p.dim(1);
    std::vector<double> scores;
    std::vector<bool> positive;
    scores.reserve(p.size());
    positive.reserve(p.size());
    for (std::size_t n = 0; n < truth.size(); ++n) {
        if (truth[n] >= c)
            throw EvaluationError("roc: label out of range");
        for (std::size_t k = 0; k < c; ++k) {
            scores.push_back(p[n * c + k]);
            positive.push_back(truth[n] == k);
        }
    }
    auto curve = roc_binary(scores, positive);
    curve.scheme = "micro-average one-vs-rest";
    return curve;
}

// ---- Wilcoxon -------------------------------------------------------------------------------

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size())
        throw EvaluationError("wilcoxon: paired samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0)
            d.push_back(a[i] - b[i]);
    if (d.empty())
        throw DegenerateTestError("wilcoxon: every paired difference is zero");

    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(d[x]) < std::abs(d[y]); });

    // doubled ranks keep average ranks of ties integral
    std::vector<std::size_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]]))
            ++j;
        const std::size_t doubled = i + 1 + j; // (i+1 + j) = 2 * mean rank of positions i..j-1
        for (std::size_t k = i; k < j; ++k)
            rank2[order[k]] = doubled;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    WilcoxonResult r;
    r.n = n;
    std::size_t plus2 = 0, total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0)
            plus2 += rank2[i];
    }
    r.w_plus = plus2 / 2.0;
    r.w_minus = (total2 - plus2) / 2.0;
    r.statistic = std::min(r.w_plus, r.w_minus);

    const double nd = static_cast<double>(n);
    if (n <= 25) {
        r.exact = true;
        // number of sign assignments giving each doubled positive-rank sum
        std::vector<double> ways(total2 + 1, 0.0);
        ways[0] = 1.0;
        std::size_t reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            reach += rank2[i];
            for (std::size_t s = reach + 1; s-- > rank2[i];)
                ways[s] += ways[s - rank2[i]];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        double lower = 0.0, upper = 0.0;
        for (std::size_t s = 0; s <= total2; ++s) {
            if (s <= plus2)
                lower += ways[s];
            if (s >= plus2)
                upper += ways[s];
        }
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    } else {
        const double mean = nd * (nd + 1.0) / 4.0;
        const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
        const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / std::sqrt(var);
        r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    }
    return r;
}

std::vector<double> correctness(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth)
{
    if (predicted.size() != truth.size())
        throw EvaluationError("correctness: prediction and label counts differ");
    std::vector<double> out(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        out[i] = predicted[i] == truth[i] ? 1.0 : 0.0;
    return out;
}

EvaluationReport evaluate(const PredictionMatrix& predictions, const std::vector<std::size_t>& truth,
                          const std::vector<std::string>& class_names)
{
    EvaluationReport r;
    r.model = predictions.source;
    r.samples = truth.size();
    r.confusion = confusion(truth, argmax_rows(predictions.probs), predictions.probs.dim(1));
    r.metrics = metrics(r.confusion, class_names);
    r.roc = roc_auc(predictions, truth);
    return r;
}

} // namespace adstage
