#include "adstage/report.hpp"

#include "adstage/errors.hpp"
#include "adstage/weight_archive.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace adstage {

namespace {

std::string num(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

nlohmann::json to_json(const Metrics& m)
{
    nlohmann::json per = nlohmann::json::array();
    for (const auto& k : m.per_class) {
        nlohmann::json undefined = nlohmann::json::array();
        if (k.precision_undefined)
            undefined.push_back("precision");
        if (k.recall_undefined)
            undefined.push_back("recall");
        if (k.f1_undefined)
            undefined.push_back("f1");
        per.push_back({{"class", k.name},
                       {"tp", k.tp},
                       {"fp", k.fp},
                       {"fn", k.fn},
                       {"tn", k.tn},
                       {"support", k.support},
                       {"accuracy", k.accuracy},
                       {"precision", k.precision},
                       {"recall", k.recall},
                       {"f1", k.f1},
                       {"undefined", undefined}});
    }
    return {{"accuracy", m.accuracy},
            {"macro_precision", m.macro_precision},
            {"macro_recall", m.macro_recall},
            {"macro_f1", m.macro_f1},
            {"per_class", per}};
}

nlohmann::json to_json(const ConfusionMatrix& cm)
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < cm.classes(); ++j)
            row.push_back(cm.at(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json to_json(const RocCurve& roc)
{
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : roc.points) {
        nlohmann::json t = std::isinf(p.threshold) ? nlohmann::json(nullptr) : nlohmann::json(p.threshold);
        pts.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", t}});
    }
    return {{"scheme", roc.scheme}, {"auc", roc.auc}, {"points", pts}};
}

nlohmann::json to_json(const EvaluationReport& r)
{
    nlohmann::json j{{"model", r.model},
                     {"samples", r.samples},
                     {"metrics", to_json(r.metrics)},
                     {"confusion", to_json(r.confusion)},
                     {"roc", to_json(r.roc)}};
    j["cost"] = r.cost ? to_json(*r.cost) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const WilcoxonResult& w)
{
    return {{"n", w.n},
            {"w_plus", w.w_plus},
            {"w_minus", w.w_minus},
            {"statistic", w.statistic},
            {"p_value", w.p_value},
            {"method", w.exact ? "exact" : "normal-approximation"}};
}

std::string metrics_csv(const EvaluationReport& r)
{
    std::ostringstream os;
    os << "class,tp,fp,fn,tn,support,accuracy,precision,recall,f1,undefined\n";
    for (const auto& k : r.metrics.per_class) {
        std::string flags;
        auto flag = [&](bool on, const char* what) {
            if (on)
                flags += (flags.empty() ? "" : ";") + std::string(what);
        };
        flag(k.precision_undefined, "precision");
        flag(k.recall_undefined, "recall");
        flag(k.f1_undefined, "f1");
        os << k.name << ',' << k.tp << ',' << k.fp << ',' << k.fn << ',' << k.tn << ',' << k.support << ','
           << num(k.accuracy) << ',' << num(k.precision) << ',' << num(k.recall) << ',' << num(k.f1) << ',' << flags
           << '\n';
    }
    os << "macro,,,,," << r.samples << ',' << num(r.metrics.accuracy) << ',' << num(r.metrics.macro_precision) << ','
       << num(r.metrics.macro_recall) << ',' << num(r.metrics.macro_f1) << ",\n";
    return os.str();
}

std::string roc_csv(const RocCurve& roc)
{
    std::string out = "fpr,tpr,threshold\n";
    for (const auto& p : roc.points)
        out += num(p.fpr) + ',' + num(p.tpr) + ',' + num(p.threshold) + '\n';
    return out;
}

std::string summary_csv(const std::vector<EvaluationReport>& reports)
{
    std::string out = "model,samples,accuracy,macro_precision,macro_recall,macro_f1,auc,params,flops,memory_bytes\n";
    for (const auto& r : reports) {
        out += r.model + ',' + std::to_string(r.samples) + ',' + num(r.metrics.accuracy) + ','
               + num(r.metrics.macro_precision) + ',' + num(r.metrics.macro_recall) + ',' + num(r.metrics.macro_f1)
               + ',' + num(r.roc.auc) + ',';
        if (r.cost)
            out += std::to_string(r.cost->total_params) + ',' + std::to_string(r.cost->flops) + ','
                   + std::to_string(r.cost->memory_bytes);
        else
            out += ",,";
        out += '\n';
    }
    return out;
}

nlohmann::json summary_json(const std::vector<EvaluationReport>& reports, const std::vector<Comparison>& comparisons)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : reports)
        rows.push_back({{"model", r.model},
                        {"samples", r.samples},
                        {"accuracy", r.metrics.accuracy},
                        {"macro_f1", r.metrics.macro_f1},
                        {"auc", r.roc.auc},
                        {"auc_scheme", r.roc.scheme}});
    nlohmann::json cmp = nlohmann::json::array();
    for (const auto& c : comparisons) {
        auto j = to_json(c.result);
        j["model_a"] = c.model_a;
        j["model_b"] = c.model_b;
        j["pairing"] = c.pairing;
        j["degenerate"] = c.degenerate;
        cmp.push_back(j);
    }
    return {{"models", rows}, {"wilcoxon", cmp}};
}

std::string report_stem(const std::string& model)
{
    std::string s;
    for (char ch : model) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '-' || ch == '_')
            s += static_cast<char>(std::tolower(c));
        else if (ch == ',' || ch == '(' || ch == '+')
            s += '_';
    }
    while (!s.empty() && s.back() == '_')
        s.pop_back();
    return s.empty() ? "model" : s;
}

std::vector<std::filesystem::path> write_files(const std::filesystem::path& dir,
                                               const std::vector<std::pair<std::string, std::string>>& files)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    try {
        for (const auto& [name, body] : files) {
            write_file_atomic(dir / name, body);
            written.push_back(dir / name);
        }
    } catch (const Error&) {
        for (const auto& p : written)
            std::filesystem::remove(p, ec);
        throw;
    }
    return written;
}

std::vector<std::filesystem::path> write_report(const EvaluationReport& report, const std::filesystem::path& dir)
{
    const auto stem = report_stem(report.model);
    return write_files(dir, {{stem + ".json", to_json(report).dump(2) + "\n"},
                             {stem + "_metrics.csv", metrics_csv(report)},
                             {stem + "_roc.csv", roc_csv(report.roc)}});
}

} // namespace adstage
