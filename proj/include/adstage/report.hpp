#pragma once

#include "adstage/evaluator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace adstage {

nlohmann::json to_json(const Metrics& metrics);
nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const RocCurve& roc);
nlohmann::json to_json(const EvaluationReport& report);
nlohmann::json to_json(const WilcoxonResult& result);

/// class,tp,fp,fn,tn,support,accuracy,precision,recall,f1,flags then a macro row.
std::string metrics_csv(const EvaluationReport& report);

/// fpr,tpr,threshold; the opening point has threshold "inf".
std::string roc_csv(const RocCurve& roc);

/// Paired comparison of two models on the same samples.
struct Comparison {
    std::string model_a;
    std::string model_b;
    std::string pairing;
    WilcoxonResult result;
    bool degenerate = false; // every paired difference was zero; p reported as 1
};

/// One row per report: model,samples,accuracy,macro_precision,macro_recall,macro_f1,auc,params,flops,memory_bytes.
std::string summary_csv(const std::vector<EvaluationReport>& reports);
nlohmann::json summary_json(const std::vector<EvaluationReport>& reports, const std::vector<Comparison>& comparisons);

/// Lowercase model identifier safe for file names.
std::string report_stem(const std::string& model);

/// Writes <stem>.json, <stem>_metrics.csv and <stem>_roc.csv into `dir`
/// (created if needed). Each file is written to a temporary and renamed; if
/// any write fails the files already written by this call are removed and
/// IoError is thrown. Returns the written paths.
std::vector<std::filesystem::path> write_report(const EvaluationReport& report, const std::filesystem::path& dir);

/// Same all-or-nothing semantics for an arbitrary set of named files.
std::vector<std::filesystem::path> write_files(const std::filesystem::path& dir,
                                               const std::vector<std::pair<std::string, std::string>>& files);

} // namespace adstage
