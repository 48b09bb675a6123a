#pragma once

#include "adstage/trainer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace adstage {

/// Effective settings of one CLI invocation: a JSON config file, then flags
/// layered on top.
struct RunConfig {
    std::string dataset;              // raw image tree
    std::string data;                 // prepared cache
    std::string out = "runs";
    std::string scenario = "smote";   // smote | no-smote
    std::string smote_order = "paper"; // paper | after-split
    std::string model = "ir-brainnet";
    std::uint64_t seed = 42;
    std::string flops_convention = "standard";
    bool toy = false;
    std::size_t image_size = 0; // 0: the model's native size
    std::size_t limit = 0;      // 0: every row
    std::string import_vgg19;
    std::string import_entry = "block2_conv1";
    std::string resume;
    nlohmann::json train = nlohmann::json::object(); // TrainConfig overrides

    /// Throws ConfigError for unknown keys or ill-typed values.
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Defaults for the chosen scale with the overrides applied.
    TrainConfig train_config() const;

    /// Throws ConfigError for an unknown scenario, order, model or convention.
    void validate() const;
};

/// Entry point of the `adstage` executable. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 1801464 -> "1,801,464"
std::string group_thousands(std::uint64_t value);

} // namespace adstage
