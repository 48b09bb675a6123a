#pragma once

#include "adstage/architectures.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace adstage {

struct ParamCount {
    std::uint64_t total = 0;
    std::uint64_t trainable = 0;
};

/// conv 9*Cin*Cout + Cout, dense Din*Dout + Dout, batchnorm 4C (2C trainable),
/// everything else 0.
ParamCount param_count(const ModelGraph& graph);

/// 4 bytes per parameter, trainable or not.
std::uint64_t memory_bytes(const ModelGraph& graph);

/// How FLOPs are counted. The published per-model figures do not follow any
/// single rule, so the rule is an explicit choice:
///  - standard:   conv Hout*Wout*Cout*(2*9*Cin + 1), pool Hout*Wout*C*4,
///                dense 2*Din*Dout, relu 1/element, batchnorm 2/element,
///                softmax 3/class
///  - macs:       multiply-accumulates of conv and dense layers only
///  - input-res: conv Hin*Win*Cin*Cout*9*2, pool Hin*Win*C*4, dense 2*Din*Dout
enum class FlopConvention { standard, macs, input_res };

/// Throws ConfigError for an unknown name.
FlopConvention parse_flop_convention(const std::string& name);
std::string to_string(FlopConvention convention);

struct LayerCost {
    std::string name;
    std::string kind;
    Shape output_shape;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

struct CostReport {
    std::string model;
    FlopConvention convention = FlopConvention::standard;
    std::uint64_t total_params = 0;
    std::uint64_t trainable_params = 0;
    std::uint64_t flops = 0; // one forward pass of one image
    std::uint64_t memory_bytes = 0;
    std::vector<LayerCost> layers;
};

CostReport flop_count(const ModelGraph& graph, FlopConvention convention = FlopConvention::standard);

/// FLOPs of averaging `members` probability vectors of `classes` entries for
/// one sample: `members` additions and one division per class, i.e. 3 per
/// class for a two-model ensemble.
std::uint64_t ensemble_average_flops(std::size_t members, std::size_t classes = kNumClasses);

/// Sum of member costs plus the averaging step.
CostReport ensemble_cost(const std::vector<CostReport>& members, std::size_t classes = kNumClasses);

nlohmann::json to_json(const CostReport& report);

inline double to_mib(std::uint64_t bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0); }

} // namespace adstage
