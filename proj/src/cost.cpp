#include "adstage/cost.hpp"

#include "adstage/errors.hpp"

namespace adstage {

namespace {

std::uint64_t layer_params(const ModelGraph& g, const LayerSpec& l, bool trainable_only)
{
    std::uint64_t n = 0;
    const std::string prefix = l.name + "/";
    for (const auto& [key, t] : g.params)
        if (key.starts_with(prefix) && (!trainable_only || is_trainable_param(key)))
            n += t.size();
    return n;
}

} // namespace

ParamCount param_count(const ModelGraph& graph)
{
    ParamCount c;
    for (const auto& l : graph.layers) {
        c.total += layer_params(graph, l, false);
        c.trainable += layer_params(graph, l, true);
    }
    return c;
}

std::uint64_t memory_bytes(const ModelGraph& graph) { return 4 * param_count(graph).total; }

FlopConvention parse_flop_convention(const std::string& name)
{
    if (name == "standard")
        return FlopConvention::standard;
    if (name == "macs")
        return FlopConvention::macs;
    if (name == "input-res")
        return FlopConvention::input_res;
    throw ConfigError("unknown FLOPs convention '" + name + "' (known: standard, macs, input-res)");
}

std::string to_string(FlopConvention convention)
{
    switch (convention) {
    case FlopConvention::standard: return "standard";
    case FlopConvention::macs: return "macs";
    case FlopConvention::input_res: return "input-res";
    }
    return "standard";
}

CostReport flop_count(const ModelGraph& graph, FlopConvention convention)
{
    CostReport r;
    r.model = graph.name;
    r.convention = convention;
    const auto pc = param_count(graph);
    r.total_params = pc.total;
    r.trainable_params = pc.trainable;
    r.memory_bytes = 4 * pc.total;

    const auto shapes = graph.output_shapes();
    Shape in = graph.input_shape;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const auto& l = graph.layers[i];
        const Shape& out = shapes[i];
        const std::uint64_t out_elems = shape_size(out);
        std::uint64_t f = 0;
        switch (l.kind) {
        case LayerKind::conv3x3: {
            const std::uint64_t macs = out_elems * 9 * in[2];
            if (convention == FlopConvention::standard)
                f = 2 * macs + out_elems;
            else if (convention == FlopConvention::macs)
                f = macs;
            else
                f = in[0] * in[1] * in[2] * out[2] * 9 * 2;
            break;
        }
        case LayerKind::maxpool2:
        case LayerKind::avgpool2:
            if (convention == FlopConvention::standard)
                f = out_elems * 4;
            else if (convention == FlopConvention::input_res)
                f = shape_size(in) * 4;
            break;
        case LayerKind::dense:
            f = (convention == FlopConvention::macs ? 1 : 2) * in[0] * out[0];
            break;
        case LayerKind::relu:
            if (convention == FlopConvention::standard)
                f = out_elems;
            break;
        case LayerKind::batchnorm:
            if (convention == FlopConvention::standard)
                f = 2 * out_elems;
            break;
        case LayerKind::softmax:
            if (convention == FlopConvention::standard)
                f = 3 * out_elems;
            break;
        case LayerKind::flatten:
            break;
        }
        r.layers.push_back({l.name, std::string(to_string(l.kind)), out, layer_params(graph, l, false), f});
        r.flops += f;
        in = out;
    }
    return r;
}

std::uint64_t ensemble_average_flops(std::size_t members, std::size_t classes)
{
    return static_cast<std::uint64_t>(members + 1) * classes;
}

CostReport ensemble_cost(const std::vector<CostReport>& members, std::size_t classes)
{
    if (members.empty())
        throw ConfigError("ensemble cost needs at least one member");
    CostReport r;
    r.model = "ensemble";
    r.convention = members.front().convention;
    for (const auto& m : members) {
        r.total_params += m.total_params;
        r.trainable_params += m.trainable_params;
        r.flops += m.flops;
        r.memory_bytes += m.memory_bytes;
    }
    const auto avg = ensemble_average_flops(members.size(), classes);
    r.layers.push_back({"average", "ensemble-average", {classes}, 0, avg});
    r.flops += avg;
    return r;
}

nlohmann::json to_json(const CostReport& report)
{
    nlohmann::json j;
    j["model"] = report.model;
    j["flops_convention"] = to_string(report.convention);
    j["total_params"] = report.total_params;
    j["trainable_params"] = report.trainable_params;
    j["non_trainable_params"] = report.total_params - report.trainable_params;
    j["flops"] = report.flops;
    j["gflops"] = static_cast<double>(report.flops) / 1e9;
    j["memory_bytes"] = report.memory_bytes;
    j["memory_mib"] = to_mib(report.memory_bytes);
    j["layers"] = nlohmann::json::array();
    for (const auto& l : report.layers)
        j["layers"].push_back({{"name", l.name},
                               {"kind", l.kind},
                               {"output_shape", l.output_shape},
                               {"params", l.params},
                               {"flops", l.flops}});
    return j;
}

} // namespace adstage
