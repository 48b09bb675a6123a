#include "adstage/architectures.hpp"

#include "adstage/errors.hpp"
#include "adstage/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace adstage {

std::string_view to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::avgpool2: return "avgpool2";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax: return "softmax";
    }
    return "unknown";
}

bool is_trainable_param(const std::string& key)
{
    return !(key.ends_with("/moving_mean") || key.ends_with("/moving_var"));
}

namespace {

Shape propagate(const LayerSpec& layer, const Shape& in)
{
    auto need_rank = [&](std::size_t r) {
        if (in.size() != r)
            throw ShapeError("layer '" + layer.name + "' (" + std::string(to_string(layer.kind)) + ") expects rank "
                             + std::to_string(r) + " input, got " + shape_string(in));
    };
    switch (layer.kind) {
    case LayerKind::conv3x3:
        need_rank(3);
        if (layer.units == 0)
            throw ConfigError("conv layer '" + layer.name + "' needs a positive channel count");
        return {in[0], in[1], layer.units};
    case LayerKind::maxpool2:
    case LayerKind::avgpool2:
        need_rank(3);
        if (in[0] < 2 || in[1] < 2)
            throw ShapeError("pool layer '" + layer.name + "' input " + shape_string(in) + " is smaller than 2x2");
        return {in[0] / 2, in[1] / 2, in[2]};
    case LayerKind::batchnorm:
        need_rank(3);
        return in;
    case LayerKind::flatten:
        return {shape_size(in)};
    case LayerKind::dense:
        need_rank(1);
        if (layer.units == 0)
            throw ConfigError("dense layer '" + layer.name + "' needs a positive unit count");
        return {layer.units};
    case LayerKind::relu:
        return in;
    case LayerKind::softmax:
        need_rank(1);
        return in;
    }
    return in;
}

} // namespace

std::vector<Shape> ModelGraph::output_shapes() const
{
    std::vector<Shape> out;
    Shape s = input_shape;
    for (const auto& l : layers) {
        s = propagate(l, s);
        out.push_back(s);
    }
    return out;
}

const LayerSpec& ModelGraph::layer(const std::string& layer_name) const
{
    for (const auto& l : layers)
        if (l.name == layer_name)
            return l;
    throw NotFoundError("model '" + name + "' has no layer '" + layer_name + "'");
}

const Tensor& ModelGraph::param(const std::string& key) const
{
    auto it = params.find(key);
    if (it == params.end())
        throw NotFoundError("model '" + name + "' has no parameter '" + key + "'");
    return it->second;
}

Tensor& ModelGraph::param(const std::string& key)
{
    auto it = params.find(key);
    if (it == params.end())
        throw NotFoundError("model '" + name + "' has no parameter '" + key + "'");
    return it->second;
}

ModelGraph make_graph(std::string name, Shape input_shape, std::vector<LayerSpec> layers)
{
    if (input_shape.size() != 3)
        throw ShapeError("graph input must be H,W,C, got " + shape_string(input_shape));
    ModelGraph g{std::move(name), std::move(input_shape), std::move(layers), {}};

    std::set<std::string> seen;
    Shape s = g.input_shape;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto& l = g.layers[i];
        if (!seen.insert(l.name).second)
            throw ConfigError("duplicate layer name '" + l.name + "'");
        if (l.kind == LayerKind::softmax && i + 1 != g.layers.size())
            throw ConfigError("softmax must be the final layer");
        const Shape out = propagate(l, s);
        switch (l.kind) {
        case LayerKind::conv3x3:
            g.params.emplace(l.name + "/w", Tensor({3, 3, s[2], l.units}));
            g.params.emplace(l.name + "/b", Tensor({l.units}));
            break;
        case LayerKind::dense:
            g.params.emplace(l.name + "/w", Tensor({s[0], l.units}));
            g.params.emplace(l.name + "/b", Tensor({l.units}));
            break;
        case LayerKind::batchnorm:
            g.params.emplace(l.name + "/gamma", Tensor({s[2]}, 1.0f));
            g.params.emplace(l.name + "/beta", Tensor({s[2]}));
            g.params.emplace(l.name + "/moving_mean", Tensor({s[2]}));
            g.params.emplace(l.name + "/moving_var", Tensor({s[2]}, 1.0f));
            break;
        default:
            break;
        }
        s = out;
    }
    if (g.layers.empty() || g.layers.back().kind != LayerKind::softmax)
        throw ConfigError("graph '" + g.name + "' must end in a softmax layer");
    return g;
}

namespace {

void conv_relu(std::vector<LayerSpec>& layers, std::size_t& idx, std::size_t filters)
{
    const std::string name = "conv" + std::to_string(++idx);
    layers.push_back({LayerKind::conv3x3, filters, name});
    layers.push_back({LayerKind::relu, 0, name + "_relu"});
}

void classifier_head(std::vector<LayerSpec>& layers, std::size_t hidden)
{
    layers.push_back({LayerKind::flatten, 0, "flatten"});
    layers.push_back({LayerKind::dense, hidden, "dense1"});
    layers.push_back({LayerKind::relu, 0, "dense1_relu"});
    layers.push_back({LayerKind::dense, kNumClasses, "dense2"});
    layers.push_back({LayerKind::softmax, 0, "softmax"});
}

} // namespace

ModelGraph build_ir_brainnet(ModelScale scale)
{
    const bool toy = scale == ModelScale::toy;
    const std::vector<std::size_t> filters = toy ? std::vector<std::size_t>{8, 16, 16, 32, 32}
                                                 : std::vector<std::size_t>{64, 128, 128, 256, 256, 256};
    std::vector<LayerSpec> layers;
    std::size_t conv = 0;
    for (std::size_t b = 0; b < filters.size(); ++b) {
        conv_relu(layers, conv, filters[b]);
        layers.push_back({LayerKind::maxpool2, 0, "pool" + std::to_string(b + 1)});
    }
    classifier_head(layers, toy ? 32 : 100);
    const std::size_t hw = toy ? 32 : 176;
    return make_graph(toy ? "ir-brainnet-toy" : "ir-brainnet", {hw, hw, 3}, std::move(layers));
}

ModelGraph build_modified_demnet(ModelScale scale)
{
    const bool toy = scale == ModelScale::toy;
    struct Block {
        std::size_t filters;
        LayerKind pool;
    };
    const std::size_t stem = toy ? 4 : 16;
    const std::vector<Block> blocks = toy
        ? std::vector<Block>{{8, LayerKind::maxpool2}, {16, LayerKind::maxpool2}, {32, LayerKind::avgpool2}}
        : std::vector<Block>{{32, LayerKind::maxpool2}, {64, LayerKind::maxpool2}, {128, LayerKind::maxpool2},
                             {256, LayerKind::avgpool2}};

    std::vector<LayerSpec> layers;
    std::size_t conv = 0;
    conv_relu(layers, conv, stem);
    conv_relu(layers, conv, stem);
    layers.push_back({LayerKind::avgpool2, 0, "pool1"});
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        conv_relu(layers, conv, blocks[b].filters);
        conv_relu(layers, conv, blocks[b].filters);
        layers.push_back({LayerKind::batchnorm, 0, "bn" + std::to_string(b + 1)});
        layers.push_back({blocks[b].pool, 0, "pool" + std::to_string(b + 2)});
    }
    classifier_head(layers, toy ? 32 : 100);
    const std::size_t hw = toy ? 32 : 176;
    return make_graph(toy ? "modified-demnet-toy" : "modified-demnet", {hw, hw, 3}, std::move(layers));
}

const std::vector<std::string>& model_names()
{
    static const std::vector<std::string> names{"ir-brainnet", "modified-demnet"};
    return names;
}

ModelGraph build_model(const std::string& model_name, ModelScale scale)
{
    if (model_name == "ir-brainnet")
        return build_ir_brainnet(scale);
    if (model_name == "modified-demnet")
        return build_modified_demnet(scale);
    throw ConfigError("unknown model '" + model_name + "' (known: ir-brainnet, modified-demnet)");
}

ModelGraph kaiming_init(const ModelGraph& graph, std::uint64_t seed)
{
    ModelGraph g = graph;
    Rng rng(seed);
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::conv3x3 || l.kind == LayerKind::dense) {
            Tensor& w = g.param(l.name + "/w");
            const std::size_t fan_in = l.kind == LayerKind::conv3x3 ? 9 * w.dim(2) : w.dim(0);
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : w.data())
                v = static_cast<float>(rng.normal(0.0, stddev));
            auto& b = g.param(l.name + "/b");
            std::fill(b.data().begin(), b.data().end(), 0.0f);
        } else if (l.kind == LayerKind::batchnorm) {
            for (auto [suffix, value] : {std::pair{"/gamma", 1.0f}, {"/beta", 0.0f}, {"/moving_mean", 0.0f}, {"/moving_var", 1.0f}}) {
                auto& t = g.param(l.name + suffix);
                std::fill(t.data().begin(), t.data().end(), value);
            }
        }
    }
    return g;
}

ImportResult import_pretrained_layer(const ModelGraph& graph, const std::string& layer_name,
                                     const WeightArchive& archive, const std::string& entry_name)
{
    const auto& l = graph.layer(layer_name);
    if (l.kind != LayerKind::conv3x3 && l.kind != LayerKind::dense)
        throw TransferError("layer '" + layer_name + "' has no weights to import");

    ImportResult r{graph, 0};
    for (const char* suffix : {"/w", "/b"}) {
        const Tensor* found = archive.find(entry_name + suffix);
        if (!found)
            throw TransferError("archive has no entry '" + entry_name + suffix + "'");
        const Tensor& src = *found;
        Tensor& dst = r.graph.param(layer_name + suffix);
        if (src.shape() != dst.shape())
            throw TransferError("cannot import '" + entry_name + suffix + "' with shape " + shape_string(src.shape())
                                + " into '" + layer_name + suffix + "' with shape " + shape_string(dst.shape()));
        dst = src;
        r.values_copied += src.size();
    }
    return r;
}

WeightArchive params_to_archive(const ModelGraph& graph)
{
    WeightArchive a;
    for (const auto& [key, t] : graph.params)
        a.add(key, t);
    return a;
}

void load_params(ModelGraph& graph, const WeightArchive& archive)
{
    auto next = graph.params;
    for (auto& [key, t] : next) {
        const Tensor& src = archive.get(key);
        if (src.shape() != t.shape())
            throw ShapeError("parameter '" + key + "' has shape " + shape_string(src.shape()) + ", model expects "
                             + shape_string(t.shape()));
        t = src;
    }
    graph.params = std::move(next);
}

// ---- execution ----------------------------------------------------------------------

ForwardResult forward(const ModelGraph& graph, const Tensor& x, Mode mode, bool keep_caches)
{
    if (x.rank() != 4 || !std::equal(graph.input_shape.begin(), graph.input_shape.end(), x.shape().begin() + 1))
        throw ShapeError("model '" + graph.name + "' expects input (N," + shape_string(graph.input_shape).substr(1)
                         + ", got " + shape_string(x.shape()));
    if (graph.layers.empty() || graph.layers.back().kind != LayerKind::softmax)
        throw ConfigError("model '" + graph.name + "' must end with softmax");

    ForwardResult r;
    Tensor a = x;
    for (const auto& l : graph.layers) {
        LayerCache cache;
        switch (l.kind) {
        case LayerKind::conv3x3: {
            auto res = conv2d(a, graph.param(l.name + "/w"), graph.param(l.name + "/b"));
            a = std::move(res.y);
            if (keep_caches)
                cache = std::move(res.cache);
            break;
        }
        case LayerKind::maxpool2:
        case LayerKind::avgpool2: {
            auto res = pool2d(a, l.kind == LayerKind::maxpool2 ? PoolMode::max : PoolMode::avg);
            a = std::move(res.y);
            if (keep_caches)
                cache = std::move(res.cache);
            break;
        }
        case LayerKind::batchnorm: {
            BatchNormState state{graph.param(l.name + "/moving_mean"), graph.param(l.name + "/moving_var")};
            auto res = batchnorm(a, graph.param(l.name + "/gamma"), graph.param(l.name + "/beta"), state, mode);
            a = std::move(res.y);
            if (mode == Mode::train)
                r.bn_states.emplace(l.name, std::move(res.state));
            if (keep_caches)
                cache = std::move(res.cache);
            break;
        }
        case LayerKind::flatten: {
            if (keep_caches)
                cache = a.shape();
            a = flatten(a);
            break;
        }
        case LayerKind::dense: {
            auto res = dense(a, graph.param(l.name + "/w"), graph.param(l.name + "/b"));
            a = std::move(res.y);
            if (keep_caches)
                cache = std::move(res.cache);
            break;
        }
        case LayerKind::relu: {
            auto res = relu(a);
            a = std::move(res.y);
            if (keep_caches)
                cache = std::move(res.cache);
            break;
        }
        case LayerKind::softmax:
            r.logits = a;
            a = softmax(a);
            break;
        }
        if (keep_caches)
            r.caches.push_back(std::move(cache));
    }
    r.probs = std::move(a);
    return r;
}

std::map<std::string, Tensor> backward(const ModelGraph& graph, const ForwardResult& pass, const Tensor& dlogits)
{
    if (pass.caches.size() != graph.layers.size())
        throw ConfigError("backward needs a forward pass run with keep_caches");
    if (dlogits.shape() != pass.logits.shape())
        throw ShapeError("dlogits shape " + shape_string(dlogits.shape()) + " does not match logits "
                         + shape_string(pass.logits.shape()));

    std::map<std::string, Tensor> grads;
    Tensor g = dlogits;
    // the final layer is softmax, fused with the loss gradient
    for (std::size_t i = graph.layers.size() - 1; i-- > 0;) {
        const auto& l = graph.layers[i];
        const auto& cache = pass.caches[i];
        switch (l.kind) {
        case LayerKind::conv3x3: {
            auto res = conv2d_backward(std::get<Conv2dCache>(cache), g);
            grads[l.name + "/w"] = std::move(res.dw);
            grads[l.name + "/b"] = std::move(res.db);
            g = std::move(res.dx);
            break;
        }
        case LayerKind::maxpool2:
        case LayerKind::avgpool2:
            g = pool2d_backward(std::get<PoolCache>(cache), g);
            break;
        case LayerKind::batchnorm: {
            auto res = batchnorm_backward(std::get<BatchNormCache>(cache), g);
            grads[l.name + "/gamma"] = std::move(res.dgamma);
            grads[l.name + "/beta"] = std::move(res.dbeta);
            g = std::move(res.dx);
            break;
        }
        case LayerKind::flatten:
            g = unflatten(g, std::get<Shape>(cache));
            break;
        case LayerKind::dense: {
            auto res = dense_backward(std::get<DenseCache>(cache), g);
            grads[l.name + "/w"] = std::move(res.dw);
            grads[l.name + "/b"] = std::move(res.db);
            g = std::move(res.dx);
            break;
        }
        case LayerKind::relu:
            g = relu_backward(std::get<ReluCache>(cache), g);
            break;
        case LayerKind::softmax:
            throw ConfigError("softmax must be the final layer");
        }
        // the input gradient of the first layer is never needed
        if (i == 0)
            break;
    }
    return grads;
}

Tensor predict(const ModelGraph& graph, const Tensor& x, std::size_t batch)
{
    const std::size_t n = x.dim(0);
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < n; b += batch)
        parts.push_back(forward(graph, x.slice_rows(b, std::min(n, b + batch)), Mode::infer).probs);
    return concat_rows(parts);
}

void apply_batchnorm_states(ModelGraph& graph, const std::map<std::string, BatchNormState>& states)
{
    for (const auto& [layer, s] : states) {
        graph.param(layer + "/moving_mean") = s.moving_mean;
        graph.param(layer + "/moving_var") = s.moving_var;
    }
}

} // namespace adstage
