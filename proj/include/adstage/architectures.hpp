#pragma once

#include "adstage/layers.hpp"
#include "adstage/tensor.hpp"
#include "adstage/weight_archive.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace adstage {

enum class LayerKind { conv3x3, maxpool2, avgpool2, batchnorm, flatten, dense, relu, softmax };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    std::size_t units = 0; // output channels (conv3x3) or output units (dense)
    std::string name;
};

/// Fixed class order used by every model output and label encoding.
inline const std::vector<std::string>& class_names()
{
    static const std::vector<std::string> names{"MID", "MOD", "ND", "VMD"};
    return names;
}
inline constexpr std::size_t kNumClasses = 4;

/// An ordered layer chain plus its named parameters ("conv2/w", "bn1/moving_var", ...).
///
/// Parameters are created zero-filled (batch-norm gamma and moving variance
/// set to 1) by make_graph; kaiming_init draws the trainable weights.
struct ModelGraph {
    std::string name;
    Shape input_shape; // H, W, C
    std::vector<LayerSpec> layers;
    std::map<std::string, Tensor> params;

    /// Per-layer output shape, without the batch axis.
    std::vector<Shape> output_shapes() const;
    const LayerSpec& layer(const std::string& layer_name) const;
    const Tensor& param(const std::string& key) const;
    Tensor& param(const std::string& key);
};

/// Moving statistics are the only non-trainable parameters.
bool is_trainable_param(const std::string& key);

/// Builds a graph from a layer list, validating the shape chain and
/// allocating parameters. Throws ShapeError or ConfigError.
ModelGraph make_graph(std::string name, Shape input_shape, std::vector<LayerSpec> layers);

enum class ModelScale { full, toy };

/// Six conv3x3+relu+maxpool blocks with filters 64,128,128,256,256,256 on a
/// 176x176x3 input, flatten (2x2x256 = 1024), dense 100 + relu, dense 4 + softmax.
/// The filter sequence is derived from the published totals (1,801,464
/// parameters, 73,856 in conv2, 1024-wide flatten).
ModelGraph build_ir_brainnet(ModelScale scale = ModelScale::full);

/// conv16, conv16, avgpool; then (conv f, conv f, batchnorm, pool) for
/// f = 32, 64, 128 with max pooling and f = 256 with average pooling;
/// flatten (5x5x256 = 6400), dense 100 + relu, dense 4 + softmax.
/// A reconstruction: its 1,821,192 parameters (960 non-trainable) reproduce
/// the published 6.95 MiB footprint.
ModelGraph build_modified_demnet(ModelScale scale = ModelScale::full);

/// "ir-brainnet" or "modified-demnet". Throws ConfigError for anything else.
ModelGraph build_model(const std::string& model_name, ModelScale scale = ModelScale::full);
const std::vector<std::string>& model_names();

/// Kaiming-normal weights, N(0, 2/n_in) with n_in = 9*Cin (conv) or Din
/// (dense); zero biases; batch-norm gamma 1, beta 0, moving mean 0, var 1.
ModelGraph kaiming_init(const ModelGraph& graph, std::uint64_t seed);

struct ImportResult {
    ModelGraph graph;
    std::size_t values_copied = 0;
};

/// Copies archive entries "<entry>/w" and "<entry>/b" into layer `layer_name`.
/// Throws NotFoundError for a missing layer or entry, TransferError naming
/// both shapes on mismatch.
ImportResult import_pretrained_layer(const ModelGraph& graph, const std::string& layer_name,
                                     const WeightArchive& archive, const std::string& entry_name);

WeightArchive params_to_archive(const ModelGraph& graph);
/// Replaces every graph parameter by the archive entry of the same name.
/// Throws NotFoundError / ShapeError; the graph is untouched on failure.
void load_params(ModelGraph& graph, const WeightArchive& archive);

// ---- execution ---------------------------------------------------------------------

using LayerCache = std::variant<std::monostate, Conv2dCache, PoolCache, BatchNormCache, DenseCache, ReluCache, Shape>;

struct ForwardResult {
    Tensor logits; // input of the final softmax
    Tensor probs;  // [N, classes]
    std::vector<LayerCache> caches;                  // empty unless kept
    std::map<std::string, BatchNormState> bn_states; // train mode: updated moving statistics
};

/// x is [N,H,W,C] matching the graph input. Throws ShapeError.
ForwardResult forward(const ModelGraph& graph, const Tensor& x, Mode mode, bool keep_caches = false);

/// Gradients of every trainable parameter given d(loss)/d(logits).
std::map<std::string, Tensor> backward(const ModelGraph& graph, const ForwardResult& pass, const Tensor& dlogits);

/// Infer-mode class probabilities, evaluated in chunks of `batch` rows.
Tensor predict(const ModelGraph& graph, const Tensor& x, std::size_t batch = 32);

void apply_batchnorm_states(ModelGraph& graph, const std::map<std::string, BatchNormState>& states);

} // namespace adstage
