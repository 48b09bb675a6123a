#pragma once

#include "adstage/tensor.hpp"
#include "adstage/weight_archive.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace adstage {

enum class Provenance : std::uint8_t { real = 0, synthetic = 1 };

/// Decoded images ([H,W,3], values 0..255) with integer labels indexing
/// class_names.
struct LabeledImageSet {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::vector<Provenance> provenance;

    std::size_t size() const noexcept { return images.size(); }
    std::vector<std::size_t> histogram() const;
    /// Throws DataError when lengths disagree or a label is out of range.
    void validate() const;
};

struct IngestFailure {
    std::filesystem::path path;
    std::string message;
};

struct IngestResult {
    LabeledImageSet set;
    std::vector<IngestFailure> failures;
};

/// Reads <root>/<class>/<image> with classes in alphabetical order and files
/// in name order. Undecodable files are reported in `failures` and skipped.
/// Throws IngestionError for a missing root or a class with no images.
IngestResult ingest_directory(const std::filesystem::path& root);

/// Bilinear resize with half-pixel centre alignment (source coordinate
/// (dst + 0.5) * in/out - 0.5, clamped to the image).
Tensor resize_bilinear(const Tensor& image, std::size_t out_height, std::size_t out_width);

struct EncodedSet {
    Tensor X; // [N,H,W,3] in [0,1]
    Tensor Y; // [N,classes] one-hot
    std::vector<std::size_t> labels;
    std::vector<Provenance> provenance;
};

/// Divides pixels by 255 and one-hot encodes labels. Every image must share
/// one shape. Throws DataError for pixels outside [0,255].
EncodedSet normalize_and_encode(const LabeledImageSet& set);

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

struct SplitSpec {
    double test_fraction = 0.20;
    double val_fraction = 0.10;
    /// true: val_fraction is taken from what remains after the test split
    /// (72/8/20 overall); false: it is a fraction of the whole (70/10/20).
    bool val_of_remainder = true;
    std::uint64_t seed = 42;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Per-class stratified split: test = round(test_fraction * n_c), then val
/// from the remainder, the rest trains. Indices are sorted ascending.
/// Throws SplitError when a class has fewer than 5 samples.
SplitIndices split_nested(const std::vector<std::size_t>& labels, std::size_t classes, const SplitSpec& spec,
                          const std::vector<std::string>& class_names = {});

struct SmoteConfig {
    std::size_t k_neighbors = 5;
    std::uint64_t seed = 42;
};

struct SmoteResult {
    Tensor X; // real rows first (input order), then synthetic rows
    std::vector<std::size_t> labels;
    std::vector<Provenance> provenance;
    /// For each synthetic row (in order): input row indices of the sample and
    /// the neighbour it was interpolated towards, plus the interpolation weight.
    std::vector<std::pair<std::size_t, std::size_t>> parents;
    std::vector<double> weights;
};

/// Oversamples every class below the majority count up to it. Each
/// synthetic row is x_i + u * (x_nn - x_i) with x_nn one of the k nearest
/// (Euclidean) same-class neighbours of x_i and u ~ U[0,1]. Majority
/// classes are left untouched. Throws SmoteError when a class that needs
/// oversampling has k or fewer samples.
SmoteResult smote(const Tensor& X_flat, const std::vector<std::size_t>& labels, std::size_t classes,
                  const SmoteConfig& config = {}, const std::vector<std::string>& class_names = {});

// ---- end-to-end preprocessing ------------------------------------------------------

enum class SmoteOrder { paper, after_split };

struct PrepareOptions {
    bool apply_smote = false;
    SmoteOrder order = SmoteOrder::paper;
    std::size_t image_size = 176;
    SplitSpec split{};
    SmoteConfig smote{};
};

enum class Subset : std::uint8_t { train = 0, val = 1, test = 2 };

/// Normalised tensors ready for training, with the subset each row belongs to.
struct PreparedData {
    Tensor X;
    Tensor Y;
    std::vector<std::size_t> labels;
    std::vector<Provenance> provenance;
    std::vector<Subset> subset;
    std::vector<std::string> class_names;
    std::vector<std::size_t> histogram_before;
    std::vector<std::size_t> histogram_after;

    std::vector<std::size_t> indices(Subset which) const;
    WeightArchive to_archive() const;
    /// Throws DataError when entries are missing or inconsistent.
    static PreparedData from_archive(const WeightArchive& archive);
};

/// Resize, normalise, then SMOTE and split in the requested order.
/// paper order: SMOTE over the whole set, then split. after-split: split the
/// real data, then oversample only the training rows.
PreparedData prepare(const LabeledImageSet& set, const PrepareOptions& options);

} // namespace adstage
