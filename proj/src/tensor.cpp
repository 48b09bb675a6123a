#include "adstage/tensor.hpp"

#include "adstage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace adstage {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

namespace {

void check_shape(const Shape& shape)
{
    if (shape.empty() || shape.size() > 4)
        throw ShapeError("tensor rank must be 1..4, got shape " + shape_string(shape));
    for (auto d : shape)
        if (d == 0)
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
}

} // namespace

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape))
{
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape))
    , data_(std::move(data))
{
    check_shape(shape_);
    if (data_.size() != shape_size(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape "
                         + shape_string(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const
{
    if (index.size() != shape_.size())
        throw ShapeError("index rank does not match tensor rank");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis])
            throw ShapeError("index out of range for shape " + shape_string(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

std::size_t Tensor::row_size() const
{
    if (shape_.empty())
        return 0;
    return data_.size() / shape_[0];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const
{
    if (begin >= end || end > dim(0))
        throw ShapeError("row slice out of range");
    Shape shape = shape_;
    shape[0] = end - begin;
    const auto rs = row_size();
    return Tensor(std::move(shape),
                  std::vector<float>(data_.begin() + begin * rs, data_.begin() + end * rs));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const
{
    if (rows.empty())
        throw ShapeError("gather of zero rows");
    Shape shape = shape_;
    shape[0] = rows.size();
    const auto rs = row_size();
    std::vector<float> out(rows.size() * rs);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= shape_[0])
            throw ShapeError("gather row out of range");
        std::copy_n(data_.begin() + rows[r] * rs, rs, out.begin() + r * rs);
    }
    return Tensor(std::move(shape), std::move(out));
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor concat_rows(std::span<const Tensor> parts)
{
    if (parts.empty())
        throw ShapeError("concat of zero tensors");
    Shape shape = parts[0].shape();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
            throw ShapeError("concat trailing shapes differ: " + shape_string(shape) + " vs "
                             + shape_string(p.shape()));
        rows += p.dim(0);
    }
    shape[0] = rows;
    std::vector<float> data;
    data.reserve(shape_size(shape));
    for (const auto& p : parts)
        data.insert(data.end(), p.values().begin(), p.values().end());
    return Tensor(std::move(shape), std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw ShapeError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs "
                         + shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

} // namespace adstage
