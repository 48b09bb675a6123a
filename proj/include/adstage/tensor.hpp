#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace adstage {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array of rank 1..4.
///
/// The element count always equals the product of the shape. Tensors are
/// plain values: copying copies the data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor filled(Shape shape, float value) { return Tensor(std::move(shape), value); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    float* raw() noexcept { return data_.data(); }
    const float* raw() const noexcept { return data_.data(); }
    const std::vector<float>& values() const noexcept { return data_; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    float& at(std::initializer_list<std::size_t> index);
    float at(std::initializer_list<std::size_t> index) const;

    /// Same data, new shape. Throws ShapeError when element counts differ.
    Tensor reshaped(Shape shape) const;

    /// Rows [begin, end) along the leading axis.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;

    /// Gathers rows of the leading axis in the given order.
    Tensor gather_rows(std::span<const std::size_t> rows) const;

    /// Size of one leading-axis row.
    std::size_t row_size() const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<float> data_;
};

/// Concatenates tensors along the leading axis; trailing dims must agree.
Tensor concat_rows(std::span<const Tensor> parts);

double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace adstage
