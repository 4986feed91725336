#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pafnet/errors.hpp"

namespace pafnet {

/// Dense row-major tensor of doubles with a runtime shape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw ShapeMismatch("tensor data does not match shape");
        }
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Idx>
    double& operator()(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    template <typename... Idx>
    double operator()(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    /// Contiguous view of the trailing axes starting at the given leading index.
    template <typename... Idx>
    std::span<double> slice(Idx... lead) {
        auto [start, len] = slice_bounds({static_cast<std::size_t>(lead)...});
        return std::span<double>(data_).subspan(start, len);
    }

    template <typename... Idx>
    std::span<const double> slice(Idx... lead) const {
        auto [start, len] = slice_bounds({static_cast<std::size_t>(lead)...});
        return std::span<const double>(data_).subspan(start, len);
    }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        }
        return s + "]";
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            off = off * shape_[axis++] + i;
        }
        return off;
    }

    std::pair<std::size_t, std::size_t> slice_bounds(std::initializer_list<std::size_t> lead) const {
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : lead) {
            off = off * shape_[axis++] + i;
        }
        std::size_t len = 1;
        for (std::size_t a = axis; a < shape_.size(); ++a) {
            len *= shape_[a];
        }
        return {off * len, len};
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

} // namespace pafnet
