#include "fed3d/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "fed3d/common.hpp"

namespace fed3d {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return shape.empty() ? 0 : n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(product(shape_), 0.0);
    cols_ = shape_.size() == 2 ? shape_[1] : (shape_.size() == 1 ? shape_[0] : 0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    if (t.numel() != values.size()) {
        throw ShapeError("from_values: shape " + shape_str(t) + " expects " +
                         std::to_string(t.numel()) + " values, got " +
                         std::to_string(values.size()));
    }
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = rng.normal(stddev);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 2) return shape_[0];
    if (shape_.size() == 1) return 1;
    throw ShapeError("rows(): tensor of rank " + std::to_string(shape_.size()));
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() == 1) return shape_[0];
    throw ShapeError("cols(): tensor of rank " + std::to_string(shape_.size()));
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
    if (!same_shape(other)) {
        throw ShapeError("add_scaled: " + shape_str(*this) + " vs " + shape_str(other));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void Tensor::scale(double s) {
    for (double& x : data_) x *= s;
}

void Tensor::quantize_f32() {
    for (double& x : data_) x = static_cast<double>(static_cast<float>(x));
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace fed3d
