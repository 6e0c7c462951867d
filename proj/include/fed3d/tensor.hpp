#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fed3d/rng.hpp"

namespace fed3d {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
// model needs; the shape vector stays generic for counting and I/O.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);
    void add_scaled(const Tensor& other, double scale);  // this += scale * other
    void scale(double s);

    // Rounds every entry to the nearest float, staying in double storage.
    void quantize_f32();

  private:
    std::vector<std::size_t> shape_;
    std::size_t cols_ = 0;  // cached for 2-D indexing
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);
std::string shape_str(const Tensor& t);

bool bitwise_equal(const Tensor& a, const Tensor& b);

// Trainable (or frozen) value with its gradient accumulator. The gradient
// of a non-trainable parameter stays identically zero across backward
// passes.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_, bool trainable_ = true)
        : name(std::move(name_)),
          value(std::move(value_)),
          grad(Tensor::zeros(value.shape())),
          trainable(trainable_) {}

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace fed3d
