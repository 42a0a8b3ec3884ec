#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gpa/errors.hpp"
#include "gpa/rng.hpp"

namespace gpa {

// Storage precision. Values are always held as doubles; F32 tensors are
// quantized through float on every write so a 32-bit pipeline behaves like
// genuine single precision. F64 is the default: attack scores compare small
// differences in losses and gradients.
enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, DType dt = DType::F64)
        : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0), dtype_(dt) {}

    Tensor(Shape shape, std::vector<double> data, DType dt = DType::F64)
        : shape_(std::move(shape)), data_(std::move(data)), dtype_(dt) {
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        quantize();
    }

    static Tensor zeros(Shape shape, DType dt = DType::F64) { return Tensor(std::move(shape), dt); }

    static Tensor full(Shape shape, double v, DType dt = DType::F64) {
        Tensor t(std::move(shape), dt);
        for (auto& x : t.data_) x = v;
        t.quantize();
        return t;
    }

    static Tensor scalar(double v, DType dt = DType::F64) { return full({1}, v, dt); }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, DType dt = DType::F64) {
        Tensor t(std::move(shape), dt);
        for (auto& x : t.data_) x = stddev * rng.normal();
        t.quantize();
        return t;
    }

    const Shape& shape() const { return shape_; }
    DType dtype() const { return dtype_; }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t ndim() const { return shape_.size(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // Round every element through float when the tensor is single precision.
    void quantize() {
        if (dtype_ == DType::F32)
            for (auto& x : data_) x = static_cast<double>(static_cast<float>(x));
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
    DType dtype_ = DType::F64;
};

inline DType promote(DType a, DType b) {
    return (a == DType::F64 || b == DType::F64) ? DType::F64 : DType::F32;
}

} // namespace gpa
