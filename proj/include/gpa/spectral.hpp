#pragma once

#include <cmath>

#include "gpa/autodiff.hpp"
#include "gpa/rng.hpp"

namespace gpa {

// Persistent power-iteration vectors for one weight matrix (left u, right v).
struct SpectralState {
    Tensor u, v; // shapes [1,R] and [C,1]

    void init(std::size_t rows, std::size_t cols, Rng& rng, DType dt = DType::F64) {
        u = Tensor::randn({1, rows}, rng, 1.0, dt);
        v = Tensor::zeros({cols, 1}, dt);
        double n = 0.0;
        for (std::size_t i = 0; i < rows; ++i) n += u[i] * u[i];
        n = std::sqrt(n);
        if (n > 0.0)
            for (std::size_t i = 0; i < rows; ++i) u[i] /= n;
        u.quantize();
    }

    bool initialized() const { return u.size() > 0; }
};

namespace detail {

inline void power_iterate(const Tensor& w, SpectralState& st, int iters) {
    const std::size_t r = w.dim(0), c = w.dim(1);
    for (int it = 0; it < iters; ++it) {
        // v <- normalize(W^T u)
        double vn = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < r; ++i) acc += w[i * c + j] * st.u[i];
            st.v[j] = acc;
            vn += acc * acc;
        }
        vn = std::sqrt(vn);
        if (vn == 0.0) return;
        for (std::size_t j = 0; j < c; ++j) st.v[j] /= vn;
        // u <- normalize(W v)
        double un = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += w[i * c + j] * st.v[j];
            st.u[i] = acc;
            un += acc * acc;
        }
        un = std::sqrt(un);
        if (un == 0.0) return;
        for (std::size_t i = 0; i < r; ++i) st.u[i] /= un;
    }
    st.u.quantize();
    st.v.quantize();
}

} // namespace detail

// Divides a matrix-shaped weight by its top singular value, estimated by
// power iteration with persistent u/v. `power_iters` updates the state before
// the (differentiable) sigma = u^T W v is formed; pass 0 for read-only use of
// the current vectors. A zero weight is returned unchanged.
inline Var spectral_normalize(const Var& weight, SpectralState& st, int power_iters) {
    const Tensor& w = weight.value();
    if (w.ndim() != 2)
        throw ShapeError("spectral_normalize: expected matrix, got " + shape_str(w.shape()));
    bool all_zero = true;
    for (std::size_t i = 0; i < w.size() && all_zero; ++i) all_zero = w[i] == 0.0;
    if (all_zero) return weight;

    if (power_iters > 0) detail::power_iterate(w, st, power_iters);
    Var u = Var::constant(st.u);
    Var v = Var::constant(st.v);
    Var sigma = reshape(matmul(matmul(u, weight), v), {1});
    return mul_scalarvar(weight, recip_or_zero(sigma));
}

} // namespace gpa
