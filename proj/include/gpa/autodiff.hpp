#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gpa/tensor.hpp"

namespace gpa {

// A node in the reverse-mode tape. Backward functions are themselves built
// from tape operations, so gradients are differentiable and second-order
// quantities (Hessian-vector products through the gradient norm) come out of
// the same machinery.
class Var {
public:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::uint64_t id = 0;
        std::vector<Var> parents;
        // Given the gradient w.r.t. this node, produce per-parent gradient
        // contributions (a default-constructed Var means "no gradient").
        std::function<std::vector<Var>(const Var&)> backward;
    };

    Var() = default;

    static Var constant(Tensor t);
    static Var param(Tensor t);

    const Tensor& value() const { return n_->value; }
    Tensor& mutable_value() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool defined() const { return static_cast<bool>(n_); }

    Node* node() const { return n_.get(); }
    std::weak_ptr<Node> weak() const { return n_; }
    static Var from_node(std::shared_ptr<Node> n) { return Var(std::move(n)); }

private:
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;
};

// elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var relu(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var sqrt_op(const Var& a);
Var log_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var abs_op(const Var& a);
Var recip_or_zero(const Var& a);

// linear algebra / structure
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape s);
Var add_bias(const Var& x, const Var& b);
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var row_sum(const Var& a);
Var row_broadcast(const Var& r, std::size_t cols);
Var row_mean(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mul_scalarvar(const Var& x, const Var& s);

// convolution family: x [N,Cin,L], w [Cout,Cin,K] -> [N,Cout,Lout]
Var conv1d(const Var& x, const Var& w, int stride, int pad);
// transposed convolution: x [N,Cin,L], w [Cin,Cout,K] -> [N,Cout,(L-1)*s-2p+K]
Var conv1d_transpose(const Var& x, const Var& w, int stride, int pad);

// losses / reductions
Var bce_with_target(const Var& p, double target);
Var l2_norm(const std::vector<Var>& vs);

Var detach(const Var& a);
Var zeros_like_const(const Var& a);

// Reverse-mode gradient of a scalar loss w.r.t. each parameter. Parameters
// disconnected from the loss get an all-zero gradient. The returned Vars stay
// on the tape, so they can be differentiated again.
std::vector<Var> grad(const Var& loss, const std::vector<Var>& params);

// Gradient of the L2 norm of the parameter gradient of `loss`. Returns all
// zeros when the gradient norm is exactly zero.
std::vector<Var> grad_of_gradnorm(const Var& loss, const std::vector<Var>& params);

bool has_nan(const Tensor& t);

} // namespace gpa
