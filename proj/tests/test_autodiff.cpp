#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gpa/autodiff.hpp"
#include "gpa/errors.hpp"
#include "test_util.hpp"

using namespace gpa;
using namespace gpa::test;

namespace {

// Random tensor kept away from the kinks/singularities of non-smooth ops.
Tensor rand_away_from(Shape shape, Rng& rng, double lo, double hi, double avoid, double margin) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v;
        do {
            v = rng.uniform(lo, hi);
        } while (std::abs(v - avoid) < margin);
        t[i] = v;
    }
    return t;
}

// Deterministic per seed, so the same function is rebuilt for every
// finite-difference evaluation.
Var weighted_sum(const Var& v, std::uint64_t seed) {
    Rng rng(seed);
    return sum_all(mul(v, Var::constant(rand_tensor(v.value().shape(), rng))));
}

} // namespace

TEST_CASE("finite differences validate every primitive") {
    Rng rng(42);
    const double tol = 1e-4;
    for (int trial = 0; trial < 12; ++trial) {
        Var a = Var::param(rand_away_from({3, 4}, rng, -2.0, 2.0, 0.0, 0.15));
        Var b = Var::param(rand_away_from({3, 4}, rng, 0.2, 2.0, 0.0, 0.0));
        Var s = Var::param(rand_away_from({1}, rng, 0.3, 1.5, 0.0, 0.0));
        std::vector<Var> params = {a, b, s};
        const std::uint64_t wrng = derive_seed(7, "weights", static_cast<std::uint64_t>(trial));

        const std::vector<std::pair<const char*, std::function<Var()>>> cases = {
            {"add", [&] { return weighted_sum(add(a, b), wrng); }},
            {"sub", [&] { return weighted_sum(sub(a, b), wrng); }},
            {"mul", [&] { return weighted_sum(mul(a, b), wrng); }},
            {"divide", [&] { return weighted_sum(divide(a, b), wrng); }},
            {"neg", [&] { return weighted_sum(neg(a), wrng); }},
            {"scale", [&] { return weighted_sum(scale(a, -1.7), wrng); }},
            {"add_scalar", [&] { return weighted_sum(add_scalar(a, 0.31), wrng); }},
            {"relu", [&] { return weighted_sum(relu(a), wrng); }},
            {"tanh", [&] { return weighted_sum(tanh_op(a), wrng); }},
            {"sigmoid", [&] { return weighted_sum(sigmoid_op(a), wrng); }},
            {"sqrt", [&] { return weighted_sum(sqrt_op(b), wrng); }},
            {"log", [&] { return weighted_sum(log_op(b), wrng); }},
            {"abs", [&] { return weighted_sum(abs_op(a), wrng); }},
            {"recip_or_zero", [&] { return weighted_sum(recip_or_zero(b), wrng); }},
            {"transpose", [&] { return weighted_sum(transpose(a), wrng); }},
            {"reshape", [&] { return weighted_sum(reshape(a, {4, 3}), wrng); }},
            {"slice_cols", [&] { return weighted_sum(slice_cols(a, 1, 3), wrng); }},
            {"row_sum", [&] { return weighted_sum(row_sum(a), wrng); }},
            {"row_mean", [&] { return weighted_sum(row_mean(a), wrng); }},
            {"row_broadcast", [&] { return weighted_sum(row_broadcast(row_sum(a), 5), wrng); }},
            {"sum_all", [&] { return sum_all(a); }},
            {"mean_all", [&] { return mean_all(mul(a, a)); }},
            {"mul_scalarvar", [&] { return weighted_sum(mul_scalarvar(a, s), wrng); }},
            {"bce", [&] { return bce_with_target(sigmoid_op(reshape(a, {12, 1})), 1.0); }},
            {"l2_norm", [&] { return l2_norm({a, b}); }},
        };
        for (const auto& [name, build] : cases) {
            CAPTURE(name);
            CHECK(max_grad_rel_err(build, params) < tol);
        }
    }
}

TEST_CASE("clamp gradient is zero outside and one inside the interval") {
    Var x = Var::param(Tensor({3}, {-2.0, 0.25, 2.0}));
    std::vector<Var> params = {x};
    const auto gs = grad(sum_all(clamp(x, -1.0, 1.0)), params);
    CHECK(gs[0].value()[0] == 0.0);
    CHECK(gs[0].value()[1] == 1.0);
    CHECK(gs[0].value()[2] == 0.0);
}

TEST_CASE("matmul, add_bias and conv pass finite differences") {
    Rng rng(99);
    const double tol = 1e-4;
    for (int trial = 0; trial < 8; ++trial) {
        Var m1 = Var::param(rand_tensor({3, 5}, rng));
        Var m2 = Var::param(rand_tensor({5, 2}, rng));
        Var bias = Var::param(rand_tensor({2}, rng));
        Var x = Var::param(rand_tensor({2, 3, 8}, rng));
        Var w = Var::param(rand_tensor({4, 3, 3}, rng));
        Var wt = Var::param(rand_tensor({3, 4, 4}, rng));
        std::vector<Var> params = {m1, m2, bias, x, w, wt};
        const std::uint64_t wrng = derive_seed(5, "weights", static_cast<std::uint64_t>(trial));

        const std::vector<std::pair<const char*, std::function<Var()>>> cases = {
            {"matmul", [&] { return weighted_sum(matmul(m1, m2), wrng); }},
            {"add_bias", [&] { return weighted_sum(add_bias(matmul(m1, m2), bias), wrng); }},
            {"conv_s1p0", [&] { return weighted_sum(conv1d(x, w, 1, 0), wrng); }},
            {"conv_s2p1", [&] { return weighted_sum(conv1d(x, w, 2, 1), wrng); }},
            {"convT_s2p1", [&] { return weighted_sum(conv1d_transpose(x, wt, 2, 1), wrng); }},
            {"convT_s1p0", [&] { return weighted_sum(conv1d_transpose(x, wt, 1, 0), wrng); }},
        };
        for (const auto& [name, build] : cases) {
            CAPTURE(name);
            CHECK(max_grad_rel_err(build, params) < tol);
        }
    }
}

TEST_CASE("conv1d output values match a direct loop") {
    // x [1,1,5] * w [1,1,3], stride 1, pad 1
    Var x = Var::constant(Tensor({1, 1, 5}, {1, 2, 3, 4, 5}));
    Var w = Var::constant(Tensor({1, 1, 3}, {1, 0, -1}));
    const Tensor y = conv1d(x, w, 1, 1).value();
    REQUIRE(y.shape() == Shape{1, 1, 5});
    CHECK(y[0] == doctest::Approx(-2.0)); // 0*1 + 1*0 + 2*(-1)
    CHECK(y[1] == doctest::Approx(-2.0));
    CHECK(y[4] == doctest::Approx(4.0));
}

TEST_CASE("conv1d_transpose doubles the length with k=4 s=2 p=1") {
    Rng rng(3);
    Var x = Var::constant(rand_tensor({2, 3, 6}, rng));
    Var w = Var::constant(rand_tensor({3, 5, 4}, rng));
    CHECK(conv1d_transpose(x, w, 2, 1).value().shape() == Shape{2, 5, 12});
}

TEST_CASE("two-layer network gradient passes finite differences") {
    Rng rng(1234);
    for (int trial = 0; trial < 5; ++trial) {
        Var w1 = Var::param(rand_tensor({6, 8}, rng, -0.5, 0.5));
        Var b1 = Var::param(rand_tensor({8}, rng, -0.5, 0.5));
        Var w2 = Var::param(rand_tensor({8, 1}, rng, -0.5, 0.5));
        Var b2 = Var::param(rand_tensor({1}, rng, -0.5, 0.5));
        Var input = Var::constant(rand_tensor({4, 6}, rng));
        std::vector<Var> params = {w1, b1, w2, b2};
        const auto build = [&] {
            Var h = tanh_op(add_bias(matmul(input, w1), b1));
            Var out = sigmoid_op(add_bias(matmul(h, w2), b2));
            return bce_with_target(out, 1.0);
        };
        CHECK(max_grad_rel_err(build, params) < 1e-4);
    }
}

TEST_CASE("grad of a plain sum is all ones, disconnected params get zeros") {
    Rng rng(5);
    Var a = Var::param(rand_tensor({3, 3}, rng));
    Var unused = Var::param(rand_tensor({2}, rng));
    std::vector<Var> params = {a, unused};
    const auto gs = grad(sum_all(a), params);
    for (std::size_t i = 0; i < 9; ++i) CHECK(gs[0].value()[i] == 1.0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(gs[1].value()[i] == 0.0);
}

TEST_CASE("grad w.r.t. a constant-only loss is zero") {
    Var a = Var::param(Tensor({2}, {1.0, 2.0}));
    Var c = Var::constant(Tensor({2}, {3.0, 4.0}));
    std::vector<Var> params = {a};
    const auto gs = grad(sum_all(mul(c, c)), params);
    CHECK(gs[0].value()[0] == 0.0);
    CHECK(gs[0].value()[1] == 0.0);
}

TEST_CASE("detach blocks the gradient") {
    Var a = Var::param(Tensor({2}, {1.0, 2.0}));
    std::vector<Var> params = {a};
    const auto gs = grad(sum_all(mul(detach(a), a)), params);
    // d/da sum(c * a) with c = value(a) held fixed
    CHECK(gs[0].value()[0] == doctest::Approx(1.0));
    CHECK(gs[0].value()[1] == doctest::Approx(2.0));
}

TEST_CASE("grad_of_gradnorm: half squared norm gives theta over its norm") {
    Rng rng(77);
    Var theta = Var::param(rand_tensor({4}, rng, 0.2, 2.0));
    std::vector<Var> params = {theta};
    const Var loss = scale(sum_all(mul(theta, theta)), 0.5);
    const auto gg = grad_of_gradnorm(loss, params);
    double norm = 0.0;
    for (std::size_t i = 0; i < 4; ++i) norm += theta.value()[i] * theta.value()[i];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(gg[0].value()[i] == doctest::Approx(theta.value()[i] / norm).epsilon(1e-12));
}

TEST_CASE("grad_of_gradnorm matches the quadratic closed form to 1e-9") {
    Rng rng(31);
    const std::size_t n = 4;
    const Tensor A = rand_tensor({n, n}, rng);
    Var theta = Var::param(rand_tensor({n, 1}, rng, 0.3, 1.5));
    std::vector<Var> params = {theta};
    Var Av = Var::constant(A);
    // loss = 0.5 ||A theta||^2, grad = A^T A theta,
    // d||grad||/dtheta = (A^T A)(A^T A theta) / ||A^T A theta||
    const Var loss = scale(sum_all(mul(matmul(Av, theta), matmul(Av, theta))), 0.5);
    const auto gg = grad_of_gradnorm(loss, params);

    std::vector<double> g(n, 0.0); // A^T A theta
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j)
                g[i] += A[k * n + i] * A[k * n + j] * theta.value()[j];
    double norm = 0.0;
    for (const double v : g) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<double> expect(n, 0.0); // (A^T A) g / norm
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j) expect[i] += A[k * n + i] * A[k * n + j] * g[j] / norm;
    for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(gg[0].value()[i] - expect[i]) < 1e-9);
}

TEST_CASE("grad_of_gradnorm on a nonlinear network passes finite differences") {
    Rng rng(911);
    for (int trial = 0; trial < 3; ++trial) {
        Var w1 = Var::param(rand_tensor({3, 5}, rng, -0.6, 0.6));
        Var w2 = Var::param(rand_tensor({5, 1}, rng, -0.6, 0.6));
        Var input = Var::constant(rand_tensor({4, 3}, rng));
        std::vector<Var> params = {w1, w2};
        const auto build_loss = [&] {
            return bce_with_target(sigmoid_op(matmul(tanh_op(matmul(input, w1)), w2)), 1.0);
        };
        const auto gradnorm_value = [&] {
            const auto gs = grad(build_loss(), params);
            double sq = 0.0;
            for (const auto& g : gs)
                for (std::size_t i = 0; i < g.value().size(); ++i)
                    sq += g.value()[i] * g.value()[i];
            return std::sqrt(sq);
        };
        const auto gg = grad_of_gradnorm(build_loss(), params);
        double worst = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p)
            for (std::size_t i = 0; i < params[p].value().size(); ++i)
                worst = std::max(worst, rel_err(gg[p].value()[i],
                                                fd_partial(gradnorm_value, params[p], i, 1e-5)));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("shape mismatches throw ShapeError") {
    Var a = Var::constant(Tensor({2, 3}));
    Var b = Var::constant(Tensor({3, 2}));
    CHECK_THROWS_AS((void)add(a, b), ShapeError);
    CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
    CHECK_THROWS_AS((void)reshape(a, {4}), ShapeError);
}
