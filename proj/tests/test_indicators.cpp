#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpa/indicators.hpp"
#include "gpa/rng.hpp"

using namespace gpa;

namespace {

Curve mk(std::vector<double> v) { return Curve{"t", std::move(v), CurveScale::RawKwh}; }

std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

TEST_CASE("indicator values on a hand-computed curve") {
    const auto iv = indicators(mk({1.0, 2.0, 3.0, 4.0}));
    CHECK(iv.mean == doctest::Approx(2.5));
    // population sigma = sqrt(1.25)
    CHECK(iv.cv == doctest::Approx(std::sqrt(1.25) / 2.5));
    CHECK(iv.max_mean_ratio == doctest::Approx(4.0 / 2.5));
    CHECK(iv.skewness == doctest::Approx(0.0));
    // m4/m2^2 for {-1.5,-0.5,0.5,1.5}: m2 = 1.25, m4 = 2.5625
    CHECK(iv.kurtosis == doctest::Approx(2.5625 / (1.25 * 1.25)));
}

TEST_CASE("constant curves have zero skewness and kurtosis by convention") {
    const auto iv = indicators(mk({0.7, 0.7, 0.7, 0.7}));
    CHECK(iv.mean == doctest::Approx(0.7));
    CHECK(iv.cv == 0.0);
    CHECK(iv.max_mean_ratio == doctest::Approx(1.0));
    CHECK(iv.skewness == 0.0);
    CHECK(iv.kurtosis == 0.0);
}

TEST_CASE("zero-mean curves report +inf ratios") {
    const auto iv = indicators(mk({-1.0, 1.0}));
    CHECK(iv.mean == 0.0);
    CHECK(std::isinf(iv.cv));
    CHECK(std::isinf(iv.max_mean_ratio));
}

TEST_CASE("symmetric curves have zero skewness, right tails positive") {
    CHECK(indicators(mk({1, 2, 3, 4, 5})).skewness == doctest::Approx(0.0));
    CHECK(indicators(mk({1, 1, 1, 1, 10})).skewness > 0.0);
    CHECK(indicators(mk({10, 10, 10, 10, 1})).skewness < 0.0);
}

TEST_CASE("cv, ratio, skewness and kurtosis are scale invariant; mean is not") {
    Rng rng(10);
    for (int t = 0; t < 5; ++t) {
        const auto v = rand_vec(rng, 50, 0.1, 2.0);
        auto scaled = v;
        for (auto& x : scaled) x *= 3.7;
        const auto a = indicators(mk(v));
        const auto b = indicators(mk(scaled));
        CHECK(b.mean == doctest::Approx(3.7 * a.mean));
        CHECK(b.cv == doctest::Approx(a.cv));
        CHECK(b.max_mean_ratio == doctest::Approx(a.max_mean_ratio));
        CHECK(b.skewness == doctest::Approx(a.skewness));
        CHECK(b.kurtosis == doctest::Approx(a.kurtosis));
    }
}

TEST_CASE("emd of identical samples is zero, point masses give the distance") {
    CHECK(emd_1d({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(emd_1d({0.0}, {2.5}) == doctest::Approx(2.5));
    CHECK(emd_1d({0, 0}, {1, 3}) == doctest::Approx(2.0));
    CHECK(emd_1d({0, 1}, {1, 2}) == doctest::Approx(1.0));
}

TEST_CASE("equal-size emd equals mean absolute difference of sorted samples") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        auto a = rand_vec(rng, 1 + rng.uniform_index(10), -2.0, 2.0);
        auto b = rand_vec(rng, a.size(), -2.0, 2.0);
        const double got = emd_1d(a, b);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        double expect = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) expect += std::abs(a[i] - b[i]);
        expect /= static_cast<double>(a.size());
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("emd is a metric on random unequal-size samples") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        const auto a = rand_vec(rng, 1 + rng.uniform_index(7), -1.0, 1.0);
        const auto b = rand_vec(rng, 1 + rng.uniform_index(7), -1.0, 1.0);
        const auto c = rand_vec(rng, 1 + rng.uniform_index(7), -1.0, 1.0);
        const double ab = emd_1d(a, b), ba = emd_1d(b, a);
        const double bc = emd_1d(b, c), ac = emd_1d(a, c);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12)); // symmetry
        CHECK(ab >= 0.0);
        CHECK(ac <= ab + bc + 1e-12); // triangle inequality
        CHECK(emd_1d(a, a) == 0.0);   // identity
    }
}

TEST_CASE("emd scales with the data: duplicated samples keep the distance") {
    // {1,2} vs {1,1,2,2} describe the same empirical distribution
    CHECK(emd_1d({1, 2}, {1, 1, 2, 2}) == doctest::Approx(0.0));
}

TEST_CASE("average indicator distance of a set against itself is exactly zero") {
    Rng rng(12);
    std::vector<Curve> set;
    for (int i = 0; i < 8; ++i) set.push_back(mk(rand_vec(rng, 96, 0.05, 2.0)));
    const auto report = average_indicator_distance(set, set);
    CHECK(report.average == 0.0);
    REQUIRE(report.per_indicator.size() == kNumIndicators);
    for (const auto& e : report.per_indicator) {
        CHECK(e.emd_raw == 0.0);
        CHECK(e.emd_normalized == 0.0);
    }
}

TEST_CASE("distance grows as the artificial set drifts away") {
    Rng rng(13);
    std::vector<Curve> nat, close, far;
    for (int i = 0; i < 10; ++i) {
        const auto v = rand_vec(rng, 96, 0.5, 1.5);
        nat.push_back(mk(v));
        auto c = v, f = v;
        for (auto& x : c) x += 0.01 * rng.uniform();
        for (auto& x : f) x = x * 3.0 + 1.0;
        close.push_back(mk(c));
        far.push_back(mk(f));
    }
    const double d_close = average_indicator_distance(nat, close).average;
    const double d_far = average_indicator_distance(nat, far).average;
    CHECK(d_close < d_far);
}

TEST_CASE("degenerate indicators are flagged instead of dividing by zero") {
    std::vector<Curve> a = {mk({1, 1, 1, 1}), mk({1, 1, 1, 1})};
    const auto report = average_indicator_distance(a, a);
    for (const auto& e : report.per_indicator) CHECK(e.degenerate);
    CHECK(std::isfinite(report.average));
}

TEST_CASE("non-finite indicator values are dropped and counted") {
    std::vector<Curve> nat = {mk({-1, 1}), mk({0.5, 1.0})}; // first has zero mean
    std::vector<Curve> art = {mk({0.4, 0.9}), mk({0.6, 1.1})};
    const auto report = average_indicator_distance(nat, art);
    CHECK(std::isfinite(report.average));
    bool any_dropped = false;
    for (const auto& e : report.per_indicator) any_dropped |= e.dropped_values > 0;
    CHECK(any_dropped);
}

TEST_CASE("the csv report carries one row per indicator plus the average") {
    Rng rng(14);
    std::vector<Curve> a, b;
    for (int i = 0; i < 5; ++i) {
        a.push_back(mk(rand_vec(rng, 48, 0.1, 1.0)));
        b.push_back(mk(rand_vec(rng, 48, 0.1, 1.0)));
    }
    const auto csv = average_indicator_distance(a, b).to_csv();
    CHECK(csv.find("indicator,") == 0);
    for (const char* name : kIndicatorNames) CHECK(csv.find(name) != std::string::npos);
    CHECK(csv.find("AID") != std::string::npos);
}
