#pragma once

#include <array>
#include <string>
#include <vector>

#include "gpa/curves.hpp"

namespace gpa {

inline constexpr std::size_t kNumIndicators = 5;
inline constexpr std::array<const char*, kNumIndicators> kIndicatorNames = {
    "mean", "cv", "max_mean_ratio", "skewness", "kurtosis"};

// Per-curve statistics used for household characterization. Conventions:
// population (divisor-n) central moments, non-excess kurtosis; a constant
// curve has skewness and kurtosis 0; a zero-mean curve reports +inf for cv
// and max_mean_ratio (excluded from distances with a flag).
struct IndicatorVector {
    double mean = 0.0;
    double cv = 0.0;
    double max_mean_ratio = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;

    double operator[](std::size_t i) const {
        const double* p[kNumIndicators] = {&mean, &cv, &max_mean_ratio, &skewness, &kurtosis};
        return *p[i];
    }
};

IndicatorVector indicators(const Curve& curve);

// Exact 1-D Wasserstein-1 between two empirical distributions (integral of
// |F_a - F_b|; reduces to the mean absolute difference of sorted samples when
// the sizes match).
double emd_1d(std::vector<double> a, std::vector<double> b);

struct IndicatorDistanceEntry {
    std::string indicator;
    double emd_raw = 0.0;
    double pooled_variance = 0.0;
    double emd_normalized = 0.0;
    bool degenerate = false;        // pooled variance was zero
    std::size_t dropped_values = 0; // non-finite indicator values excluded
};

struct IndicatorDistanceReport {
    std::vector<IndicatorDistanceEntry> per_indicator;
    double average = 0.0; // the Average Indicator Distance

    std::string to_csv() const;
};

// Mean over the five indicators of the EMD between their empirical
// distributions after normalizing each to unit pooled variance. Both curve
// sets must be on the raw kWh scale.
IndicatorDistanceReport average_indicator_distance(const std::vector<Curve>& natural,
                                                   const std::vector<Curve>& artificial);

} // namespace gpa
