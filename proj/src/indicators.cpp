#include "gpa/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gpa/errors.hpp"

namespace gpa {

IndicatorVector indicators(const Curve& curve) {
    const auto& v = curve.values;
    if (v.empty()) throw DataError("indicators: empty curve");
    const double n = static_cast<double>(v.size());

    double m1 = 0.0, vmax = -std::numeric_limits<double>::infinity();
    for (const double x : v) {
        m1 += x;
        vmax = std::max(vmax, x);
    }
    m1 /= n;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const double x : v) {
        const double d = x - m1;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    IndicatorVector out;
    out.mean = m1;
    if (m1 == 0.0) {
        out.cv = std::numeric_limits<double>::infinity();
        out.max_mean_ratio = std::numeric_limits<double>::infinity();
    } else {
        out.cv = std::sqrt(m2) / m1;
        out.max_mean_ratio = vmax / m1;
    }
    if (m2 == 0.0) {
        out.skewness = 0.0;
        out.kurtosis = 0.0;
    } else {
        out.skewness = m3 / std::pow(m2, 1.5);
        out.kurtosis = m4 / (m2 * m2);
    }
    return out;
}

double emd_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw DataError("emd_1d: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() == b.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
        return acc / static_cast<double>(a.size());
    }
    // integral of |F_a - F_b| over merged breakpoints
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double acc = 0.0, prev = std::min(a[0], b[0]);
    while (ia < a.size() || ib < b.size()) {
        const double x = (ib >= b.size() || (ia < a.size() && a[ia] <= b[ib])) ? a[ia] : b[ib];
        acc += std::fabs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (x - prev);
        while (ia < a.size() && a[ia] == x) ++ia;
        while (ib < b.size() && b[ib] == x) ++ib;
        prev = x;
    }
    return acc;
}

std::string IndicatorDistanceReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "indicator,emd_raw,pooled_variance,emd_normalized\n";
    for (const auto& e : per_indicator)
        os << e.indicator << ',' << e.emd_raw << ',' << e.pooled_variance << ','
           << e.emd_normalized << '\n';
    os << "AID,,," << average << '\n';
    return os.str();
}

IndicatorDistanceReport average_indicator_distance(const std::vector<Curve>& natural,
                                                   const std::vector<Curve>& artificial) {
    if (natural.empty() || artificial.empty())
        throw DataError("average_indicator_distance: empty curve set");

    std::array<std::vector<double>, kNumIndicators> nat, art;
    std::array<std::size_t, kNumIndicators> dropped{};
    auto collect = [&dropped](const std::vector<Curve>& curves,
                              std::array<std::vector<double>, kNumIndicators>& dst) {
        for (const auto& c : curves) {
            const IndicatorVector iv = indicators(c);
            for (std::size_t k = 0; k < kNumIndicators; ++k) {
                const double x = iv[k];
                if (std::isfinite(x))
                    dst[k].push_back(x);
                else
                    ++dropped[k];
            }
        }
    };
    collect(natural, nat);
    collect(artificial, art);

    IndicatorDistanceReport report;
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumIndicators; ++k) {
        IndicatorDistanceEntry e;
        e.indicator = kIndicatorNames[k];
        e.dropped_values = dropped[k];
        if (nat[k].empty() || art[k].empty()) {
            e.degenerate = true;
            report.per_indicator.push_back(std::move(e));
            continue;
        }
        // pooled variance over both samples together (population divisor)
        double m = 0.0;
        const double n = static_cast<double>(nat[k].size() + art[k].size());
        for (const double x : nat[k]) m += x;
        for (const double x : art[k]) m += x;
        m /= n;
        double var = 0.0;
        for (const double x : nat[k]) var += (x - m) * (x - m);
        for (const double x : art[k]) var += (x - m) * (x - m);
        var /= n;

        e.emd_raw = emd_1d(nat[k], art[k]);
        e.pooled_variance = var;
        if (var == 0.0) {
            e.degenerate = true;
            e.emd_normalized = 0.0;
        } else {
            e.emd_normalized = e.emd_raw / std::sqrt(var);
        }
        sum += e.emd_normalized;
        report.per_indicator.push_back(std::move(e));
    }
    report.average = sum / static_cast<double>(kNumIndicators);
    return report;
}

} // namespace gpa
