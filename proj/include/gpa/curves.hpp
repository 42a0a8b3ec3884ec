#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpa/rng.hpp"

namespace gpa {

// One half-hourly meter reading. Timestamps are half-hour indices since an
// arbitrary epoch; ISO-8601 input is converted at parse time.
struct Reading {
    std::string household_id;
    std::int64_t timestamp = 0;
    double kwh = 0.0;
};

enum class CurveScale { RawKwh, Normalized };

// A fixed-length window of consecutive readings from one household.
struct Curve {
    std::string household_id;
    std::vector<double> values;
    CurveScale scale = CurveScale::RawKwh;
};

inline constexpr std::size_t kDefaultFrameLen = 672; // two weeks of half hours

struct NormalizationRecord {
    double cap = 1.0;
};

// Households split into 5 disjoint subsets; exactly one is the training set.
struct SubsetPartition {
    std::vector<std::vector<std::string>> subsets; // size 5
    int member_index = 0;
    std::uint64_t seed = 0;
};

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

// Desk-scale stand-in for a real half-hourly consumption dataset: a daily
// sinusoid on a base level, Poisson-timed appliance spikes, Gaussian noise.
struct SyntheticLoadConfig {
    std::size_t n_households = 25;
    std::size_t frames_per_household = 8;
    std::size_t frame_len = 96;
    ParamRange base_level{0.1, 0.5};
    ParamRange daily_amplitude{0.05, 0.4};
    ParamRange spike_rate{0.5, 3.0}; // expected spikes per day (48 samples)
    ParamRange spike_magnitude{0.5, 2.0};
    double noise_sigma = 0.03;
    std::uint64_t seed = 0;

    void validate() const;
};

// Cuts each household's time-sorted readings into consecutive non-overlapping
// frames; a gap in the timestamp sequence starts a new frame and remainders
// shorter than frame_len are dropped.
std::vector<Curve> frame_readings(const std::vector<Reading>& readings, std::size_t frame_len);

// CSV with header `household_id,timestamp,kwh`; timestamp ISO-8601 or integer
// half-hour index, auto-detected per file.
std::vector<Curve> ingest_csv(const std::string& path, std::size_t frame_len = kDefaultFrameLen);

// v -> 2*min(v, cap)/cap - 1. Values at or below the cap invert exactly.
std::pair<std::vector<Curve>, NormalizationRecord> normalize(const std::vector<Curve>& curves,
                                                             double cap);
std::vector<Curve> denormalize(const std::vector<Curve>& curves, const NormalizationRecord& rec);
double denormalize_value(double v, const NormalizationRecord& rec);

// Default cap choice: the 99.5th percentile of all readings in the given set.
double percentile_cap(const std::vector<Curve>& curves, double q = 0.995);

SubsetPartition partition(const std::vector<std::string>& households, std::uint64_t seed);

std::vector<Curve> synth_load(const SyntheticLoadConfig& config);

std::vector<std::string> household_ids(const std::vector<Curve>& curves);
std::vector<Curve> curves_of_households(const std::vector<Curve>& curves,
                                        const std::vector<std::string>& ids);

// Flat binary curve file: magic `GPC1`, u32 frame_len, u32 count, then per
// curve a length-prefixed household id and frame_len little-endian f32s.
void write_curve_file(const std::string& path, const std::vector<Curve>& curves);
std::vector<Curve> read_curve_file(const std::string& path, CurveScale scale = CurveScale::RawKwh);

} // namespace gpa
