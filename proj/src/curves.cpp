#include "gpa/curves.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "gpa/errors.hpp"

namespace gpa {

namespace {

// days since 1970-01-01 (Howard Hinnant's days_from_civil)
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                         static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool parse_iso_timestamp(const std::string& s, std::int64_t& out) {
    // YYYY-MM-DD[T ]HH:MM[:SS]
    int y, mo, d, h, mi, se = 0;
    if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
        s[13] != ':')
        return false;
    auto num = [&](std::size_t pos, std::size_t len, int& v) {
        v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
            v = v * 10 + (s[i] - '0');
        }
        return true;
    };
    if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) || !num(14, 2, mi))
        return false;
    if (s.size() >= 19 && s[16] == ':' && !num(17, 2, se)) return false;
    const std::int64_t secs =
        days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
    out = secs / 1800;
    return true;
}

bool parse_int_timestamp(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return false;
    std::int64_t v = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = s[0] == '-' ? -v : v;
    return true;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void SyntheticLoadConfig::validate() const {
    auto bad_range = [](const ParamRange& r) { return r.lo < 0.0 || r.hi < r.lo; };
    if (n_households == 0 || frames_per_household == 0 || frame_len == 0)
        throw DataError("synthetic load config: counts must be positive");
    if (bad_range(base_level) || bad_range(daily_amplitude) || bad_range(spike_rate) ||
        bad_range(spike_magnitude))
        throw DataError("synthetic load config: ranges must be nonnegative and ordered");
    if (noise_sigma <= 0.0) throw DataError("synthetic load config: noise_sigma must be > 0");
}

std::vector<Curve> frame_readings(const std::vector<Reading>& readings, std::size_t frame_len) {
    if (frame_len == 0) throw DataError("frame_readings: frame_len must be positive");
    std::map<std::string, std::vector<Reading>> by_household;
    for (const auto& r : readings) by_household[r.household_id].push_back(r);

    std::vector<Curve> out;
    for (auto& [hid, rs] : by_household) {
        std::stable_sort(rs.begin(), rs.end(),
                         [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
        std::vector<double> frame;
        frame.reserve(frame_len);
        std::int64_t prev_ts = 0;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            if (!frame.empty() && rs[i].timestamp != prev_ts + 1) frame.clear(); // gap
            frame.push_back(rs[i].kwh);
            prev_ts = rs[i].timestamp;
            if (frame.size() == frame_len) {
                out.push_back(Curve{hid, frame, CurveScale::RawKwh});
                frame.clear();
            }
        }
        // trailing remainder shorter than frame_len is dropped
    }
    return out;
}

std::vector<Curve> ingest_csv(const std::string& path, std::size_t frame_len) {
    std::ifstream is(path);
    if (!is) throw DataError("ingest_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("ingest_csv: empty file " + path);
    {
        auto header = split_csv_line(line);
        if (header.size() != 3 || header[0] != "household_id" || header[1] != "timestamp" ||
            header[2] != "kwh")
            throw DataError("ingest_csv: expected header household_id,timestamp,kwh in " + path);
    }

    std::vector<Reading> readings;
    int timestamp_mode = 0; // 0 undecided, 1 integer, 2 iso
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3)
            throw DataError("ingest_csv: line " + std::to_string(lineno) + ": expected 3 fields");
        Reading r;
        r.household_id = cells[0];
        if (r.household_id.empty())
            throw DataError("ingest_csv: line " + std::to_string(lineno) + ": empty household id");
        if (timestamp_mode == 0)
            timestamp_mode = parse_int_timestamp(cells[1], r.timestamp) ? 1 : 2;
        const bool ts_ok = timestamp_mode == 1 ? parse_int_timestamp(cells[1], r.timestamp)
                                               : parse_iso_timestamp(cells[1], r.timestamp);
        if (!ts_ok)
            throw DataError("ingest_csv: line " + std::to_string(lineno) + ": bad timestamp '" +
                            cells[1] + "'");
        try {
            std::size_t used = 0;
            r.kwh = std::stod(cells[2], &used);
            if (used != cells[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError("ingest_csv: line " + std::to_string(lineno) + ": bad kwh value '" +
                            cells[2] + "'");
        }
        if (r.kwh < 0.0 || std::isnan(r.kwh))
            throw DataError("ingest_csv: line " + std::to_string(lineno) +
                            ": kwh must be nonnegative");
        readings.push_back(std::move(r));
    }
    if (readings.empty()) throw DataError("ingest_csv: no data rows in " + path);
    return frame_readings(readings, frame_len);
}

std::pair<std::vector<Curve>, NormalizationRecord> normalize(const std::vector<Curve>& curves,
                                                             double cap) {
    if (cap <= 0.0) throw DataError("normalize: cap must be positive");
    std::vector<Curve> out;
    out.reserve(curves.size());
    for (const auto& c : curves) {
        Curve n{c.household_id, c.values, CurveScale::Normalized};
        for (auto& v : n.values) v = 2.0 * std::min(v, cap) / cap - 1.0;
        out.push_back(std::move(n));
    }
    return {std::move(out), NormalizationRecord{cap}};
}

double denormalize_value(double v, const NormalizationRecord& rec) {
    return (v + 1.0) * 0.5 * rec.cap;
}

std::vector<Curve> denormalize(const std::vector<Curve>& curves, const NormalizationRecord& rec) {
    std::vector<Curve> out;
    out.reserve(curves.size());
    for (const auto& c : curves) {
        Curve r{c.household_id, c.values, CurveScale::RawKwh};
        for (auto& v : r.values) v = denormalize_value(v, rec);
        out.push_back(std::move(r));
    }
    return out;
}

double percentile_cap(const std::vector<Curve>& curves, double q) {
    std::vector<double> all;
    for (const auto& c : curves) all.insert(all.end(), c.values.begin(), c.values.end());
    if (all.empty()) throw DataError("percentile_cap: no readings");
    std::sort(all.begin(), all.end());
    const std::size_t idx = static_cast<std::size_t>(
        std::min(static_cast<double>(all.size() - 1), q * static_cast<double>(all.size() - 1)));
    const double cap = all[idx];
    return cap > 0.0 ? cap : 1.0;
}

SubsetPartition partition(const std::vector<std::string>& households, std::uint64_t seed) {
    if (households.size() < 5)
        throw DataError("partition: need at least 5 households, got " +
                        std::to_string(households.size()));
    std::vector<std::string> shuffled = households;
    Rng rng(seed);
    rng.shuffle(shuffled);
    SubsetPartition p;
    p.subsets.assign(5, {});
    for (std::size_t i = 0; i < shuffled.size(); ++i)
        p.subsets[i % 5].push_back(std::move(shuffled[i]));
    p.member_index = static_cast<int>(rng.uniform_index(5));
    p.seed = seed;
    return p;
}

std::vector<Curve> synth_load(const SyntheticLoadConfig& config) {
    config.validate();
    std::vector<Curve> out;
    out.reserve(config.n_households * config.frames_per_household);
    for (std::size_t h = 0; h < config.n_households; ++h) {
        Rng rng(derive_seed(config.seed, "synth_household", h));
        const double base = rng.uniform(config.base_level.lo, config.base_level.hi);
        const double amp = rng.uniform(config.daily_amplitude.lo, config.daily_amplitude.hi);
        const double rate = rng.uniform(config.spike_rate.lo, config.spike_rate.hi);
        const double mag = rng.uniform(config.spike_magnitude.lo, config.spike_magnitude.hi);
        const double phase = rng.uniform(0.0, 48.0);
        const std::string hid = "H" + std::to_string(h);
        const double p_spike = rate / 48.0;
        for (std::size_t f = 0; f < config.frames_per_household; ++f) {
            Curve c{hid, std::vector<double>(config.frame_len), CurveScale::RawKwh};
            for (std::size_t i = 0; i < config.frame_len; ++i) {
                double v = base +
                           amp * std::sin(2.0 * 3.14159265358979323846 *
                                          (static_cast<double>(i) + phase) / 48.0) +
                           config.noise_sigma * rng.normal();
                if (rng.uniform() < p_spike) v += mag * rng.uniform(0.5, 1.5);
                c.values[i] = std::max(0.0, v);
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<std::string> household_ids(const std::vector<Curve>& curves) {
    std::vector<std::string> ids;
    for (const auto& c : curves)
        if (std::find(ids.begin(), ids.end(), c.household_id) == ids.end())
            ids.push_back(c.household_id);
    return ids;
}

std::vector<Curve> curves_of_households(const std::vector<Curve>& curves,
                                        const std::vector<std::string>& ids) {
    std::vector<Curve> out;
    for (const auto& c : curves)
        if (std::find(ids.begin(), ids.end(), c.household_id) != ids.end()) out.push_back(c);
    return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("curve file: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_curve_file(const std::string& path, const std::vector<Curve>& curves) {
    if (curves.empty()) throw DataError("write_curve_file: no curves");
    const std::size_t frame_len = curves.front().values.size();
    for (const auto& c : curves)
        if (c.values.size() != frame_len)
            throw DataError("write_curve_file: inconsistent curve lengths");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_curve_file: cannot open " + path);
    os.write("GPC1", 4);
    put_u32(os, static_cast<std::uint32_t>(frame_len));
    put_u32(os, static_cast<std::uint32_t>(curves.size()));
    for (const auto& c : curves) {
        put_u32(os, static_cast<std::uint32_t>(c.household_id.size()));
        os.write(c.household_id.data(), static_cast<std::streamsize>(c.household_id.size()));
        for (const double v : c.values) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(os, bits);
        }
    }
    if (!os) throw DataError("write_curve_file: write failure on " + path);
}

std::vector<Curve> read_curve_file(const std::string& path, CurveScale scale) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_curve_file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GPC1", 4) != 0)
        throw DataError("read_curve_file: bad magic in " + path);
    const std::uint32_t frame_len = get_u32(is);
    const std::uint32_t count = get_u32(is);
    std::vector<Curve> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string hid(get_u32(is), '\0');
        is.read(hid.data(), static_cast<std::streamsize>(hid.size()));
        Curve c{std::move(hid), std::vector<double>(frame_len), scale};
        for (auto& v : c.values) {
            const std::uint32_t bits = get_u32(is);
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace gpa
