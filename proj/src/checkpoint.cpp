#include "gpa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "gpa/errors.hpp"

namespace gpa {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(std::istream& is) {
    const std::uint64_t lo = get_u32(is);
    const std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

} // namespace

void write_checkpoint(const std::string& path, const std::string& header,
                      const std::vector<CheckpointRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    os.write("GPT1", 4);
    put_u32(os, static_cast<std::uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        os.put(rec.tensor.dtype() == DType::F32 ? 0 : 1);
        put_u32(os, static_cast<std::uint32_t>(rec.tensor.ndim()));
        for (std::size_t d = 0; d < rec.tensor.ndim(); ++d) put_u64(os, rec.tensor.dim(d));
        if (rec.tensor.dtype() == DType::F32) {
            for (std::size_t i = 0; i < rec.tensor.size(); ++i) {
                const float f = static_cast<float>(rec.tensor[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32(os, bits);
            }
        } else {
            for (std::size_t i = 0; i < rec.tensor.size(); ++i) {
                const double d = rec.tensor[i];
                std::uint64_t bits;
                std::memcpy(&bits, &d, 8);
                put_u64(os, bits);
            }
        }
    }
    if (!os) throw DataError("checkpoint: write failure on " + path);
}

std::pair<std::string, std::vector<CheckpointRecord>> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GPT1", 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    std::string header(get_u32(is), '\0');
    is.read(header.data(), static_cast<std::streamsize>(header.size()));
    const std::uint32_t count = get_u32(is);
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        std::string name(get_u32(is), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        const int dt = is.get();
        if (dt != 0 && dt != 1) throw DataError("checkpoint: bad dtype in " + path);
        Shape shape(get_u32(is));
        for (auto& d : shape) d = get_u64(is);
        Tensor t(shape, dt == 0 ? DType::F32 : DType::F64);
        if (dt == 0) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const std::uint32_t bits = get_u32(is);
                float f;
                std::memcpy(&f, &bits, 4);
                t[i] = static_cast<double>(f);
            }
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const std::uint64_t bits = get_u64(is);
                double d;
                std::memcpy(&d, &bits, 8);
                t[i] = d;
            }
        }
        records.push_back({std::move(name), std::move(t)});
    }
    return {std::move(header), std::move(records)};
}

} // namespace gpa
