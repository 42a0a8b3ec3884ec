#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpa/tensor.hpp"

namespace gpa {

// Parameter checkpoint: magic `GPT1`, length-prefixed JSON header (may be
// empty), then ordered (name, dtype, shape, raw values) records. Values are
// written as little-endian IEEE floats/doubles, so a roundtrip is bit-exact.
struct CheckpointRecord {
    std::string name;
    Tensor tensor;
};

void write_checkpoint(const std::string& path, const std::string& header,
                      const std::vector<CheckpointRecord>& records);

std::pair<std::string, std::vector<CheckpointRecord>> read_checkpoint(const std::string& path);

} // namespace gpa
