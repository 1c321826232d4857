#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stlab::io {

/// Tensor-archive file: one line of JSON
///   {"magic":"STLAB1","dtype":"f32","shape":[...],"order":"row-major","count":N}
/// terminated by '\n', followed by count * prod(shape) raw little-endian
/// values. Exactly one of f32/f64 is populated after reading.
struct TensorArchive {
    std::string dtype;
    std::vector<int64_t> shape;
    int64_t count = 0;
    std::vector<float> f32;
    std::vector<double> f64;

    int64_t record_size() const;
};

TensorArchive read_archive(const std::string& path);

void write_archive(const std::string& path, const std::vector<int64_t>& shape, int64_t count,
                   std::span<const float> values);
void write_archive(const std::string& path, const std::vector<int64_t>& shape, int64_t count,
                   std::span<const double> values);

/// FNV-1a 64-bit checksum, used in dataset manifests.
uint64_t fnv1a64(std::span<const unsigned char> bytes);
uint64_t fnv1a64_file(const std::string& path);
std::string checksum_hex(uint64_t value);

}  // namespace stlab::io
