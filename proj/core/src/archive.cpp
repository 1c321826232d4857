#include "stlab/archive.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "tensor-archive payloads are little-endian");

namespace stlab::io {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("archive " + path + ": " + what);
}

void write_header(std::ofstream& out, const std::string& dtype, const std::vector<int64_t>& shape,
                  int64_t count) {
    nlohmann::json h;
    h["magic"] = "STLAB1";
    h["dtype"] = dtype;
    h["shape"] = shape;
    h["order"] = "row-major";
    h["count"] = count;
    out << h.dump() << '\n';
}

template <typename T>
void write_payload(const std::string& path, const std::vector<int64_t>& shape, int64_t count,
                   std::span<const T> values) {
    int64_t per = 1;
    for (int64_t s : shape) per *= s;
    if (static_cast<int64_t>(values.size()) != per * count)
        fail(path, "payload size does not match shape*count");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    write_header(out, sizeof(T) == 4 ? "f32" : "f64", shape, count);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!out) fail(path, "write failed");
}

}  // namespace

int64_t TensorArchive::record_size() const {
    int64_t per = 1;
    for (int64_t s : shape) per *= s;
    return per;
}

TensorArchive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    std::string line;
    if (!std::getline(in, line)) fail(path, "missing header line");

    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(path, std::string("bad header: ") + e.what());
    }
    if (h.value("magic", "") != "STLAB1") fail(path, "bad magic");
    if (h.value("order", "") != "row-major") fail(path, "unsupported order");

    TensorArchive a;
    a.dtype = h.value("dtype", "");
    a.count = h.value("count", int64_t{-1});
    a.shape = h.value("shape", std::vector<int64_t>{});
    if (a.count < 0) fail(path, "missing count");
    if (a.dtype != "f32" && a.dtype != "f64") fail(path, "unsupported dtype " + a.dtype);

    const int64_t total = a.record_size() * a.count;
    const size_t elem = a.dtype == "f32" ? 4 : 8;
    if (a.dtype == "f32") {
        a.f32.resize(static_cast<size_t>(total));
        in.read(reinterpret_cast<char*>(a.f32.data()), static_cast<std::streamsize>(total * elem));
    } else {
        a.f64.resize(static_cast<size_t>(total));
        in.read(reinterpret_cast<char*>(a.f64.data()), static_cast<std::streamsize>(total * elem));
    }
    if (in.gcount() != static_cast<std::streamsize>(total * elem))
        fail(path, "payload shorter than header promises");
    char extra;
    if (in.read(&extra, 1), in.gcount() != 0) fail(path, "trailing bytes after payload");
    return a;
}

void write_archive(const std::string& path, const std::vector<int64_t>& shape, int64_t count,
                   std::span<const float> values) {
    write_payload(path, shape, count, values);
}

void write_archive(const std::string& path, const std::vector<int64_t>& shape, int64_t count,
                   std::span<const double> values) {
    write_payload(path, shape, count, values);
}

uint64_t fnv1a64(std::span<const unsigned char> bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open for checksum");
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

std::string checksum_hex(uint64_t value) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace stlab::io
