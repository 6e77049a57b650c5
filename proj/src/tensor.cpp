#include "fss/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace fss {

int64_t Tensor::numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("tensor dims must be positive");
        n *= d;
    }
    return n;
}

Tensor Tensor::full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<float> d) {
    if (numel_of(s) != static_cast<int64_t>(d.size()))
        throw DimensionError("tensor data length does not match shape");
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    return t;
}

void Tensor::add_scaled(const Tensor& o, float s) {
    if (!same_shape(o)) throw DimensionError("add_scaled: shape mismatch");
    for (size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
}

void Tensor::check_finite(const char* what) const {
    for (float v : data)
        if (!std::isfinite(v)) throw DataError(std::string("non-finite value in ") + what);
}

namespace {

void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_header(std::ostream& os, uint8_t dtype, const std::vector<int>& shape) {
    os.write("FTNS", 4);
    uint8_t version = 1;
    uint8_t ndim = static_cast<uint8_t>(shape.size());
    os.put(static_cast<char>(version));
    os.put(static_cast<char>(dtype));
    os.put(static_cast<char>(ndim));
    for (int d : shape) write_u32le(os, static_cast<uint32_t>(d));
}

std::vector<int> read_header(std::istream& is, const std::string& path, uint8_t expect_dtype) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FTNS", 4) != 0)
        throw IoError("not an FTNS file: " + path);
    uint8_t version = static_cast<uint8_t>(is.get());
    uint8_t dtype = static_cast<uint8_t>(is.get());
    uint8_t ndim = static_cast<uint8_t>(is.get());
    if (version != 1) throw IoError("unsupported FTNS version in " + path);
    if (dtype != expect_dtype) throw IoError("unexpected FTNS dtype in " + path);
    std::vector<int> shape(ndim);
    for (int i = 0; i < ndim; ++i) shape[static_cast<size_t>(i)] = static_cast<int>(read_u32le(is));
    return shape;
}

}  // namespace

void save_ftns(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    write_header(os, 0, t.shape);
    // assumes little-endian float32 host, which is all we target
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!os) throw IoError("short write: " + path);
}

Tensor load_ftns(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<int> shape = read_header(is, path, 0);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw IoError("short read: " + path);
    return t;
}

void save_ftns_i32(const std::string& path, const std::vector<int>& shape,
                   const std::vector<int32_t>& data) {
    if (Tensor::numel_of(shape) != static_cast<int64_t>(data.size()))
        throw DimensionError("save_ftns_i32: data length does not match shape");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    write_header(os, 1, shape);
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(int32_t)));
    if (!os) throw IoError("short write: " + path);
}

void load_ftns_i32(const std::string& path, std::vector<int>& shape, std::vector<int32_t>& data) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    shape = read_header(is, path, 1);
    data.assign(static_cast<size_t>(Tensor::numel_of(shape)), 0);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(int32_t)));
    if (!is) throw IoError("short read: " + path);
}

uint64_t tensor_hash(const Tensor& t, uint64_t seed) {
    uint64_t h = seed;
    for (int d : t.shape) h = fnv1a64(&d, sizeof(d), h);
    h = fnv1a64(t.data.data(), t.data.size() * sizeof(float), h);
    return h;
}

}  // namespace fss
