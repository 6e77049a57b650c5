#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fss/util.hpp"

namespace fss {

// Dense row-major float32 tensor. Feature maps are (C,H,W), conv weights
// (Cout,Cin,K,K), matrices (rows,cols).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
    }

    static int64_t numel_of(const std::vector<int>& s);
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v);
    static Tensor from(std::vector<int> s, std::vector<float> d);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    float& at(int i) { return data[static_cast<size_t>(i)]; }
    const float& at(int i) const { return data[static_cast<size_t>(i)]; }
    float& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    const float& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const float& at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    float& at(int a, int b, int c, int d) {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    const float& at(int a, int b, int c, int d) const {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    void fill(float v) { data.assign(data.size(), v); }
    void add_scaled(const Tensor& o, float s);  // *this += s * o
    // Throws DataError if any entry is NaN/Inf.
    void check_finite(const char* what) const;
};

// "FTNS" tensor file: magic F T N S, u8 version=1, u8 dtype, u8 ndim,
// ndim x u32 little-endian dims, then the row-major payload.
// dtype 0 = float32 LE, dtype 1 = int32 LE (label maps).
void save_ftns(const std::string& path, const Tensor& t);
Tensor load_ftns(const std::string& path);
void save_ftns_i32(const std::string& path, const std::vector<int>& shape,
                   const std::vector<int32_t>& data);
void load_ftns_i32(const std::string& path, std::vector<int>& shape, std::vector<int32_t>& data);

// Fingerprint of shape+payload, used in manifests.
uint64_t tensor_hash(const Tensor& t, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace fss
