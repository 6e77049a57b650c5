#include "fss/util.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

namespace fss {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64(const std::string& s, uint64_t seed) { return fnv1a64(s.data(), s.size(), seed); }

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

uint64_t Rng::derive(uint64_t seed, uint64_t salt) {
    // splitmix64 over the combined value
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite
    double u = uniform();
    if (u < 1e-12) u = 1e-12;
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k > n) throw ConfigError("sample_without_replacement: k > n");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
        int j = uniform_int(i, n - 1);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads > n) threads = n;
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int lo = t * chunk;
        int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fss
