#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fss {

// Error taxonomy used across the library. Each maps to one failure class
// so tests can catch the precise kind.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LabelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyRegionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingForegroundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateSampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UninitializedStatisticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for config/checkpoint/dataset fingerprints in manifests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(uint64_t v);

// Deterministic RNG. All distributions are hand-rolled on top of mt19937 so
// that streams are identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    // Derive an independent seed from (seed, salt) without consuming state.
    static uint64_t derive(uint64_t seed, uint64_t salt);

    double uniform() { return static_cast<double>(gen_()) * (1.0 / 4294967296.0); }  // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Inclusive on both ends.
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw ConfigError("uniform_int: empty range");
        auto span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(static_cast<uint64_t>(uniform() * static_cast<double>(span)) % span);
    }
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates over indices [0,n), returns the first k in draw order.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Runs fn(i) for i in [0,n). Work is split into contiguous chunks, one per
// worker, so any per-index outputs land in deterministic slots regardless of
// scheduling. threads <= 1 runs inline.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace fss
