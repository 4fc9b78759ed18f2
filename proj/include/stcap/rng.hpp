#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stcap {

// 64-bit FNV-1a over the raw bytes. Stable across platforms and builds;
// used to derive every seed in the project so nothing depends on the
// standard library's unspecified hash or distribution internals.
constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64-based generator. Small, fully specified, and serializable,
// which keeps training runs bit-reproducible.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0,n). Rejection sampling keeps it unbiased.
    int uniform_int(int n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    // Standard normal via Box-Muller; the spare value is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0,1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates; std::shuffle is avoided because its algorithm is
    // implementation-defined.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic unit vector derived from a string key.
inline Eigen::VectorXd hash_unit_vector(std::string_view key, int dim) {
    Rng rng(fnv1a64(key));
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
    const double norm = v.norm();
    if (norm < 1e-12) {
        v.setZero();
        if (dim > 0) v[0] = 1.0;
        return v;
    }
    return v / norm;
}

// Seed mixer for independent named streams.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
    std::string key = std::to_string(base);
    key += ':';
    key += tag;
    key += ':';
    key += std::to_string(index);
    return fnv1a64(key);
}

}  // namespace stcap
