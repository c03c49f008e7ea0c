#pragma once

#include <cstdint>
#include <random>

namespace flattenet {

// Seeded generator with explicit sampling formulas so that identical seeds
// give identical streams regardless of platform or standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is irrelevant for n << 2^64
        return n == 0 ? 0 : gen_() % n;
    }

    // independent child stream
    Rng fork(std::uint64_t tag) {
        return Rng(gen_() ^ (tag * 0x9e3779b97f4a7c15ULL));
    }

private:
    std::mt19937_64 gen_;
};

} // namespace flattenet
