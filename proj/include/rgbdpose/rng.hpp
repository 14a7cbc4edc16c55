#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace rgbdpose {

// Self-contained xoshiro256** generator so outputs are bit-identical across
// platforms and standard libraries. Gaussian draws use Box-Muller on the raw
// uniform stream for the same reason.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    /// Independent deterministic substream for (seed, tag). Substreams do not
    /// interact, so generation order inside one stream never depends on how
    /// many draws another stream consumed.
    static Rng stream(std::uint64_t seed, std::uint64_t tag) {
        return Rng(splitmix_combine(seed, tag));
    }

    static Rng stream(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
        return Rng(splitmix_combine(splitmix_combine(seed, tag_a), tag_b));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gaussian(double sigma = 1.0) {
        // Box-Muller; one output per pair of uniforms keeps state independent
        // of caller bookkeeping.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return sigma * std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * M_PI * u2);
    }

    Eigen::VectorXd gaussian_vector(int n, double sigma = 1.0) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = gaussian(sigma);
        return v;
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t splitmix_combine(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + (tag << 1));
        std::uint64_t h = splitmix64(x);
        x ^= tag;
        return h ^ splitmix64(x);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

}  // namespace rgbdpose
