#pragma once

// Seedable, portable randomness. std::mt19937_64 has a fully specified output
// sequence, but the std distributions do not, so sampling helpers are
// hand-rolled here: every draw is reproducible across standard libraries.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabrl {

// SplitMix64 finalizer: bijective 64-bit mixing, used for seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// FNV-1a over bytes; stable way to fold strings into seed/hash material.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ull) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Derives an independent stream seed from a base seed plus context tags.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t t : tags) h = splitmix64(h ^ t);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Recorded in dataset envelopes so outputs name the stream they came from.
    static std::string generator_id() { return "mt19937_64/u53-v1"; }

    // Uniform in [0,1): top 53 bits of one engine draw.
    double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return u01() < p; }

    // Index draw from a probability row. Zero-mass entries can never be
    // returned; the final positive entry absorbs accumulated rounding.
    int categorical(const std::vector<double>& probs) {
        const double u = u01();
        double acc = 0.0;
        int last_positive = -1;
        for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last_positive = i;
            if (u < acc) return i;
        }
        if (last_positive < 0) throw std::invalid_argument("categorical: no positive mass");
        return last_positive;
    }

    // Integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int>(u01() * static_cast<double>(n));
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace tabrl
