#include <catch2/catch_amalgamated.hpp>
#include <tabrl/rng.hpp>

#include <cmath>
#include <random>
#include <set>
#include <vector>

using tabrl::Rng;

TEST_CASE("splitmix64 matches the published reference vector") {
    // First output of the reference splitmix64 stream seeded with 0.
    CHECK(tabrl::splitmix64(0) == 0xe220a8397b1dcdafULL);
    // Mixing is a bijection-like scrambler: nearby inputs separate.
    CHECK(tabrl::splitmix64(1) != tabrl::splitmix64(2));
}

TEST_CASE("mt19937_64 stream is the standard-specified one") {
    // [rand.predef]: 10000th consecutive invocation of a default-constructed
    // engine. Guarantees the raw stream is portable before we layer on u01.
    std::mt19937_64 eng;
    for (int i = 0; i < 9999; ++i) eng();
    CHECK(eng() == 9981545732273789042ULL);
}

TEST_CASE("u01 is deterministic per seed and lies in [0,1)") {
    Rng a(42), b(42), c(43);
    bool all_match = true, any_differ = false;
    for (int i = 0; i < 1000; ++i) {
        const double x = a.u01();
        all_match = all_match && (x == b.u01());
        any_differ = any_differ || (x != c.u01());
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
    CHECK(all_match);
    CHECK(any_differ);
}

TEST_CASE("u01 sample mean is consistent with uniformity") {
    Rng rng(7);
    const int n = 200000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.u01();
    const double mean = sum / n;
    // 5 sigma of the mean of n uniforms, sigma = 1/sqrt(12n)
    CHECK(std::abs(mean - 0.5) < 5.0 / std::sqrt(12.0 * n));
}

TEST_CASE("categorical respects the distribution and skips zero mass") {
    Rng rng(11);
    const std::vector<double> probs = {0.2, 0.0, 0.5, 0.3};
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) ++counts[rng.categorical(probs)];
    CHECK(counts[1] == 0);
    for (int i : {0, 2, 3}) {
        const double p = probs[i];
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(counts[i] / double(n) - p) < 5 * se);
    }

    const std::vector<double> point = {0.0, 1.0, 0.0};
    for (int i = 0; i < 100; ++i) CHECK(rng.categorical(point) == 1);

    CHECK_THROWS_AS(rng.categorical({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("bernoulli frequency tracks p") {
    Rng rng(5);
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3) ? 1 : 0;
    CHECK(std::abs(hits / double(n) - 0.3) < 5 * std::sqrt(0.3 * 0.7 / n));
}

TEST_CASE("derive_seed separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t base : {1ULL, 2ULL, 99ULL})
        for (std::uint64_t tag = 0; tag < 2000; ++tag)
            seen.insert(tabrl::derive_seed(base, {tag}));
    CHECK(seen.size() == 3 * 2000);

    // Order of tags matters (stream identity is positional).
    CHECK(tabrl::derive_seed(1, {2, 3}) != tabrl::derive_seed(1, {3, 2}));
}

TEST_CASE("fnv1a64 is stable and input sensitive") {
    CHECK(tabrl::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(tabrl::fnv1a64("a") != tabrl::fnv1a64("b"));
    CHECK(tabrl::fnv1a64("expert") == tabrl::fnv1a64("expert"));
}
