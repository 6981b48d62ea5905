#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "fedload/rng.hpp"

using namespace fedload;

TEST_CASE("mt19937_64 streams match the standard-pinned value") {
    // The C++ standard pins the 10000th output of a default-seeded
    // mt19937_64; this anchors cross-platform determinism of every stream.
    Rng rng(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = rng.next_u64();
    CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("same seed reproduces the same draws") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng c(123), d(124);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) any_diff |= (c.next_u64() != d.next_u64());
    CHECK(any_diff);
}

TEST_CASE("uniform stays in range") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = rng.uniform(-3.0, 5.0);
        CHECK(v >= -3.0);
        CHECK(v < 5.0);
    }
}

TEST_CASE("gaussian moments are sane") {
    Rng rng(77);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.05);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle permutes without loss") {
    Rng rng(5);
    std::vector<int> items(50);
    std::iota(items.begin(), items.end(), 0);
    std::vector<int> shuffled = items;
    rng.shuffle(shuffled);
    CHECK(shuffled != items);  // astronomically unlikely to be identity
    std::sort(shuffled.begin(), shuffled.end());
    CHECK(shuffled == items);

    Rng r1(6), r2(6);
    std::vector<int> a = items, b = items;
    r1.shuffle(a);
    r2.shuffle(b);
    CHECK(a == b);
}

TEST_CASE("mix derives distinct substreams") {
    CHECK(Rng::mix(1, 0) != Rng::mix(1, 1));
    CHECK(Rng::mix(1, 0) != Rng::mix(2, 0));
    CHECK(Rng::mix(7, 3) == Rng::mix(7, 3));
}

TEST_CASE("index stays in bounds") {
    Rng rng(31);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.index(7) < 7);
    }
}
