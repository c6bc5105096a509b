#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "kenkf/rng.hpp"

using namespace kenkf;

TEST_SUITE("rng") {
  TEST_CASE("keyed streams are deterministic and key-sensitive") {
    RngStream a = RngStream::keyed(42, 1, 2, 3);
    RngStream b = RngStream::keyed(42, 1, 2, 3);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    // Any single key change moves the stream.
    const std::uint64_t first = RngStream::keyed(42, 1, 2, 3).next_u64();
    CHECK(RngStream::keyed(43, 1, 2, 3).next_u64() != first);
    CHECK(RngStream::keyed(42, 2, 2, 3).next_u64() != first);
    CHECK(RngStream::keyed(42, 1, 3, 3).next_u64() != first);
    CHECK(RngStream::keyed(42, 1, 2, 4).next_u64() != first);

    // Key order matters: (1,2) and (2,1) are different streams.
    CHECK(RngStream::keyed(7, 1, 2).next_u64() != RngStream::keyed(7, 2, 1).next_u64());
  }

  TEST_CASE("uniform01 stays in (0, 1]") {
    RngStream rng = RngStream::keyed(5);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const double u = rng.uniform01();
      CHECK(u > 0.0);
      CHECK(u <= 1.0);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    // The draws actually spread over the interval.
    CHECK(lo < 1e-3);
    CHECK(hi > 1.0 - 1e-3);
  }

  TEST_CASE("uniform_below honours the bound and is roughly flat") {
    RngStream rng = RngStream::keyed(11);
    const std::uint64_t n = 10;
    std::vector<int> counts(n, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      const std::uint64_t v = rng.uniform_below(n);
      REQUIRE(v < n);
      ++counts[static_cast<std::size_t>(v)];
    }
    // Each bin expects 10000 with sd ~ 95; 6 sigma ~ 570.
    for (int c : counts) CHECK(std::abs(c - draws / static_cast<int>(n)) < 600);
  }

  TEST_CASE("uniform maps into [lo, hi)") {
    RngStream rng = RngStream::keyed(17);
    for (int i = 0; i < 1000; ++i) {
      const double u = rng.uniform(90.0, 110.0);
      CHECK(u > 90.0);
      CHECK(u <= 110.0);
    }
  }

  TEST_CASE("normal draws have unit-normal moments") {
    RngStream rng = RngStream::keyed(23);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    // sd(mean) = 1/sqrt(n) ~ 0.0022, sd(var) ~ sqrt(2/n) ~ 0.0032; 5 sigma.
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));
  }

  TEST_CASE("sample_without_replacement draws distinct indices and restores the pool") {
    RngStream rng = RngStream::keyed(31);
    const std::size_t n = 20, m = 7;
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0u);
    const std::vector<std::uint32_t> identity = pool;
    std::vector<std::uint32_t> out;

    for (int trial = 0; trial < 500; ++trial) {
      rng.sample_without_replacement(m, pool, out);
      REQUIRE(out.size() == m);
      std::set<std::uint32_t> unique(out.begin(), out.end());
      CHECK(unique.size() == m);
      for (std::uint32_t v : out) CHECK(v < n);
      // The pool must be the identity again so the next caller can reuse it.
      CHECK(pool == identity);
    }
  }

  TEST_CASE("sample_without_replacement with m = n is a permutation") {
    RngStream rng = RngStream::keyed(37);
    const std::size_t n = 9;
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0u);
    std::vector<std::uint32_t> out;
    rng.sample_without_replacement(n, pool, out);
    std::vector<std::uint32_t> sorted = out;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
  }

  TEST_CASE("subset sampling is unbiased across positions") {
    RngStream rng = RngStream::keyed(41);
    const std::size_t n = 10, m = 3;
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0u);
    std::vector<std::uint32_t> out;
    std::vector<int> hits(n, 0);
    const int trials = 60000;
    for (int trial = 0; trial < trials; ++trial) {
      rng.sample_without_replacement(m, pool, out);
      for (std::uint32_t v : out) ++hits[v];
    }
    // Each index is included with probability m/n = 0.3: expect 18000,
    // sd ~ sqrt(trials * 0.3 * 0.7) ~ 112; allow 6 sigma.
    for (int h : hits) CHECK(std::abs(h - trials * 3 / 10) < 700);
  }
}
