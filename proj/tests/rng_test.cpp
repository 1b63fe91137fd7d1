#include <doctest.h>

#include <longbio/rng.hpp>

#include <cmath>
#include <set>
#include <vector>

using longbio::Rng;

TEST_SUITE("rng") {
  TEST_CASE("same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next() == b.next());
  }

  TEST_CASE("substreams are independent of draw order") {
    Rng root(7);
    Rng s1 = root.substream(10);
    Rng s2 = root.substream(11);
    std::vector<uint64_t> first;
    for (int i = 0; i < 8; ++i) first.push_back(s1.next());

    // rebuild in the opposite order; streams must not interfere
    Rng root2(7);
    Rng t2 = root2.substream(11);
    Rng t1 = root2.substream(10);
    for (int i = 0; i < 8; ++i) CHECK(t1.next() == first[size_t(i)]);
    for (int i = 0; i < 8; ++i) CHECK(s2.next() == t2.next());
  }

  TEST_CASE("string substreams differ by tag") {
    Rng root(1);
    CHECK(root.substream("alpha").next() != root.substream("beta").next());
    CHECK(root.substream("alpha").next() == root.substream("alpha").next());
  }

  TEST_CASE("bounded stays in range and covers values") {
    Rng r(3);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      const uint64_t v = r.bounded(7);
      REQUIRE(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
  }

  TEST_CASE("bounded(1) is always zero") {
    Rng r(9);
    for (int i = 0; i < 16; ++i) CHECK(r.bounded(1) == 0);
  }

  TEST_CASE("unit in [0,1) with sane mean") {
    Rng r(5);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double u = r.unit();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
  }

  TEST_CASE("chance matches probability roughly") {
    Rng r(11);
    int hits = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) hits += r.chance(0.3) ? 1 : 0;
    CHECK(std::abs(hits / double(n) - 0.3) < 0.02);
    Rng z(1);
    for (int i = 0; i < 100; ++i) CHECK_FALSE(z.chance(0.0));
    for (int i = 0; i < 100; ++i) CHECK(z.chance(1.0));
  }

  TEST_CASE("pick returns elements uniformly enough") {
    Rng r(13);
    std::vector<int> pool = {1, 2, 3, 4};
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 8000; ++i) ++counts[size_t(r.pick(pool))];
    for (int v = 1; v <= 4; ++v) CHECK(counts[size_t(v)] > 1700);
  }
}
