#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "reverso/rng.hpp"

using namespace reverso;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("below stays in range and covers small ranges") {
  Rng rng(7);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto v = rng.below(5);
    REQUIRE(v < 5);
    ++seen[static_cast<std::size_t>(v)];
  }
  for (int count : seen) CHECK(count > 800);  // ~1000 each
}

TEST_CASE("real is in [0,1)") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.real();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("shuffle permutes") {
  Rng rng(11);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> orig = v;
  rng.shuffle(v);
  CHECK(v != orig);
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}

TEST_CASE("derive gives decorrelated child seeds") {
  CHECK(Rng::derive(0, 0) != Rng::derive(0, 1));
  CHECK(Rng::derive(0, 0) != Rng::derive(1, 0));
  Rng a(Rng::derive(5, 0)), b(Rng::derive(5, 1));
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(13);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
