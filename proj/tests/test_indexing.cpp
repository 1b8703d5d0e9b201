#include <doctest.h>

#include <random>

#include "frl/error.hpp"
#include "frl/indexing.hpp"
#include "oracles.hpp"

using frl::MixedRadix;

TEST_CASE("first digit is most significant") {
  MixedRadix r({2, 3, 4});
  CHECK(r.size() == 24);
  std::vector<int> d{1, 2, 3};
  CHECK(r.encode(d) == 1 * 12 + 2 * 4 + 3);
  CHECK(r.decode(23) == std::vector<int>{1, 2, 3});
  CHECK(r.decode(4) == std::vector<int>{0, 1, 0});
}

TEST_CASE("round trip over random radices") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> radices(1 + rng() % 5);
    for (auto& x : radices) x = 1 + static_cast<int>(rng() % 4);
    MixedRadix r(radices);
    for (std::size_t i = 0; i < r.size(); ++i) {
      auto d = r.decode(i);
      CHECK(r.encode(d) == i);
      CHECK(frl::testing::encode_row_major(d, radices) == i);
    }
  }
}

TEST_CASE("empty codec has one element") {
  MixedRadix r(std::vector<int>{});
  CHECK(r.size() == 1);
  CHECK(r.encode(std::vector<int>{}) == 0);
}

TEST_CASE("bad inputs") {
  CHECK_THROWS_AS(MixedRadix({2, 0}), frl::ConfigError);
  MixedRadix r({2, 2});
  CHECK_THROWS_AS(r.encode(std::vector<int>{1}), frl::ShapeError);
  CHECK_THROWS_AS(r.encode(std::vector<int>{1, 2}), frl::DomainError);
  CHECK_THROWS_AS(r.decode(4), frl::DomainError);
}
