#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rifl/random.hpp"

using rifl::RandomStream;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(rifl::philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(rifl::philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(rifl::philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("equal seed and stream give identical sequences") {
  RandomStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.normal() == b.normal());
  RandomStream c(42, 8);
  RandomStream d(42, 7);
  int same = 0;
  for (int i = 0; i < 1000; ++i) same += c() == d();
  CHECK(same == 0);
}

TEST_CASE("normal draws have unit moments and distinct streams are uncorrelated") {
  const int N = 200000;
  RandomStream a(1, rifl::stream_index(3, 0)), b(1, rifl::stream_index(3, 1));
  double s1 = 0, s2 = 0, cross = 0;
  for (int i = 0; i < N; ++i) {
    double x = a.normal(), y = b.normal();
    s1 += x;
    s2 += x * x;
    cross += x * y;
  }
  CHECK(std::fabs(s1 / N) < 4.0 / std::sqrt(N));
  CHECK(std::fabs(s2 / N - 1.0) < 0.02);
  CHECK(std::fabs(cross / N) < 4.0 / std::sqrt(N));
}

TEST_CASE("uniform integers cover the range evenly") {
  RandomStream r(5, 0);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("derived seeds differ by tag") {
  CHECK(rifl::derive_seed(1, "data") != rifl::derive_seed(1, "resample"));
  CHECK(rifl::derive_seed(1, "data") == rifl::derive_seed(1, "data"));
}
