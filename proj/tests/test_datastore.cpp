#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "armflow/datastore.hpp"

using namespace armflow;
using namespace armflow::data;

TEST_CASE("sampler: per-sample probabilities and exact aggregates") {
  auto spec = build_sampler({{"a", 10}, {"b", 1000}});
  REQUIRE(spec.entries.size() == 2);
  CHECK(spec.entries[0].per_sample_prob == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(spec.entries[0].aggregate == 0.5);  // exactly 1/C in the table
  CHECK(spec.entries[1].aggregate == 0.5);
  CHECK(std::abs(spec.total_mass() - 1.0) <= 1e-12);

  auto single = build_sampler({{"only", 7}});
  CHECK(single.entries[0].per_sample_prob == doctest::Approx(1.0 / 7).epsilon(1e-15));
  CHECK(single.entries[0].aggregate == 1.0);

  CHECK_THROWS_AS(build_sampler({}), EmptyDataset);
  CHECK_THROWS_AS(build_sampler({{"a", 0}}), EmptyDataset);

  // mass identity holds for sizes that don't divide nicely
  auto odd = build_sampler({{"x", 3}, {"y", 7}, {"z", 11}});
  CHECK(std::abs(odd.total_mass() - 1.0) <= 1e-12);
  for (const auto& e : odd.entries) CHECK(e.aggregate == 1.0 / 3.0);
}

TEST_CASE("sampler: empirical frequencies within 3 binomial sigma over 1e5 draws") {
  auto spec = build_sampler({{"a", 50}, {"b", 500}, {"c", 5000}, {"d", 17}});
  const int n = 100000;
  const Rng rng(424242);
  std::vector<int> counts(4, 0);
  std::vector<int64_t> first_draws;
  for (int i = 0; i < n; ++i) {
    auto [d, s] = spec.draw(rng, uint64_t(i));
    REQUIRE(d >= 0);
    REQUIRE(d < 4);
    REQUIRE(s >= 0);
    REQUIRE(s < spec.entries[d].size);
    counts[d]++;
    if (i < 100) first_draws.push_back(int64_t(d) * 1000000 + s);
  }
  const double p = 0.25;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int d = 0; d < 4; ++d) CHECK(std::abs(counts[d] - n * p) <= 3.0 * sigma);

  // determinism: replaying the counters reproduces the draw sequence
  for (int i = 0; i < 100; ++i) {
    auto [d, s] = spec.draw(rng, uint64_t(i));
    CHECK(int64_t(d) * 1000000 + s == first_draws[i]);
  }
}

TEST_CASE("frame sampling: 4-vs-8 rule and the rounding formula") {
  // long video at 0.5 s marks
  auto idx = sample_frames(300, 0.5, 10.0);
  CHECK(idx.size() == 8);

  auto short_idx = sample_frames(45, 0.5, 1.5);
  CHECK(short_idx.size() == 4);

  // n = 20 candidates, m = 8
  CHECK(pick_uniform_indices(20, 8) == std::vector<int>{0, 3, 5, 8, 11, 14, 16, 19});
  CHECK(pick_uniform_indices(21, 8) == std::vector<int>{0, 3, 6, 9, 11, 14, 17, 20});
  CHECK(pick_uniform_indices(4, 4) == std::vector<int>{0, 1, 2, 3});

  // non-decreasing and in range, padding by repetition when needed
  auto padded = sample_frames(3, 0.5, 0.8);  // 2 candidates, needs 4
  CHECK(padded.size() == 4);
  CHECK(padded[2] == padded[3]);
  for (size_t i = 0; i + 1 < padded.size(); ++i) CHECK(padded[i] <= padded[i + 1]);
  for (int v : padded) {
    CHECK(v >= 0);
    CHECK(v < 3);
  }

  FrameSampleOptions no_pad;
  no_pad.pad_by_repetition = false;
  CHECK_THROWS_AS(sample_frames(3, 0.5, 0.8, no_pad), TooFewFrames);

  // boundary: exactly the threshold counts as long
  CHECK(sample_frames(100, 0.5, 4.0).size() == 8);
  CHECK(sample_frames(100, 0.5, 3.999).size() == 4);
}
