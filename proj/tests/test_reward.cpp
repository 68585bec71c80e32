#include <doctest.h>

#include <cmath>
#include <vector>

#include "selfrw/errors.hpp"
#include "selfrw/reward.hpp"
#include "selfrw/rng.hpp"

using namespace selfrw;

namespace {

// Direct transcription of the three reward-reassignment cases: pass raw
// through unless the whole vector is 1, in which case rewritten samples get
// 1 and the rest 0. A group that never produced rewrites has nothing to
// reassign and passes through as well.
std::vector<int> oracle_shape(const std::vector<int>& raw, const std::vector<bool>& rewritten) {
  bool all_one = true;
  for (int r : raw) all_one = all_one && r == 1;
  bool has_rewrites = false;
  for (bool f : rewritten) has_rewrites = has_rewrites || f;
  if (!all_one || !has_rewrites) return raw;
  std::vector<int> shaped(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) shaped[i] = rewritten[i] ? 1 : 0;
  return shaped;
}

std::vector<bool> provenance_pattern(int group_size, bool gated) {
  std::vector<bool> flags(group_size, false);
  if (gated) {
    for (int i = group_size / 2; i < group_size; ++i) flags[i] = true;
  }
  return flags;
}

}  // namespace

TEST_CASE("reward reassignment on the canonical patterns") {
  SUBCASE("all correct with a rewritten second half") {
    RewardVector raw{{1, 1, 1, 1, 1, 1, 1, 1}, provenance_pattern(8, true)};
    CHECK(shape_rewards(raw).values == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
  }
  SUBCASE("one rewritten continuation wrong passes raw through") {
    RewardVector raw{{1, 1, 1, 1, 1, 0, 1, 1}, provenance_pattern(8, true)};
    CHECK(shape_rewards(raw).values == raw.values);
  }
  SUBCASE("all wrong stays all wrong") {
    RewardVector raw{{0, 0, 0, 0, 0, 0, 0, 0}, provenance_pattern(8, true)};
    CHECK(shape_rewards(raw).values == raw.values);
  }
  SUBCASE("all correct with no rewrites passes raw through") {
    RewardVector raw{{1, 1, 1, 1}, provenance_pattern(4, false)};
    CHECK(shape_rewards(raw).values == raw.values);
  }
}

TEST_CASE("exhaustive reassignment oracle over every raw vector and valid provenance") {
  for (int group_size : {2, 4, 6, 8}) {
    for (bool gated : {false, true}) {
      std::vector<bool> provenance = provenance_pattern(group_size, gated);
      for (uint32_t bits = 0; bits < (1u << group_size); ++bits) {
        std::vector<int> raw(group_size);
        for (int i = 0; i < group_size; ++i) raw[i] = (bits >> i) & 1;
        RewardVector input{raw, provenance};
        CHECK(shape_rewards(input).values == oracle_shape(raw, provenance));
      }
    }
  }
}

TEST_CASE("advantage computation on the worked examples") {
  SUBCASE("rewritten all-correct group lands exactly on plus-minus one fifth") {
    AdvantageVector adv = compute_advantages({0, 0, 0, 0, 1, 1, 1, 1}, true);
    CHECK(adv.group_mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(adv.group_std == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(adv.scaled);
    for (int i = 0; i < 4; ++i) CHECK(adv.values[i] == doctest::Approx(-0.2).epsilon(1e-12));
    for (int i = 4; i < 8; ++i) CHECK(adv.values[i] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("degenerate groups contribute nothing") {
    for (auto values : {std::vector<double>{1, 1, 1, 1}, std::vector<double>{0, 0}}) {
      AdvantageVector adv = compute_advantages(values, false);
      for (double a : adv.values) CHECK(a == 0.0);
      CHECK_FALSE(adv.scaled);
    }
  }
  SUBCASE("vanilla group matches an independent mean and std computation") {
    std::vector<double> shaped{1, 0, 0, 0};
    AdvantageVector adv = compute_advantages(shaped, false);
    double mean = 0.25;
    double std_pop = std::sqrt((0.75 * 0.75 + 3 * 0.25 * 0.25) / 4.0);
    CHECK(adv.values[0] == doctest::Approx((1 - mean) / std_pop).epsilon(1e-12));
    CHECK(adv.values[1] == doctest::Approx((0 - mean) / std_pop).epsilon(1e-12));
    CHECK(adv.values[0] == doctest::Approx(1.7320508).epsilon(1e-6));
    CHECK(adv.values[1] == doctest::Approx(-0.5773503).epsilon(1e-6));
    CHECK_FALSE(adv.scaled);
  }
}

TEST_CASE("normalization properties over random shaped groups") {
  Rng rng(606);
  int degenerate_seen = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int group_size = 2 * (1 + static_cast<int>(rng.next_below(4)));
    bool rewritten = rng.next_below(2) == 1;
    std::vector<double> shaped(group_size);
    for (double& r : shaped) r = static_cast<double>(rng.next_below(2));
    AdvantageVector adv = compute_advantages(shaped, rewritten);

    if (adv.group_std <= kStdEpsilon) {
      ++degenerate_seen;
      for (double a : adv.values) CHECK(a == 0.0);
      continue;
    }
    double mean = 0.0, var = 0.0;
    for (double a : adv.values) mean += a;
    mean /= group_size;
    for (double a : adv.values) var += (a - mean) * (a - mean);
    double std_pop = std::sqrt(var / group_size);
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std_pop - (rewritten ? 0.2 : 1.0)) <= 1e-9);
    CHECK(adv.scaled == rewritten);
  }
  CHECK(degenerate_seen > 0);
}

TEST_CASE("advantages are invariant to constant reward shifts") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int group_size = 2 * (1 + static_cast<int>(rng.next_below(4)));
    std::vector<double> shaped(group_size);
    for (double& r : shaped) r = static_cast<double>(rng.next_below(2));
    AdvantageVector base = compute_advantages(shaped, false);
    if (base.group_std <= kStdEpsilon) continue;
    double shift = rng.next_unit() * 10.0 - 5.0;
    std::vector<double> shifted = shaped;
    for (double& r : shifted) r += shift;
    AdvantageVector moved = compute_advantages(shifted, false);
    for (size_t i = 0; i < shaped.size(); ++i) {
      CHECK(moved.values[i] == doctest::Approx(base.values[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("the rewritten-group divisor is configurable") {
  AdvantageVector adv = compute_advantages({0, 0, 1, 1}, true, 2.0);
  CHECK(adv.values[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(adv.values[0] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("reward vector validation") {
  RewardVector mismatched{{1, 0}, {false}};
  CHECK_THROWS_AS(shape_rewards(mismatched), Error);
  RewardVector non_binary{{2, 0}, {false, false}};
  CHECK_THROWS_AS(shape_rewards(non_binary), Error);
}
