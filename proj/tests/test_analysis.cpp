#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "selfrw/analysis.hpp"
#include "selfrw/errors.hpp"
#include "selfrw/rng.hpp"

using namespace selfrw;

namespace {

GroupLengths make_group(GateDecision gate, const std::vector<int>& first_half,
                        const std::vector<int>& second_half) {
  GroupLengths group;
  group.gate = gate;
  for (int tokens : first_half) {
    group.reasoning_tokens.push_back(tokens);
    group.provenance.push_back({false, 0});
  }
  int source = 1;
  for (int tokens : second_half) {
    group.reasoning_tokens.push_back(tokens);
    group.provenance.push_back({gate == GateDecision::Rewrite, source++});
  }
  return group;
}

}  // namespace

TEST_CASE("length ratios pair rewrites against the first-half mean") {
  auto groups = std::vector<GroupLengths>{
      make_group(GateDecision::Rewrite, {100, 100, 100, 100}, {50, 120, 100, 30})};
  LengthRatioResult result = length_ratios(groups);
  REQUIRE(result.ratios.size() == 4);
  CHECK(result.ratios[0] == doctest::Approx(0.5));
  CHECK(result.ratios[1] == doctest::Approx(1.2));  // rewrites can grow
  CHECK(result.ratios[2] == doctest::Approx(1.0));
  CHECK(result.ratios[3] == doctest::Approx(0.3));
  CHECK(result.rewritten_samples == 4);
  CHECK(result.skipped_zero_denominator == 0);
}

TEST_CASE("vanilla groups contribute no ratios") {
  auto groups = std::vector<GroupLengths>{
      make_group(GateDecision::Vanilla, {10, 20}, {30, 40}),
      make_group(GateDecision::Rewrite, {10, 10}, {5, 15})};
  LengthRatioResult result = length_ratios(groups);
  CHECK(result.ratios.size() == 2);
  CHECK(result.rewritten_samples == 2);
}

TEST_CASE("zero-length first halves are skipped with bookkeeping intact") {
  auto groups = std::vector<GroupLengths>{
      make_group(GateDecision::Rewrite, {0, 0}, {5, 7}),
      make_group(GateDecision::Rewrite, {10, 10}, {5, 7})};
  LengthRatioResult result = length_ratios(groups);
  CHECK(result.skipped_zero_denominator == 1);
  CHECK(result.skipped_samples == 2);
  CHECK(result.rewritten_samples == 4);
  CHECK(static_cast<int>(result.ratios.size()) + result.skipped_samples ==
        result.rewritten_samples);
}

TEST_CASE("per-source pairing divides by the matching first-half sample") {
  auto groups = std::vector<GroupLengths>{
      make_group(GateDecision::Rewrite, {100, 50}, {25, 25})};
  LengthRatioOptions options;
  options.pairing = LengthRatioOptions::Pairing::PerSource;
  LengthRatioResult result = length_ratios(groups, options);
  REQUIRE(result.ratios.size() == 2);
  CHECK(result.ratios[0] == doctest::Approx(0.25));
  CHECK(result.ratios[1] == doctest::Approx(0.5));
}

TEST_CASE("kde of a single sample is a bump centered on it") {
  DistributionSummary summary = kde_summary({0.5});
  CHECK(summary.sample_count == 1);
  CHECK(summary.median == doctest::Approx(0.5));
  CHECK(summary.bandwidth > 0.0);
  size_t peak = 0;
  for (size_t i = 1; i < summary.density.size(); ++i) {
    if (summary.density[i] > summary.density[peak]) peak = i;
  }
  CHECK(summary.grid[peak] == doctest::Approx(0.5).epsilon(0.01));
  // density decays monotonically away from the peak
  for (size_t i = 1; i < peak; ++i) CHECK(summary.density[i] >= summary.density[i - 1]);
  for (size_t i = peak + 1; i < summary.density.size(); ++i) {
    CHECK(summary.density[i] <= summary.density[i - 1]);
  }
  for (double d : summary.density) CHECK(d >= 0.0);
}

TEST_CASE("kde of symmetric samples is symmetric about the center") {
  DistributionSummary summary = kde_summary({0.4, 0.5, 0.6});
  CHECK(summary.median == doctest::Approx(0.5));
  size_t n = summary.grid.size();
  for (size_t i = 0; i < n; ++i) {
    double left = summary.density[i];
    double right = summary.density[n - 1 - i];
    CHECK(std::abs(left - right) <= 1e-9);
  }
}

TEST_CASE("kde on ten thousand normal draws integrates to one") {
  Rng rng(1717);
  std::vector<double> samples;
  samples.reserve(10000);
  for (int i = 0; i < 5000; ++i) {
    // Box-Muller from the deterministic stream
    double u1 = rng.next_unit();
    double u2 = rng.next_unit();
    if (u1 <= 0.0) u1 = 1e-12;
    double r = std::sqrt(-2.0 * std::log(u1));
    samples.push_back(r * std::cos(2.0 * M_PI * u2));
    samples.push_back(r * std::sin(2.0 * M_PI * u2));
  }
  DistributionSummary summary = kde_summary(samples);
  double integral = density_integral(summary);
  CHECK(integral >= 0.99);
  CHECK(integral <= 1.01);
  CHECK(std::abs(summary.median) <= 0.05);
  CHECK(summary.grid.size() == 512);
}

TEST_CASE("kde rejects empty inputs and medians follow the order statistic") {
  CHECK_THROWS_AS(kde_summary({}), Error);
  CHECK(kde_summary({3.0, 1.0}).median == doctest::Approx(2.0));
  CHECK(kde_summary({5.0, 1.0, 3.0}).median == doctest::Approx(3.0));
}

TEST_CASE("delta rendering follows the reporting formats") {
  CHECK(format_percent_delta(2293.0, 4243.0) == "-46%");
  CHECK(format_signed_delta(78.8, 78.2) == "+0.6");
  CHECK(format_signed_delta(78.2, 78.2) == "+0.0");
  CHECK(format_percent_delta(4243.0, 4243.0) == "+0%");
  CHECK(format_signed_delta(65.3, 66.9) == "-1.6");
  CHECK(format_percent_delta(3101.0, 4355.0) == "-29%");
}

TEST_CASE("group length records persist and reload") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "selfrw_lengths_test.jsonl";
  fs::remove(path);
  std::vector<GroupLengths> step0 = {
      make_group(GateDecision::Rewrite, {4, 6}, {2, 3}),
      make_group(GateDecision::Vanilla, {5, 5}, {5, 5})};
  std::vector<GroupLengths> step1 = {make_group(GateDecision::Rewrite, {8, 8}, {4, 4})};
  write_group_lengths(path, 0, step0, /*append=*/true);
  write_group_lengths(path, 1, step1, /*append=*/true);

  auto loaded = read_group_lengths(path);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].gate == GateDecision::Rewrite);
  CHECK(loaded[0].reasoning_tokens == std::vector<int>{4, 6, 2, 3});
  CHECK(loaded[0].provenance[2].rewritten);
  CHECK(loaded[0].provenance[2].source_index == 1);
  CHECK(loaded[1].gate == GateDecision::Vanilla);
  CHECK_FALSE(loaded[1].provenance[3].rewritten);
  CHECK(loaded[2].reasoning_tokens == std::vector<int>{8, 8, 4, 4});
  fs::remove(path);
}
