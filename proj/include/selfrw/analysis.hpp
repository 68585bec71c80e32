#pragma once

#include <filesystem>
#include <vector>

#include "selfrw/rollout.hpp"

namespace selfrw {

/// Minimal view of one rollout group for length analysis.
struct GroupLengths {
  GateDecision gate = GateDecision::Vanilla;
  std::vector<int> reasoning_tokens;  // per sample, group order
  std::vector<Provenance> provenance;
};

GroupLengths group_lengths(const GroupRollout& group);

struct LengthRatioOptions {
  /// group_mean: rewritten length over the first half's mean length.
  /// per_source: rewritten length over its own source sample's length.
  enum class Pairing { GroupMean, PerSource } pairing = Pairing::GroupMean;
};

struct LengthRatioResult {
  std::vector<double> ratios;
  int skipped_zero_denominator = 0;  // groups (or pairs) with no reasoning tokens
  int skipped_samples = 0;           // rewritten samples lost to those skips
  int rewritten_samples = 0;         // ratios.size() + skipped_samples
};

/// One ratio per rewritten sample; groups without rewrites contribute
/// nothing, zero-length denominators are skipped and counted.
LengthRatioResult length_ratios(const std::vector<GroupLengths>& groups,
                                const LengthRatioOptions& options = {});
LengthRatioResult length_ratios(const std::vector<GroupRollout>& rollouts,
                                const LengthRatioOptions& options = {});

struct DistributionSummary {
  int sample_count = 0;
  double median = 0.0;
  double bandwidth = 0.0;
  std::vector<double> grid;     // 512 points spanning the data range +- 4 bandwidths
  std::vector<double> density;  // Gaussian KDE values on the grid
};

/// Gaussian kernel density estimate with Silverman's rule-of-thumb
/// bandwidth; the median is the standard order statistic. Throws EmptyInput
/// on an empty sample list.
DistributionSummary kde_summary(const std::vector<double>& samples);

/// Trapezoidal integral of the density over its grid.
double density_integral(const DistributionSummary& summary);

// ---------------------------------------------------------------------------
// Run-directory analysis and reports
// ---------------------------------------------------------------------------

void write_group_lengths(const std::filesystem::path& path, int64_t step,
                         const std::vector<GroupLengths>& groups, bool append);
std::vector<GroupLengths> read_group_lengths(const std::filesystem::path& path);

/// Reads lengths.jsonl from a run directory and writes ratio, KDE and
/// summary files under analysis/.
void analyze_run(const std::filesystem::path& run_dir);

/// Emits comparison tables (and KDE plot data when analysis exists) under
/// report/ in `run_dir`, with deltas against the reference run.
void write_report(const std::filesystem::path& run_dir, const std::filesystem::path& reference_dir);

/// "+0.6" style signed one-decimal delta.
std::string format_signed_delta(double current, double reference);
/// "-46%" style signed integer percent delta of current vs reference.
std::string format_percent_delta(double current, double reference);

}  // namespace selfrw
