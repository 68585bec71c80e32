#pragma once

#include <vector>

namespace selfrw {

/// Binary correctness rewards for one group plus per-index provenance.
struct RewardVector {
  std::vector<int> values;        // entries in {0, 1}
  std::vector<bool> rewritten;    // provenance flag per index

  bool any_rewritten() const;
};

struct AdvantageVector {
  std::vector<double> values;
  bool scaled = false;  // true iff the rewritten-group divisor was applied
  double group_mean = 0.0;
  double group_std = 0.0;  // population standard deviation
};

/// Degenerate-group threshold for the advantage normalization.
constexpr double kStdEpsilon = 1e-6;

/// Reward reassignment. With any incorrect sample the raw rewards pass
/// through; when the whole group is correct, rewritten samples get 1 and
/// the originals 0. A group with no rewritten samples never had a rewriting
/// case to arbitrate and also passes through.
RewardVector shape_rewards(const RewardVector& raw);

/// Group-relative normalization: (r - mean) / population_std, all zeros when
/// the population std is within kStdEpsilon of zero. Groups produced by the
/// rewriting path are additionally divided by `rewrite_advantage_scale`
/// (default 5), which shrinks the preference for rewritten samples over
/// correct originals.
AdvantageVector compute_advantages(const std::vector<double>& shaped_rewards,
                                   bool group_was_rewritten,
                                   double rewrite_advantage_scale = 5.0);

}  // namespace selfrw
