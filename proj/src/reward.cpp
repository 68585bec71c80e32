#include "selfrw/reward.hpp"

#include <cmath>

#include "selfrw/errors.hpp"

namespace selfrw {

bool RewardVector::any_rewritten() const {
  for (bool flag : rewritten) {
    if (flag) return true;
  }
  return false;
}

RewardVector shape_rewards(const RewardVector& raw) {
  if (raw.values.size() != raw.rewritten.size()) {
    throw Error(ErrorKind::DimensionMismatch, "reward/provenance length mismatch");
  }
  for (int r : raw.values) {
    if (r != 0 && r != 1) throw Error(ErrorKind::PreconditionViolation, "rewards must be binary");
  }

  bool all_correct = true;
  for (int r : raw.values) all_correct = all_correct && r == 1;

  if (!all_correct || !raw.any_rewritten()) return raw;

  RewardVector shaped = raw;
  for (size_t i = 0; i < shaped.values.size(); ++i) {
    shaped.values[i] = shaped.rewritten[i] ? 1 : 0;
  }
  return shaped;
}

AdvantageVector compute_advantages(const std::vector<double>& shaped_rewards,
                                   bool group_was_rewritten, double rewrite_advantage_scale) {
  AdvantageVector out;
  out.values.assign(shaped_rewards.size(), 0.0);
  if (shaped_rewards.empty()) return out;

  double mean = 0.0;
  for (double r : shaped_rewards) mean += r;
  mean /= static_cast<double>(shaped_rewards.size());

  double variance = 0.0;
  for (double r : shaped_rewards) variance += (r - mean) * (r - mean);
  variance /= static_cast<double>(shaped_rewards.size());
  double std_pop = std::sqrt(variance);

  out.group_mean = mean;
  out.group_std = std_pop;
  if (std_pop <= kStdEpsilon) return out;  // no learning signal in degenerate groups

  double divisor = group_was_rewritten ? rewrite_advantage_scale : 1.0;
  for (size_t i = 0; i < shaped_rewards.size(); ++i) {
    out.values[i] = (shaped_rewards[i] - mean) / std_pop / divisor;
  }
  out.scaled = group_was_rewritten;
  return out;
}

}  // namespace selfrw
