#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "selfrw/policy.hpp"
#include "selfrw/reward.hpp"
#include "selfrw/rollout.hpp"

namespace selfrw {

enum class OptimizerKind { AdamW, Sgd };

struct HyperParams {
  double clip_epsilon = 0.2;
  double learning_rate = 3e-6;
  double weight_decay = 1e-2;
  double kl_coefficient = 0.0;
  double grad_norm_clip = 1.0;
  int group_size = 8;
  int batch_size = 256;       // queries per optimization step, desk-scale configurable
  int cutoff_length = 12288;  // max generated tokens per response
  double rewrite_advantage_scale = 5.0;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// One contiguous stretch of generated tokens trained under a single
/// conditioning context. Vanilla samples have one segment; rewritten samples
/// have two (the rewrite under its source conditioning, the continuation
/// under query + rewritten reasoning).
struct TrainSegment {
  GenerationMode mode = GenerationMode::Generate;
  std::vector<int> prefix;  // context tokens before the first generated one
  std::vector<int> token_ids;
  std::vector<double> old_logprobs;
  std::vector<uint8_t> trainable;  // prompt/context tokens are excluded upstream;
                                   // the mask still guards every sum
};

struct TrainSample {
  std::vector<TrainSegment> segments;
  double advantage = 0.0;

  int trainable_token_count() const;
};

/// Flattens a verified group and its advantages into trainable samples.
/// Requires complete context descriptors (toy-policy rollouts); failed
/// samples contribute no tokens and are skipped.
std::vector<TrainSample> make_train_samples(const GroupRollout& group,
                                            const AdvantageVector& advantages);

/// Token-level clipped surrogate: mean over samples of the per-sample token
/// mean of min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A), with
/// ratio = exp(logprob_theta - logprob_old). A positive kl_coefficient
/// subtracts that multiple of a k3 divergence estimate against the old
/// policy. Throws EmptyBatch on an empty batch and NonFinite when a ratio
/// overflows.
double surrogate_objective(const PolicyParameters& theta, const std::vector<TrainSample>& batch,
                           const HyperParams& hp);

/// Exact analytic gradient of surrogate_objective. Tokens whose clip branch
/// is strictly binding contribute zero.
std::vector<double> objective_gradient(const PolicyParameters& theta,
                                       const std::vector<TrainSample>& batch,
                                       const HyperParams& hp);

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int64_t step = 0;

  static OptimizerState zeros(size_t parameter_count);
};

/// One ascent step on the objective: the gradient is globally norm-clipped,
/// decoupled weight decay shrinks theta by lr * wd, then either an AdamW or
/// a plain SGD update is added. Deterministic.
void optimizer_step(OptimizerState& state, PolicyParameters& params,
                    const std::vector<double>& gradient, const HyperParams& hp);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  PolicyParameters params;
  OptimizerState opt;
  int64_t step = 0;
};

/// Versioned text manifest plus decimal arrays; round-trips exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace selfrw
