#include "selfrw/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "selfrw/errors.hpp"
#include "selfrw/num_text.hpp"

namespace selfrw {

void HyperParams::validate() const {
  if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0) {
    throw Error(ErrorKind::ConfigInvalid, "clip_epsilon must be in (0, 1)");
  }
  if (learning_rate <= 0.0) throw Error(ErrorKind::ConfigInvalid, "learning_rate must be > 0");
  if (weight_decay < 0.0) throw Error(ErrorKind::ConfigInvalid, "weight_decay must be >= 0");
  if (kl_coefficient < 0.0) throw Error(ErrorKind::ConfigInvalid, "kl_coefficient must be >= 0");
  if (grad_norm_clip <= 0.0) throw Error(ErrorKind::ConfigInvalid, "grad_norm_clip must be > 0");
  if (group_size < 2 || group_size % 2 != 0) {
    throw Error(ErrorKind::ConfigInvalid, "group_size must be even and >= 2");
  }
  if (batch_size < 1) throw Error(ErrorKind::ConfigInvalid, "batch_size must be >= 1");
  if (cutoff_length < 1) throw Error(ErrorKind::ConfigInvalid, "cutoff_length must be >= 1");
  if (rewrite_advantage_scale <= 0.0) {
    throw Error(ErrorKind::ConfigInvalid, "rewrite_advantage_scale must be > 0");
  }
}

int TrainSample::trainable_token_count() const {
  int count = 0;
  for (const TrainSegment& segment : segments) {
    for (uint8_t flag : segment.trainable) count += flag ? 1 : 0;
  }
  return count;
}

namespace {

TrainSegment segment_from_result(const GenerationResult& result) {
  if (!result.context.complete) {
    throw Error(ErrorKind::UnsupportedBackend,
                "training needs complete context descriptors (toy policy rollouts)");
  }
  TrainSegment segment;
  segment.mode = result.context.mode;
  segment.prefix = result.context.prefix_token_ids;
  segment.token_ids = result.token_ids;
  segment.old_logprobs = result.token_logprobs;
  segment.trainable.assign(result.token_ids.size(), 1);
  return segment;
}

}  // namespace

std::vector<TrainSample> make_train_samples(const GroupRollout& group,
                                            const AdvantageVector& advantages) {
  if (advantages.values.size() != group.samples.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one advantage per sample expected");
  }
  std::vector<TrainSample> out;
  for (size_t i = 0; i < group.samples.size(); ++i) {
    const RolloutSample& sample = group.samples[i];
    if (sample.request_failed) continue;
    TrainSample train;
    train.advantage = advantages.values[i];
    train.segments.push_back(segment_from_result(sample.reasoning_gen));
    if (sample.continuation_gen.has_value()) {
      train.segments.push_back(segment_from_result(*sample.continuation_gen));
    }
    if (train.trainable_token_count() == 0) continue;
    out.push_back(std::move(train));
  }
  return out;
}

namespace {

/// Shared forward/backward walk. Evaluates the clipped surrogate and, when
/// grad != nullptr, accumulates its exact gradient.
double objective_impl(const PolicyParameters& theta, const std::vector<TrainSample>& batch,
                      const HyperParams& hp, std::vector<double>* grad) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "objective over an empty batch");
  hp.validate();

  ToyPolicyModel model(theta);
  const double lo = 1.0 - hp.clip_epsilon;
  const double hi = 1.0 + hp.clip_epsilon;

  double total = 0.0;
  for (const TrainSample& sample : batch) {
    int token_count = sample.trainable_token_count();
    if (token_count == 0) {
      throw Error(ErrorKind::PreconditionViolation, "sample with no trainable tokens");
    }
    const double token_weight = 1.0 / static_cast<double>(token_count);

    double sample_sum = 0.0;
    for (const TrainSegment& segment : sample.segments) {
      if (segment.token_ids.size() != segment.old_logprobs.size() ||
          segment.token_ids.size() != segment.trainable.size()) {
        throw Error(ErrorKind::DimensionMismatch, "segment arrays disagree");
      }
      std::vector<int> context = segment.prefix;
      for (size_t t = 0; t < segment.token_ids.size(); ++t) {
        int token = segment.token_ids[t];
        if (!segment.trainable[t]) {
          context.push_back(token);
          continue;
        }
        std::vector<double> logprobs = model.position_logprobs(context, segment.mode);
        double new_lp = logprobs[static_cast<size_t>(token)];
        double ratio = std::exp(new_lp - segment.old_logprobs[t]);
        if (!std::isfinite(ratio)) {
          throw Error(ErrorKind::NonFinite, "importance ratio overflowed");
        }

        double advantage = sample.advantage;
        double unclipped = ratio * advantage;
        double clipped = std::clamp(ratio, lo, hi) * advantage;
        bool use_unclipped = unclipped <= clipped;
        sample_sum += std::min(unclipped, clipped);

        double coeff = 0.0;
        if (use_unclipped) {
          // d(ratio * A)/d theta = ratio * A * d log p / d theta
          coeff += ratio * advantage;
        }
        if (hp.kl_coefficient > 0.0) {
          // k3 estimator of KL(pi_theta || pi_old): exp(d) - d - 1 with
          // d = old_lp - new_lp; gradient is (exp(d) - 1) * d log p.
          double d = segment.old_logprobs[t] - new_lp;
          double exp_d = std::exp(d);
          if (!std::isfinite(exp_d)) {
            throw Error(ErrorKind::NonFinite, "kl term overflowed");
          }
          sample_sum -= hp.kl_coefficient * (exp_d - d - 1.0);
          coeff += hp.kl_coefficient * (exp_d - 1.0);
        }
        if (grad != nullptr && coeff != 0.0) {
          std::vector<double> probs(logprobs.size());
          for (size_t v = 0; v < logprobs.size(); ++v) probs[v] = std::exp(logprobs[v]);
          model.add_position_gradient(context, segment.mode, token,
                                      coeff * token_weight / static_cast<double>(batch.size()),
                                      probs, *grad);
        }
        context.push_back(token);
      }
    }
    total += sample_sum * token_weight;
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

double surrogate_objective(const PolicyParameters& theta, const std::vector<TrainSample>& batch,
                           const HyperParams& hp) {
  return objective_impl(theta, batch, hp, nullptr);
}

std::vector<double> objective_gradient(const PolicyParameters& theta,
                                       const std::vector<TrainSample>& batch,
                                       const HyperParams& hp) {
  std::vector<double> grad(theta.parameter_count(), 0.0);
  objective_impl(theta, batch, hp, &grad);
  return grad;
}

OptimizerState OptimizerState::zeros(size_t parameter_count) {
  OptimizerState state;
  state.first_moment.assign(parameter_count, 0.0);
  state.second_moment.assign(parameter_count, 0.0);
  return state;
}

void optimizer_step(OptimizerState& state, PolicyParameters& params,
                    const std::vector<double>& gradient, const HyperParams& hp) {
  hp.validate();
  const size_t n = params.theta.size();
  if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "gradient/state/parameter sizes disagree");
  }

  double norm_sq = 0.0;
  for (double g : gradient) norm_sq += g * g;
  double norm = std::sqrt(norm_sq);
  double scale = norm > hp.grad_norm_clip ? hp.grad_norm_clip / norm : 1.0;

  // Decoupled weight decay, independent of the gradient.
  double decay = 1.0 - hp.learning_rate * hp.weight_decay;
  for (double& w : params.theta) w *= decay;

  state.step += 1;
  if (hp.optimizer == OptimizerKind::Sgd) {
    for (size_t i = 0; i < n; ++i) {
      params.theta[i] += hp.learning_rate * scale * gradient[i];
    }
    return;
  }

  double bias1 = 1.0 - std::pow(hp.adam_beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < n; ++i) {
    double g = scale * gradient[i];
    state.first_moment[i] = hp.adam_beta1 * state.first_moment[i] + (1.0 - hp.adam_beta1) * g;
    state.second_moment[i] =
        hp.adam_beta2 * state.second_moment[i] + (1.0 - hp.adam_beta2) * g * g;
    double m_hat = state.first_moment[i] / bias1;
    double v_hat = state.second_moment[i] / bias2;
    params.theta[i] += hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.adam_eps);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_array(std::ostream& out, const std::string& name, const std::vector<double>& values) {
  out << name << " " << values.size() << "\n";
  for (size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]);
    out << (((i + 1) % 8 == 0 || i + 1 == values.size()) ? '\n' : ' ');
  }
}

std::vector<double> read_array(std::istream& in, const std::string& expected_name) {
  std::string name;
  size_t count = 0;
  if (!(in >> name >> count) || name != expected_name) {
    throw Error(ErrorKind::IoError, "checkpoint: expected array '" + expected_name + "'");
  }
  std::vector<double> values(count);
  std::string token;
  for (size_t i = 0; i < count; ++i) {
    if (!(in >> token)) throw Error(ErrorKind::IoError, "checkpoint: truncated array");
    values[i] = parse_double(token);
  }
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ostringstream out;
  out << "selfrw-checkpoint v1\n";
  out << "format_version 1\n";
  out << "vocabulary_size " << checkpoint.params.vocabulary_size << "\n";
  out << "context_order " << checkpoint.params.context_order << "\n";
  out << "parameter_count " << checkpoint.params.theta.size() << "\n";
  out << "step " << checkpoint.step << "\n";
  out << "optimizer_step " << checkpoint.opt.step << "\n";
  write_array(out, "theta", checkpoint.params.theta);
  write_array(out, "first_moment", checkpoint.opt.first_moment);
  write_array(out, "second_moment", checkpoint.opt.second_moment);

  std::ofstream file(path);
  if (!file) throw Error(ErrorKind::IoError, "cannot write checkpoint: " + path.string());
  file << out.str();
  if (!file) throw Error(ErrorKind::IoError, "short write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw Error(ErrorKind::IoError, "cannot open checkpoint: " + path.string());

  std::string magic, version;
  file >> magic >> version;
  if (magic != "selfrw-checkpoint" || version != "v1") {
    throw Error(ErrorKind::IoError, "not a selfrw checkpoint: " + path.string());
  }
  auto read_field = [&](const std::string& expected) -> int64_t {
    std::string key;
    int64_t value = 0;
    if (!(file >> key >> value) || key != expected) {
      throw Error(ErrorKind::IoError, "checkpoint: expected field '" + expected + "'");
    }
    return value;
  };
  int64_t format_version = read_field("format_version");
  if (format_version != 1) throw Error(ErrorKind::IoError, "unsupported checkpoint version");

  Checkpoint checkpoint;
  checkpoint.params.vocabulary_size = static_cast<int>(read_field("vocabulary_size"));
  checkpoint.params.context_order = static_cast<int>(read_field("context_order"));
  size_t count = static_cast<size_t>(read_field("parameter_count"));
  checkpoint.step = read_field("step");
  checkpoint.opt.step = read_field("optimizer_step");
  checkpoint.params.theta = read_array(file, "theta");
  checkpoint.opt.first_moment = read_array(file, "first_moment");
  checkpoint.opt.second_moment = read_array(file, "second_moment");
  if (checkpoint.params.theta.size() != count ||
      count != checkpoint.params.parameter_count() ||
      checkpoint.opt.first_moment.size() != count ||
      checkpoint.opt.second_moment.size() != count) {
    throw Error(ErrorKind::IoError, "checkpoint: inconsistent dimensions");
  }
  return checkpoint;
}

}  // namespace selfrw
