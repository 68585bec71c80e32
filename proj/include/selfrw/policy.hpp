#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selfrw/task_env.hpp"

namespace selfrw {

// ---------------------------------------------------------------------------
// Generation modes and sampling parameters
// ---------------------------------------------------------------------------

/// The three conditioning modes a backend must distinguish: fresh generation
/// from a query, rewriting an existing reasoning passage, and continuing a
/// query + rewritten reasoning past the think-close marker.
enum class GenerationMode { Generate, Rewrite, Continue };

constexpr int kNumModes = 3;

const char* to_string(GenerationMode mode);

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 0;  // <= 0 means unlimited
  int max_new_tokens = 12288;
  uint64_t seed = 0;

  /// Rollout-sampling defaults: temperature 1.0, top_p 1.0, unlimited top_k,
  /// 12288 max new tokens.
  static SamplingParams sampling_defaults();

  /// Rewrite/test defaults: temperature 0.6, top_p 0.95, top_k 20, 32768 max
  /// new tokens.
  static SamplingParams rewrite_defaults();
};

// ---------------------------------------------------------------------------
// Toy vocabulary
// ---------------------------------------------------------------------------

/// Fixed 32-symbol vocabulary for the trainable toy policy: digits,
/// arithmetic operators, a handful of filler words, the think-close marker,
/// and the boxed-answer delimiters.
class ToyVocabulary {
 public:
  static constexpr int kSize = 32;

  static const ToyVocabulary& instance();

  int think_close_id() const { return think_close_id_; }
  int box_open_id() const { return box_open_id_; }
  int box_close_id() const { return box_close_id_; }
  int eos_id() const { return eos_id_; }
  int unk_id() const { return unk_id_; }
  int digit_id(int digit) const { return digit; }
  bool is_digit(int id) const { return id >= 0 && id <= 9; }

  const std::string& text(int id) const { return symbols_[static_cast<size_t>(id)]; }

  /// Greedy longest-match tokenization; whitespace separates, unknown
  /// characters map to <unk> one at a time.
  std::vector<int> tokenize(const std::string& text) const;

  /// Space-joined rendering; <eos> renders to nothing.
  std::string render(const std::vector<int>& ids) const;

  int count_tokens(const std::string& text) const;

 private:
  ToyVocabulary();
  std::vector<std::string> symbols_;
  std::vector<int> match_order_;  // symbol indices sorted by descending length
  int think_close_id_, box_open_id_, box_close_id_, eos_id_, unk_id_;
};

// ---------------------------------------------------------------------------
// Generation results
// ---------------------------------------------------------------------------

/// Everything needed to recompute each generated token's conditional
/// context under the toy policy: the mode and the tokens immediately
/// preceding the first generated position. `complete` is false for backends
/// that cannot be scored (external endpoints).
struct ContextDescriptor {
  GenerationMode mode = GenerationMode::Generate;
  std::vector<int> prefix_token_ids;
  bool complete = false;
};

struct GenerationResult {
  std::string reasoning_text;  // content before the first think-close marker
  std::string answer_text;     // content after it
  std::vector<int> token_ids;
  std::vector<double> token_logprobs;  // one per generated token, each <= 0
  ContextDescriptor context;

  /// Generated tokens strictly before the first think-close marker.
  std::vector<int> reasoning_token_ids(int think_close_id) const;
};

// ---------------------------------------------------------------------------
// Trainable toy policy
// ---------------------------------------------------------------------------

/// Flat parameters of the linear-softmax token model. Features for a
/// position are the one-hot encodings of the previous `context_order`
/// tokens concatenated with a one-hot mode embedding, so
/// parameter_count = (context_order * vocabulary_size + 3) * vocabulary_size.
/// theta is row-major: theta[token * feature_dim + feature].
struct PolicyParameters {
  std::vector<double> theta;
  int vocabulary_size = ToyVocabulary::kSize;
  int context_order = 2;

  int feature_dim() const { return context_order * vocabulary_size + kNumModes; }
  size_t parameter_count() const {
    return static_cast<size_t>(feature_dim()) * static_cast<size_t>(vocabulary_size);
  }

  static PolicyParameters zeros(int vocabulary_size = ToyVocabulary::kSize,
                                int context_order = 2);

  std::string serialize() const;
  static PolicyParameters deserialize(const std::string& bytes);
};

/// Warm start that answers single-digit queries by echoing the query's
/// trailing digit for a stochastic number of steps, closing the think block,
/// and boxing the digit carried in the context window. Requires
/// context_order >= 3 so the digit survives "</think> \boxed{".
PolicyParameters echo_warm_start(int context_order = 3);

/// Pure math over token ids: exact log-probabilities, analytic gradients,
/// and seeded sampling for an order-k linear-softmax model. Text handling
/// lives in ToyPolicyBackend.
class ToyPolicyModel {
 public:
  explicit ToyPolicyModel(PolicyParameters params);

  const PolicyParameters& params() const { return params_; }
  void set_params(PolicyParameters params);

  /// Log-softmax over the vocabulary for one position. `recent` holds the
  /// previous tokens, most recent last; missing history is padded.
  std::vector<double> position_logprobs(const std::vector<int>& recent,
                                        GenerationMode mode) const;

  struct SampledSequence {
    std::vector<int> token_ids;
    std::vector<double> token_logprobs;  // model logprobs (no temperature applied)
  };

  struct StopRule {
    bool stop_on_eos = true;
    bool stop_on_think_close = false;
    bool forbid_think_close = false;
  };

  /// Samples up to max_new_tokens. The sampling distribution honors
  /// temperature / top_k / top_p; the reported logprob of each emitted
  /// token is its untempered model log-probability.
  SampledSequence sample(const std::vector<int>& prefix, GenerationMode mode,
                         const SamplingParams& params, const StopRule& stop) const;

  /// Total model log-probability of `token_ids` after `prefix`, and (when
  /// grad != nullptr) the exact analytic gradient accumulated into *grad,
  /// scaled by `grad_scale`.
  double sequence_logprob(const std::vector<int>& prefix, const std::vector<int>& token_ids,
                          GenerationMode mode, std::vector<double>* grad = nullptr,
                          double grad_scale = 1.0) const;

  /// Adds coeff * d(log p(token | recent, mode))/d(theta) into grad. `probs`
  /// must be the softmax probabilities at this position.
  void add_position_gradient(const std::vector<int>& recent, GenerationMode mode, int token_id,
                             double coeff, const std::vector<double>& probs,
                             std::vector<double>& grad) const;

 private:
  int pad_id() const { return params_.vocabulary_size - 1; }
  PolicyParameters params_;
};

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

struct GenerationRequest {
  GenerationMode mode = GenerationMode::Generate;
  std::string task_id;
  std::string prompt_text;     // Generate / Continue
  std::string reasoning_text;  // Rewrite source, or Continue's rewritten reasoning
  SamplingParams params;
  int query_index = 0;
  int slot_index = 0;
};

/// Parameter access shared by the trainable backends.
class TrainablePolicyHandle {
 public:
  virtual ~TrainablePolicyHandle() = default;
  virtual const PolicyParameters& trainable_params() const = 0;
  virtual void set_trainable_params(PolicyParameters params) = 0;
};

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual std::string name() const = 0;
  virtual bool supports(GenerationMode mode) const = 0;
  virtual GenerationResult run(const GenerationRequest& request) = 0;

  /// Executes requests and returns results in request order. The default
  /// runs them sequentially; backends with in-flight parallelism override
  /// this and re-associate responses by request index.
  virtual std::vector<GenerationResult> run_batch(const std::vector<GenerationRequest>& requests);

  /// Token count of a text under this backend's tokenization.
  virtual int count_tokens(const std::string& text) const;
};

/// The skilled-editor rewriting instruction with the passage substituted.
std::string build_rewrite_prompt(const std::string& passage);

// Operation wrappers over a backend. `generate` derives per-sample seeds
// from params.seed so the n samples are independent yet reproducible.
std::vector<GenerationResult> generate(PolicyBackend& backend, const TaskInstance& task,
                                       const SamplingParams& params, int n);
GenerationResult rewrite(PolicyBackend& backend, const std::string& reasoning,
                         const SamplingParams& params);
GenerationResult continue_answer(PolicyBackend& backend, const TaskInstance& task,
                                 const std::string& rewritten_reasoning,
                                 const SamplingParams& params);

// ---------------------------------------------------------------------------
// Toy text backend
// ---------------------------------------------------------------------------

/// Binds the ToyPolicyModel to the 32-symbol vocabulary and the three
/// conditioning modes:
///   Generate — prefix is the tokenized task prompt,
///   Rewrite  — prefix is the trailing window of the source passage,
///   Continue — prefix is prompt + rewritten reasoning + think-close.
/// Rewrite generation stops at (and includes) the think-close terminator;
/// Continue masks the marker out of the sampling distribution.
class ToyPolicyBackend : public PolicyBackend, public TrainablePolicyHandle {
 public:
  explicit ToyPolicyBackend(PolicyParameters params);

  std::string name() const override { return "toy"; }
  bool supports(GenerationMode) const override { return true; }
  GenerationResult run(const GenerationRequest& request) override;
  int count_tokens(const std::string& text) const override;

  const ToyPolicyModel& model() const { return model_; }
  const PolicyParameters& trainable_params() const override { return model_.params(); }
  void set_trainable_params(PolicyParameters params) override {
    model_.set_params(std::move(params));
  }

  /// Prefix tokens (trailing context window) for a request, as used at
  /// sampling time. Exposed so scoring paths condition identically.
  std::vector<int> request_prefix(const GenerationRequest& request) const;

  /// Wraps scripted rewrite text into a scoreable GenerationResult: the
  /// text is tokenized, terminated with the think-close marker, and scored
  /// under the current parameters so downstream training sees exact
  /// old-policy log-probabilities.
  GenerationResult score_rewrite_text(const std::string& source_reasoning,
                                      const std::string& rewritten_text) const;

 private:
  ToyPolicyModel model_;
};

// ---------------------------------------------------------------------------
// Scripted test doubles
// ---------------------------------------------------------------------------

/// Collapses consecutive duplicate whitespace-separated tokens
/// ("a a b b c" -> "a b c"). Idempotent.
std::string dedup_rewrite(const std::string& reasoning);

/// Configurable scripted backend. Defaults: Generate answers gold (gold
/// answers are looked up by task_id), Rewrite deduplicates, Continue boxes
/// the last numeral of the reasoning.
class ScriptedBackend : public PolicyBackend {
 public:
  enum class AnswerStyle { Gold, Wrong, NoBox };

  ScriptedBackend() = default;
  explicit ScriptedBackend(const std::vector<TaskInstance>& tasks);

  void register_tasks(const std::vector<TaskInstance>& tasks);
  void set_answer_style(AnswerStyle style) { answer_style_ = style; }
  /// Text emitted as reasoning before the marker; a {gold} placeholder is
  /// substituted per task. The default repeats itself so the dedup rewriter
  /// has work to do while the trailing numeral stays verifiable.
  void set_reasoning_template(std::string text) { reasoning_template_ = std::move(text); }
  /// Throw BackendUnavailable on the n-th run() call (1-based), once.
  void fail_on_call(int call_index) { fail_on_call_ = call_index; }

  std::string name() const override { return "scripted"; }
  bool supports(GenerationMode) const override { return true; }
  GenerationResult run(const GenerationRequest& request) override;

  int calls() const { return calls_; }

 private:
  std::string gold_for(const std::string& task_id) const;

  std::vector<std::pair<std::string, std::string>> gold_by_task_;
  AnswerStyle answer_style_ = AnswerStyle::Gold;
  std::string reasoning_template_ = "the the answer answer is is {gold}";
  int fail_on_call_ = 0;
  int calls_ = 0;
};

/// Toy policy for Generate/Continue with a scripted rewrite function whose
/// output is scored under the toy parameters, so rewritten samples remain
/// trainable with exact likelihoods.
class HybridRewriteBackend : public PolicyBackend, public TrainablePolicyHandle {
 public:
  using RewriteFn = std::function<std::string(const std::string&)>;

  HybridRewriteBackend(PolicyParameters params, RewriteFn rewrite_fn);

  std::string name() const override { return "toy+scripted-rewrite"; }
  bool supports(GenerationMode) const override { return true; }
  GenerationResult run(const GenerationRequest& request) override;
  int count_tokens(const std::string& text) const override;

  ToyPolicyBackend& toy() { return toy_; }
  const PolicyParameters& trainable_params() const override { return toy_.trainable_params(); }
  void set_trainable_params(PolicyParameters params) override {
    toy_.set_trainable_params(std::move(params));
  }

 private:
  ToyPolicyBackend toy_;
  RewriteFn rewrite_fn_;
};

// ---------------------------------------------------------------------------
// Scoring under current parameters
// ---------------------------------------------------------------------------

/// Total log-probability of a result's tokens under theta (which may differ
/// from the parameters that sampled it) and the exact analytic gradient.
/// Requires a complete context descriptor; throws UnsupportedBackend
/// otherwise.
std::pair<double, std::vector<double>> logprob_gradient(const PolicyParameters& theta,
                                                        const GenerationResult& result);

}  // namespace selfrw
