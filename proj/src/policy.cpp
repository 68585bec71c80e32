#include "selfrw/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "selfrw/errors.hpp"
#include "selfrw/num_text.hpp"
#include "selfrw/rng.hpp"

namespace selfrw {

const char* to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::Generate:
      return "generate";
    case GenerationMode::Rewrite:
      return "rewrite";
    case GenerationMode::Continue:
      return "continue";
  }
  return "?";
}

SamplingParams SamplingParams::sampling_defaults() {
  SamplingParams p;
  p.temperature = 1.0;
  p.top_p = 1.0;
  p.top_k = 0;
  p.max_new_tokens = 12288;
  return p;
}

SamplingParams SamplingParams::rewrite_defaults() {
  SamplingParams p;
  p.temperature = 0.6;
  p.top_p = 0.95;
  p.top_k = 20;
  p.max_new_tokens = 32768;
  return p;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

ToyVocabulary::ToyVocabulary() {
  symbols_ = {"0",   "1",   "2",      "3",  "4",     "5",    "6",       "7",
              "8",   "9",   "+",      "-",  "*",     "(",    ")",       "=",
              ".",   ",",   "?",      "mod", "the",  "so",   "answer",  "is",
              "check", "step", "Compute", "</think>", "\\boxed{", "}", "<eos>", "<unk>"};
  think_close_id_ = 27;
  box_open_id_ = 28;
  box_close_id_ = 29;
  eos_id_ = 30;
  unk_id_ = 31;

  match_order_.resize(symbols_.size());
  std::iota(match_order_.begin(), match_order_.end(), 0);
  std::stable_sort(match_order_.begin(), match_order_.end(), [this](int a, int b) {
    return symbols_[static_cast<size_t>(a)].size() > symbols_[static_cast<size_t>(b)].size();
  });
}

const ToyVocabulary& ToyVocabulary::instance() {
  static const ToyVocabulary vocab;
  return vocab;
}

std::vector<int> ToyVocabulary::tokenize(const std::string& text) const {
  std::vector<int> ids;
  size_t pos = 0;
  while (pos < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
      continue;
    }
    int matched = -1;
    for (int id : match_order_) {
      const std::string& sym = symbols_[static_cast<size_t>(id)];
      if (text.compare(pos, sym.size(), sym) == 0) {
        matched = id;
        pos += sym.size();
        break;
      }
    }
    if (matched < 0) {
      matched = unk_id_;
      ++pos;
    }
    ids.push_back(matched);
  }
  return ids;
}

std::string ToyVocabulary::render(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == eos_id_) continue;
    if (!out.empty()) out += ' ';
    out += symbols_[static_cast<size_t>(id)];
  }
  return out;
}

int ToyVocabulary::count_tokens(const std::string& text) const {
  return static_cast<int>(tokenize(text).size());
}

// ---------------------------------------------------------------------------
// Generation result helpers
// ---------------------------------------------------------------------------

std::vector<int> GenerationResult::reasoning_token_ids(int think_close_id) const {
  std::vector<int> ids;
  for (int id : token_ids) {
    if (id == think_close_id) break;
    ids.push_back(id);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

PolicyParameters PolicyParameters::zeros(int vocabulary_size, int context_order) {
  if (vocabulary_size < 2 || vocabulary_size > 64) {
    throw Error(ErrorKind::PreconditionViolation, "vocabulary_size must be in [2, 64]");
  }
  if (context_order < 1) {
    throw Error(ErrorKind::PreconditionViolation, "context_order must be >= 1");
  }
  PolicyParameters p;
  p.vocabulary_size = vocabulary_size;
  p.context_order = context_order;
  p.theta.assign(p.parameter_count(), 0.0);
  return p;
}

std::string PolicyParameters::serialize() const {
  std::ostringstream os;
  os << "toy-policy v1\n";
  os << "vocabulary_size " << vocabulary_size << "\n";
  os << "context_order " << context_order << "\n";
  os << "parameter_count " << theta.size() << "\n";
  for (size_t i = 0; i < theta.size(); ++i) {
    os << format_double(theta[i]);
    os << (((i + 1) % 8 == 0 || i + 1 == theta.size()) ? '\n' : ' ');
  }
  return os.str();
}

PolicyParameters PolicyParameters::deserialize(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic, version, key;
  in >> magic >> version;
  if (magic != "toy-policy" || version != "v1") {
    throw Error(ErrorKind::ConfigInvalid, "not a toy-policy v1 blob");
  }
  PolicyParameters p;
  size_t count = 0;
  in >> key >> p.vocabulary_size;
  if (key != "vocabulary_size") throw Error(ErrorKind::ConfigInvalid, "expected vocabulary_size");
  in >> key >> p.context_order;
  if (key != "context_order") throw Error(ErrorKind::ConfigInvalid, "expected context_order");
  in >> key >> count;
  if (key != "parameter_count") throw Error(ErrorKind::ConfigInvalid, "expected parameter_count");
  if (count != p.parameter_count()) {
    throw Error(ErrorKind::ConfigInvalid, "parameter_count does not match dimensions");
  }
  p.theta.resize(count);
  std::string token;
  for (size_t i = 0; i < count; ++i) {
    if (!(in >> token)) throw Error(ErrorKind::ConfigInvalid, "truncated parameter vector");
    p.theta[i] = parse_double(token);
  }
  return p;
}

PolicyParameters echo_warm_start(int context_order) {
  if (context_order < 3) {
    throw Error(ErrorKind::PreconditionViolation,
                "echo warm start needs context_order >= 3 to carry the digit into the box");
  }
  const ToyVocabulary& vocab = ToyVocabulary::instance();
  PolicyParameters p = PolicyParameters::zeros(ToyVocabulary::kSize, context_order);
  const int V = p.vocabulary_size;
  const int F = p.feature_dim();
  auto w = [&](int token, int block, int context_token) -> double& {
    return p.theta[static_cast<size_t>(token) * F + static_cast<size_t>(block) * V +
                   static_cast<size_t>(context_token)];
  };

  // Close-vs-echo odds of 1:4 from the second position on keep the close
  // token inside a 0.95 nucleus even at test temperature. The close weight
  // sits on slots 2 and 3 only, so the first generated token is always an
  // echo and reasoning is never empty; wide margins keep samples well-formed
  // so groups gate at a high rate.
  const double echo = 10.0;
  const double close_early = echo - std::log(4.0);  // slot 2
  const double carry = 8.0;                         // slot 3, close and digit alike
  const double digit_after_box = 8.0;  // a stray marker or wrong digit inside the box never wins
  const double strong = 14.0;
  const double block = -10.0;

  for (int d = 0; d <= 9; ++d) {
    w(d, 0, d) = echo;  // repeat the previous digit
    w(vocab.think_close_id(), 1, d) = close_early;
    w(vocab.think_close_id(), 2, d) = carry;
    w(d, 2, d) = carry;  // selects the carried digit inside the box
    w(d, 0, vocab.box_open_id()) = digit_after_box;
  }
  w(vocab.box_open_id(), 0, vocab.think_close_id()) = strong;
  w(vocab.box_close_id(), 1, vocab.box_open_id()) = strong;
  w(vocab.eos_id(), 0, vocab.box_close_id()) = strong;
  // A close token never chains after itself or after the closing brace.
  w(vocab.think_close_id(), 0, vocab.think_close_id()) = block;
  w(vocab.think_close_id(), 0, vocab.box_close_id()) = block;
  return p;
}

// ---------------------------------------------------------------------------
// Toy model
// ---------------------------------------------------------------------------

namespace {

int mode_index(GenerationMode mode) { return static_cast<int>(mode); }

}  // namespace

ToyPolicyModel::ToyPolicyModel(PolicyParameters params) : params_(std::move(params)) {
  if (params_.theta.size() != params_.parameter_count()) {
    throw Error(ErrorKind::DimensionMismatch, "theta size does not match dimensions");
  }
}

void ToyPolicyModel::set_params(PolicyParameters params) {
  if (params.theta.size() != params.parameter_count()) {
    throw Error(ErrorKind::DimensionMismatch, "theta size does not match dimensions");
  }
  params_ = std::move(params);
}

std::vector<double> ToyPolicyModel::position_logprobs(const std::vector<int>& recent,
                                                      GenerationMode mode) const {
  const int V = params_.vocabulary_size;
  const int k = params_.context_order;
  const int F = params_.feature_dim();

  std::vector<double> logits(static_cast<size_t>(V), 0.0);
  for (int j = 0; j < k; ++j) {
    int back = static_cast<int>(recent.size()) - 1 - j;
    int token = back >= 0 ? recent[static_cast<size_t>(back)] : pad_id();
    int feature = j * V + token;
    for (int v = 0; v < V; ++v) logits[static_cast<size_t>(v)] += params_.theta[static_cast<size_t>(v) * F + feature];
  }
  int mode_feature = k * V + mode_index(mode);
  for (int v = 0; v < V; ++v) logits[static_cast<size_t>(v)] += params_.theta[static_cast<size_t>(v) * F + mode_feature];

  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_logit);
  double lse = max_logit + std::log(sum);
  for (double& z : logits) z -= lse;
  return logits;  // now log-probabilities
}

ToyPolicyModel::SampledSequence ToyPolicyModel::sample(const std::vector<int>& prefix,
                                                       GenerationMode mode,
                                                       const SamplingParams& params,
                                                       const StopRule& stop) const {
  if (params.temperature <= 0.0) {
    throw Error(ErrorKind::PreconditionViolation, "temperature must be positive");
  }
  if (params.top_p <= 0.0 || params.top_p > 1.0) {
    throw Error(ErrorKind::PreconditionViolation, "top_p must be in (0, 1]");
  }
  const ToyVocabulary& vocab = ToyVocabulary::instance();
  const int V = params_.vocabulary_size;
  Rng rng(params.seed);

  SampledSequence out;
  std::vector<int> context = prefix;
  for (int step = 0; step < params.max_new_tokens; ++step) {
    std::vector<double> logprobs = position_logprobs(context, mode);

    // Sampling distribution: temperature, then the optional truncations.
    // Reported likelihoods stay the untempered model values.
    std::vector<double> weight(static_cast<size_t>(V));
    double max_scaled = -1e300;
    for (int v = 0; v < V; ++v) {
      double scaled = logprobs[static_cast<size_t>(v)] / params.temperature;
      weight[static_cast<size_t>(v)] = scaled;
      max_scaled = std::max(max_scaled, scaled);
    }
    for (int v = 0; v < V; ++v) weight[static_cast<size_t>(v)] = std::exp(weight[static_cast<size_t>(v)] - max_scaled);
    if (stop.forbid_think_close && vocab.think_close_id() < V) {
      weight[static_cast<size_t>(vocab.think_close_id())] = 0.0;
    }

    std::vector<int> order(static_cast<size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double wa = weight[static_cast<size_t>(a)];
      double wb = weight[static_cast<size_t>(b)];
      if (wa != wb) return wa > wb;
      return a < b;
    });

    size_t keep = static_cast<size_t>(V);
    if (params.top_k > 0 && params.top_k < V) keep = static_cast<size_t>(params.top_k);
    if (params.top_p < 1.0) {
      double total = 0.0;
      for (size_t i = 0; i < keep; ++i) total += weight[static_cast<size_t>(order[i])];
      double threshold = params.top_p * total;
      double cum = 0.0;
      for (size_t i = 0; i < keep; ++i) {
        cum += weight[static_cast<size_t>(order[i])];
        if (cum >= threshold) {
          keep = i + 1;
          break;
        }
      }
    }

    double total = 0.0;
    for (size_t i = 0; i < keep; ++i) total += weight[static_cast<size_t>(order[i])];
    if (total <= 0.0) throw Error(ErrorKind::NonFinite, "empty sampling support");

    double u = rng.next_unit() * total;
    int token = order[keep - 1];
    double cum = 0.0;
    for (size_t i = 0; i < keep; ++i) {
      cum += weight[static_cast<size_t>(order[i])];
      if (u < cum) {
        token = order[i];
        break;
      }
    }

    out.token_ids.push_back(token);
    out.token_logprobs.push_back(logprobs[static_cast<size_t>(token)]);
    context.push_back(token);

    if (stop.stop_on_eos && token == vocab.eos_id()) break;
    if (stop.stop_on_think_close && token == vocab.think_close_id()) break;
  }
  return out;
}

void ToyPolicyModel::add_position_gradient(const std::vector<int>& recent, GenerationMode mode,
                                           int token_id, double coeff,
                                           const std::vector<double>& probs,
                                           std::vector<double>& grad) const {
  const int V = params_.vocabulary_size;
  const int k = params_.context_order;
  const int F = params_.feature_dim();

  // d log p(t) / d theta[v][f] = (1{v==t} - p[v]) for every active feature f.
  auto add_feature = [&](int feature) {
    for (int v = 0; v < V; ++v) {
      double delta = (v == token_id ? 1.0 : 0.0) - probs[static_cast<size_t>(v)];
      grad[static_cast<size_t>(v) * F + static_cast<size_t>(feature)] += coeff * delta;
    }
  };
  for (int j = 0; j < k; ++j) {
    int back = static_cast<int>(recent.size()) - 1 - j;
    int token = back >= 0 ? recent[static_cast<size_t>(back)] : pad_id();
    add_feature(j * V + token);
  }
  add_feature(k * V + mode_index(mode));
}

double ToyPolicyModel::sequence_logprob(const std::vector<int>& prefix,
                                        const std::vector<int>& token_ids, GenerationMode mode,
                                        std::vector<double>* grad, double grad_scale) const {
  std::vector<int> context = prefix;
  double total = 0.0;
  for (int token : token_ids) {
    std::vector<double> logprobs = position_logprobs(context, mode);
    total += logprobs[static_cast<size_t>(token)];
    if (grad != nullptr) {
      std::vector<double> probs(logprobs.size());
      for (size_t v = 0; v < logprobs.size(); ++v) probs[v] = std::exp(logprobs[v]);
      add_position_gradient(context, mode, token, grad_scale, probs, *grad);
    }
    context.push_back(token);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Backend base pieces
// ---------------------------------------------------------------------------

std::vector<GenerationResult> PolicyBackend::run_batch(
    const std::vector<GenerationRequest>& requests) {
  std::vector<GenerationResult> results;
  results.reserve(requests.size());
  for (const GenerationRequest& request : requests) results.push_back(run(request));
  return results;
}

int PolicyBackend::count_tokens(const std::string& text) const {
  // Whitespace tokens; backends with a real tokenizer override this.
  int count = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::string build_rewrite_prompt(const std::string& passage) {
  static const std::string kTemplate =
      "### Instruction\n"
      "You are a skilled editor tasked with improving a given thinking passage. Your goal is to "
      "refine the passage to enhance its overall quality, making it more organized, coherent, and "
      "accurate. Your output should be a rewritten version of the original thinking passage. The "
      "rewritten version should maintain the core ideas and essence of the original while "
      "significantly improving its presentation and impact. Note that:\n"
      "\n"
      "1. Always use a first-person tone when refining.\n"
      "2. This is more like thinking out loud than proper writing. Use simple and everyday "
      "language.\n"
      "3. It's okay, and even good, to use sentences of reflecting, pausing to think, or "
      "connecting different thoughts. But if such verbose sentences bring no significant new "
      "ideas, you may simplify or remove them for clarity.\n"
      "4. Stick to the format and language style of the original.\n"
      "Please provide only the rewritten thinking passage, without any additional explanations or "
      "context.\n"
      "\n"
      "### Thinking Passage to Rewrite\n";
  return kTemplate + passage;
}

std::vector<GenerationResult> generate(PolicyBackend& backend, const TaskInstance& task,
                                       const SamplingParams& params, int n) {
  if (n < 1) throw Error(ErrorKind::PreconditionViolation, "n must be >= 1");
  if (!backend.supports(GenerationMode::Generate)) {
    throw Error(ErrorKind::UnsupportedBackend, backend.name() + " cannot generate");
  }
  std::vector<GenerationResult> results;
  results.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    GenerationRequest request;
    request.mode = GenerationMode::Generate;
    request.task_id = task.task_id;
    request.prompt_text = task.prompt_text;
    request.params = params;
    request.params.seed = mix_seed(params.seed, static_cast<uint64_t>(i));
    request.slot_index = i;
    results.push_back(backend.run(request));
  }
  return results;
}

GenerationResult rewrite(PolicyBackend& backend, const std::string& reasoning,
                         const SamplingParams& params) {
  if (reasoning.empty()) {
    throw Error(ErrorKind::PreconditionViolation, "rewrite needs a non-empty passage");
  }
  GenerationRequest request;
  request.mode = GenerationMode::Rewrite;
  request.reasoning_text = reasoning;
  request.params = params;
  return backend.run(request);
}

GenerationResult continue_answer(PolicyBackend& backend, const TaskInstance& task,
                                 const std::string& rewritten_reasoning,
                                 const SamplingParams& params) {
  if (rewritten_reasoning.empty()) {
    throw Error(ErrorKind::PreconditionViolation, "continuation needs a non-empty reasoning");
  }
  if (task.prompt_text.empty()) {
    throw Error(ErrorKind::PreconditionViolation, "continuation needs the query prompt");
  }
  GenerationRequest request;
  request.mode = GenerationMode::Continue;
  request.task_id = task.task_id;
  request.prompt_text = task.prompt_text;
  request.reasoning_text = rewritten_reasoning;
  request.params = params;
  return backend.run(request);
}

// ---------------------------------------------------------------------------
// Toy backend
// ---------------------------------------------------------------------------

ToyPolicyBackend::ToyPolicyBackend(PolicyParameters params) : model_(std::move(params)) {}

int ToyPolicyBackend::count_tokens(const std::string& text) const {
  return ToyVocabulary::instance().count_tokens(text);
}

std::vector<int> ToyPolicyBackend::request_prefix(const GenerationRequest& request) const {
  const ToyVocabulary& vocab = ToyVocabulary::instance();
  const size_t k = static_cast<size_t>(model_.params().context_order);
  std::vector<int> full;
  switch (request.mode) {
    case GenerationMode::Generate:
      full = vocab.tokenize(request.prompt_text);
      break;
    case GenerationMode::Rewrite:
      // Fixed-size summary of the source passage: its trailing context
      // window plus the mode embedding.
      full = vocab.tokenize(request.reasoning_text);
      break;
    case GenerationMode::Continue: {
      full = vocab.tokenize(request.prompt_text);
      std::vector<int> reasoning = vocab.tokenize(request.reasoning_text);
      full.insert(full.end(), reasoning.begin(), reasoning.end());
      full.push_back(vocab.think_close_id());
      break;
    }
  }
  if (full.size() > k) full.erase(full.begin(), full.end() - static_cast<ptrdiff_t>(k));
  return full;
}

GenerationResult ToyPolicyBackend::run(const GenerationRequest& request) {
  const ToyVocabulary& vocab = ToyVocabulary::instance();
  ToyPolicyModel::StopRule stop;
  stop.stop_on_think_close = request.mode == GenerationMode::Rewrite;
  stop.forbid_think_close = request.mode == GenerationMode::Continue;

  GenerationResult result;
  result.context.mode = request.mode;
  result.context.prefix_token_ids = request_prefix(request);
  result.context.complete = true;

  ToyPolicyModel::SampledSequence seq =
      model_.sample(result.context.prefix_token_ids, request.mode, request.params, stop);
  result.token_ids = std::move(seq.token_ids);
  result.token_logprobs = std::move(seq.token_logprobs);

  std::vector<int> before;
  std::vector<int> after;
  bool seen_close = false;
  for (int id : result.token_ids) {
    if (!seen_close && id == vocab.think_close_id()) {
      seen_close = true;
      continue;
    }
    (seen_close ? after : before).push_back(id);
  }
  switch (request.mode) {
    case GenerationMode::Generate:
    case GenerationMode::Rewrite:
      result.reasoning_text = vocab.render(before);
      result.answer_text = vocab.render(after);
      break;
    case GenerationMode::Continue:
      result.answer_text = vocab.render(before);  // marker is forbidden, so all tokens are answer
      break;
  }
  return result;
}

GenerationResult ToyPolicyBackend::score_rewrite_text(const std::string& source_reasoning,
                                                      const std::string& rewritten_text) const {
  const ToyVocabulary& vocab = ToyVocabulary::instance();
  GenerationRequest shim;
  shim.mode = GenerationMode::Rewrite;
  shim.reasoning_text = source_reasoning;

  GenerationResult result;
  result.context.mode = GenerationMode::Rewrite;
  result.context.prefix_token_ids = request_prefix(shim);
  result.context.complete = true;

  result.token_ids = vocab.tokenize(rewritten_text);
  result.token_ids.push_back(vocab.think_close_id());
  result.token_logprobs.resize(result.token_ids.size());

  std::vector<int> context = result.context.prefix_token_ids;
  for (size_t i = 0; i < result.token_ids.size(); ++i) {
    std::vector<double> logprobs = model_.position_logprobs(context, GenerationMode::Rewrite);
    result.token_logprobs[i] = logprobs[static_cast<size_t>(result.token_ids[i])];
    context.push_back(result.token_ids[i]);
  }
  result.reasoning_text = vocab.render(result.reasoning_token_ids(vocab.think_close_id()));
  return result;
}

// ---------------------------------------------------------------------------
// Scripted doubles
// ---------------------------------------------------------------------------

std::string dedup_rewrite(const std::string& reasoning) {
  std::istringstream in(reasoning);
  std::string token, previous, out;
  while (in >> token) {
    if (token == previous) continue;
    if (!out.empty()) out += ' ';
    out += token;
    previous = token;
  }
  return out;
}

ScriptedBackend::ScriptedBackend(const std::vector<TaskInstance>& tasks) { register_tasks(tasks); }

void ScriptedBackend::register_tasks(const std::vector<TaskInstance>& tasks) {
  for (const TaskInstance& task : tasks) gold_by_task_.emplace_back(task.task_id, task.gold_answer);
}

std::string ScriptedBackend::gold_for(const std::string& task_id) const {
  for (const auto& [id, gold] : gold_by_task_) {
    if (id == task_id) return gold;
  }
  return "0";
}

GenerationResult ScriptedBackend::run(const GenerationRequest& request) {
  ++calls_;
  if (fail_on_call_ > 0 && calls_ == fail_on_call_) {
    fail_on_call_ = 0;
    throw Error(ErrorKind::BackendUnavailable, "scripted failure injection");
  }

  GenerationResult result;
  result.context.mode = request.mode;
  result.context.complete = false;

  switch (request.mode) {
    case GenerationMode::Generate: {
      std::string gold = gold_for(request.task_id);
      result.reasoning_text = reasoning_template_;
      size_t placeholder = result.reasoning_text.find("{gold}");
      if (placeholder != std::string::npos) {
        result.reasoning_text.replace(placeholder, 6, gold);
      }
      switch (answer_style_) {
        case AnswerStyle::Gold:
          result.answer_text = "The answer is \\boxed{" + gold + "}.";
          break;
        case AnswerStyle::Wrong:
          result.answer_text = "The answer is \\boxed{" + gold + "1}.";
          break;
        case AnswerStyle::NoBox:
          result.answer_text = "no final answer";
          break;
      }
      break;
    }
    case GenerationMode::Rewrite:
      result.reasoning_text = dedup_rewrite(request.reasoning_text);
      break;
    case GenerationMode::Continue: {
      // Boxes the last numeral of the reasoning; a budget too small for
      // "\boxed{", the numeral, and "}" produces no box at all.
      std::string numeral;
      size_t end = request.reasoning_text.size();
      while (end > 0 && !std::isdigit(static_cast<unsigned char>(request.reasoning_text[end - 1]))) {
        --end;
      }
      size_t start = end;
      while (start > 0 && std::isdigit(static_cast<unsigned char>(request.reasoning_text[start - 1]))) {
        --start;
      }
      numeral = request.reasoning_text.substr(start, end - start);
      if (!numeral.empty() && request.params.max_new_tokens >= 3) {
        result.answer_text = "\\boxed{" + numeral + "}";
      }
      break;
    }
  }
  return result;
}

HybridRewriteBackend::HybridRewriteBackend(PolicyParameters params, RewriteFn rewrite_fn)
    : toy_(std::move(params)), rewrite_fn_(std::move(rewrite_fn)) {}

int HybridRewriteBackend::count_tokens(const std::string& text) const {
  return toy_.count_tokens(text);
}

GenerationResult HybridRewriteBackend::run(const GenerationRequest& request) {
  if (request.mode != GenerationMode::Rewrite) return toy_.run(request);
  std::string rewritten = rewrite_fn_(request.reasoning_text);
  return toy_.score_rewrite_text(request.reasoning_text, rewritten);
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

std::pair<double, std::vector<double>> logprob_gradient(const PolicyParameters& theta,
                                                        const GenerationResult& result) {
  if (!result.context.complete) {
    throw Error(ErrorKind::UnsupportedBackend,
                "result has no complete context descriptor; gradients need the toy policy");
  }
  ToyPolicyModel model(theta);
  std::vector<double> grad(theta.parameter_count(), 0.0);
  double total = model.sequence_logprob(result.context.prefix_token_ids, result.token_ids,
                                        result.context.mode, &grad, 1.0);
  return {total, std::move(grad)};
}

}  // namespace selfrw
