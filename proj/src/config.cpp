#include "selfrw/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "selfrw/errors.hpp"
#include "selfrw/num_text.hpp"

namespace selfrw {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

GateKind parse_gate_kind(const std::string& value) {
  if (value == "selective") return GateKind::Selective;
  if (value == "random") return GateKind::Random;
  if (value == "never") return GateKind::Never;
  throw Error(ErrorKind::ConfigInvalid, "gate.kind must be selective|random|never, got " + value);
}

OptimizerKind parse_optimizer(const std::string& value) {
  if (value == "adamw") return OptimizerKind::AdamW;
  if (value == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorKind::ConfigInvalid, "train.optimizer must be adamw|sgd, got " + value);
}

/// Declarative key table shared by the serializer and the parser; order
/// here is the canonical file order.
struct KeyBinding {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<KeyBinding> bindings() {
  std::vector<KeyBinding> keys;
  auto add = [&](std::string key, std::function<std::string(const RunConfig&)> get,
                 std::function<void(RunConfig&, const std::string&)> set) {
    keys.push_back({std::move(key), std::move(get), std::move(set)});
  };
  auto u64 = [](uint64_t RunConfig::*field) {
    return std::pair{
        std::function<std::string(const RunConfig&)>(
            [field](const RunConfig& c) { return std::to_string(c.*field); }),
        std::function<void(RunConfig&, const std::string&)>(
            [field](RunConfig& c, const std::string& v) { c.*field = parse_uint(v); })};
  };

  auto [get_seed, set_seed] = u64(&RunConfig::seed);
  add("run.seed", get_seed, set_seed);
  add("run.output_dir", [](const RunConfig& c) { return c.output_dir; },
      [](RunConfig& c, const std::string& v) { c.output_dir = v; });

  add("task.source", [](const RunConfig& c) { return c.task_source; },
      [](RunConfig& c, const std::string& v) { c.task_source = v; });
  auto [get_tseed, set_tseed] = u64(&RunConfig::task_seed);
  add("task.seed", get_tseed, set_tseed);
  add("task.count", [](const RunConfig& c) { return std::to_string(c.task_count); },
      [](RunConfig& c, const std::string& v) { c.task_count = static_cast<int>(parse_int(v)); });
  add("task.difficulty", [](const RunConfig& c) { return std::to_string(c.task_difficulty); },
      [](RunConfig& c, const std::string& v) {
        c.task_difficulty = static_cast<int>(parse_int(v));
      });
  add("task.file", [](const RunConfig& c) { return c.task_file; },
      [](RunConfig& c, const std::string& v) { c.task_file = v; });

  add("backend.kind", [](const RunConfig& c) { return c.backend_kind; },
      [](RunConfig& c, const std::string& v) { c.backend_kind = v; });
  add("backend.context_order", [](const RunConfig& c) { return std::to_string(c.context_order); },
      [](RunConfig& c, const std::string& v) { c.context_order = static_cast<int>(parse_int(v)); });
  add("backend.policy_init", [](const RunConfig& c) { return c.policy_init; },
      [](RunConfig& c, const std::string& v) { c.policy_init = v; });
  add("backend.rewriter", [](const RunConfig& c) { return c.rewriter; },
      [](RunConfig& c, const std::string& v) { c.rewriter = v; });
  add("backend.url", [](const RunConfig& c) { return c.backend_endpoint.url; },
      [](RunConfig& c, const std::string& v) { c.backend_endpoint.url = v; });
  add("backend.model", [](const RunConfig& c) { return c.backend_endpoint.model; },
      [](RunConfig& c, const std::string& v) { c.backend_endpoint.model = v; });
  add("backend.bearer_env", [](const RunConfig& c) { return c.backend_endpoint.bearer_env; },
      [](RunConfig& c, const std::string& v) { c.backend_endpoint.bearer_env = v; });
  add("backend.timeout_ms",
      [](const RunConfig& c) { return std::to_string(c.backend_endpoint.timeout_ms); },
      [](RunConfig& c, const std::string& v) {
        c.backend_endpoint.timeout_ms = static_cast<int>(parse_int(v));
      });
  add("backend.retries",
      [](const RunConfig& c) { return std::to_string(c.backend_endpoint.max_retries); },
      [](RunConfig& c, const std::string& v) {
        c.backend_endpoint.max_retries = static_cast<int>(parse_int(v));
      });
  add("backend.parallel_requests",
      [](const RunConfig& c) { return std::to_string(c.backend_endpoint.parallel_requests); },
      [](RunConfig& c, const std::string& v) {
        c.backend_endpoint.parallel_requests = static_cast<int>(parse_int(v));
      });

  add("gate.kind", [](const RunConfig& c) { return to_string(c.gate.kind); },
      [](RunConfig& c, const std::string& v) { c.gate.kind = parse_gate_kind(v); });
  add("gate.fraction", [](const RunConfig& c) { return format_double(c.gate.fraction); },
      [](RunConfig& c, const std::string& v) { c.gate.fraction = parse_double(v); });
  add("gate.seed", [](const RunConfig& c) { return std::to_string(c.gate.rng_seed); },
      [](RunConfig& c, const std::string& v) { c.gate.rng_seed = parse_uint(v); });

  add("train.steps", [](const RunConfig& c) { return std::to_string(c.train_steps); },
      [](RunConfig& c, const std::string& v) { c.train_steps = static_cast<int>(parse_int(v)); });
  add("train.checkpoint_every",
      [](const RunConfig& c) { return std::to_string(c.checkpoint_every); },
      [](RunConfig& c, const std::string& v) {
        c.checkpoint_every = static_cast<int>(parse_int(v));
      });
  add("train.clip_epsilon", [](const RunConfig& c) { return format_double(c.hp.clip_epsilon); },
      [](RunConfig& c, const std::string& v) { c.hp.clip_epsilon = parse_double(v); });
  add("train.learning_rate", [](const RunConfig& c) { return format_double(c.hp.learning_rate); },
      [](RunConfig& c, const std::string& v) { c.hp.learning_rate = parse_double(v); });
  add("train.weight_decay", [](const RunConfig& c) { return format_double(c.hp.weight_decay); },
      [](RunConfig& c, const std::string& v) { c.hp.weight_decay = parse_double(v); });
  add("train.kl_coefficient",
      [](const RunConfig& c) { return format_double(c.hp.kl_coefficient); },
      [](RunConfig& c, const std::string& v) { c.hp.kl_coefficient = parse_double(v); });
  add("train.grad_norm_clip",
      [](const RunConfig& c) { return format_double(c.hp.grad_norm_clip); },
      [](RunConfig& c, const std::string& v) { c.hp.grad_norm_clip = parse_double(v); });
  add("train.group_size", [](const RunConfig& c) { return std::to_string(c.hp.group_size); },
      [](RunConfig& c, const std::string& v) {
        c.hp.group_size = static_cast<int>(parse_int(v));
      });
  add("train.batch_size", [](const RunConfig& c) { return std::to_string(c.hp.batch_size); },
      [](RunConfig& c, const std::string& v) {
        c.hp.batch_size = static_cast<int>(parse_int(v));
      });
  add("train.cutoff_length", [](const RunConfig& c) { return std::to_string(c.hp.cutoff_length); },
      [](RunConfig& c, const std::string& v) {
        c.hp.cutoff_length = static_cast<int>(parse_int(v));
      });
  add("train.rewrite_advantage_scale",
      [](const RunConfig& c) { return format_double(c.hp.rewrite_advantage_scale); },
      [](RunConfig& c, const std::string& v) {
        c.hp.rewrite_advantage_scale = parse_double(v);
      });
  add("train.optimizer",
      [](const RunConfig& c) {
        return c.hp.optimizer == OptimizerKind::AdamW ? "adamw" : "sgd";
      },
      [](RunConfig& c, const std::string& v) { c.hp.optimizer = parse_optimizer(v); });

  auto sampling_keys = [&](const std::string& section, SamplingParams RunConfig::*field) {
    add(section + ".temperature",
        [field](const RunConfig& c) { return format_double((c.*field).temperature); },
        [field](RunConfig& c, const std::string& v) { (c.*field).temperature = parse_double(v); });
    add(section + ".top_p",
        [field](const RunConfig& c) { return format_double((c.*field).top_p); },
        [field](RunConfig& c, const std::string& v) { (c.*field).top_p = parse_double(v); });
    add(section + ".top_k",
        [field](const RunConfig& c) { return std::to_string((c.*field).top_k); },
        [field](RunConfig& c, const std::string& v) {
          (c.*field).top_k = static_cast<int>(parse_int(v));
        });
    add(section + ".max_new_tokens",
        [field](const RunConfig& c) { return std::to_string((c.*field).max_new_tokens); },
        [field](RunConfig& c, const std::string& v) {
          (c.*field).max_new_tokens = static_cast<int>(parse_int(v));
        });
  };
  sampling_keys("sampling", &RunConfig::sample_params);
  sampling_keys("rewrite", &RunConfig::rewrite_params);
  sampling_keys("continue", &RunConfig::continue_params);
  sampling_keys("eval", &RunConfig::eval_params);

  add("judge.kind", [](const RunConfig& c) { return c.judge_kind; },
      [](RunConfig& c, const std::string& v) { c.judge_kind = v; });
  add("judge.retries", [](const RunConfig& c) { return std::to_string(c.judge_retries); },
      [](RunConfig& c, const std::string& v) { c.judge_retries = static_cast<int>(parse_int(v)); });
  add("judge.url", [](const RunConfig& c) { return c.judge_endpoint.url; },
      [](RunConfig& c, const std::string& v) { c.judge_endpoint.url = v; });
  add("judge.model", [](const RunConfig& c) { return c.judge_endpoint.model; },
      [](RunConfig& c, const std::string& v) { c.judge_endpoint.model = v; });
  add("judge.bearer_env", [](const RunConfig& c) { return c.judge_endpoint.bearer_env; },
      [](RunConfig& c, const std::string& v) { c.judge_endpoint.bearer_env = v; });

  add("evaluation.runs", [](const RunConfig& c) { return std::to_string(c.eval_runs); },
      [](RunConfig& c, const std::string& v) { c.eval_runs = static_cast<int>(parse_int(v)); });
  auto [get_eseed, set_eseed] = u64(&RunConfig::eval_seed);
  add("evaluation.seed", get_eseed, set_eseed);
  return keys;
}

}  // namespace

void RunConfig::validate() const {
  hp.validate();
  if (task_source != "synthetic" && task_source != "file") {
    throw Error(ErrorKind::ConfigInvalid, "task.source must be synthetic|file");
  }
  if (task_source == "file" && task_file.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "task.source=file needs task.file");
  }
  if (task_source == "synthetic" && task_count < 1) {
    throw Error(ErrorKind::ConfigInvalid, "task.count must be >= 1");
  }
  if (backend_kind != "toy" && backend_kind != "scripted" && backend_kind != "external") {
    throw Error(ErrorKind::ConfigInvalid, "backend.kind must be toy|scripted|external");
  }
  if (policy_init != "zeros" && policy_init != "echo") {
    throw Error(ErrorKind::ConfigInvalid, "backend.policy_init must be zeros|echo");
  }
  if (policy_init == "echo" && context_order < 3) {
    throw Error(ErrorKind::ConfigInvalid, "backend.policy_init=echo needs context_order >= 3");
  }
  if (rewriter != "policy" && rewriter != "dedup") {
    throw Error(ErrorKind::ConfigInvalid, "backend.rewriter must be policy|dedup");
  }
  if (backend_kind == "external" && backend_endpoint.url.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "backend.kind=external needs backend.url");
  }
  if (gate.kind == GateKind::Random && (gate.fraction < 0.0 || gate.fraction > 1.0)) {
    throw Error(ErrorKind::ConfigInvalid, "gate.fraction must be in [0, 1]");
  }
  if (judge_kind != "mock" && judge_kind != "external" && judge_kind != "off") {
    throw Error(ErrorKind::ConfigInvalid, "judge.kind must be mock|external|off");
  }
  if (train_steps < 1) throw Error(ErrorKind::ConfigInvalid, "train.steps must be >= 1");
  if (checkpoint_every < 1) {
    throw Error(ErrorKind::ConfigInvalid, "train.checkpoint_every must be >= 1");
  }
  if (eval_runs < 1) throw Error(ErrorKind::ConfigInvalid, "evaluation.runs must be >= 1");
  if (output_dir.empty()) throw Error(ErrorKind::ConfigInvalid, "run.output_dir must be set");
}

RolloutParams RunConfig::rollout_params() const {
  RolloutParams params;
  params.generate = sample_params;
  params.generate.max_new_tokens = std::min(params.generate.max_new_tokens, hp.cutoff_length);
  params.rewrite = rewrite_params;
  params.continuation = continue_params;
  params.group_size = hp.group_size;
  return params;
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  out << "# selfrw run configuration v1\n";
  std::string section;
  for (const KeyBinding& binding : bindings()) {
    std::string prefix = binding.key.substr(0, binding.key.find('.'));
    if (prefix != section) {
      section = prefix;
      out << "\n";
    }
    out << binding.key << " = " << binding.get(config) << "\n";
  }
  return out.str();
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, const KeyBinding*> by_key;
  static const std::vector<KeyBinding> kBindings = bindings();
  for (const KeyBinding& binding : kBindings) by_key[binding.key] = &binding;

  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigInvalid,
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw Error(ErrorKind::ConfigInvalid,
                  "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second->set(config, value);
  }
  return config;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open config: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void save_config_file(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write config: " + path.string());
  out << serialize_config(config);
}

}  // namespace selfrw
