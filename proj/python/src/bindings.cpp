#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "selfrw/analysis.hpp"
#include "selfrw/config.hpp"
#include "selfrw/errors.hpp"
#include "selfrw/grpo.hpp"
#include "selfrw/judge.hpp"
#include "selfrw/policy.hpp"
#include "selfrw/reward.hpp"
#include "selfrw/rollout.hpp"
#include "selfrw/runner.hpp"
#include "selfrw/task_env.hpp"

namespace py = pybind11;
using namespace selfrw;

namespace {

GatePolicy make_gate_policy(const std::string& kind, double fraction, uint64_t seed) {
  GatePolicy policy;
  if (kind == "selective") {
    policy.kind = GateKind::Selective;
  } else if (kind == "random") {
    policy.kind = GateKind::Random;
  } else if (kind == "never") {
    policy.kind = GateKind::Never;
  } else {
    throw Error(ErrorKind::ConfigInvalid, "gate kind must be selective|random|never");
  }
  policy.fraction = fraction;
  policy.rng_seed = seed;
  return policy;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-rewriting group-relative policy optimization engine";

  py::register_exception<Error>(m, "EngineError");

  py::class_<TaskInstance>(m, "TaskInstance")
      .def(py::init<>())
      .def_readwrite("task_id", &TaskInstance::task_id)
      .def_readwrite("prompt_text", &TaskInstance::prompt_text)
      .def_readwrite("gold_answer", &TaskInstance::gold_answer)
      .def_readwrite("difficulty", &TaskInstance::difficulty);

  py::class_<VerifierOutcome>(m, "VerifierOutcome")
      .def_readonly("correct", &VerifierOutcome::correct)
      .def_readonly("parsed_answer", &VerifierOutcome::parsed_answer)
      .def_property_readonly("failure_kind", [](const VerifierOutcome& outcome) {
        switch (outcome.failure_kind) {
          case FailureKind::None:
            return "none";
          case FailureKind::NoBoxedAnswer:
            return "no_boxed_answer";
          case FailureKind::Mismatch:
            return "mismatch";
        }
        return "?";
      });

  m.def("generate_task_set", &generate_task_set, py::arg("seed"), py::arg("count"),
        py::arg("difficulty"));
  m.def("extract_boxed", &extract_boxed, py::arg("text"));
  m.def("verify", &verify, py::arg("task"), py::arg("answer_text"));
  m.def("canonicalize_answer", &canonicalize_answer, py::arg("answer"));
  m.def("build_generation_prompt", &build_generation_prompt, py::arg("query"));
  m.def("build_rewrite_prompt", &build_rewrite_prompt, py::arg("passage"));
  m.def("dedup_rewrite", &dedup_rewrite, py::arg("reasoning"));

  m.def(
      "shape_rewards",
      [](const std::vector<int>& raw, const std::vector<bool>& rewritten) {
        RewardVector vector;
        vector.values = raw;
        vector.rewritten = rewritten;
        return shape_rewards(vector).values;
      },
      py::arg("raw"), py::arg("rewritten"));

  m.def(
      "compute_advantages",
      [](const std::vector<double>& shaped, bool group_was_rewritten, double scale) {
        AdvantageVector adv = compute_advantages(shaped, group_was_rewritten, scale);
        return py::make_tuple(adv.values, adv.scaled, adv.group_mean, adv.group_std);
      },
      py::arg("shaped"), py::arg("group_was_rewritten"), py::arg("rewrite_advantage_scale") = 5.0);

  m.def(
      "gate",
      [](const std::vector<bool>& first_half_correct, const std::string& kind, double fraction,
         uint64_t seed, int64_t query_index) {
        std::vector<VerifierOutcome> outcomes;
        for (bool correct : first_half_correct) {
          VerifierOutcome outcome;
          outcome.correct = correct;
          outcome.failure_kind = correct ? FailureKind::None : FailureKind::Mismatch;
          outcomes.push_back(outcome);
        }
        return std::string(
            to_string(gate(outcomes, make_gate_policy(kind, fraction, seed), query_index)));
      },
      py::arg("first_half_correct"), py::arg("kind") = "selective", py::arg("fraction") = 0.0,
      py::arg("seed") = 0, py::arg("query_index") = 0);

  m.def(
      "overhead_report",
      [](const std::vector<std::string>& decisions, int group_size, double generate_tokens,
         double rewrite_tokens, double continue_tokens, std::array<double, 3> phase_rate) {
        std::vector<GateDecision> gates;
        for (const std::string& d : decisions) {
          gates.push_back(d == "rewrite" ? GateDecision::Rewrite : GateDecision::Vanilla);
        }
        RolloutParams params;
        params.group_size = group_size;
        BatchPlan plan =
            plan_batches(gates, static_cast<int>(gates.size()), group_size, params);
        CostModel cost;
        cost.generate_tokens = generate_tokens;
        cost.rewrite_tokens = rewrite_tokens;
        cost.continue_tokens = continue_tokens;
        cost.phase_rate = phase_rate;
        return overhead_report(plan, cost);
      },
      py::arg("decisions"), py::arg("group_size"), py::arg("generate_tokens"),
      py::arg("rewrite_tokens"), py::arg("continue_tokens"),
      py::arg("phase_rate") = std::array<double, 3>{1.0, 1.0, 1.0});

  py::class_<JudgeScorecard>(m, "JudgeScorecard")
      .def(py::init<>())
      .def_readwrite("over_thinking", &JudgeScorecard::over_thinking)
      .def_readwrite("under_thinking", &JudgeScorecard::under_thinking)
      .def_readwrite("disordered_thinking", &JudgeScorecard::disordered_thinking)
      .def_readwrite("redundant_thinking", &JudgeScorecard::redundant_thinking)
      .def_readwrite("overall", &JudgeScorecard::overall);

  m.def("build_judge_prompt", &build_judge_prompt, py::arg("passage"));
  m.def("parse_judgment", &parse_judgment, py::arg("text"));
  m.def("render_judgment", &render_judgment, py::arg("card"));
  m.def(
      "aggregate_scorecards",
      [](const std::vector<JudgeScorecard>& cards) {
        AggregateScore agg = aggregate(cards);
        py::dict out;
        out["over_scaled"] = agg.over_scaled;
        out["under_scaled"] = agg.under_scaled;
        out["disordered_scaled"] = agg.disordered_scaled;
        out["redundant_scaled"] = agg.redundant_scaled;
        out["overall_scaled"] = agg.overall_scaled;
        out["sample_count"] = agg.sample_count;
        return out;
      },
      py::arg("cards"));

  m.def(
      "length_ratios",
      [](const std::vector<py::dict>& groups, const std::string& pairing) {
        std::vector<GroupLengths> parsed;
        for (const py::dict& entry : groups) {
          GroupLengths lengths;
          lengths.gate = entry["gate"].cast<std::string>() == "rewrite" ? GateDecision::Rewrite
                                                                        : GateDecision::Vanilla;
          auto tokens = entry["tokens"].cast<std::vector<int>>();
          auto rewritten = entry["rewritten"].cast<std::vector<bool>>();
          if (tokens.size() != rewritten.size()) {
            throw Error(ErrorKind::DimensionMismatch, "tokens/rewritten lengths disagree");
          }
          lengths.reasoning_tokens = tokens;
          int source = 1;
          for (bool flag : rewritten) lengths.provenance.push_back({flag, flag ? source++ : 0});
          parsed.push_back(std::move(lengths));
        }
        LengthRatioOptions options;
        options.pairing = pairing == "per_source" ? LengthRatioOptions::Pairing::PerSource
                                                  : LengthRatioOptions::Pairing::GroupMean;
        LengthRatioResult result = length_ratios(parsed, options);
        py::dict out;
        out["ratios"] = result.ratios;
        out["rewritten_samples"] = result.rewritten_samples;
        out["skipped_groups"] = result.skipped_zero_denominator;
        out["skipped_samples"] = result.skipped_samples;
        return out;
      },
      py::arg("groups"), py::arg("pairing") = "group_mean");

  m.def(
      "analyze_run", [](const std::string& run_dir) { analyze_run(run_dir); },
      py::arg("run_dir"));
  m.def(
      "write_report",
      [](const std::string& run_dir, const std::string& reference_dir) {
        write_report(run_dir, reference_dir);
      },
      py::arg("run_dir"), py::arg("reference_dir"));

  m.def(
      "kde_summary",
      [](const std::vector<double>& samples) {
        DistributionSummary summary = kde_summary(samples);
        py::dict out;
        out["sample_count"] = summary.sample_count;
        out["median"] = summary.median;
        out["bandwidth"] = summary.bandwidth;
        out["grid"] = summary.grid;
        out["density"] = summary.density;
        out["integral"] = density_integral(summary);
        return out;
      },
      py::arg("samples"));

  m.def("default_config", [] { return serialize_config(RunConfig{}); });
  m.def(
      "train_run",
      [](const std::string& config_text) {
        RunConfig config = parse_config(config_text);
        return train(config).string();
      },
      py::arg("config_text"));
  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint_path, uint64_t task_seed, int task_count, int difficulty,
         int runs, uint64_t eval_seed, int max_new_tokens) {
        Checkpoint checkpoint = load_checkpoint(checkpoint_path);
        ToyPolicyBackend backend(std::move(checkpoint.params));
        std::vector<TaskInstance> tasks = generate_task_set(task_seed, task_count, difficulty);
        SamplingParams params = SamplingParams::rewrite_defaults();
        params.max_new_tokens = max_new_tokens;
        EvalSummary summary = evaluate(backend, tasks, params, runs, eval_seed);
        py::dict out;
        out["accuracy"] = summary.accuracy;
        out["per_run_accuracy"] = summary.per_run_accuracy;
        out["mean_reasoning_tokens"] = summary.mean_reasoning_tokens;
        out["sample_count"] = summary.sample_count;
        return out;
      },
      py::arg("checkpoint_path"), py::arg("task_seed") = 7, py::arg("task_count") = 16,
      py::arg("difficulty") = 0, py::arg("runs") = 4, py::arg("eval_seed") = 0,
      py::arg("max_new_tokens") = 256);

  m.attr("__version__") = "0.1.0";
}
