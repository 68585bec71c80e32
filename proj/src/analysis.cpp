#include "selfrw/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfrw/errors.hpp"
#include "selfrw/num_text.hpp"
#include "selfrw/runner.hpp"

namespace selfrw {

namespace fs = std::filesystem;
using json = nlohmann::json;

GroupLengths group_lengths(const GroupRollout& group) {
  GroupLengths out;
  out.gate = group.gate_decision;
  for (const RolloutSample& sample : group.samples) {
    out.reasoning_tokens.push_back(sample.reasoning_token_count);
    out.provenance.push_back(sample.provenance);
  }
  return out;
}

LengthRatioResult length_ratios(const std::vector<GroupLengths>& groups,
                                const LengthRatioOptions& options) {
  LengthRatioResult result;
  for (const GroupLengths& group : groups) {
    size_t n = group.reasoning_tokens.size();
    size_t half = n / 2;
    bool has_rewrites = false;
    for (const Provenance& p : group.provenance) has_rewrites = has_rewrites || p.rewritten;
    if (!has_rewrites) continue;

    double first_half_mean = 0.0;
    for (size_t i = 0; i < half; ++i) first_half_mean += group.reasoning_tokens[i];
    first_half_mean /= static_cast<double>(half);

    if (options.pairing == LengthRatioOptions::Pairing::GroupMean && first_half_mean <= 0.0) {
      for (const Provenance& p : group.provenance) {
        if (p.rewritten) {
          ++result.rewritten_samples;
          ++result.skipped_samples;
        }
      }
      ++result.skipped_zero_denominator;
      continue;
    }
    for (size_t i = 0; i < n; ++i) {
      if (!group.provenance[i].rewritten) continue;
      ++result.rewritten_samples;
      double denominator = first_half_mean;
      if (options.pairing == LengthRatioOptions::Pairing::PerSource) {
        int source = group.provenance[i].source_index;  // 1-based
        denominator = source >= 1 && static_cast<size_t>(source) <= half
                          ? group.reasoning_tokens[static_cast<size_t>(source - 1)]
                          : 0.0;
        if (denominator <= 0.0) {
          ++result.skipped_zero_denominator;
          ++result.skipped_samples;
          continue;
        }
      }
      result.ratios.push_back(static_cast<double>(group.reasoning_tokens[i]) / denominator);
    }
  }
  return result;
}

LengthRatioResult length_ratios(const std::vector<GroupRollout>& rollouts,
                                const LengthRatioOptions& options) {
  std::vector<GroupLengths> groups;
  groups.reserve(rollouts.size());
  for (const GroupRollout& group : rollouts) groups.push_back(group_lengths(group));
  return length_ratios(groups, options);
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  double position = q * static_cast<double>(sorted.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(position));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = position - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

DistributionSummary kde_summary(const std::vector<double>& samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "kde over no samples");

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();

  DistributionSummary summary;
  summary.sample_count = static_cast<int>(n);
  summary.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  double mean = 0.0;
  for (double x : sorted) mean += x;
  mean /= static_cast<double>(n);
  double variance = 0.0;
  for (double x : sorted) variance += (x - mean) * (x - mean);
  double sample_std = n > 1 ? std::sqrt(variance / static_cast<double>(n - 1)) : 0.0;
  double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);

  // Silverman's rule of thumb, with fallbacks for degenerate spreads.
  double spread = sample_std;
  if (iqr > 0.0) spread = std::min(spread > 0.0 ? spread : iqr, iqr / 1.34);
  double bandwidth = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (bandwidth <= 0.0) bandwidth = 0.1 * std::max(1.0, std::abs(mean));
  summary.bandwidth = bandwidth;

  const int kGridPoints = 512;
  double lo = sorted.front() - 4.0 * bandwidth;
  double hi = sorted.back() + 4.0 * bandwidth;
  summary.grid.resize(kGridPoints);
  summary.density.resize(kGridPoints);
  const double step = (hi - lo) / static_cast<double>(kGridPoints - 1);
  const double norm = 1.0 / (static_cast<double>(n) * bandwidth * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < kGridPoints; ++g) {
    double x = lo + step * g;
    double density = 0.0;
    for (double value : sorted) {
      double z = (x - value) / bandwidth;
      density += std::exp(-0.5 * z * z);
    }
    summary.grid[static_cast<size_t>(g)] = x;
    summary.density[static_cast<size_t>(g)] = density * norm;
  }
  return summary;
}

double density_integral(const DistributionSummary& summary) {
  double integral = 0.0;
  for (size_t i = 1; i < summary.grid.size(); ++i) {
    integral += 0.5 * (summary.density[i] + summary.density[i - 1]) *
                (summary.grid[i] - summary.grid[i - 1]);
  }
  return integral;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_group_lengths(const fs::path& path, int64_t step,
                         const std::vector<GroupLengths>& groups, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  json record;
  record["version"] = 1;
  record["step"] = step;
  json group_array = json::array();
  for (const GroupLengths& group : groups) {
    json g;
    g["gate"] = to_string(group.gate);
    json samples = json::array();
    for (size_t i = 0; i < group.reasoning_tokens.size(); ++i) {
      samples.push_back({{"tokens", group.reasoning_tokens[i]},
                         {"rewritten", group.provenance[i].rewritten},
                         {"source", group.provenance[i].source_index}});
    }
    g["samples"] = std::move(samples);
    group_array.push_back(std::move(g));
  }
  record["groups"] = std::move(group_array);
  out << record.dump() << "\n";
}

std::vector<GroupLengths> read_group_lengths(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingInputs, "no length records at " + path.string());
  std::vector<GroupLengths> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json record = json::parse(line);
    for (const json& g : record.at("groups")) {
      GroupLengths lengths;
      lengths.gate =
          g.at("gate").get<std::string>() == "rewrite" ? GateDecision::Rewrite : GateDecision::Vanilla;
      for (const json& sample : g.at("samples")) {
        lengths.reasoning_tokens.push_back(sample.at("tokens").get<int>());
        Provenance provenance;
        provenance.rewritten = sample.at("rewritten").get<bool>();
        provenance.source_index = sample.at("source").get<int>();
        lengths.provenance.push_back(provenance);
      }
      groups.push_back(std::move(lengths));
    }
  }
  return groups;
}

void analyze_run(const fs::path& run_dir) {
  std::vector<GroupLengths> groups = read_group_lengths(run_dir / "lengths.jsonl");
  LengthRatioResult ratios = length_ratios(groups);
  if (ratios.skipped_zero_denominator > 0) {
    std::fprintf(stderr,
                 "warning: skipped %d group(s) with a zero-length first half (%d rewritten "
                 "samples dropped)\n",
                 ratios.skipped_zero_denominator, ratios.skipped_samples);
  }
  fs::path out_dir = run_dir / "analysis";
  fs::create_directories(out_dir);

  {
    std::ofstream out(out_dir / "ratios.txt");
    for (double ratio : ratios.ratios) out << format_double(ratio) << "\n";
  }
  if (!ratios.ratios.empty()) {
    DistributionSummary summary = kde_summary(ratios.ratios);
    std::ofstream xy(out_dir / "kde.xy");
    for (size_t i = 0; i < summary.grid.size(); ++i) {
      xy << format_double(summary.grid[i]) << " " << format_double(summary.density[i]) << "\n";
    }
    std::ofstream csv(out_dir / "summary.csv");
    csv << "ratio_count,median,bandwidth,integral,rewritten_samples,skipped_groups\n";
    csv << summary.sample_count << "," << format_double(summary.median) << ","
        << format_double(summary.bandwidth) << "," << format_double(density_integral(summary))
        << "," << ratios.rewritten_samples << "," << ratios.skipped_zero_denominator << "\n";
  } else {
    std::ofstream csv(out_dir / "summary.csv");
    csv << "ratio_count,median,bandwidth,integral,rewritten_samples,skipped_groups\n";
    csv << "0,0,0,0," << ratios.rewritten_samples << "," << ratios.skipped_zero_denominator
        << "\n";
  }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

std::string format_signed_delta(double current, double reference) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f", current - reference);
  return buf;
}

std::string format_percent_delta(double current, double reference) {
  long percent = std::lround((current - reference) / reference * 100.0);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+ld%%", percent);
  return buf;
}

void write_report(const fs::path& run_dir, const fs::path& reference_dir) {
  EvalSummary current = read_eval_summary(run_dir / "eval");
  EvalSummary reference = read_eval_summary(reference_dir / "eval");

  fs::path out_dir = run_dir / "report";
  fs::create_directories(out_dir);

  auto one_decimal = [](double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return std::string(buf);
  };

  {
    // Accuracy and judge scores on the 100-point scale, length in tokens.
    std::ofstream out(out_dir / "main.csv");
    out << "metric,current,reference,delta\n";
    double cur_acc = current.accuracy * 100.0;
    double ref_acc = reference.accuracy * 100.0;
    out << "accuracy," << one_decimal(cur_acc) << "," << one_decimal(ref_acc) << ","
        << format_signed_delta(cur_acc, ref_acc) << "\n";
    out << "length," << one_decimal(current.mean_reasoning_tokens) << ","
        << one_decimal(reference.mean_reasoning_tokens) << ","
        << format_percent_delta(current.mean_reasoning_tokens, reference.mean_reasoning_tokens)
        << "\n";
    if (current.judge && reference.judge) {
      out << "judge," << one_decimal(current.judge->overall_scaled) << ","
          << one_decimal(reference.judge->overall_scaled) << ","
          << format_signed_delta(current.judge->overall_scaled, reference.judge->overall_scaled)
          << "\n";
    }
  }
  if (current.judge && reference.judge) {
    std::ofstream out(out_dir / "aspects.csv");
    out << "aspect,current,reference,delta\n";
    auto row = [&](const char* name, double cur, double ref) {
      out << name << "," << one_decimal(cur) << "," << one_decimal(ref) << ","
          << format_signed_delta(cur, ref) << "\n";
    };
    row("over_thinking", current.judge->over_scaled, reference.judge->over_scaled);
    row("under_thinking", current.judge->under_scaled, reference.judge->under_scaled);
    row("redundant_thinking", current.judge->redundant_scaled, reference.judge->redundant_scaled);
    row("disordered_thinking", current.judge->disordered_scaled,
        reference.judge->disordered_scaled);
    row("overall", current.judge->overall_scaled, reference.judge->overall_scaled);
  }
  // KDE plot data rides along when the analysis step has run.
  fs::path kde = run_dir / "analysis" / "kde.xy";
  if (fs::exists(kde)) {
    fs::copy_file(kde, out_dir / "kde.xy", fs::copy_options::overwrite_existing);
  }
}

}  // namespace selfrw
