// Copyright 2026 The TempTest Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Detection evaluation: AUROC, EER calibration, confusion matrices and the
// length audit, plus the experiment runner that ties them to a provider.

#ifndef TEMPTEST_EVAL_H_
#define TEMPTEST_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "temptest/lm.h"
#include "temptest/stats.h"

namespace temptest {

enum class Orientation { kHigherIsMachine, kLowerIsMachine };

std::string OrientationName(Orientation o);
Orientation ParseOrientation(const std::string& name);
Orientation Flip(Orientation o);
Orientation DefaultOrientation(Statistic s);

// True when `score` is classified machine at `threshold`. Strict in both
// orientations, so a score on the threshold is never machine.
bool PredictsMachine(double score, double threshold, Orientation o);

// Mann-Whitney AUROC with scores already oriented so that higher means
// machine. Ties count one half.
double Auroc(std::span<const double> machine_scores,
             std::span<const double> human_scores);
double Auroc(std::span<const double> scores, std::span<const Label> labels,
             Orientation o);

// Standard error used for significance margins: the larger of the
// Hanley-McNeil error at `auc` and the error of the null AUROC = 1/2.
double AurocStandardError(double auc, int64_t n_pos, int64_t n_neg);

struct EerResult {
  double threshold = 0.0;
  double eer = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

// Sweeps thresholds at midpoints of the sorted unique scores plus one point
// below the minimum and one above the maximum.
EerResult EerThreshold(std::span<const double> scores,
                       std::span<const Label> labels, Orientation o);

struct Confusion {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  bool operator==(const Confusion&) const = default;
};

Confusion ComputeConfusion(std::span<const double> scores,
                           std::span<const Label> labels, double threshold,
                           Orientation o);

struct LengthAudit {
  double mean_len_human = 0.0;
  double mean_len_machine = 0.0;
  int64_t n_human = 0;
  int64_t n_machine = 0;
  bool warn = false;
  std::string reason;
};

// Warns when the class mean lengths differ by 10% or more of the smaller
// mean, or when the two length ranges do not overlap.
LengthAudit AuditLengths(std::span<const int> lengths,
                         std::span<const Label> labels);
LengthAudit AuditLengths(const std::vector<SequenceRecord>& records);

struct EvalReport {
  std::string statistic;
  Orientation orientation = Orientation::kHigherIsMachine;
  // Scoring temperature, for statistics that depend on it.
  std::optional<double> tau;
  // "all" or "T=<n>" for per-length reports.
  std::string bucket = "all";
  double auroc = 0.5;
  double auroc_se = 0.0;
  double eer = 0.5;
  double eer_threshold = 0.0;
  Confusion confusion;  // at eer_threshold
  int64_t n_pos = 0;
  int64_t n_neg = 0;
  int64_t n_excluded = 0;
  // Scores are lower bounds from truncated rows.
  bool lower_bound = false;
  LengthAudit length_audit;
};

// Report for one statistic over labeled scores. NaN scores are excluded and
// counted.
EvalReport Evaluate(const std::string& statistic,
                    std::span<const double> scores,
                    std::span<const Label> labels, Orientation o,
                    const LengthAudit& audit);

nlohmann::json EvalReportToJson(const EvalReport& r);
std::string EvalReportCsvHeader();
std::string EvalReportCsvRow(const EvalReport& r);

struct ExperimentConfig {
  std::vector<std::string> datasets;
  nlohmann::json provider;
  std::vector<Statistic> statistics;
  std::vector<double> taus = {0.8};
  int k = 50;
  double p = 0.95;
  std::vector<std::pair<Statistic, Orientation>> orientation_overrides;
  bool allow_truncated = false;
  int threads = 0;  // 0 = hardware concurrency
  std::string output_dir;

  static ExperimentConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
  Orientation OrientationFor(Statistic s) const;
};

struct SweepRow {
  double tau = 1.0;
  std::string statistic;
  double auroc = 0.5;
};

struct ExperimentResult {
  std::vector<EvalReport> reports;
  std::vector<SweepRow> sweep;
  // One entry per (tau, sequence), tau-major, input order within a tau.
  std::vector<SequenceScore> scores;
  bool truncated = false;
  int64_t n_unscorable = 0;
  LengthAudit length_audit;
};

// Scores every record once per configured tau from a single provider pass
// and evaluates each statistic. Relative paths in the config resolve
// against `base_dir`.
ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const std::filesystem::path& base_dir);

// Writes report.json, report.csv and scores.csv into `dir`; returns the
// paths written.
std::vector<std::filesystem::path> WriteExperimentOutputs(
    const ExperimentResult& result, const ExperimentConfig& config,
    const std::filesystem::path& dir);

nlohmann::json ExperimentResultToJson(const ExperimentResult& result,
                                      const ExperimentConfig& config);

}  // namespace temptest

#endif  // TEMPTEST_EVAL_H_
