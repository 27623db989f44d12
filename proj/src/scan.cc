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

#include "temptest/scan.h"

#include <algorithm>

#include "temptest/error.h"

namespace temptest {
namespace {

template <typename InSet>
std::vector<TokenRun> MaximalRuns(const ScoredTokens& scores, int min_run,
                                  InSet in_set) {
  if (min_run < 1) throw ConfigError("min_run must be >= 1");
  std::vector<TokenRun> runs;
  int start = -1;
  for (int i = 0; i <= scores.size(); ++i) {
    const bool in = i < scores.size() && in_set(scores.tokens[i]);
    if (in && start < 0) start = i;
    if (!in && start >= 0) {
      if (i - start >= min_run) runs.push_back({start, i - 1});
      start = -1;
    }
  }
  return runs;
}

void CheckThreshold(double c) {
  if (!(c > 0.0 && c < 1.0)) {
    throw ConfigError("threshold C must be in (0, 1), got " +
                      std::to_string(c));
  }
}

}  // namespace

std::vector<TokenRun> FindTopKRuns(const ScoredTokens& scores, int k,
                                   int min_run) {
  if (k < 1) throw ConfigError("k must be >= 1");
  return MaximalRuns(scores, min_run,
                     [k](const TokenScore& t) { return t.valid && t.rank <= k; });
}

std::vector<TokenRun> FindTopPRuns(const ScoredTokens& scores, int min_run) {
  return MaximalRuns(scores, min_run, [](const TokenScore& t) {
    return t.valid && t.in_nucleus();
  });
}

SuspiciousSpan ClassifySpan(const TokenRun& run, const ScoredTokens& scores,
                            int k, double threshold_C) {
  CheckThreshold(threshold_C);
  if (k != scores.params.k) {
    throw ConfigError("scores carry top-k masses for k = " +
                      std::to_string(scores.params.k) + ", not " +
                      std::to_string(k));
  }
  SuspiciousSpan s;
  s.start = run.start;
  s.end = run.end;
  s.geo_mass = GeoMeanTopKMass(scores, {run.start, run.end + 1});
  s.verdict = s.geo_mass < threshold_C ? SpanVerdict::kSuspicious
                                       : SpanVerdict::kClean;
  return s;
}

SuspiciousSpan ClassifyTopPSpan(const TokenRun& run,
                                const ScoredTokens& scores,
                                double threshold_C) {
  CheckThreshold(threshold_C);
  SuspiciousSpan s;
  s.start = run.start;
  s.end = run.end;
  s.geo_mass = GeoMeanTopPMass(scores, {run.start, run.end + 1});
  s.verdict = s.geo_mass < threshold_C ? SpanVerdict::kSuspicious
                                       : SpanVerdict::kClean;
  return s;
}

ScanReport ScanDocument(const ScoredTokens& scores, const ScanOptions& opts,
                        const std::string& id) {
  CheckThreshold(opts.threshold_C);
  ScanReport report;
  report.id = id;
  for (const auto& run : FindTopKRuns(scores, opts.k, opts.min_run)) {
    report.spans.push_back(ClassifySpan(run, scores, opts.k,
                                        opts.threshold_C));
  }
  report.flagged =
      std::any_of(report.spans.begin(), report.spans.end(), [](const auto& s) {
        return s.verdict == SpanVerdict::kSuspicious;
      });
  return report;
}

ScanReport ScanDocumentTopP(const ScoredTokens& scores, int min_run,
                            double threshold_C, const std::string& id) {
  CheckThreshold(threshold_C);
  ScanReport report;
  report.id = id;
  for (const auto& run : FindTopPRuns(scores, min_run)) {
    report.spans.push_back(ClassifyTopPSpan(run, scores, threshold_C));
  }
  report.flagged =
      std::any_of(report.spans.begin(), report.spans.end(), [](const auto& s) {
        return s.verdict == SpanVerdict::kSuspicious;
      });
  return report;
}

nlohmann::json ScanReportToJson(const ScanReport& report) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : report.spans) {
    spans.push_back({{"start", s.start},
                     {"end", s.end},
                     {"geo_mass", s.geo_mass},
                     {"verdict", s.verdict == SpanVerdict::kSuspicious
                                     ? "suspicious"
                                     : "clean"}});
  }
  return {{"id", report.id}, {"spans", spans}, {"flagged", report.flagged}};
}

}  // namespace temptest
