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

// Scanning long documents for passages that lie entirely inside the top-k
// set (or the nucleus), and scoring each passage by the geometric mean of
// its per-step truncation masses. Small masses along an in-set passage are
// evidence of truncated sampling.

#ifndef TEMPTEST_SCAN_H_
#define TEMPTEST_SCAN_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "temptest/stats.h"

namespace temptest {

enum class SpanVerdict { kSuspicious, kClean };

struct SuspiciousSpan {
  int start = 0;
  int end = 0;  // inclusive
  double geo_mass = 1.0;
  SpanVerdict verdict = SpanVerdict::kClean;

  int length() const { return end - start + 1; }
};

struct ScanOptions {
  int k = 50;
  int min_run = 30;
  double threshold_C = 0.9;
};

// Inclusive [start, end] run of consecutive in-set tokens.
struct TokenRun {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  bool operator==(const TokenRun&) const = default;
};

// Maximal runs of tokens with rank <= k, at least `min_run` long, sorted by
// start. Requires scores computed with the same k.
std::vector<TokenRun> FindTopKRuns(const ScoredTokens& scores, int k,
                                   int min_run = 30);
// Same for nucleus membership (rank <= nucleus size at that step).
std::vector<TokenRun> FindTopPRuns(const ScoredTokens& scores,
                                   int min_run = 30);

// Suspicious iff the geometric-mean top-k mass is below threshold_C.
SuspiciousSpan ClassifySpan(const TokenRun& run, const ScoredTokens& scores,
                            int k, double threshold_C);
SuspiciousSpan ClassifyTopPSpan(const TokenRun& run,
                                const ScoredTokens& scores,
                                double threshold_C);

struct ScanReport {
  std::string id;
  std::vector<SuspiciousSpan> spans;
  bool flagged = false;
};

ScanReport ScanDocument(const ScoredTokens& scores, const ScanOptions& opts,
                        const std::string& id = "");
ScanReport ScanDocumentTopP(const ScoredTokens& scores, int min_run,
                            double threshold_C, const std::string& id = "");

// {"id", "spans": [{"start","end","geo_mass","verdict"}], "flagged"}
nlohmann::json ScanReportToJson(const ScanReport& report);

}  // namespace temptest

#endif  // TEMPTEST_SCAN_H_
