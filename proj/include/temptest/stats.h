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

// Per-token and per-sequence detection statistics.
//
// All per-sequence values are per-token means (divided by T) in natural log.
// Raw sums over positions are exposed separately for the posterior
// computations, which work with un-normalized log P(w) and log eps_tau(w).

#ifndef TEMPTEST_STATS_H_
#define TEMPTEST_STATS_H_

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "temptest/lm.h"

namespace temptest {

struct ScoringParams {
  double tau = 0.8;
  // Clamped to the vocabulary size when scoring; k >= N means the full
  // vocabulary.
  int k = 50;
  double p = 0.95;

  void Validate() const;
};

struct TokenScore {
  TokenId token = 0;
  double logprob = 0.0;
  // 1-based position under (descending probability, ascending id).
  int rank = 1;
  double entropy = 0.0;
  // log sum_v p(v)^(1/tau).
  double log_tempnorm_step = 0.0;
  double log_topk_mass = 0.0;
  double log_topp_mass = 0.0;
  int nucleus_size = 1;
  // sum_v p log p and sum_v p (log p - mu)^2.
  double mu_tilde_step = 0.0;
  double var_step = 0.0;

  // False for tokens with zero probability; such a sequence is unscorable.
  bool valid = true;

  // Set when the row came from a top-n-only provider. The inexact fields are
  // then lower bounds (rank, entropy, log_tempnorm_step, top-k/top-p mass)
  // or undefined (mu_tilde_step, var_step).
  bool truncated = false;
  bool rank_exact = true;
  bool topk_exact = true;
  bool topp_exact = true;
  double residual_mass = 0.0;

  double topk_mass() const;
  double topp_mass() const;
  bool in_topk(int k) const { return rank <= k; }
  bool in_nucleus() const { return rank <= nucleus_size; }
};

struct ScoredTokens {
  std::vector<TokenScore> tokens;
  ScoringParams params;

  int size() const { return static_cast<int>(tokens.size()); }
  bool valid() const;
  bool truncated() const;
};

// A row from a provider that only returns its n most probable tokens, sorted
// by descending log-probability (ties by ascending id), plus the observed
// token's own log-probability.
struct TopNRow {
  std::vector<std::pair<TokenId, double>> top;
  double observed_logprob = 0.0;
  int vocab_size = 0;
};

// rows[i] is the distribution from which tokens[i] was drawn.
ScoredTokens ScoreTokens(std::span<const CondDist> rows,
                         std::span<const TokenId> tokens,
                         const ScoringParams& params);
ScoredTokens ScoreTokens(std::span<const CondDist* const> rows,
                         std::span<const TokenId> tokens,
                         const ScoringParams& params);

TokenScore ScoreToken(const CondDist& row, TokenId token,
                      const ScoringParams& params);
// Lower-bound scoring from a truncated row.
TokenScore ScoreTokenTruncated(const TopNRow& row, TokenId token,
                               const ScoringParams& params);

// Scores a sequence directly against the toy model (prompt as context).
ScoredTokens ScoreWithModel(const ToyLM& model,
                            std::span<const TokenId> tokens,
                            const ScoringParams& params,
                            std::span<const TokenId> prompt = {});

double PerTokenLogLikelihood(const ScoredTokens& s);
double PerTokenLogRank(const ScoredTokens& s);
double PerTokenEntropy(const ScoredTokens& s);
// Throws ConfigError when `tau` differs from the scoring tau.
double LogTempNorm(const ScoredTokens& s, double tau);
double TempTest(const ScoredTokens& s, double tau);
// (loglik - mu~) / sigma~, sigma~ = sqrt(sum_i Var_i) / T.
double FastDetectAnalytic(const ScoredTokens& s);

// Half-open token range [begin, end).
struct TokenSpan {
  int begin = 0;
  int end = 0;
  int length() const { return end - begin; }
};

double GeoMeanTopKMass(const ScoredTokens& s, TokenSpan span);
double GeoMeanTopKMass(const ScoredTokens& s);
double GeoMeanTopPMass(const ScoredTokens& s, TokenSpan span);
double GeoMeanTopPMass(const ScoredTokens& s);

// log of the total probability of the first k tokens of `order` (a RankOrder
// of `row`); exactly 0 when k covers the vocabulary.
double LogTopKMass(const CondDist& row, std::span<const TokenId> order, int k);

// Un-normalized sums for the posterior module.
double RawLogP(const ScoredTokens& s);
double RawLogTempNorm(const ScoredTokens& s);
double RawLogTopKMass(const ScoredTokens& s);

enum class Statistic {
  kLogLik,
  kLogRank,
  kEntropy,
  kLogTempNorm,
  kTempTest,
  kFastDetect,
  kGeoTopK,
  kGeoTopP,
};

inline constexpr std::array<Statistic, 8> kAllStatistics = {
    Statistic::kLogLik,      Statistic::kLogRank,    Statistic::kEntropy,
    Statistic::kLogTempNorm, Statistic::kTempTest,   Statistic::kFastDetect,
    Statistic::kGeoTopK,     Statistic::kGeoTopP};

std::string StatisticName(Statistic s);
Statistic ParseStatistic(const std::string& name);

// Per-sequence aggregate. Statistics that are undefined for the sequence
// (unscorable tokens, sigma~ = 0, truncated rows) hold NaN and are marked
// in `exact`/`defined`.
struct SequenceScore {
  std::string id;
  Label label = Label::kHuman;
  int T = 0;
  ScoringParams params;
  bool scorable = true;
  bool truncated = false;
  double max_residual_mass = 0.0;

  double per_token_loglik = 0.0;
  double per_token_logrank = 0.0;
  double per_token_entropy = 0.0;
  double log_tempnorm = 0.0;
  double temptest = 0.0;
  double fastdetect_analytic = 0.0;
  double geo_mean_topk_mass = 0.0;
  double geo_mean_topp_mass = 0.0;

  // Indexed by Statistic. `defined` false means the value is NaN; `exact`
  // false means the value is a lower bound from truncated rows.
  std::array<bool, 8> defined{};
  std::array<bool, 8> exact{};

  double value(Statistic s) const;
};

SequenceScore Aggregate(const ScoredTokens& s, const std::string& id,
                        Label label);

// Header and row of the score CSV; 9 significant digits.
std::string ScoreCsvHeader(bool truncated);
std::string ScoreCsvRow(const SequenceScore& s, bool truncated);

}  // namespace temptest

#endif  // TEMPTEST_STATS_H_
