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

#include "temptest/stats.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "temptest/decode.h"
#include "temptest/error.h"
#include "temptest/logmath.h"

namespace temptest {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void RequireScorable(const ScoredTokens& s) {
  if (s.tokens.empty()) throw ConfigError("empty score list");
  if (!s.valid()) {
    throw UnscorableError("sequence contains a zero-probability token");
  }
}

double Mean(const ScoredTokens& s, double TokenScore::*field) {
  RequireScorable(s);
  double sum = 0.0;
  for (const auto& t : s.tokens) sum += t.*field;
  return sum / s.size();
}

}  // namespace

void ScoringParams::Validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ConfigError("scoring tau must be in (0, 1], got " +
                      std::to_string(tau));
  }
  if (k < 1) throw ConfigError("scoring k must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("scoring p must be in (0, 1], got " + std::to_string(p));
  }
}

double LogTopKMass(const CondDist& row, std::span<const TokenId> order,
                   int k) {
  const int n = row.size();
  k = std::min(k, n);
  if (k == n) return 0.0;
  std::vector<double> head(k);
  for (int i = 0; i < k; ++i) head[i] = row.logprob(order[i]);
  return std::min(0.0, LogSumExp(head));
}

double TokenScore::topk_mass() const { return std::exp(log_topk_mass); }
double TokenScore::topp_mass() const { return std::exp(log_topp_mass); }

bool ScoredTokens::valid() const {
  return std::all_of(tokens.begin(), tokens.end(),
                     [](const TokenScore& t) { return t.valid; });
}

bool ScoredTokens::truncated() const {
  return std::any_of(tokens.begin(), tokens.end(),
                     [](const TokenScore& t) { return t.truncated; });
}

TokenScore ScoreToken(const CondDist& row, TokenId token,
                      const ScoringParams& params) {
  if (token < 0 || token >= row.size()) {
    throw ConfigError("token " + std::to_string(token) +
                      " outside row of size " + std::to_string(row.size()));
  }
  const auto lp = row.logprobs();
  const int n = row.size();
  TokenScore ts;
  ts.token = token;
  ts.logprob = lp[token];
  ts.valid = ts.logprob != kNegInf;

  int rank = 1;
  for (int v = 0; v < n; ++v) {
    if (lp[v] > lp[token] || (lp[v] == lp[token] && v < token)) ++rank;
  }
  ts.rank = rank;

  const double inv_tau = 1.0 / params.tau;
  // Same form as from raw logits, so tau = 1 cancels to exactly zero.
  ts.log_tempnorm_step =
      ScaledLogSumExp(lp, inv_tau) - inv_tau * LogSumExp(lp);

  double mu = 0.0;
  for (int v = 0; v < n; ++v) {
    if (lp[v] != kNegInf) mu += std::exp(lp[v]) * lp[v];
  }
  double var = 0.0;
  for (int v = 0; v < n; ++v) {
    if (lp[v] != kNegInf) {
      const double d = lp[v] - mu;
      var += std::exp(lp[v]) * d * d;
    }
  }
  ts.mu_tilde_step = mu;
  ts.var_step = var;
  ts.entropy = mu == 0.0 ? 0.0 : -mu;

  const auto order = RankOrder(row);
  ts.log_topk_mass = LogTopKMass(row, order, params.k);

  ts.nucleus_size = NucleusSize(row, order, params.p);
  std::vector<double> head(ts.nucleus_size);
  for (int i = 0; i < ts.nucleus_size; ++i) head[i] = lp[order[i]];
  ts.log_topp_mass =
      ts.nucleus_size == n ? 0.0 : std::min(0.0, LogSumExp(head));
  return ts;
}

TokenScore ScoreTokenTruncated(const TopNRow& row, TokenId token,
                               const ScoringParams& params) {
  const int n = static_cast<int>(row.top.size());
  if (n == 0) throw ConfigError("truncated row has no entries");
  TokenScore ts;
  ts.token = token;
  ts.truncated = true;
  ts.logprob = row.observed_logprob;
  ts.valid = ts.logprob != kNegInf;

  std::vector<double> lp(n);
  double kept = 0.0;
  for (int i = 0; i < n; ++i) {
    lp[i] = row.top[i].second;
    kept += std::exp(lp[i]);
  }
  ts.residual_mass = std::max(0.0, 1.0 - kept);

  ts.rank = n + 1;
  ts.rank_exact = false;
  for (int i = 0; i < n; ++i) {
    if (row.top[i].first == token) {
      ts.rank = i + 1;
      ts.rank_exact = true;
      break;
    }
  }

  // Partial sums of non-negative terms: lower bounds on the full sums.
  ts.log_tempnorm_step = ScaledLogSumExp(lp, 1.0 / params.tau);
  double neg_entropy = 0.0;
  for (double v : lp) neg_entropy += std::exp(v) * v;
  ts.entropy = -neg_entropy;
  ts.mu_tilde_step = std::numeric_limits<double>::quiet_NaN();
  ts.var_step = std::numeric_limits<double>::quiet_NaN();

  const int k = std::min(params.k, row.vocab_size > 0 ? row.vocab_size : n);
  ts.topk_exact = k <= n;
  ts.log_topk_mass =
      std::min(0.0, LogSumExp(std::span<const double>(lp).first(
                        std::min(k, n))));

  const double target = params.p * (1.0 - 1e-12);
  double cum = 0.0;
  int size = 0;
  for (; size < n && cum < target; ++size) cum += std::exp(lp[size]);
  ts.topp_exact = cum >= target;
  ts.nucleus_size = ts.topp_exact ? size : n + 1;
  ts.log_topp_mass =
      std::min(0.0, LogSumExp(std::span<const double>(lp).first(size)));
  return ts;
}

ScoredTokens ScoreTokens(std::span<const CondDist* const> rows,
                         std::span<const TokenId> tokens,
                         const ScoringParams& params) {
  params.Validate();
  if (rows.size() != tokens.size()) {
    throw ConfigError("row count " + std::to_string(rows.size()) +
                      " does not match token count " +
                      std::to_string(tokens.size()));
  }
  ScoredTokens out;
  out.params = params;
  out.tokens.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    out.tokens.push_back(ScoreToken(*rows[i], tokens[i], params));
  }
  return out;
}

ScoredTokens ScoreTokens(std::span<const CondDist> rows,
                         std::span<const TokenId> tokens,
                         const ScoringParams& params) {
  std::vector<const CondDist*> ptrs;
  ptrs.reserve(rows.size());
  for (const auto& r : rows) ptrs.push_back(&r);
  return ScoreTokens(std::span<const CondDist* const>(ptrs), tokens, params);
}

ScoredTokens ScoreWithModel(const ToyLM& model,
                            std::span<const TokenId> tokens,
                            const ScoringParams& params,
                            std::span<const TokenId> prompt) {
  for (const auto seq : {prompt, tokens}) {
    for (TokenId t : seq) {
      if (!model.vocab().Contains(t)) {
        throw ConfigError("token " + std::to_string(t) +
                          " outside vocabulary");
      }
    }
  }
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::vector<const CondDist*> rows;
  rows.reserve(tokens.size());
  for (TokenId t : tokens) {
    rows.push_back(&model.Next(context));
    context.push_back(t);
  }
  return ScoreTokens(std::span<const CondDist* const>(rows), tokens, params);
}

double PerTokenLogLikelihood(const ScoredTokens& s) {
  return Mean(s, &TokenScore::logprob);
}

double PerTokenLogRank(const ScoredTokens& s) {
  RequireScorable(s);
  double sum = 0.0;
  for (const auto& t : s.tokens) sum += std::log(static_cast<double>(t.rank));
  return sum / s.size();
}

double PerTokenEntropy(const ScoredTokens& s) {
  return Mean(s, &TokenScore::entropy);
}

double RawLogP(const ScoredTokens& s) {
  RequireScorable(s);
  double sum = 0.0;
  for (const auto& t : s.tokens) sum += t.logprob;
  return sum;
}

double RawLogTempNorm(const ScoredTokens& s) {
  RequireScorable(s);
  double sum = 0.0;
  for (const auto& t : s.tokens) sum += t.log_tempnorm_step;
  return sum;
}

double RawLogTopKMass(const ScoredTokens& s) {
  RequireScorable(s);
  double sum = 0.0;
  for (const auto& t : s.tokens) sum += t.log_topk_mass;
  return sum;
}

double LogTempNorm(const ScoredTokens& s, double tau) {
  if (tau != s.params.tau) {
    throw ConfigError("scores were computed with tau " +
                      std::to_string(s.params.tau) + ", not " +
                      std::to_string(tau));
  }
  return RawLogTempNorm(s) / s.size();
}

double TempTest(const ScoredTokens& s, double tau) {
  if (tau != s.params.tau) {
    throw ConfigError("scores were computed with tau " +
                      std::to_string(s.params.tau) + ", not " +
                      std::to_string(tau));
  }
  // Formed from raw sums so its sign matches the posterior log-odds exactly.
  const double coef = 1.0 / tau - 1.0;
  return (RawLogTempNorm(s) - coef * RawLogP(s)) / s.size();
}

double FastDetectAnalytic(const ScoredTokens& s) {
  RequireScorable(s);
  if (s.truncated()) {
    throw CapabilityError(
        "fastdetect needs full distributions; truncated rows give no bound");
  }
  double mu = 0.0;
  double var = 0.0;
  for (const auto& t : s.tokens) {
    mu += t.mu_tilde_step;
    var += t.var_step;
  }
  const double T = s.size();
  const double sigma = std::sqrt(var) / T;
  if (!(sigma > 0.0)) {
    throw UnscorableError("fastdetect undefined: every row is degenerate");
  }
  return (PerTokenLogLikelihood(s) - mu / T) / sigma;
}

namespace {

double GeoMean(const ScoredTokens& s, TokenSpan span,
               double TokenScore::*log_field) {
  if (span.length() <= 0) throw ConfigError("empty span");
  if (span.begin < 0 || span.end > s.size()) {
    throw ConfigError("span outside sequence");
  }
  double sum = 0.0;
  for (int i = span.begin; i < span.end; ++i) sum += s.tokens[i].*log_field;
  return std::exp(sum / span.length());
}

}  // namespace

double GeoMeanTopKMass(const ScoredTokens& s, TokenSpan span) {
  return GeoMean(s, span, &TokenScore::log_topk_mass);
}

double GeoMeanTopKMass(const ScoredTokens& s) {
  return GeoMeanTopKMass(s, {0, s.size()});
}

double GeoMeanTopPMass(const ScoredTokens& s, TokenSpan span) {
  return GeoMean(s, span, &TokenScore::log_topp_mass);
}

double GeoMeanTopPMass(const ScoredTokens& s) {
  return GeoMeanTopPMass(s, {0, s.size()});
}

std::string StatisticName(Statistic s) {
  switch (s) {
    case Statistic::kLogLik:
      return "loglik";
    case Statistic::kLogRank:
      return "logrank";
    case Statistic::kEntropy:
      return "entropy";
    case Statistic::kLogTempNorm:
      return "log_tempnorm";
    case Statistic::kTempTest:
      return "temptest";
    case Statistic::kFastDetect:
      return "fastdetect";
    case Statistic::kGeoTopK:
      return "geo_topk";
    case Statistic::kGeoTopP:
      return "geo_topp";
  }
  return "";
}

Statistic ParseStatistic(const std::string& name) {
  for (Statistic s : kAllStatistics) {
    if (StatisticName(s) == name) return s;
  }
  throw ConfigError("unknown statistic '" + name + "'");
}

double SequenceScore::value(Statistic s) const {
  switch (s) {
    case Statistic::kLogLik:
      return per_token_loglik;
    case Statistic::kLogRank:
      return per_token_logrank;
    case Statistic::kEntropy:
      return per_token_entropy;
    case Statistic::kLogTempNorm:
      return log_tempnorm;
    case Statistic::kTempTest:
      return temptest;
    case Statistic::kFastDetect:
      return fastdetect_analytic;
    case Statistic::kGeoTopK:
      return geo_mean_topk_mass;
    case Statistic::kGeoTopP:
      return geo_mean_topp_mass;
  }
  return kNaN;
}

SequenceScore Aggregate(const ScoredTokens& s, const std::string& id,
                        Label label) {
  SequenceScore out;
  out.id = id;
  out.label = label;
  out.T = s.size();
  out.params = s.params;
  out.scorable = !s.tokens.empty() && s.valid();
  out.truncated = s.truncated();
  for (const auto& t : s.tokens) {
    out.max_residual_mass = std::max(out.max_residual_mass, t.residual_mass);
  }

  double* fields[] = {&out.per_token_loglik,    &out.per_token_logrank,
                      &out.per_token_entropy,   &out.log_tempnorm,
                      &out.temptest,            &out.fastdetect_analytic,
                      &out.geo_mean_topk_mass,  &out.geo_mean_topp_mass};
  if (!out.scorable) {
    for (double* f : fields) *f = kNaN;
    return out;
  }

  const double tau = s.params.tau;
  out.per_token_loglik = PerTokenLogLikelihood(s);
  out.per_token_logrank = PerTokenLogRank(s);
  out.per_token_entropy = PerTokenEntropy(s);
  out.log_tempnorm = LogTempNorm(s, tau);
  out.temptest = TempTest(s, tau);
  out.geo_mean_topk_mass = GeoMeanTopKMass(s);
  out.geo_mean_topp_mass = GeoMeanTopPMass(s);
  try {
    out.fastdetect_analytic = FastDetectAnalytic(s);
  } catch (const Error&) {
    out.fastdetect_analytic = kNaN;
  }

  for (Statistic st : kAllStatistics) {
    const auto i = static_cast<size_t>(st);
    out.defined[i] = !std::isnan(*fields[i]);
    out.exact[i] = out.defined[i];
  }
  if (out.truncated) {
    const auto all = [&](bool TokenScore::*flag) {
      return std::all_of(s.tokens.begin(), s.tokens.end(),
                         [&](const TokenScore& t) { return t.*flag; });
    };
    const bool full = out.max_residual_mass == 0.0;
    out.exact[static_cast<size_t>(Statistic::kLogRank)] =
        all(&TokenScore::rank_exact);
    out.exact[static_cast<size_t>(Statistic::kEntropy)] = full;
    out.exact[static_cast<size_t>(Statistic::kLogTempNorm)] = full;
    out.exact[static_cast<size_t>(Statistic::kTempTest)] = full;
    out.exact[static_cast<size_t>(Statistic::kGeoTopK)] =
        all(&TokenScore::topk_exact);
    out.exact[static_cast<size_t>(Statistic::kGeoTopP)] =
        all(&TokenScore::topp_exact);
  }
  return out;
}

namespace {

std::string FormatG9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string ScoreCsvHeader(bool truncated) {
  std::string h =
      "id,label,T,tau,k,p,loglik,logrank,entropy,log_tempnorm,temptest,"
      "fastdetect,geo_topk,geo_topp";
  if (truncated) h += ",residual_mass";
  return h;
}

std::string ScoreCsvRow(const SequenceScore& s, bool truncated) {
  std::string row = CsvField(s.id) + "," + LabelName(s.label) + "," +
                    std::to_string(s.T) + "," + FormatG9(s.params.tau) + "," +
                    std::to_string(s.params.k) + "," + FormatG9(s.params.p);
  for (Statistic st : kAllStatistics) row += "," + FormatG9(s.value(st));
  if (truncated) row += "," + FormatG9(s.max_residual_mass);
  return row;
}

}  // namespace temptest
