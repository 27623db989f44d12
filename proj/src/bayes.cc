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

#include "temptest/bayes.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "temptest/error.h"
#include "temptest/logmath.h"
#include "temptest/random.h"

namespace temptest {

PosteriorResult PosteriorTemperature(double raw_logP, double raw_log_eps,
                                     double tau, double prior_machine) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError(
        "posterior needs tau in (0, 1); at tau = 1 both branches coincide");
  }
  if (!(prior_machine > 0.0 && prior_machine < 1.0)) {
    throw ConfigError("prior must be in (0, 1)");
  }
  PosteriorResult r;
  r.raw_logP = raw_logP;
  r.raw_log_eps = raw_log_eps;
  r.tau = tau;
  r.prior_machine = prior_machine;
  // log Q(w) - log P(w) = (1/tau - 1) log P(w) - log eps(w).
  const double coef = 1.0 / tau - 1.0;
  const double log_lr = -(raw_log_eps - coef * raw_logP);
  r.log_odds = log_lr;
  if (prior_machine != 0.5) {
    r.log_odds += std::log(prior_machine) - std::log1p(-prior_machine);
  }
  r.posterior = Sigmoid(r.log_odds);
  return r;
}

double TempTestThreshold(double C, int T) {
  if (!(C > 0.0 && C < 1.0)) throw ConfigError("C must be in (0, 1)");
  if (T < 1) throw ConfigError("T must be >= 1");
  if (C == 0.5) return 0.0;
  return std::log(1.0 / C - 1.0) / T;
}

bool ThresholdEquivalence(double temptest_score, double tau, double C,
                          int T) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
  return temptest_score < TempTestThreshold(C, T);
}

KlPair KlPureVsTemp(const ToyLM& model, double tau, int length,
                    uint64_t cap) {
  const auto pure = EnumerateSeqDist(model, DecodingStrategy::Pure(), length,
                                     {}, cap);
  const auto temp = EnumerateSeqDist(
      model, DecodingStrategy::Temperature(tau), length, {}, cap);
  if (pure.entries().size() != temp.entries().size()) {
    throw ConfigError("pure and temperature supports differ");
  }
  KlPair kl;
  for (size_t i = 0; i < pure.entries().size(); ++i) {
    const double lp = pure.entries()[i].logprob;
    const double lq = temp.entries()[i].logprob;
    kl.kl_pq += std::exp(lp) * (lp - lq);
    kl.kl_qp += std::exp(lq) * (lq - lp);
  }
  // Round-off can leave a -1e-17 for identical distributions.
  kl.kl_pq = std::max(0.0, kl.kl_pq);
  kl.kl_qp = std::max(0.0, kl.kl_qp);
  return kl;
}

namespace {

// log of the pure mass of length-`remaining` continuations that stay in the
// top-k set. Factored as log m(ctx) + log E_q[C(child)] with q the
// renormalized top-k row, so that equal children (any context-free model)
// reproduce the scorer's sum of per-step log masses bit for bit.
double LogTopKMassRecursive(const ToyLM& model, int k, int remaining,
                            std::vector<TokenId>& context) {
  if (remaining == 0) return 0.0;
  const CondDist& row = model.Next(context);
  const auto order = RankOrder(row);
  const double log_m = LogTopKMass(row, order, k);
  std::vector<double> child(k), terms(k);
  bool all_equal = true;
  for (int i = 0; i < k; ++i) {
    const TokenId v = order[i];
    context.push_back(v);
    child[i] = row.logprob(v) == kNegInf
                   ? 0.0
                   : LogTopKMassRecursive(model, k, remaining - 1, context);
    context.pop_back();
    terms[i] = row.logprob(v) - log_m + child[i];
    all_equal &= row.logprob(v) == kNegInf || child[i] == child[0];
  }
  return log_m + (all_equal ? child[0] : LogSumExp(terms));
}

}  // namespace

double LogRejectionConstantTopK(const ToyLM& model, int k, int length,
                                std::span<const TokenId> prompt,
                                uint64_t cap) {
  if (k < 1 || k > model.vocab_size()) {
    throw ConfigError("k must be in [1, vocab size]");
  }
  if (length < 1) throw ConfigError("length must be >= 1");
  CheckEnumerationCap(model.vocab_size(), length, cap);
  if (k == model.vocab_size()) return 0.0;
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  return LogTopKMassRecursive(model, k, length, context);
}

double RejectionConstantTopK(const ToyLM& model, int k, int length,
                             std::span<const TokenId> prompt, uint64_t cap) {
  return std::exp(LogRejectionConstantTopK(model, k, length, prompt, cap));
}

TopKPosterior TopKPosteriorFromParts(double log_eps_k, double C) {
  if (!(C > 0.0 && C <= 1.0)) throw ConfigError("C must be in (0, 1]");
  return TopKPosteriorFromLogParts(log_eps_k, std::log(C));
}

TopKPosterior TopKPosteriorFromLogParts(double log_eps_k, double log_C) {
  if (!(log_C <= 0.0)) throw ConfigError("C must be in (0, 1]");
  TopKPosterior out;
  out.log_eps_k = log_eps_k;
  out.eps_k = std::exp(log_eps_k);
  out.C = std::exp(log_C);
  out.posterior = Sigmoid(log_C - log_eps_k);
  return out;
}

TopKPosterior PosteriorTopK(const ToyLM& model, std::span<const TokenId> w,
                            int k, std::span<const TokenId> prompt,
                            uint64_t cap) {
  if (k < 1 || k > model.vocab_size()) {
    throw ConfigError("k must be in [1, vocab size]");
  }
  ScoringParams params;
  params.tau = 1.0;
  params.k = k;
  params.p = 1.0;
  const auto scored = ScoreWithModel(model, w, params, prompt);
  for (int i = 0; i < scored.size(); ++i) {
    if (!scored.tokens[i].in_topk(k)) {
      throw ConfigError("token " + std::to_string(i) +
                        " lies outside its step's top-k set");
    }
  }
  const double log_C = LogRejectionConstantTopK(
      model, k, static_cast<int>(w.size()), prompt, cap);
  return TopKPosteriorFromLogParts(RawLogTopKMass(scored), log_C);
}

const CoinFlipEntry* CoinFlipTable::Find(
    std::span<const TokenId> tokens) const {
  const auto it = std::lower_bound(
      entries.begin(), entries.end(), tokens,
      [](const CoinFlipEntry& e, std::span<const TokenId> key) {
        return std::lexicographical_compare(e.tokens.begin(), e.tokens.end(),
                                            key.begin(), key.end());
      });
  if (it == entries.end() ||
      !std::equal(it->tokens.begin(), it->tokens.end(), tokens.begin(),
                  tokens.end())) {
    return nullptr;
  }
  return &*it;
}

CoinFlipTable SimulateCoinFlip(const ToyLM& model, double tau, int length,
                               int64_t n, uint64_t seed) {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (length < 1) throw ConfigError("length must be >= 1");
  const auto temp = DecodingStrategy::Temperature(tau);
  temp.Validate(model.vocab_size());
  const auto pure = DecodingStrategy::Pure();
  Rng coin(MixSeed(seed, 0));
  Rng pure_rng(MixSeed(seed, 1));
  Rng temp_rng(MixSeed(seed, 2));

  std::map<std::vector<TokenId>, CoinFlipEntry> table;
  std::vector<std::pair<std::vector<TokenId>, bool>> raw;
  raw.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    const bool tails = coin.Uniform() < 0.5;
    auto tokens = tails ? SampleTokens(model, temp, length, {}, temp_rng)
                        : SampleTokens(model, pure, length, {}, pure_rng);
    auto& e = table[tokens];
    ++e.count;
    if (tails) ++e.temperature_count;
    raw.emplace_back(std::move(tokens), tails);
  }

  CoinFlipTable out;
  out.tau = tau;
  out.length = length;
  out.n = n;
  out.seed = seed;
  for (auto& [tokens, e] : table) {
    e.tokens = tokens;
    out.entries.push_back(e);
  }
  out.draws.reserve(raw.size());
  for (const auto& [tokens, tails] : raw) {
    const auto* e = out.Find(tokens);
    out.draws.emplace_back(static_cast<int>(e - out.entries.data()), tails);
  }
  return out;
}

double ThresholdAccuracy(std::span<const TwoBranchOutcome> outcomes,
                         double threshold, bool lower_is_temperature) {
  double acc = 0.0;
  for (const auto& o : outcomes) {
    const bool says_temp = lower_is_temperature ? o.score < threshold
                                                : o.score > threshold;
    acc += says_temp ? o.temperature_mass : o.pure_mass;
  }
  return 0.5 * acc;
}

double BayesAccuracy(std::span<const TwoBranchOutcome> outcomes) {
  double acc = 0.0;
  for (const auto& o : outcomes) {
    acc += std::max(o.pure_mass, o.temperature_mass);
  }
  return 0.5 * acc;
}

double BestThresholdAccuracy(std::span<const TwoBranchOutcome> outcomes) {
  std::vector<size_t> idx(outcomes.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return outcomes[a].score < outcomes[b].score;
  });
  double total_p = 0.0;
  double total_q = 0.0;
  for (const auto& o : outcomes) {
    total_p += o.pure_mass;
    total_q += o.temperature_mass;
  }
  // Cut c: everything below c on one side. Start with the empty lower set.
  double below_p = 0.0;
  double below_q = 0.0;
  double best = 0.5 * std::max(total_p, total_q);
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() &&
           outcomes[idx[j]].score == outcomes[idx[i]].score) {
      below_p += outcomes[idx[j]].pure_mass;
      below_q += outcomes[idx[j]].temperature_mass;
      ++j;
    }
    const double lower_temp = below_q + (total_p - below_p);
    const double upper_temp = below_p + (total_q - below_q);
    best = std::max(best, 0.5 * std::max(lower_temp, upper_temp));
    i = j;
  }
  return best;
}

namespace {

OracleCheck MakeCheck(std::string name, double lhs, double rhs, double tol) {
  OracleCheck c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.abs_err = std::abs(lhs - rhs);
  c.tolerance = tol;
  c.pass = c.abs_err <= tol;
  return c;
}

OracleCheck MakeBoundCheck(std::string name, double lhs, double rhs,
                           double tol) {
  // Passes when lhs <= rhs + tol.
  OracleCheck c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.abs_err = std::max(0.0, lhs - rhs);
  c.tolerance = tol;
  c.pass = lhs <= rhs + tol;
  return c;
}

}  // namespace

std::vector<OracleCheck> RunOracleChecks(const ToyLM& model,
                                         const OracleConfig& config) {
  const double tau = config.tau;
  const int T = config.length;
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("oracle tau must be in (0, 1)");
  }
  std::vector<OracleCheck> checks;
  const auto pure = EnumerateSeqDist(model, DecodingStrategy::Pure(), T, {},
                                     config.cap);
  const auto temp = EnumerateSeqDist(
      model, DecodingStrategy::Temperature(tau), T, {}, config.cap);
  checks.push_back(MakeCheck("pure_mass_sums_to_one", pure.TotalMass(), 1.0,
                             1e-9));
  checks.push_back(MakeCheck("temperature_mass_sums_to_one",
                             temp.TotalMass(), 1.0, 1e-9));

  ScoringParams params;
  params.tau = tau;
  params.k = config.k;
  params.p = 1.0;

  double max_chain = 0.0;
  double max_ratio = 0.0;
  double max_tempered = 0.0;
  double max_posterior = 0.0;
  double sign_mismatches = 0.0;
  double e_p = 0.0;
  double e_q = 0.0;
  std::vector<TwoBranchOutcome> outcomes;
  std::vector<std::vector<TwoBranchOutcome>> baselines(4);
  const Statistic baseline_stats[] = {Statistic::kLogLik, Statistic::kLogRank,
                                      Statistic::kEntropy,
                                      Statistic::kFastDetect};
  for (size_t i = 0; i < pure.entries().size(); ++i) {
    const auto& w = pure.entries()[i].tokens;
    const double log_p = pure.entries()[i].logprob;
    const double log_q = temp.entries()[i].logprob;
    const auto scored = ScoreWithModel(model, w, params);
    const double raw_log_p = RawLogP(scored);
    const double raw_log_eps = RawLogTempNorm(scored);
    const double tt = TempTest(scored, tau);

    max_chain = std::max(max_chain, std::abs(raw_log_p - log_p));
    max_ratio = std::max(max_ratio, std::abs(tt - (log_p - log_q) / T));
    max_tempered = std::max(
        max_tempered,
        std::abs(std::exp(log_q) - std::exp(raw_log_p / tau - raw_log_eps)));

    const auto post = PosteriorTemperature(raw_log_p, raw_log_eps, tau);
    const double pw = std::exp(log_p);
    const double qw = std::exp(log_q);
    max_posterior = std::max(max_posterior,
                             std::abs(post.posterior - qw / (pw + qw)));
    if (post.favors_temperature() != (tt < 0.0)) sign_mismatches += 1.0;

    e_p += pw * tt;
    e_q += qw * tt;
    outcomes.push_back({pw, qw, tt});
    const auto agg = Aggregate(scored, "", Label::kHuman);
    for (size_t b = 0; b < baselines.size(); ++b) {
      const double v = agg.value(baseline_stats[b]);
      // An undefined statistic carries no information: one shared value.
      baselines[b].push_back({pw, qw, std::isnan(v) ? 0.0 : v});
    }
  }
  checks.push_back(MakeCheck("chain_rule_logprob_max_err", max_chain, 0.0,
                             1e-9));
  checks.push_back(MakeCheck("log_ratio_identity_max_err", max_ratio, 0.0,
                             1e-9));
  checks.push_back(MakeCheck("tempered_enumeration_max_err", max_tempered,
                             0.0, 1e-9));
  checks.push_back(MakeCheck("posterior_vs_enumerator_max_err", max_posterior,
                             0.0, 1e-12));
  checks.push_back(MakeCheck("posterior_sign_mismatches", sign_mismatches,
                             0.0, 0.0));

  const auto kl = KlPureVsTemp(model, tau, T, config.cap);
  checks.push_back(
      MakeCheck("expected_temptest_under_pure", e_p, kl.kl_pq / T, 1e-9));
  checks.push_back(MakeCheck("expected_temptest_under_temperature", e_q,
                             -kl.kl_qp / T, 1e-9));

  const double acc0 = ThresholdAccuracy(outcomes, 0.0, true);
  checks.push_back(
      MakeCheck("threshold0_accuracy_is_bayes", acc0, BayesAccuracy(outcomes),
                1e-9));
  for (size_t b = 0; b < baselines.size(); ++b) {
    checks.push_back(MakeBoundCheck(
        StatisticName(baseline_stats[b]) + "_best_accuracy_le_temptest",
        BestThresholdAccuracy(baselines[b]), acc0, 1e-9));
  }

  // Top-k: closed form against the two-branch process built from the
  // enumerated top-k distribution and the enumerated pure distribution.
  const int k = std::min(config.k, model.vocab_size());
  const auto topk = EnumerateSeqDist(model, DecodingStrategy::TopK(k), T, {},
                                     config.cap);
  double set_mass = 0.0;
  for (const auto& e : topk.entries()) {
    set_mass += std::exp(pure.LogProbOf(e.tokens));
  }
  const double C = RejectionConstantTopK(model, k, T, {}, config.cap);
  checks.push_back(MakeCheck("rejection_constant", C, set_mass, 1e-9));
  double max_topk = 0.0;
  for (const auto& e : topk.entries()) {
    const double qk = std::exp(e.logprob);
    const double rej = std::exp(pure.LogProbOf(e.tokens)) / set_mass;
    const double brute = qk / (qk + rej);
    const auto closed = PosteriorTopK(model, e.tokens, k, {}, config.cap);
    max_topk = std::max(max_topk, std::abs(closed.posterior - brute));
  }
  checks.push_back(MakeCheck("topk_posterior_max_err", max_topk, 0.0, 1e-9));
  return checks;
}

nlohmann::json OracleChecksToJson(const std::vector<OracleCheck>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"lhs", c.lhs},
                   {"rhs", c.rhs},
                   {"abs_err", c.abs_err},
                   {"tolerance", c.tolerance},
                   {"pass", c.pass}});
  }
  return arr;
}

}  // namespace temptest
