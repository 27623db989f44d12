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

// Closed-form posteriors for "which decoding strategy produced w", the exact
// quantities they are checked against, and a Monte Carlo coin-flip simulator.
//
// Temperature: a fair coin picks pure sampling P or temperature sampling
// Q_tau; the posterior of the temperature branch given w is
//   1 / (P(w)^(1 - 1/tau) * eps_tau(w) + 1).
// Top-k: a fair coin picks rejection sampling P/C restricted to the top-k set
// or top-k sampling Q_k; the posterior of the top-k branch is
//   1 / (1 + eps_k(w) / C).

#ifndef TEMPTEST_BAYES_H_
#define TEMPTEST_BAYES_H_

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "temptest/decode.h"
#include "temptest/lm.h"
#include "temptest/stats.h"

namespace temptest {

struct PosteriorResult {
  double posterior = 0.5;
  // log P(temperature | w) - log P(pure | w). The decision "posterior > 1/2"
  // is log_odds > 0; the posterior itself can round to 1/2 for tiny odds.
  double log_odds = 0.0;
  double raw_logP = 0.0;
  double raw_log_eps = 0.0;
  double tau = 1.0;
  double prior_machine = 0.5;
  double decision_threshold_C = 0.5;

  bool favors_temperature() const { return log_odds > 0.0; }
};

// Posterior that w came from temperature sampling, from the raw (summed)
// log P(w) and log eps_tau(w). tau must lie in (0, 1): at tau = 1 the two
// branches coincide and the posterior is vacuous.
PosteriorResult PosteriorTemperature(double raw_logP, double raw_log_eps,
                                     double tau, double prior_machine = 0.5);

// posterior > C  <=>  temptest < (1/T) log(1/C - 1), strict. For C = 1/2
// this is temptest < 0.
bool ThresholdEquivalence(double temptest_score, double tau, double C = 0.5,
                          int T = 1);
double TempTestThreshold(double C, int T);

struct KlPair {
  double kl_pq = 0.0;  // KL(P || Q_tau)
  double kl_qp = 0.0;  // KL(Q_tau || P)
};

// Exact KL divergences between length-T pure and temperature sequence
// distributions, by enumeration.
KlPair KlPureVsTemp(const ToyLM& model, double tau, int length,
                    uint64_t cap = kDefaultEnumerationCap);

// Pure-sampling mass of the length-T sequences whose every token lies in
// its step's top-k set.
double LogRejectionConstantTopK(const ToyLM& model, int k, int length,
                                std::span<const TokenId> prompt = {},
                                uint64_t cap = kDefaultEnumerationCap);
double RejectionConstantTopK(const ToyLM& model, int k, int length,
                             std::span<const TokenId> prompt = {},
                             uint64_t cap = kDefaultEnumerationCap);

struct TopKPosterior {
  double log_eps_k = 0.0;
  double eps_k = 1.0;
  double C = 1.0;
  double posterior = 0.5;
};

TopKPosterior TopKPosteriorFromParts(double log_eps_k, double C);
TopKPosterior TopKPosteriorFromLogParts(double log_eps_k, double log_C);

// Throws ConfigError if some token of w is outside its step's top-k set.
TopKPosterior PosteriorTopK(const ToyLM& model, std::span<const TokenId> w,
                            int k, std::span<const TokenId> prompt = {},
                            uint64_t cap = kDefaultEnumerationCap);

struct CoinFlipEntry {
  std::vector<TokenId> tokens;
  int64_t count = 0;
  int64_t temperature_count = 0;

  double fraction() const {
    return count == 0 ? 0.0 : static_cast<double>(temperature_count) / count;
  }
};

struct CoinFlipTable {
  double tau = 1.0;
  int length = 0;
  int64_t n = 0;
  uint64_t seed = 0;
  // Sorted lexicographically by tokens.
  std::vector<CoinFlipEntry> entries;
  // Per draw, in generation order: (tokens index into entries, was_temp).
  std::vector<std::pair<int, bool>> draws;

  const CoinFlipEntry* Find(std::span<const TokenId> tokens) const;
};

// n draws; each flips a fair coin to pick pure or temperature sampling. The
// coin and the two branches use independent streams derived from `seed`.
CoinFlipTable SimulateCoinFlip(const ToyLM& model, double tau, int length,
                               int64_t n, uint64_t seed);

// One enumerated outcome of the fair-coin pure-vs-temperature task.
struct TwoBranchOutcome {
  double pure_mass = 0.0;         // P(w)
  double temperature_mass = 0.0;  // Q_tau(w)
  double score = 0.0;
};

// Exact accuracy of "machine iff score < threshold" on the fair-coin task.
double ThresholdAccuracy(std::span<const TwoBranchOutcome> outcomes,
                         double threshold, bool lower_is_temperature);
// Exact accuracy of the Bayes classifier, 1/2 sum_w max(P, Q).
double BayesAccuracy(std::span<const TwoBranchOutcome> outcomes);
// Best accuracy over all thresholds and both orientations.
double BestThresholdAccuracy(std::span<const TwoBranchOutcome> outcomes);

struct OracleCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct OracleConfig {
  double tau = 0.5;
  int length = 3;
  int k = 2;
  uint64_t cap = kDefaultEnumerationCap;
};

// Enumeration-backed checks of every closed form on one model.
std::vector<OracleCheck> RunOracleChecks(const ToyLM& model,
                                         const OracleConfig& config);
nlohmann::json OracleChecksToJson(const std::vector<OracleCheck>& checks);

}  // namespace temptest

#endif  // TEMPTEST_BAYES_H_
