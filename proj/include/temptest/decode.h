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

// Decoding-strategy transforms, a seeded autoregressive sampler and an exact
// enumerator over all fixed-length sequences of a small model.

#ifndef TEMPTEST_DECODE_H_
#define TEMPTEST_DECODE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "temptest/lm.h"
#include "temptest/random.h"

namespace temptest {

struct DecodingStrategy {
  enum class Kind { kPure, kTemperature, kTopK, kTopP };

  Kind kind = Kind::kPure;
  double tau = 1.0;
  int k = 0;
  double p = 1.0;

  static DecodingStrategy Pure() { return {}; }
  static DecodingStrategy Temperature(double tau);
  static DecodingStrategy TopK(int k);
  static DecodingStrategy TopP(double p);

  // Throws ConfigError unless the parameters for `kind` are in range for a
  // vocabulary of `vocab_size` tokens.
  void Validate(int vocab_size) const;
  CondDist Apply(const CondDist& dist) const;

  std::string name() const;
  nlohmann::json ToJson() const;
};

DecodingStrategy::Kind ParseStrategyKind(const std::string& name);

// Token ids ordered by descending probability, ties by ascending id.
std::vector<TokenId> RankOrder(const CondDist& dist);

// q(v) = p(v)^(1/tau) / sum_u p(u)^(1/tau), computed in log domain.
CondDist Temper(const CondDist& dist, double tau);
// Renormalized mass on the k most probable tokens, zero elsewhere.
CondDist TruncateTopK(const CondDist& dist, int k);
// Renormalized mass on the smallest most-probable prefix with cumulative
// mass >= p.
CondDist TruncateTopP(const CondDist& dist, double p);

// Size of the nucleus for threshold p. A prefix qualifies when its cumulative
// mass reaches p up to a relative slack of 1e-12.
int NucleusSize(const CondDist& dist, std::span<const TokenId> order,
                double p);

// Inverse-CDF draw over token-id order using one uniform variate.
TokenId InverseCdfDraw(const CondDist& dist, double u);

// Draws `length` tokens after `prompt`, one uniform variate per step.
std::vector<TokenId> SampleTokens(const ToyLM& model,
                                  const DecodingStrategy& strategy, int length,
                                  std::span<const TokenId> prompt, Rng& rng);

// Autoregressively samples `length` tokens after `prompt`. The record is
// labelled machine and its meta carries the strategy, seed and generator.
SequenceRecord SampleSequence(const ToyLM& model,
                              const DecodingStrategy& strategy, int length,
                              std::span<const TokenId> prompt, uint64_t seed,
                              const std::string& id = "");

// Exact distribution over every length-T continuation with nonzero mass.
class ExactSeqDist {
 public:
  struct Entry {
    std::vector<TokenId> tokens;
    double logprob;
  };

  ExactSeqDist(int length, std::vector<Entry> entries)
      : length_(length), entries_(std::move(entries)) {}

  int length() const { return length_; }
  // Lexicographic order by token ids.
  const std::vector<Entry>& entries() const { return entries_; }
  // -inf for sequences outside the support.
  double LogProbOf(std::span<const TokenId> tokens) const;
  double TotalMass() const;

 private:
  int length_;
  std::vector<Entry> entries_;
};

inline constexpr uint64_t kDefaultEnumerationCap = 1'000'000;

ExactSeqDist EnumerateSeqDist(const ToyLM& model,
                              const DecodingStrategy& strategy, int length,
                              std::span<const TokenId> prompt = {},
                              uint64_t cap = kDefaultEnumerationCap);

// Throws CapExceededError if vocab_size^length > cap.
void CheckEnumerationCap(int vocab_size, int length, uint64_t cap);

}  // namespace temptest

#endif  // TEMPTEST_DECODE_H_
