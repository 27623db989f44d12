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

#include "temptest/decode.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "temptest/error.h"
#include "temptest/logmath.h"
#include "temptest/random.h"

namespace temptest {

DecodingStrategy DecodingStrategy::Temperature(double tau) {
  DecodingStrategy s;
  s.kind = Kind::kTemperature;
  s.tau = tau;
  s.Validate(0);
  return s;
}

DecodingStrategy DecodingStrategy::TopK(int k) {
  DecodingStrategy s;
  s.kind = Kind::kTopK;
  s.k = k;
  return s;
}

DecodingStrategy DecodingStrategy::TopP(double p) {
  DecodingStrategy s;
  s.kind = Kind::kTopP;
  s.p = p;
  s.Validate(0);
  return s;
}

void DecodingStrategy::Validate(int vocab_size) const {
  switch (kind) {
    case Kind::kPure:
      return;
    case Kind::kTemperature:
      if (!(tau > 0.0 && tau <= 1.0)) {
        throw ConfigError("temperature must be in (0, 1], got " +
                          std::to_string(tau));
      }
      return;
    case Kind::kTopK:
      if (k < 1 || k > vocab_size) {
        throw ConfigError("top-k requires 1 <= k <= " +
                          std::to_string(vocab_size) + ", got " +
                          std::to_string(k));
      }
      return;
    case Kind::kTopP:
      if (!(p > 0.0 && p <= 1.0)) {
        throw ConfigError("top-p requires p in (0, 1], got " +
                          std::to_string(p));
      }
      return;
  }
}

CondDist DecodingStrategy::Apply(const CondDist& dist) const {
  switch (kind) {
    case Kind::kPure:
      return dist;
    case Kind::kTemperature:
      return Temper(dist, tau);
    case Kind::kTopK:
      return TruncateTopK(dist, k);
    case Kind::kTopP:
      return TruncateTopP(dist, p);
  }
  return dist;
}

std::string DecodingStrategy::name() const {
  switch (kind) {
    case Kind::kPure:
      return "pure";
    case Kind::kTemperature:
      return "temperature";
    case Kind::kTopK:
      return "top_k";
    case Kind::kTopP:
      return "top_p";
  }
  return "";
}

nlohmann::json DecodingStrategy::ToJson() const {
  nlohmann::json j = {{"strategy", name()}};
  if (kind == Kind::kTemperature) j["tau"] = tau;
  if (kind == Kind::kTopP) j["p"] = p;
  if (kind == Kind::kTopK) {
    j["k"] = k;
  } else {
    // Top-k is never silently active alongside another strategy.
    j["top_k"] = "disabled";
  }
  return j;
}

DecodingStrategy::Kind ParseStrategyKind(const std::string& name) {
  using Kind = DecodingStrategy::Kind;
  if (name == "pure") return Kind::kPure;
  if (name == "temperature") return Kind::kTemperature;
  if (name == "top_k" || name == "top-k") return Kind::kTopK;
  if (name == "top_p" || name == "top-p") return Kind::kTopP;
  throw ConfigError("unknown strategy '" + name + "'");
}

std::vector<TokenId> RankOrder(const CondDist& dist) {
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  const auto lp = dist.logprobs();
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return lp[a] > lp[b]; });
  return order;
}

CondDist Temper(const CondDist& dist, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ConfigError("temperature must be in (0, 1], got " +
                      std::to_string(tau));
  }
  if (tau == 1.0) return dist;
  const double inv_tau = 1.0 / tau;
  const double norm = ScaledLogSumExp(dist.logprobs(), inv_tau);
  std::vector<double> out(dist.size());
  for (int v = 0; v < dist.size(); ++v) {
    out[v] = dist.logprob(v) * inv_tau - norm;
  }
  return CondDist::FromLogProbs(std::move(out));
}

namespace {

CondDist RenormalizeSubset(const CondDist& dist,
                           std::span<const TokenId> kept) {
  std::vector<double> kept_lp;
  kept_lp.reserve(kept.size());
  for (TokenId t : kept) kept_lp.push_back(dist.logprob(t));
  const double log_mass = LogSumExp(kept_lp);
  std::vector<double> out(dist.size(), kNegInf);
  for (TokenId t : kept) out[t] = dist.logprob(t) - log_mass;
  return CondDist::FromLogProbs(std::move(out));
}

}  // namespace

CondDist TruncateTopK(const CondDist& dist, int k) {
  if (k < 1 || k > dist.size()) {
    throw ConfigError("top-k requires 1 <= k <= " +
                      std::to_string(dist.size()) + ", got " +
                      std::to_string(k));
  }
  if (k == dist.size()) return dist;
  const auto order = RankOrder(dist);
  return RenormalizeSubset(dist, std::span(order).first(k));
}

int NucleusSize(const CondDist& dist, std::span<const TokenId> order,
                double p) {
  const double target = p * (1.0 - 1e-12);
  double cum = 0.0;
  for (size_t i = 0; i < order.size(); ++i) {
    cum += dist.prob(order[i]);
    if (cum >= target) return static_cast<int>(i + 1);
  }
  return static_cast<int>(order.size());
}

CondDist TruncateTopP(const CondDist& dist, double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("top-p requires p in (0, 1], got " + std::to_string(p));
  }
  const auto order = RankOrder(dist);
  const int n = NucleusSize(dist, order, p);
  if (n == dist.size()) return dist;
  return RenormalizeSubset(dist, std::span(order).first(n));
}

TokenId InverseCdfDraw(const CondDist& dist, double u) {
  double cum = 0.0;
  TokenId last_nonzero = 0;
  for (TokenId v = 0; v < dist.size(); ++v) {
    const double pv = dist.prob(v);
    if (pv <= 0.0) continue;
    cum += pv;
    last_nonzero = v;
    if (u < cum) return v;
  }
  // Rounding left the cumulative sum just below u.
  return last_nonzero;
}

std::vector<TokenId> SampleTokens(const ToyLM& model,
                                  const DecodingStrategy& strategy, int length,
                                  std::span<const TokenId> prompt, Rng& rng) {
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  context.reserve(prompt.size() + length);
  for (int i = 0; i < length; ++i) {
    const CondDist q = strategy.Apply(model.Next(context));
    context.push_back(InverseCdfDraw(q, rng.Uniform()));
  }
  return {context.begin() + prompt.size(), context.end()};
}

SequenceRecord SampleSequence(const ToyLM& model,
                              const DecodingStrategy& strategy, int length,
                              std::span<const TokenId> prompt, uint64_t seed,
                              const std::string& id) {
  if (length < 1) throw ConfigError("length must be >= 1");
  strategy.Validate(model.vocab_size());
  for (TokenId t : prompt) {
    if (!model.vocab().Contains(t)) {
      throw ConfigError("prompt token outside vocabulary");
    }
  }
  Rng rng(seed);
  SequenceRecord rec;
  rec.id = id.empty() ? "seed-" + std::to_string(seed) : id;
  rec.label = Label::kMachine;
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.tokens = SampleTokens(model, strategy, length, prompt, rng);
  rec.meta = strategy.ToJson();
  rec.meta["seed"] = seed;
  rec.meta["generator"] = kGeneratorName;
  return rec;
}

double ExactSeqDist::LogProbOf(std::span<const TokenId> tokens) const {
  const auto it = std::lower_bound(
      entries_.begin(), entries_.end(), tokens,
      [](const Entry& e, std::span<const TokenId> key) {
        return std::lexicographical_compare(e.tokens.begin(), e.tokens.end(),
                                            key.begin(), key.end());
      });
  if (it == entries_.end() ||
      !std::equal(it->tokens.begin(), it->tokens.end(), tokens.begin(),
                  tokens.end())) {
    return kNegInf;
  }
  return it->logprob;
}

double ExactSeqDist::TotalMass() const {
  double total = 0.0;
  for (const auto& e : entries_) total += std::exp(e.logprob);
  return total;
}

void CheckEnumerationCap(int vocab_size, int length, uint64_t cap) {
  uint64_t count = 1;
  for (int i = 0; i < length; ++i) {
    if (count > cap / static_cast<uint64_t>(vocab_size)) {
      throw CapExceededError(
          "enumerating " + std::to_string(vocab_size) + "^" +
          std::to_string(length) + " sequences exceeds the cap of " +
          std::to_string(cap));
    }
    count *= static_cast<uint64_t>(vocab_size);
  }
}

namespace {

void Enumerate(const ToyLM& model, const DecodingStrategy& strategy,
               int remaining, std::vector<TokenId>& context, size_t prompt_len,
               double logprob, std::vector<ExactSeqDist::Entry>& out) {
  if (remaining == 0) {
    out.push_back({std::vector<TokenId>(context.begin() + prompt_len,
                                        context.end()),
                   logprob});
    return;
  }
  const CondDist q = strategy.Apply(model.Next(context));
  for (TokenId v = 0; v < q.size(); ++v) {
    const double lp = q.logprob(v);
    if (lp == kNegInf) continue;
    context.push_back(v);
    Enumerate(model, strategy, remaining - 1, context, prompt_len,
              logprob + lp, out);
    context.pop_back();
  }
}

}  // namespace

ExactSeqDist EnumerateSeqDist(const ToyLM& model,
                              const DecodingStrategy& strategy, int length,
                              std::span<const TokenId> prompt, uint64_t cap) {
  if (length < 1) throw ConfigError("length must be >= 1");
  strategy.Validate(model.vocab_size());
  CheckEnumerationCap(model.vocab_size(), length, cap);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::vector<ExactSeqDist::Entry> entries;
  Enumerate(model, strategy, length, context, prompt.size(), 0.0, entries);
  return ExactSeqDist(length, std::move(entries));
}

}  // namespace temptest
