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

// Vocabulary, conditional next-token distributions and the counting n-gram
// model used as an exactly enumerable language model.

#ifndef TEMPTEST_LM_H_
#define TEMPTEST_LM_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace temptest {

using TokenId = int32_t;

// Dense zero-based token ids 0..size-1.
class Vocabulary {
 public:
  explicit Vocabulary(int size);

  int size() const { return size_; }
  bool Contains(TokenId t) const { return t >= 0 && t < size_; }
  // Reserved context-padding id; never a predicted token.
  TokenId bos_id() const { return size_; }

 private:
  int size_;
};

// A full next-token distribution stored as natural-log probabilities.
// Entries may be -inf (zero mass); the row always normalizes to 1.
class CondDist {
 public:
  static constexpr double kDefaultTolerance = 1e-9;

  // Validates that logsumexp(logprobs) is within `tol` of 0 and that no
  // entry is NaN or positive beyond `tol`.
  static CondDist FromLogProbs(std::vector<double> logprobs,
                               double tol = kDefaultTolerance);
  // Validates that probs are non-negative and sum to 1 within `tol`.
  static CondDist FromProbs(std::span<const double> probs,
                            double tol = kDefaultTolerance);
  static CondDist Uniform(int n);

  int size() const { return static_cast<int>(logprobs_.size()); }
  double logprob(TokenId t) const { return logprobs_[t]; }
  double prob(TokenId t) const;
  std::span<const double> logprobs() const { return logprobs_; }
  // Linear-domain view.
  std::vector<double> probs() const;

  bool operator==(const CondDist&) const = default;

 private:
  explicit CondDist(std::vector<double> logprobs)
      : logprobs_(std::move(logprobs)) {}
  std::vector<double> logprobs_;
};

enum class Label { kHuman, kMachine };

std::string LabelName(Label label);
Label ParseLabel(const std::string& name);

// One passage w_1..w_T. `prompt` is shared context that conditions the first
// token but is not itself scored.
struct SequenceRecord {
  std::string id;
  std::vector<TokenId> tokens;
  Label label = Label::kHuman;
  std::vector<TokenId> prompt;
  nlohmann::json meta = nlohmann::json::object();
};

// Order-m additive-smoothed n-gram model. Immutable after construction.
class ToyLM {
 public:
  // Rows keyed by context; contexts absent from `rows` are uniform.
  ToyLM(int order, double alpha, Vocabulary vocab,
        std::unordered_map<uint64_t, CondDist> rows);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  const Vocabulary& vocab() const { return vocab_; }
  int vocab_size() const { return vocab_.size(); }

  // Row for the last `order` tokens of `context`, BOS-padded on the left.
  const CondDist& Next(std::span<const TokenId> context) const;

  // Explicitly stored rows, keyed by their padded context.
  std::vector<std::pair<std::vector<TokenId>, const CondDist*>> StoredRows()
      const;

  uint64_t ContextKey(std::span<const TokenId> padded_context) const;
  std::vector<TokenId> ContextFromKey(uint64_t key) const;

 private:
  int order_;
  double alpha_;
  Vocabulary vocab_;
  std::unordered_map<uint64_t, CondDist> rows_;
  CondDist uniform_;
};

// Laplace-smoothed counts: (count(ctx, v) + alpha) / (count(ctx) + alpha N).
ToyLM TrainToyLM(const std::vector<std::vector<TokenId>>& corpus,
                 int vocab_size, int order, double alpha);

// Convenience view over ToyLM::Next that validates the context.
const CondDist& ConditionalDist(const ToyLM& model,
                                std::span<const TokenId> context);

struct SequenceLogProb {
  double value = 0.0;
  // True when some token had zero probability; `value` is then -inf and must
  // not be fed into any per-token statistic.
  bool has_zero_prob = false;
};

// sum_i log p(w_i | prompt, w_<i) in natural log.
SequenceLogProb SeqLogProb(const ToyLM& model, std::span<const TokenId> tokens,
                           std::span<const TokenId> prompt = {});

// Random order-m model whose rows are softmax(g * z) with z standard normal
// and a per-row sharpness g drawn uniformly from [min_sharpness,
// max_sharpness]. Every context gets an explicit row.
ToyLM RandomToyLM(int vocab_size, int order, uint64_t seed,
                  double min_sharpness = 0.5, double max_sharpness = 4.0);

// Context-free model with the given linear probabilities.
ToyLM ContextFreeLM(std::span<const double> probs);

// JSON has no infinities, so log(0) is written as the string "-inf".
nlohmann::json LogProbsToJson(std::span<const double> logprobs);
std::vector<double> LogProbsFromJson(const nlohmann::json& j);
double LogProbFromJson(const nlohmann::json& j);

nlohmann::json ToyLMToJson(const ToyLM& model);
ToyLM ToyLMFromJson(const nlohmann::json& j);
void SaveToyLM(const ToyLM& model, const std::filesystem::path& path);
ToyLM LoadToyLM(const std::filesystem::path& path);

}  // namespace temptest

#endif  // TEMPTEST_LM_H_
