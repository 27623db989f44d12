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

#include "temptest/lm.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "temptest/error.h"
#include "temptest/logmath.h"
#include "temptest/random.h"

namespace temptest {

Vocabulary::Vocabulary(int size) : size_(size) {
  if (size < 2) {
    throw ConfigError("vocabulary size must be >= 2, got " +
                      std::to_string(size));
  }
}

CondDist CondDist::FromLogProbs(std::vector<double> logprobs, double tol) {
  if (logprobs.size() < 2) {
    throw ConfigError("conditional distribution needs at least 2 entries");
  }
  for (double v : logprobs) {
    if (std::isnan(v) || v > tol) {
      throw ConfigError("invalid log-probability " + std::to_string(v));
    }
  }
  const double total = LogSumExp(logprobs);
  if (!(std::abs(total) <= tol)) {
    throw ConfigError("log-probabilities do not normalize: logsumexp = " +
                      std::to_string(total));
  }
  return CondDist(std::move(logprobs));
}

CondDist CondDist::FromProbs(std::span<const double> probs, double tol) {
  std::vector<double> logprobs;
  logprobs.reserve(probs.size());
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw ConfigError("negative or NaN probability " + std::to_string(p));
    }
    sum += p;
    logprobs.push_back(p > 0.0 ? std::log(p) : kNegInf);
  }
  if (std::abs(sum - 1.0) > tol) {
    throw ConfigError("probabilities sum to " + std::to_string(sum));
  }
  return FromLogProbs(std::move(logprobs), std::max(tol, 1e-12));
}

CondDist CondDist::Uniform(int n) {
  return CondDist(std::vector<double>(n, -std::log(static_cast<double>(n))));
}

double CondDist::prob(TokenId t) const { return std::exp(logprobs_[t]); }

std::vector<double> CondDist::probs() const {
  std::vector<double> out(logprobs_.size());
  std::transform(logprobs_.begin(), logprobs_.end(), out.begin(),
                 [](double lp) { return std::exp(lp); });
  return out;
}

std::string LabelName(Label label) {
  return label == Label::kHuman ? "human" : "machine";
}

Label ParseLabel(const std::string& name) {
  if (name == "human") return Label::kHuman;
  if (name == "machine") return Label::kMachine;
  throw ConfigError("unknown label '" + name + "'");
}

ToyLM::ToyLM(int order, double alpha, Vocabulary vocab,
             std::unordered_map<uint64_t, CondDist> rows)
    : order_(order),
      alpha_(alpha),
      vocab_(vocab),
      rows_(std::move(rows)),
      uniform_(CondDist::Uniform(vocab.size())) {
  if (order < 0) throw ConfigError("order must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be > 0");
  // Context keys are base-(N+1) numbers and must fit in 63 bits.
  if (order * std::log2(static_cast<double>(vocab.size() + 1)) >= 63.0) {
    throw ConfigError("order too large for vocabulary size");
  }
  for (const auto& [key, row] : rows_) {
    if (row.size() != vocab_.size()) {
      throw ConfigError("row width does not match vocabulary size");
    }
  }
}

uint64_t ToyLM::ContextKey(std::span<const TokenId> padded) const {
  const uint64_t base = static_cast<uint64_t>(vocab_.size()) + 1;
  uint64_t key = 0;
  for (TokenId t : padded) key = key * base + static_cast<uint64_t>(t);
  return key;
}

std::vector<TokenId> ToyLM::ContextFromKey(uint64_t key) const {
  const uint64_t base = static_cast<uint64_t>(vocab_.size()) + 1;
  std::vector<TokenId> ctx(order_);
  for (int i = order_ - 1; i >= 0; --i) {
    ctx[i] = static_cast<TokenId>(key % base);
    key /= base;
  }
  return ctx;
}

const CondDist& ToyLM::Next(std::span<const TokenId> context) const {
  uint64_t key = 0;
  const uint64_t base = static_cast<uint64_t>(vocab_.size()) + 1;
  const int have = static_cast<int>(context.size());
  for (int i = 0; i < order_; ++i) {
    const int pos = have - order_ + i;
    const TokenId t = pos < 0 ? vocab_.bos_id() : context[pos];
    key = key * base + static_cast<uint64_t>(t);
  }
  const auto it = rows_.find(key);
  return it == rows_.end() ? uniform_ : it->second;
}

std::vector<std::pair<std::vector<TokenId>, const CondDist*>>
ToyLM::StoredRows() const {
  std::map<uint64_t, const CondDist*> sorted;
  for (const auto& [key, row] : rows_) sorted.emplace(key, &row);
  std::vector<std::pair<std::vector<TokenId>, const CondDist*>> out;
  out.reserve(sorted.size());
  for (const auto& [key, row] : sorted) {
    out.emplace_back(ContextFromKey(key), row);
  }
  return out;
}

namespace {

void CheckTokens(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (!vocab.Contains(t)) {
      throw ConfigError("token id " + std::to_string(t) +
                        " outside vocabulary of size " +
                        std::to_string(vocab.size()));
    }
  }
}

}  // namespace

ToyLM TrainToyLM(const std::vector<std::vector<TokenId>>& corpus,
                 int vocab_size, int order, double alpha) {
  Vocabulary vocab(vocab_size);
  if (order < 0) throw ConfigError("order must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be > 0");
  size_t total = 0;
  for (const auto& seq : corpus) {
    CheckTokens(vocab, seq);
    total += seq.size();
  }
  if (total == 0) throw ConfigError("cannot train on an empty corpus");

  // Keyed counts; std::map keeps row construction order deterministic.
  std::map<uint64_t, std::vector<double>> counts;
  const uint64_t base = static_cast<uint64_t>(vocab_size) + 1;
  for (const auto& seq : corpus) {
    for (size_t i = 0; i < seq.size(); ++i) {
      uint64_t key = 0;
      for (int j = 0; j < order; ++j) {
        const long pos = static_cast<long>(i) - order + j;
        const TokenId t = pos < 0 ? vocab.bos_id() : seq[pos];
        key = key * base + static_cast<uint64_t>(t);
      }
      auto& row = counts[key];
      if (row.empty()) row.assign(vocab_size, 0.0);
      row[seq[i]] += 1.0;
    }
  }

  std::unordered_map<uint64_t, CondDist> rows;
  for (const auto& [key, row] : counts) {
    double n = 0.0;
    for (double c : row) n += c;
    const double log_denom = std::log(n + alpha * vocab_size);
    std::vector<double> logprobs(vocab_size);
    for (int v = 0; v < vocab_size; ++v) {
      logprobs[v] = std::log(row[v] + alpha) - log_denom;
    }
    rows.emplace(key, CondDist::FromLogProbs(std::move(logprobs)));
  }
  return ToyLM(order, alpha, vocab, std::move(rows));
}

const CondDist& ConditionalDist(const ToyLM& model,
                                std::span<const TokenId> context) {
  CheckTokens(model.vocab(), context);
  return model.Next(context);
}

SequenceLogProb SeqLogProb(const ToyLM& model, std::span<const TokenId> tokens,
                           std::span<const TokenId> prompt) {
  if (tokens.empty()) throw ConfigError("sequence must be non-empty");
  CheckTokens(model.vocab(), tokens);
  CheckTokens(model.vocab(), prompt);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  context.reserve(prompt.size() + tokens.size());
  SequenceLogProb out;
  for (TokenId t : tokens) {
    const double lp = model.Next(context).logprob(t);
    if (lp == kNegInf) out.has_zero_prob = true;
    out.value += lp;
    context.push_back(t);
  }
  return out;
}

ToyLM RandomToyLM(int vocab_size, int order, uint64_t seed,
                  double min_sharpness, double max_sharpness) {
  Vocabulary vocab(vocab_size);
  if (order < 0) throw ConfigError("order must be >= 0");
  Rng rng(seed);
  std::unordered_map<uint64_t, CondDist> rows;
  // Every context whose BOS padding is a prefix, i.e. every reachable one.
  const uint64_t base = static_cast<uint64_t>(vocab_size) + 1;
  uint64_t n_keys = 1;
  for (int i = 0; i < order; ++i) n_keys *= base;
  std::vector<TokenId> ctx(order);
  for (uint64_t key = 0; key < n_keys; ++key) {
    uint64_t k = key;
    for (int i = order - 1; i >= 0; --i) {
      ctx[i] = static_cast<TokenId>(k % base);
      k /= base;
    }
    bool reachable = true;
    for (int i = 1; i < order; ++i) {
      if (ctx[i] == vocab.bos_id() && ctx[i - 1] != vocab.bos_id()) {
        reachable = false;
      }
    }
    if (!reachable) continue;
    const double g =
        min_sharpness + (max_sharpness - min_sharpness) * rng.Uniform();
    std::vector<double> logits(vocab_size);
    for (double& l : logits) l = g * rng.Normal();
    const double lse = LogSumExp(logits);
    for (double& l : logits) l -= lse;
    rows.emplace(key, CondDist::FromLogProbs(std::move(logits)));
  }
  return ToyLM(order, 1.0, vocab, std::move(rows));
}

ToyLM ContextFreeLM(std::span<const double> probs) {
  std::unordered_map<uint64_t, CondDist> rows;
  rows.emplace(0, CondDist::FromProbs(probs));
  return ToyLM(0, 1.0, Vocabulary(static_cast<int>(probs.size())),
               std::move(rows));
}

nlohmann::json LogProbsToJson(std::span<const double> logprobs) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : logprobs) {
    if (v == kNegInf) {
      out.push_back("-inf");
    } else {
      out.push_back(v);
    }
  }
  return out;
}

double LogProbFromJson(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "-inf") return kNegInf;
  if (!j.is_number()) {
    throw ConfigError("expected a log-probability, got " + j.dump());
  }
  return j.get<double>();
}

std::vector<double> LogProbsFromJson(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("expected an array of log-probabilities");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(LogProbFromJson(v));
  return out;
}

nlohmann::json ToyLMToJson(const ToyLM& model) {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [ctx, row] : model.StoredRows()) {
    std::string key;
    for (size_t i = 0; i < ctx.size(); ++i) {
      if (i) key += '-';
      key += std::to_string(ctx[i]);
    }
    rows[key] = LogProbsToJson(row->logprobs());
  }
  return {{"order", model.order()},
          {"alpha", model.alpha()},
          {"vocab_size", model.vocab_size()},
          {"bos_id", model.vocab().bos_id()},
          {"rows", rows}};
}

ToyLM ToyLMFromJson(const nlohmann::json& j) {
  try {
    const int order = j.at("order").get<int>();
    const double alpha = j.at("alpha").get<double>();
    Vocabulary vocab(j.at("vocab_size").get<int>());
    if (j.at("bos_id").get<int>() != vocab.bos_id()) {
      throw ConfigError("bos_id must equal vocab_size");
    }
    std::unordered_map<uint64_t, CondDist> rows;
    const uint64_t base = static_cast<uint64_t>(vocab.size()) + 1;
    for (const auto& [key, value] : j.at("rows").items()) {
      std::vector<TokenId> ctx;
      if (!key.empty()) {
        std::stringstream ss(key);
        std::string part;
        while (std::getline(ss, part, '-')) ctx.push_back(std::stoi(part));
      }
      if (static_cast<int>(ctx.size()) != order) {
        throw ConfigError("row key '" + key + "' does not have " +
                          std::to_string(order) + " context ids");
      }
      uint64_t k = 0;
      for (TokenId t : ctx) {
        if (t < 0 || t > vocab.bos_id()) {
          throw ConfigError("row key '" + key + "' has invalid id");
        }
        k = k * base + static_cast<uint64_t>(t);
      }
      auto logprobs = LogProbsFromJson(value);
      if (static_cast<int>(logprobs.size()) != vocab.size()) {
        throw ConfigError("row '" + key + "' has wrong length");
      }
      rows.emplace(k, CondDist::FromLogProbs(std::move(logprobs)));
    }
    return ToyLM(order, alpha, vocab, std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed row key in model file");
  }
}

void SaveToyLM(const ToyLM& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << ToyLMToJson(model).dump() << "\n";
}

ToyLM LoadToyLM(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed model file " + path.string() + ": " +
                      e.what());
  }
  return ToyLMFromJson(j);
}

}  // namespace temptest
