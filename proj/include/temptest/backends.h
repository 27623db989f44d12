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

// Logits providers: where the per-position conditional distributions come
// from. One Provide() call is one forward pass over a sequence; every
// statistic is computed from its result.

#ifndef TEMPTEST_BACKENDS_H_
#define TEMPTEST_BACKENDS_H_

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "temptest/lm.h"
#include "temptest/stats.h"

namespace temptest {

struct ProviderCapability {
  enum class Kind { kFullDistribution, kTopNOnly };
  Kind kind = Kind::kFullDistribution;
  int n = 0;
  int vocab_size = 0;

  bool full() const { return kind == Kind::kFullDistribution; }
};

// rows[i] is the distribution tokens[i] was drawn from (conditioning on the
// prompt and tokens[0..i)). Exactly one of full_rows / top_rows is filled.
struct LogprobMatrix {
  std::string id;
  std::vector<TokenId> tokens;
  int prompt_len = 0;
  std::vector<CondDist> full_rows;
  std::vector<TopNRow> top_rows;

  bool full() const { return top_rows.empty(); }
  size_t rows() const { return full() ? full_rows.size() : top_rows.size(); }
};

class LogitsProvider {
 public:
  virtual ~LogitsProvider() = default;
  virtual ProviderCapability capability() const = 0;
  // Safe for concurrent calls.
  virtual LogprobMatrix Provide(const SequenceRecord& record,
                                std::span<const TokenId> prompt) const = 0;
  LogprobMatrix Provide(const SequenceRecord& record) const {
    return Provide(record, record.prompt);
  }
  virtual std::string name() const = 0;
};

class ToyProvider : public LogitsProvider {
 public:
  explicit ToyProvider(const ToyLM& model) : model_(model) {}
  ProviderCapability capability() const override;
  LogprobMatrix Provide(const SequenceRecord& record,
                        std::span<const TokenId> prompt) const override;
  using LogitsProvider::Provide;
  std::string name() const override { return "toy"; }

 private:
  const ToyLM& model_;
};

// Serves rows from a logprob dump (JSONL). Header line:
//   {"vocab_size": N, "capability": "full"|"top_n", "n": n, "log_base": "e"}
// then one line per sequence:
//   {"id", "prompt_len", "tokens", "rows"}
// where full rows are [float; N] and top_n rows are [[id, logprob], ...]
// with the observed tokens' log-probs in "observed_logprobs".
class FileProvider : public LogitsProvider {
 public:
  explicit FileProvider(const std::filesystem::path& path);
  ProviderCapability capability() const override { return capability_; }
  LogprobMatrix Provide(const SequenceRecord& record,
                        std::span<const TokenId> prompt) const override;
  using LogitsProvider::Provide;
  std::string name() const override { return "file"; }

 private:
  ProviderCapability capability_;
  std::map<std::string, LogprobMatrix> by_id_;
};

void WriteLogprobDump(std::ostream& out, const LogitsProvider& provider,
                      const std::vector<SequenceRecord>& records);
void WriteLogprobDump(const std::filesystem::path& path,
                      const LogitsProvider& provider,
                      const std::vector<SequenceRecord>& records);

// Wraps another provider and keeps only the top-n entries of each row.
class TruncatingProvider : public LogitsProvider {
 public:
  TruncatingProvider(const LogitsProvider& inner, int n);
  ProviderCapability capability() const override;
  LogprobMatrix Provide(const SequenceRecord& record,
                        std::span<const TokenId> prompt) const override;
  using LogitsProvider::Provide;
  std::string name() const override { return "truncated"; }

 private:
  const LogitsProvider& inner_;
  int n_;
};

TopNRow TruncateRow(const CondDist& row, int n, TokenId observed);

struct HttpProviderConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string endpoint = "/v1/completions";
  std::string model;
  // Name of the environment variable holding the bearer token; empty for
  // no auth.
  std::string api_key_env;
  int top_n = 20;
  int vocab_size = 0;
  double timeout_s = 60.0;
  int max_retries = 3;
  double retry_backoff_s = 0.5;
  int max_in_flight = 4;
  std::string cache_dir;
  // "e" or "10"; converted to natural log at the boundary.
  std::string log_base = "e";

  static HttpProviderConfig FromJson(const nlohmann::json& j);
};

// OpenAI-compatible completions in scoring mode (echo, max_tokens = 0,
// per-token logprobs). Tokens are sent as ids and read back as
// "token_id:<n>" keys. Responses are cached on disk keyed by
// (model, prompt, tokens, n).
class HttpProvider : public LogitsProvider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  ProviderCapability capability() const override;
  LogprobMatrix Provide(const SequenceRecord& record,
                        std::span<const TokenId> prompt) const override;
  using LogitsProvider::Provide;
  std::string name() const override { return "http"; }

  nlohmann::json BuildRequest(std::span<const TokenId> prompt,
                              std::span<const TokenId> tokens) const;
  // Converts one completions response into rows for `tokens`.
  LogprobMatrix ParseResponse(const nlohmann::json& response,
                              std::span<const TokenId> prompt,
                              std::span<const TokenId> tokens) const;
  int requests_sent() const;

 private:
  nlohmann::json Fetch(const nlohmann::json& request) const;
  std::string CacheKey(std::span<const TokenId> prompt,
                       std::span<const TokenId> tokens) const;

  HttpProviderConfig config_;
  std::string api_key_;
  mutable std::counting_semaphore<1024> in_flight_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
  mutable int requests_sent_ = 0;
};

// Provider from a JSON spec: {"kind": "toy", "model": path},
// {"kind": "file", "path": path} or {"kind": "http", ...config}. Relative
// paths resolve against `base_dir`. `toy_model` receives the loaded model
// for toy providers and must outlive the provider.
std::unique_ptr<LogitsProvider> MakeProvider(
    const nlohmann::json& spec, const std::filesystem::path& base_dir,
    std::unique_ptr<ToyLM>& toy_model);

// Statistic needs more than a top-n row can give exactly.
bool NeedsFullDistribution(Statistic s, const ScoringParams& params,
                           const ProviderCapability& cap);
// Throws CapabilityError naming the first statistic the provider cannot
// serve. With allow_truncated, bounded statistics pass; fastdetect never
// does since truncation gives no bound for it.
void RequireCapability(std::span<const Statistic> stats,
                       const ScoringParams& params,
                       const ProviderCapability& cap, bool allow_truncated);

ScoredTokens ScoreMatrix(const LogprobMatrix& matrix,
                         const ScoringParams& params);

}  // namespace temptest

#endif  // TEMPTEST_BACKENDS_H_
