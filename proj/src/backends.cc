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

#include "temptest/backends.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "temptest/dataset.h"
#include "temptest/decode.h"
#include "temptest/digest.h"
#include "temptest/error.h"
#include "temptest/logmath.h"

namespace temptest {

ProviderCapability ToyProvider::capability() const {
  return {ProviderCapability::Kind::kFullDistribution, model_.vocab_size(),
          model_.vocab_size()};
}

LogprobMatrix ToyProvider::Provide(const SequenceRecord& record,
                                   std::span<const TokenId> prompt) const {
  ValidateRecord(record, model_.vocab());
  for (TokenId t : prompt) {
    if (!model_.vocab().Contains(t)) {
      throw ConfigError("prompt token outside vocabulary");
    }
  }
  LogprobMatrix m;
  m.id = record.id;
  m.tokens = record.tokens;
  m.prompt_len = static_cast<int>(prompt.size());
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  m.full_rows.reserve(record.tokens.size());
  for (TokenId t : record.tokens) {
    m.full_rows.push_back(model_.Next(context));
    context.push_back(t);
  }
  return m;
}

namespace {

double LogBaseFactor(const std::string& base) {
  if (base == "e") return 1.0;
  if (base == "10") return std::log(10.0);
  if (base == "2") return std::log(2.0);
  throw ConfigError("unsupported log_base '" + base + "'");
}

void SortTop(std::vector<std::pair<TokenId, double>>& top) {
  std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
}

}  // namespace

FileProvider::FileProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read logprob dump " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("logprob dump " + path.string() + " is empty");
  }
  try {
    const auto header = nlohmann::json::parse(line);
    capability_.vocab_size = header.at("vocab_size").get<int>();
    const auto cap = header.at("capability").get<std::string>();
    if (cap == "full") {
      capability_.kind = ProviderCapability::Kind::kFullDistribution;
      capability_.n = capability_.vocab_size;
    } else if (cap == "top_n") {
      capability_.kind = ProviderCapability::Kind::kTopNOnly;
      capability_.n = header.at("n").get<int>();
    } else {
      throw ConfigError("unknown capability '" + cap + "'");
    }
    const double factor =
        LogBaseFactor(header.value("log_base", std::string("e")));
    Vocabulary vocab(capability_.vocab_size);

    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      LogprobMatrix m;
      m.id = j.at("id").get<std::string>();
      m.prompt_len = j.at("prompt_len").get<int>();
      m.tokens = j.at("tokens").get<std::vector<TokenId>>();
      const auto& rows = j.at("rows");
      if (rows.size() != m.tokens.size()) {
        throw ConfigError("dump line " + std::to_string(lineno) +
                          ": row count does not match token count");
      }
      for (TokenId t : m.tokens) {
        if (!vocab.Contains(t)) {
          throw ConfigError("dump line " + std::to_string(lineno) +
                            ": token outside vocabulary");
        }
      }
      if (capability_.full()) {
        for (const auto& r : rows) {
          auto lp = LogProbsFromJson(r);
          if (static_cast<int>(lp.size()) != capability_.vocab_size) {
            throw ConfigError("dump line " + std::to_string(lineno) +
                              ": row width does not match vocab_size");
          }
          if (factor != 1.0) {
            for (double& v : lp) v *= factor;
          }
          m.full_rows.push_back(CondDist::FromLogProbs(std::move(lp), 1e-6));
        }
      } else {
        const auto observed =
            LogProbsFromJson(j.at("observed_logprobs"));
        for (size_t i = 0; i < rows.size(); ++i) {
          TopNRow row;
          row.vocab_size = capability_.vocab_size;
          row.observed_logprob = observed.at(i) * factor;
          for (const auto& pair : rows[i]) {
            const TokenId id = pair.at(0).get<TokenId>();
            if (!vocab.Contains(id)) {
              throw ConfigError("dump line " + std::to_string(lineno) +
                                ": row id outside vocabulary");
            }
            row.top.emplace_back(id, LogProbFromJson(pair.at(1)) * factor);
          }
          SortTop(row.top);
          m.top_rows.push_back(std::move(row));
        }
      }
      const std::string id = m.id;
      if (!by_id_.emplace(id, std::move(m)).second) {
        throw ConfigError("duplicate id '" + id + "' in logprob dump");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed logprob dump " + path.string() + ": " +
                      e.what());
  }
}

LogprobMatrix FileProvider::Provide(const SequenceRecord& record,
                                    std::span<const TokenId> prompt) const {
  const auto it = by_id_.find(record.id);
  if (it == by_id_.end()) {
    throw ConfigError("logprob dump has no entry for '" + record.id + "'");
  }
  if (it->second.tokens != record.tokens ||
      it->second.prompt_len != static_cast<int>(prompt.size())) {
    throw ConfigError("logprob dump entry '" + record.id +
                      "' does not match the record's tokens or prompt");
  }
  return it->second;
}

void WriteLogprobDump(const std::filesystem::path& path,
                      const LogitsProvider& provider,
                      const std::vector<SequenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  WriteLogprobDump(out, provider, records);
}

void WriteLogprobDump(std::ostream& out, const LogitsProvider& provider,
                      const std::vector<SequenceRecord>& records) {
  const auto cap = provider.capability();
  nlohmann::json header = {{"vocab_size", cap.vocab_size},
                           {"capability", cap.full() ? "full" : "top_n"},
                           {"n", cap.n},
                           {"log_base", "e"}};
  out << header.dump() << "\n";
  for (const auto& r : records) {
    const auto m = provider.Provide(r);
    nlohmann::json j = {
        {"id", r.id}, {"prompt_len", m.prompt_len}, {"tokens", m.tokens}};
    nlohmann::json rows = nlohmann::json::array();
    if (m.full()) {
      for (const auto& row : m.full_rows) {
        rows.push_back(LogProbsToJson(row.logprobs()));
      }
    } else {
      std::vector<double> observed;
      for (const auto& row : m.top_rows) {
        nlohmann::json pairs = nlohmann::json::array();
        for (const auto& [id, lp] : row.top) {
          pairs.push_back({id, LogProbsToJson(std::span(&lp, 1))[0]});
        }
        rows.push_back(pairs);
        observed.push_back(row.observed_logprob);
      }
      j["observed_logprobs"] = LogProbsToJson(observed);
    }
    j["rows"] = rows;
    out << j.dump() << "\n";
  }
}

TopNRow TruncateRow(const CondDist& row, int n, TokenId observed) {
  const auto order = RankOrder(row);
  TopNRow out;
  out.vocab_size = row.size();
  out.observed_logprob = row.logprob(observed);
  const int keep = std::min(n, row.size());
  for (int i = 0; i < keep; ++i) {
    out.top.emplace_back(order[i], row.logprob(order[i]));
  }
  return out;
}

TruncatingProvider::TruncatingProvider(const LogitsProvider& inner, int n)
    : inner_(inner), n_(n) {
  if (!inner.capability().full()) {
    throw ConfigError("can only truncate a full-distribution provider");
  }
  if (n < 1) throw ConfigError("n must be >= 1");
}

ProviderCapability TruncatingProvider::capability() const {
  const auto inner = inner_.capability();
  if (n_ >= inner.vocab_size) return inner;
  return {ProviderCapability::Kind::kTopNOnly, n_, inner.vocab_size};
}

LogprobMatrix TruncatingProvider::Provide(
    const SequenceRecord& record, std::span<const TokenId> prompt) const {
  auto m = inner_.Provide(record, prompt);
  if (capability().full()) return m;
  for (size_t i = 0; i < m.full_rows.size(); ++i) {
    m.top_rows.push_back(TruncateRow(m.full_rows[i], n_, m.tokens[i]));
  }
  m.full_rows.clear();
  return m;
}

HttpProviderConfig HttpProviderConfig::FromJson(const nlohmann::json& j) {
  HttpProviderConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.at("model").get<std::string>();
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.top_n = j.value("top_n", c.top_n);
    c.vocab_size = j.at("vocab_size").get<int>();
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.retry_backoff_s = j.value("retry_backoff_s", c.retry_backoff_s);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.log_base = j.value("log_base", c.log_base);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed http provider config: ") +
                      e.what());
  }
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)),
      in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
  if (config_.vocab_size < 2) throw ConfigError("http vocab_size must be >= 2");
  if (config_.top_n < 1) throw ConfigError("http top_n must be >= 1");
  if (config_.max_in_flight < 1) {
    throw ConfigError("max_in_flight must be >= 1");
  }
  if (config_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  LogBaseFactor(config_.log_base);
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr) {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is not set");
    }
    api_key_ = key;
  }
  if (!config_.cache_dir.empty()) {
    std::filesystem::create_directories(config_.cache_dir);
  }
}

ProviderCapability HttpProvider::capability() const {
  if (config_.top_n >= config_.vocab_size) {
    return {ProviderCapability::Kind::kFullDistribution, config_.vocab_size,
            config_.vocab_size};
  }
  return {ProviderCapability::Kind::kTopNOnly, config_.top_n,
          config_.vocab_size};
}

nlohmann::json HttpProvider::BuildRequest(
    std::span<const TokenId> prompt, std::span<const TokenId> tokens) const {
  std::vector<TokenId> ids(prompt.begin(), prompt.end());
  ids.insert(ids.end(), tokens.begin(), tokens.end());
  return {{"model", config_.model},
          {"prompt", ids},
          {"max_tokens", 0},
          {"echo", true},
          {"logprobs", std::min(config_.top_n, config_.vocab_size)},
          {"temperature", 1.0},
          {"return_tokens_as_token_ids", true}};
}

namespace {

// Accepts "token_id:<n>" and bare decimal ids.
bool ParseTokenKey(const std::string& key, TokenId* out) {
  std::string digits = key;
  static constexpr std::string_view kPrefix = "token_id:";
  if (digits.rfind(kPrefix, 0) == 0) digits = digits.substr(kPrefix.size());
  if (digits.empty() ||
      digits.find_first_not_of("0123456789") != std::string::npos ||
      digits.size() > 9) {
    return false;
  }
  *out = static_cast<TokenId>(std::stol(digits));
  return true;
}

}  // namespace

LogprobMatrix HttpProvider::ParseResponse(
    const nlohmann::json& response, std::span<const TokenId> prompt,
    std::span<const TokenId> tokens) const {
  const double factor = LogBaseFactor(config_.log_base);
  const auto cap = capability();
  LogprobMatrix m;
  m.tokens.assign(tokens.begin(), tokens.end());
  m.prompt_len = static_cast<int>(prompt.size());
  try {
    const auto& lp = response.at("choices").at(0).at("logprobs");
    const auto& token_logprobs = lp.at("token_logprobs");
    const auto& top_logprobs = lp.at("top_logprobs");
    const size_t total = prompt.size() + tokens.size();
    if (token_logprobs.size() < total ||
        top_logprobs.size() != token_logprobs.size()) {
      throw ProviderError("response covers " +
                              std::to_string(token_logprobs.size()) +
                              " positions, expected at least " +
                              std::to_string(total),
                          false);
    }
    // Servers may prepend tokens (e.g. BOS); align from the end.
    const size_t offset = token_logprobs.size() - total;
    const bool has_tokens = lp.contains("tokens") && lp["tokens"].is_array();
    for (size_t i = 0; i < tokens.size(); ++i) {
      const size_t pos = offset + prompt.size() + i;
      if (has_tokens) {
        TokenId echoed = 0;
        if (ParseTokenKey(lp["tokens"].at(pos).get<std::string>(), &echoed) &&
            echoed != tokens[i]) {
          throw ProviderError("server tokenization disagrees at position " +
                                  std::to_string(i),
                              false);
        }
      }
      if (token_logprobs.at(pos).is_null() || top_logprobs.at(pos).is_null()) {
        throw ProviderError(
            "no conditional distribution for token " + std::to_string(i) +
                "; score with a non-empty prompt",
            false);
      }
      std::vector<std::pair<TokenId, double>> top;
      for (const auto& [key, value] : top_logprobs.at(pos).items()) {
        TokenId id = 0;
        if (!ParseTokenKey(key, &id)) {
          throw ProviderError("cannot map token '" + key +
                                  "' to an id; the server must return token "
                                  "ids",
                              false);
        }
        if (id >= config_.vocab_size) {
          throw ConfigError("server returned token id " + std::to_string(id) +
                            " outside vocab_size " +
                            std::to_string(config_.vocab_size));
        }
        top.emplace_back(id, value.get<double>() * factor);
      }
      if (cap.full()) {
        std::vector<double> dense(config_.vocab_size, kNegInf);
        std::vector<bool> seen(config_.vocab_size, false);
        for (const auto& [id, v] : top) {
          dense[id] = v;
          seen[id] = true;
        }
        if (std::count(seen.begin(), seen.end(), true) != config_.vocab_size) {
          throw ProviderError("full-distribution row is missing tokens",
                              false);
        }
        m.full_rows.push_back(CondDist::FromLogProbs(std::move(dense), 1e-6));
      } else {
        TopNRow row;
        row.vocab_size = config_.vocab_size;
        row.observed_logprob = token_logprobs.at(pos).get<double>() * factor;
        SortTop(top);
        row.top = std::move(top);
        m.top_rows.push_back(std::move(row));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed completions response: ") +
                            e.what(),
                        false);
  }
  return m;
}

std::string HttpProvider::CacheKey(std::span<const TokenId> prompt,
                                   std::span<const TokenId> tokens) const {
  std::string material = config_.model + "\n" + config_.base_url +
                         config_.endpoint + "\n" +
                         std::to_string(config_.top_n) + "\n";
  for (TokenId t : prompt) material += std::to_string(t) + ",";
  material += "\n";
  for (TokenId t : tokens) material += std::to_string(t) + ",";
  return Sha256Hex(material);
}

nlohmann::json HttpProvider::Fetch(const nlohmann::json& request) const {
  std::string scheme_host = config_.base_url;
  std::string prefix;
  const auto scheme_end = scheme_host.find("://");
  const auto path_start = scheme_host.find(
      '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start != std::string::npos) {
    prefix = scheme_host.substr(path_start);
    scheme_host = scheme_host.substr(0, path_start);
  }
  if (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(scheme_host);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  client.set_connection_timeout(
      std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(
      std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(
      std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  }
  const std::string body = request.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(
          config_.retry_backoff_s * std::pow(2.0, attempt - 1)));
    }
    httplib::Result res;
    {
      in_flight_.acquire();
      res = client.Post(prefix + config_.endpoint, headers, body,
                        "application/json");
      in_flight_.release();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++requests_sent_;
    }
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "server returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("server returned HTTP " +
                              std::to_string(res->status) + ": " + res->body,
                          false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("response is not JSON: ") + e.what(),
                          false);
    }
  }
  throw ProviderError(last_error + " (gave up after " +
                          std::to_string(config_.max_retries + 1) +
                          " attempts)",
                      true);
}

LogprobMatrix HttpProvider::Provide(const SequenceRecord& record,
                                    std::span<const TokenId> prompt) const {
  Vocabulary vocab(config_.vocab_size);
  ValidateRecord(record, vocab);
  for (TokenId t : prompt) {
    if (!vocab.Contains(t)) throw ConfigError("prompt token outside vocabulary");
  }
  const auto request = BuildRequest(prompt, record.tokens);
  nlohmann::json response;
  if (config_.cache_dir.empty()) {
    response = Fetch(request);
  } else {
    const std::string key = CacheKey(prompt, record.tokens);
    std::shared_ptr<std::mutex> key_lock;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto& slot = key_locks_[key];
      if (!slot) slot = std::make_shared<std::mutex>();
      key_lock = slot;
    }
    std::lock_guard<std::mutex> lock(*key_lock);
    const auto path = std::filesystem::path(config_.cache_dir) / (key + ".json");
    std::ifstream cached(path);
    bool hit = false;
    if (cached) {
      try {
        cached >> response;
        hit = true;
      } catch (const nlohmann::json::exception&) {
        hit = false;  // corrupt entry; refetch
      }
    }
    if (!hit) {
      response = Fetch(request);
      const auto tmp = path.string() + ".tmp";
      {
        std::ofstream out(tmp);
        out << response.dump();
      }
      std::filesystem::rename(tmp, path);
    }
  }
  auto m = ParseResponse(response, prompt, record.tokens);
  m.id = record.id;
  return m;
}

int HttpProvider::requests_sent() const {
  std::lock_guard<std::mutex> lock(mu_);
  return requests_sent_;
}

std::unique_ptr<LogitsProvider> MakeProvider(
    const nlohmann::json& spec, const std::filesystem::path& base_dir,
    std::unique_ptr<ToyLM>& toy_model) {
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  std::string kind;
  try {
    kind = spec.at("kind").get<std::string>();
    if (kind == "toy") {
      toy_model = std::make_unique<ToyLM>(
          LoadToyLM(resolve(spec.at("model").get<std::string>())));
      return std::make_unique<ToyProvider>(*toy_model);
    }
    if (kind == "file") {
      return std::make_unique<FileProvider>(
          resolve(spec.at("path").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed provider spec: ") + e.what());
  }
  if (kind == "http") {
    auto config = HttpProviderConfig::FromJson(spec);
    if (!config.cache_dir.empty()) {
      config.cache_dir = resolve(config.cache_dir).string();
    }
    return std::make_unique<HttpProvider>(std::move(config));
  }
  throw ConfigError("unknown provider kind '" + kind + "'");
}

bool NeedsFullDistribution(Statistic s, const ScoringParams& params,
                           const ProviderCapability& cap) {
  if (cap.full()) return false;
  switch (s) {
    case Statistic::kLogLik:
      return false;
    case Statistic::kGeoTopK:
      return params.k > cap.n && params.k < cap.vocab_size;
    default:
      return true;
  }
}

void RequireCapability(std::span<const Statistic> stats,
                       const ScoringParams& params,
                       const ProviderCapability& cap, bool allow_truncated) {
  for (Statistic s : stats) {
    if (!NeedsFullDistribution(s, params, cap)) continue;
    if (s == Statistic::kFastDetect) {
      throw CapabilityError(
          "statistic 'fastdetect' needs full distributions; the provider "
          "returns only the top " +
          std::to_string(cap.n) + " tokens and no bound exists");
    }
    if (!allow_truncated) {
      throw CapabilityError(
          "statistic '" + StatisticName(s) +
          "' needs full distributions; the provider returns only the top " +
          std::to_string(cap.n) +
          " tokens (pass --allow-truncated for lower bounds)");
    }
  }
}

ScoredTokens ScoreMatrix(const LogprobMatrix& matrix,
                         const ScoringParams& params) {
  if (matrix.full()) {
    return ScoreTokens(std::span<const CondDist>(matrix.full_rows),
                       matrix.tokens, params);
  }
  params.Validate();
  if (matrix.top_rows.size() != matrix.tokens.size()) {
    throw ConfigError("row count does not match token count");
  }
  ScoredTokens out;
  out.params = params;
  for (size_t i = 0; i < matrix.tokens.size(); ++i) {
    out.tokens.push_back(
        ScoreTokenTruncated(matrix.top_rows[i], matrix.tokens[i], params));
  }
  return out;
}

}  // namespace temptest
