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

#include "temptest/cli.h"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "temptest/backends.h"
#include "temptest/bayes.h"
#include "temptest/dataset.h"
#include "temptest/decode.h"
#include "temptest/digest.h"
#include "temptest/error.h"
#include "temptest/eval.h"
#include "temptest/lm.h"
#include "temptest/random.h"
#include "temptest/scan.h"
#include "temptest/stats.h"

namespace temptest {

nlohmann::json RunManifest::ToJson() const {
  return {{"command", command},
          {"argv", argv},
          {"config", config},
          {"seeds", seeds},
          {"generator", generator},
          {"version", version},
          {"log_base", "e"},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"outputs", outputs}};
}

void WriteManifest(RunManifest manifest, const std::filesystem::path& dir,
                   const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) {
    manifest.outputs[f.filename().string()] = Sha256HexOfFile(f);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + dir.string());
  out << manifest.ToJson().dump(2) << "\n";
}

namespace {

std::string NowUtc() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string Dashed(std::string name) {
  for (char& c : name) {
    if (c == '_') c = '-';
  }
  return name;
}

// Binds command-line options to variables that a JSON config file can
// also set. Config values win over flags.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* Add(const std::string& key, T& var, const std::string& help) {
    setters_[key] = [&var](const nlohmann::json& j) { var = j.get<T>(); };
    getters_[key] = [&var] { return nlohmann::json(var); };
    return app_->add_option("--" + Dashed(key), var, help)
        ->capture_default_str();
  }

  template <typename T>
  CLI::Option* Add(const std::string& key, std::optional<T>& var,
                   const std::string& help) {
    setters_[key] = [&var](const nlohmann::json& j) {
      if (j.is_null()) {
        var.reset();
      } else {
        var = j.get<T>();
      }
    };
    getters_[key] = [&var] {
      return var ? nlohmann::json(*var) : nlohmann::json(nullptr);
    };
    return app_->add_option("--" + Dashed(key), var, help);
  }

  CLI::Option* Flag(const std::string& key, bool& var,
                    const std::string& help) {
    setters_[key] = [&var](const nlohmann::json& j) { var = j.get<bool>(); };
    getters_[key] = [&var] { return nlohmann::json(var); };
    return app_->add_flag("--" + Dashed(key), var, help);
  }

  void ApplyConfig(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      try {
        it->second(value);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }
  }

  nlohmann::json Snapshot() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, get] : getters_) j[key] = get();
    return j;
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::function<void(const nlohmann::json&)>> setters_;
  std::map<std::string, std::function<nlohmann::json()>> getters_;
};

// Where a command's outputs go: stdout, or files in --out plus a manifest.
class Sink {
 public:
  Sink(std::ostream& out, std::string dir) : out_(out), dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  bool to_dir() const { return !dir_.empty(); }
  const std::string& dir() const { return dir_; }

  void Emit(const std::string& name, const std::string& content) {
    if (!to_dir()) {
      out_ << content;
      return;
    }
    const auto path = std::filesystem::path(dir_) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << content;
    files_.push_back(path);
  }

  void AddFile(const std::filesystem::path& p) { files_.push_back(p); }
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::ostream& out_;
  std::string dir_;
  std::vector<std::filesystem::path> files_;
};

struct ProviderOpts {
  std::string model;
  std::string logprobs;
  std::string provider;
  int top_n = 0;

  void Register(Options& o) {
    o.Add("model", model, "toy model JSON (full distributions)");
    o.Add("logprobs", logprobs, "logprob dump JSONL");
    o.Add("provider", provider, "provider spec JSON file");
    o.Add("top_n", top_n,
          "keep only the top-n entries of each row (0 = off)");
  }
};

struct ProviderHandle {
  std::unique_ptr<ToyLM> toy;
  std::unique_ptr<LogitsProvider> base;
  std::unique_ptr<TruncatingProvider> truncated;

  const LogitsProvider& get() const {
    return truncated ? *truncated : *base;
  }
};

ProviderHandle OpenProvider(const ProviderOpts& o) {
  const int sources = !o.model.empty() + !o.logprobs.empty() +
                      !o.provider.empty();
  if (sources != 1) {
    throw ConfigError(
        "give exactly one of --model, --logprobs or --provider");
  }
  ProviderHandle h;
  if (!o.model.empty()) {
    h.toy = std::make_unique<ToyLM>(LoadToyLM(o.model));
    h.base = std::make_unique<ToyProvider>(*h.toy);
  } else if (!o.logprobs.empty()) {
    h.base = std::make_unique<FileProvider>(o.logprobs);
  } else {
    std::ifstream in(o.provider);
    if (!in) throw ConfigError("cannot read provider spec " + o.provider);
    nlohmann::json spec;
    try {
      in >> spec;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed provider spec: " + std::string(e.what()));
    }
    h.base = MakeProvider(
        spec, std::filesystem::path(o.provider).parent_path(), h.toy);
  }
  if (o.top_n < 0) throw ConfigError("top_n must be >= 0");
  if (o.top_n > 0) {
    h.truncated = std::make_unique<TruncatingProvider>(*h.base, o.top_n);
  }
  return h;
}

nlohmann::json CapabilityJson(const ProviderCapability& cap) {
  return {{"capability", cap.full() ? "full" : "top_n"},
          {"n", cap.n},
          {"vocab_size", cap.vocab_size}};
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double ParseCsvDouble(const std::string& s) {
  if (s == "nan" || s.empty()) return std::nan("");
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number '" + s + "' in scores file");
  }
}

// ---- train ----

struct TrainOpts {
  std::string corpus;
  int vocab_size = 0;
  int order = 2;
  double alpha = 1.0;
  bool random = false;
  uint64_t seed = 0;
  double min_sharpness = 0.5;
  double max_sharpness = 4.0;
};

void CmdTrain(const TrainOpts& o, Sink& sink, RunManifest& m) {
  ToyLM model = [&] {
    if (o.random) {
      if (!o.corpus.empty()) {
        throw ConfigError("--random and --corpus are exclusive");
      }
      m.seeds["seed"] = o.seed;
      return RandomToyLM(o.vocab_size, o.order, o.seed, o.min_sharpness,
                         o.max_sharpness);
    }
    if (o.corpus.empty()) throw ConfigError("train needs --corpus or --random");
    std::vector<std::vector<TokenId>> corpus;
    for (const auto& r : ReadDataset(o.corpus)) {
      std::vector<TokenId> text = r.prompt;
      text.insert(text.end(), r.tokens.begin(), r.tokens.end());
      corpus.push_back(std::move(text));
    }
    return TrainToyLM(corpus, o.vocab_size, o.order, o.alpha);
  }();
  sink.Emit("model.json", ToyLMToJson(model).dump() + "\n");
}

// ---- gen ----

struct GenOpts {
  std::string model;
  std::string strategy = "pure";
  double tau = 0.8;
  int k = 50;
  double p = 0.95;
  int n = 1;
  int length = 50;
  std::string prompts;
  int prompt_len = 30;
  uint64_t seed = 0;
  std::string label = "machine";
  std::string id_prefix = "gen";
};

DecodingStrategy BuildStrategy(const std::string& name, double tau, int k,
                               double p) {
  switch (ParseStrategyKind(name)) {
    case DecodingStrategy::Kind::kPure:
      return DecodingStrategy::Pure();
    case DecodingStrategy::Kind::kTemperature:
      return DecodingStrategy::Temperature(tau);
    case DecodingStrategy::Kind::kTopK:
      return DecodingStrategy::TopK(k);
    case DecodingStrategy::Kind::kTopP:
      return DecodingStrategy::TopP(p);
  }
  throw ConfigError("unknown strategy");
}

void CmdGen(const GenOpts& o, Sink& sink, RunManifest& m) {
  const ToyLM model = LoadToyLM(o.model);
  const auto strategy = BuildStrategy(o.strategy, o.tau, o.k, o.p);
  strategy.Validate(model.vocab_size());
  if (o.n < 1) throw ConfigError("n must be >= 1");
  if (o.length < 1) throw ConfigError("length must be >= 1");
  const Label label = ParseLabel(o.label);

  std::vector<std::vector<TokenId>> prompts;
  if (!o.prompts.empty()) {
    if (o.prompt_len < 1) throw ConfigError("prompt_len must be >= 1");
    for (const auto& r : ReadDataset(o.prompts)) {
      std::vector<TokenId> text = r.prompt;
      text.insert(text.end(), r.tokens.begin(), r.tokens.end());
      if (static_cast<int>(text.size()) < o.prompt_len) {
        throw ConfigError("prompt source '" + r.id + "' is shorter than " +
                          std::to_string(o.prompt_len) + " tokens");
      }
      text.resize(o.prompt_len);
      prompts.push_back(std::move(text));
    }
    if (prompts.empty()) throw ConfigError("prompt file has no records");
  }

  std::vector<SequenceRecord> records;
  records.reserve(o.n);
  for (int i = 0; i < o.n; ++i) {
    std::span<const TokenId> prompt;
    if (!prompts.empty()) prompt = prompts[i % prompts.size()];
    auto r = SampleSequence(model, strategy, o.length, prompt,
                            MixSeed(o.seed, i),
                            o.id_prefix + "-" + std::to_string(i));
    r.label = label;
    records.push_back(std::move(r));
  }
  std::ostringstream ss;
  WriteDataset(ss, records);
  m.config["strategy_resolved"] = strategy.ToJson();
  m.seeds = {{"seed", o.seed},
             {"per_sequence", "splitmix64(seed, index)"}};
  sink.Emit("dataset.jsonl", ss.str());
}

// ---- split ----

struct SplitOpts {
  std::string dataset;
  int prompt_len = 30;
};

void CmdSplit(const SplitOpts& o, Sink& sink, RunManifest&) {
  if (o.prompt_len < 1) throw ConfigError("prompt_len must be >= 1");
  auto records = ReadDataset(o.dataset);
  for (auto& r : records) {
    if (static_cast<int>(r.tokens.size()) <= o.prompt_len) {
      throw ConfigError("record '" + r.id + "' has no tokens after a " +
                        std::to_string(o.prompt_len) + "-token prompt");
    }
    r.prompt.insert(r.prompt.end(), r.tokens.begin(),
                    r.tokens.begin() + o.prompt_len);
    r.tokens.erase(r.tokens.begin(), r.tokens.begin() + o.prompt_len);
  }
  std::ostringstream ss;
  WriteDataset(ss, records);
  sink.Emit("dataset.jsonl", ss.str());
}

// ---- dump ----

struct DumpOpts {
  std::string dataset;
  ProviderOpts provider;
};

void CmdDump(const DumpOpts& o, Sink& sink, RunManifest& m) {
  const auto records = ReadDataset(o.dataset);
  const auto h = OpenProvider(o.provider);
  m.config["provider_capability"] = CapabilityJson(h.get().capability());
  std::ostringstream ss;
  WriteLogprobDump(ss, h.get(), records);
  sink.Emit("logprobs.jsonl", ss.str());
}

// ---- score ----

struct ScoreOpts {
  std::string dataset;
  ProviderOpts provider;
  double tau = 0.8;
  int k = 50;
  double p = 0.95;
  bool allow_truncated = false;
};

std::vector<SequenceScore> ScoreDataset(const std::vector<SequenceRecord>& records,
                                        const LogitsProvider& provider,
                                        const ScoringParams& params) {
  std::vector<SequenceScore> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(Aggregate(ScoreMatrix(provider.Provide(r), params), r.id,
                            r.label));
  }
  return out;
}

void CmdScore(const ScoreOpts& o, Sink& sink, RunManifest& m) {
  const ScoringParams params{o.tau, o.k, o.p};
  params.Validate();
  const auto records = ReadDataset(o.dataset);
  const auto h = OpenProvider(o.provider);
  const auto cap = h.get().capability();
  m.config["provider_capability"] = CapabilityJson(cap);
  std::vector<Statistic> stats(kAllStatistics.begin(), kAllStatistics.end());
  if (!cap.full() && o.allow_truncated) {
    // fastdetect has no bound; its column is left undefined.
    std::erase(stats, Statistic::kFastDetect);
  }
  RequireCapability(stats, params, cap, o.allow_truncated);
  const bool truncated = !cap.full();
  std::string csv = "# log_base=e\n" + ScoreCsvHeader(truncated) + "\n";
  for (const auto& s : ScoreDataset(records, h.get(), params)) {
    csv += ScoreCsvRow(s, truncated) + "\n";
  }
  sink.Emit("scores.csv", csv);
}

// ---- detect ----

struct DetectOpts {
  std::string scores;
  std::string dataset;
  ProviderOpts provider;
  double tau = 0.8;
  int k = 50;
  double p = 0.95;
  std::string statistic = "temptest";
  std::optional<double> threshold;
  std::string orientation;
  bool allow_truncated = false;
};

void CmdDetect(const DetectOpts& o, Sink& sink, RunManifest& m) {
  const Statistic stat = ParseStatistic(o.statistic);
  const Orientation orient = o.orientation.empty()
                                 ? DefaultOrientation(stat)
                                 : ParseOrientation(o.orientation);
  double threshold = 0.0;
  if (o.threshold) {
    threshold = *o.threshold;
  } else if (stat != Statistic::kTempTest) {
    throw ConfigError("statistic '" + o.statistic +
                      "' has no default threshold; pass --threshold");
  }
  m.config["threshold_resolved"] = threshold;
  m.config["orientation_resolved"] = OrientationName(orient);

  struct Row {
    std::string id;
    std::string label;
    double score;
  };
  std::vector<Row> rows;
  if (!o.scores.empty()) {
    if (!o.dataset.empty()) {
      throw ConfigError("--scores and --dataset are exclusive");
    }
    std::ifstream in(o.scores);
    if (!in) throw ConfigError("cannot read " + o.scores);
    std::string line;
    std::vector<std::string> header;
    int id_col = -1, label_col = -1, stat_col = -1;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto fields = SplitCsvLine(line);
      if (header.empty()) {
        header = fields;
        for (size_t i = 0; i < header.size(); ++i) {
          if (header[i] == "id") id_col = static_cast<int>(i);
          if (header[i] == "label") label_col = static_cast<int>(i);
          if (header[i] == o.statistic) stat_col = static_cast<int>(i);
        }
        if (id_col < 0 || stat_col < 0) {
          throw ConfigError("scores file lacks an id or '" + o.statistic +
                            "' column");
        }
        continue;
      }
      if (fields.size() != header.size()) {
        throw ConfigError("scores file row has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(header.size()));
      }
      rows.push_back({fields[id_col],
                      label_col >= 0 ? fields[label_col] : std::string(),
                      ParseCsvDouble(fields[stat_col])});
    }
  } else {
    if (o.dataset.empty()) {
      throw ConfigError("detect needs --scores or --dataset");
    }
    const ScoringParams params{o.tau, o.k, o.p};
    params.Validate();
    const auto records = ReadDataset(o.dataset);
    const auto h = OpenProvider(o.provider);
    const Statistic need[] = {stat};
    RequireCapability(need, params, h.get().capability(), o.allow_truncated);
    for (const auto& s : ScoreDataset(records, h.get(), params)) {
      rows.push_back({s.id, LabelName(s.label),
                      s.scorable ? s.value(stat) : std::nan("")});
    }
  }

  std::string text;
  for (const auto& r : rows) {
    nlohmann::json j = {{"id", r.id},
                        {"statistic", o.statistic},
                        {"threshold", threshold},
                        {"orientation", OrientationName(orient)}};
    if (!r.label.empty()) j["label"] = r.label;
    if (std::isnan(r.score)) {
      j["score"] = nullptr;
      j["machine"] = nullptr;
    } else {
      j["score"] = r.score;
      j["machine"] = PredictsMachine(r.score, threshold, orient);
    }
    text += j.dump() + "\n";
  }
  sink.Emit("verdicts.jsonl", text);
}

// ---- eval ----

void CmdEval(const std::string& config_path, Sink& sink, RunManifest& m,
             std::ostream& out) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot read experiment config " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed experiment config: " + std::string(e.what()));
  }
  const auto config = ExperimentConfig::FromJson(j);
  const auto base = std::filesystem::path(config_path).parent_path();
  m.config = config.ToJson();
  const auto result = RunExperiment(config, base);
  if (!sink.to_dir()) {
    out << ExperimentResultToJson(result, config).dump(2) << "\n";
    return;
  }
  for (const auto& p :
       WriteExperimentOutputs(result, config, sink.dir())) {
    sink.AddFile(p);
  }
  for (const auto& r : result.reports) {
    if (r.bucket != "all") continue;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-13s %-6s auroc=%.4f eer=%.4f\n",
                  r.statistic.c_str(),
                  r.tau ? std::to_string(*r.tau).substr(0, 4).c_str() : "-",
                  r.auroc, r.eer);
    out << buf;
  }
  if (result.length_audit.warn) {
    out << "warning: " << result.length_audit.reason << "\n";
  }
}

// ---- oracle ----

struct OracleOpts {
  std::string model;
  double tau = 0.5;
  int length = 3;
  int k = 2;
  uint64_t cap = kDefaultEnumerationCap;
};

bool CmdOracle(const OracleOpts& o, Sink& sink, RunManifest&) {
  const ToyLM model = LoadToyLM(o.model);
  const OracleConfig cfg{o.tau, o.length, o.k, o.cap};
  const auto checks = RunOracleChecks(model, cfg);
  bool all = true;
  for (const auto& c : checks) all = all && c.pass;
  nlohmann::json j = {{"checks", OracleChecksToJson(checks)},
                      {"all_pass", all}};
  sink.Emit("oracle.json", j.dump(2) + "\n");
  return all;
}

// ---- scan ----

struct ScanOpts {
  std::string dataset;
  ProviderOpts provider;
  int k = 50;
  int min_run = 30;
  std::optional<double> threshold_C;
  std::string calibrate;
};

void CmdScan(const ScanOpts& o, Sink& sink, RunManifest& m) {
  if (o.threshold_C.has_value() == !o.calibrate.empty()) {
    throw ConfigError("scan needs exactly one of --threshold-C or --calibrate");
  }
  if (o.k < 1) throw ConfigError("k must be >= 1");
  const auto h = OpenProvider(o.provider);
  const auto cap = h.get().capability();
  ScoringParams params;
  params.k = o.k;
  params.tau = 1.0;
  const Statistic need[] = {Statistic::kGeoTopK};
  RequireCapability(need, params, cap, false);

  double threshold = 0.0;
  if (o.threshold_C) {
    threshold = *o.threshold_C;
  } else {
    // Calibrate on whole-sequence geometric-mean top-k mass.
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& r : ReadDataset(o.calibrate)) {
      const auto s = ScoreMatrix(h.get().Provide(r), params);
      scores.push_back(GeoMeanTopKMass(s));
      labels.push_back(r.label);
    }
    threshold = EerThreshold(scores, labels, Orientation::kLowerIsMachine)
                    .threshold;
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw ConfigError("calibrated threshold " + std::to_string(threshold) +
                        " is outside (0, 1)");
    }
  }
  m.config["threshold_C_resolved"] = threshold;

  const ScanOptions opts{o.k, o.min_run, threshold};
  std::string text;
  for (const auto& r : ReadDataset(o.dataset)) {
    const auto s = ScoreMatrix(h.get().Provide(r), params);
    text += ScanReportToJson(ScanDocument(s, opts, r.id)).dump() + "\n";
  }
  sink.Emit("scan.jsonl", text);
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Detect temperature and truncation sampling from token "
               "log-probabilities."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string out_dir;
  std::string config_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir,
                    "write outputs and manifest.json into this directory");
  };
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON file whose keys override flags");
  };

  TrainOpts train;
  auto* train_cmd = app.add_subcommand("train", "fit or create a toy model");
  Options train_o(train_cmd);
  train_o.Add("corpus", train.corpus, "dataset JSONL used as corpus");
  train_o.Add("vocab_size", train.vocab_size, "vocabulary size")->required();
  train_o.Add("order", train.order, "context length");
  train_o.Add("alpha", train.alpha, "Laplace smoothing");
  train_o.Flag("random", train.random, "random model instead of training");
  train_o.Add("seed", train.seed, "seed for --random");
  train_o.Add("min_sharpness", train.min_sharpness, "for --random");
  train_o.Add("max_sharpness", train.max_sharpness, "for --random");
  add_common(train_cmd);
  add_config(train_cmd);

  GenOpts gen;
  auto* gen_cmd = app.add_subcommand("gen", "sample a dataset");
  Options gen_o(gen_cmd);
  gen_o.Add("model", gen.model, "toy model JSON")->required();
  gen_o.Add("strategy", gen.strategy, "pure, temperature, top_k or top_p");
  gen_o.Add("tau", gen.tau, "temperature");
  gen_o.Add("k", gen.k, "top-k size");
  gen_o.Add("p", gen.p, "nucleus mass");
  gen_o.Add("n", gen.n, "number of sequences");
  gen_o.Add("length", gen.length, "tokens per sequence");
  gen_o.Add("prompts", gen.prompts, "dataset whose prefixes seed generation");
  gen_o.Add("prompt_len", gen.prompt_len, "prefix length taken from prompts");
  gen_o.Add("seed", gen.seed, "base seed");
  gen_o.Add("label", gen.label, "label for the records");
  gen_o.Add("id_prefix", gen.id_prefix, "record id prefix");
  add_common(gen_cmd);
  add_config(gen_cmd);

  SplitOpts split;
  auto* split_cmd = app.add_subcommand(
      "split", "move each record's first tokens into its prompt");
  Options split_o(split_cmd);
  split_o.Add("dataset", split.dataset, "dataset JSONL")->required();
  split_o.Add("prompt_len", split.prompt_len, "tokens moved to the prompt");
  add_common(split_cmd);
  add_config(split_cmd);

  DumpOpts dump;
  auto* dump_cmd = app.add_subcommand("dump", "write per-token log-probs");
  Options dump_o(dump_cmd);
  dump_o.Add("dataset", dump.dataset, "dataset JSONL")->required();
  dump.provider.Register(dump_o);
  add_common(dump_cmd);
  add_config(dump_cmd);

  ScoreOpts score;
  auto* score_cmd = app.add_subcommand("score", "per-sequence statistics");
  Options score_o(score_cmd);
  score_o.Add("dataset", score.dataset, "dataset JSONL")->required();
  score.provider.Register(score_o);
  score_o.Add("tau", score.tau, "scoring temperature");
  score_o.Add("k", score.k, "top-k size");
  score_o.Add("p", score.p, "nucleus mass");
  score_o.Flag("allow_truncated", score.allow_truncated,
               "report lower bounds from top-n rows");
  add_common(score_cmd);
  add_config(score_cmd);

  DetectOpts detect;
  auto* detect_cmd = app.add_subcommand("detect", "threshold a statistic");
  Options detect_o(detect_cmd);
  detect_o.Add("scores", detect.scores, "scores CSV from `score`");
  detect_o.Add("dataset", detect.dataset, "dataset JSONL to score");
  detect.provider.Register(detect_o);
  detect_o.Add("tau", detect.tau, "scoring temperature");
  detect_o.Add("k", detect.k, "top-k size");
  detect_o.Add("p", detect.p, "nucleus mass");
  detect_o.Add("statistic", detect.statistic, "statistic name");
  detect_o.Add("threshold", detect.threshold,
               "decision threshold (temptest default 0)");
  detect_o.Add("orientation", detect.orientation,
               "higher_is_machine or lower_is_machine");
  detect_o.Flag("allow_truncated", detect.allow_truncated,
                "accept lower bounds from top-n rows");
  add_common(detect_cmd);
  add_config(detect_cmd);

  std::string eval_config;
  auto* eval_cmd = app.add_subcommand("eval", "run an evaluation experiment");
  eval_cmd->add_option("config", eval_config, "experiment config JSON")
      ->required();
  add_common(eval_cmd);

  OracleOpts oracle;
  auto* oracle_cmd =
      app.add_subcommand("oracle", "check closed forms against enumeration");
  Options oracle_o(oracle_cmd);
  oracle_o.Add("model", oracle.model, "toy model JSON")->required();
  oracle_o.Add("tau", oracle.tau, "temperature, in (0, 1)");
  oracle_o.Add("length", oracle.length, "sequence length");
  oracle_o.Add("k", oracle.k, "top-k size");
  oracle_o.Add("cap", oracle.cap, "enumeration cap");
  add_common(oracle_cmd);
  add_config(oracle_cmd);

  ScanOpts scan;
  auto* scan_cmd =
      app.add_subcommand("scan", "find suspicious in-top-k spans");
  Options scan_o(scan_cmd);
  scan_o.Add("dataset", scan.dataset, "dataset JSONL")->required();
  scan.provider.Register(scan_o);
  scan_o.Add("k", scan.k, "top-k size");
  scan_o.Add("min_run", scan.min_run, "shortest run considered");
  scan_o.Add("threshold_C", scan.threshold_C,
             "flag spans whose geometric-mean mass is below this");
  scan_o.Add("calibrate", scan.calibrate,
             "labeled dataset for an EER threshold");
  add_common(scan_cmd);
  add_config(scan_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest manifest;
  manifest.command = sub->get_name();
  manifest.argv = args;
  manifest.generator = kGeneratorName;
  manifest.started_at = NowUtc();

  try {
    Sink sink(out, out_dir);
    bool ok = true;
    auto snapshot = [&](Options& o) {
      o.ApplyConfig(config_path);
      manifest.config = o.Snapshot();
    };
    if (sub == train_cmd) {
      snapshot(train_o);
      CmdTrain(train, sink, manifest);
    } else if (sub == gen_cmd) {
      snapshot(gen_o);
      CmdGen(gen, sink, manifest);
    } else if (sub == split_cmd) {
      snapshot(split_o);
      CmdSplit(split, sink, manifest);
    } else if (sub == dump_cmd) {
      snapshot(dump_o);
      CmdDump(dump, sink, manifest);
    } else if (sub == score_cmd) {
      snapshot(score_o);
      CmdScore(score, sink, manifest);
    } else if (sub == detect_cmd) {
      snapshot(detect_o);
      CmdDetect(detect, sink, manifest);
    } else if (sub == eval_cmd) {
      CmdEval(eval_config, sink, manifest, out);
    } else if (sub == oracle_cmd) {
      snapshot(oracle_o);
      ok = CmdOracle(oracle, sink, manifest);
      if (!ok) err << "error: oracle checks failed\n";
    } else if (sub == scan_cmd) {
      snapshot(scan_o);
      CmdScan(scan, sink, manifest);
    }
    if (sink.to_dir()) {
      manifest.finished_at = NowUtc();
      WriteManifest(manifest, sink.dir(), sink.files());
    }
    return ok ? 0 : static_cast<int>(ExitCode::kInternal);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kConfig);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kInternal);
  }
}

}  // namespace temptest
