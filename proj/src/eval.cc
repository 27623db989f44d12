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

#include "temptest/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "temptest/backends.h"
#include "temptest/dataset.h"
#include "temptest/error.h"

namespace temptest {

std::string OrientationName(Orientation o) {
  return o == Orientation::kHigherIsMachine ? "higher_is_machine"
                                            : "lower_is_machine";
}

Orientation ParseOrientation(const std::string& name) {
  if (name == "higher_is_machine") return Orientation::kHigherIsMachine;
  if (name == "lower_is_machine") return Orientation::kLowerIsMachine;
  throw ConfigError("unknown orientation '" + name +
                    "' (expected higher_is_machine or lower_is_machine)");
}

Orientation Flip(Orientation o) {
  return o == Orientation::kHigherIsMachine ? Orientation::kLowerIsMachine
                                            : Orientation::kHigherIsMachine;
}

Orientation DefaultOrientation(Statistic s) {
  switch (s) {
    case Statistic::kLogLik:
    case Statistic::kFastDetect:
    case Statistic::kLogTempNorm:
      return Orientation::kHigherIsMachine;
    case Statistic::kLogRank:
    case Statistic::kEntropy:
    case Statistic::kTempTest:
    case Statistic::kGeoTopK:
    case Statistic::kGeoTopP:
      return Orientation::kLowerIsMachine;
  }
  return Orientation::kHigherIsMachine;
}

bool PredictsMachine(double score, double threshold, Orientation o) {
  return o == Orientation::kHigherIsMachine ? score > threshold
                                            : score < threshold;
}

namespace {

void CheckClasses(size_t n_pos, size_t n_neg) {
  if (n_pos == 0) throw ConfigError("no machine-labeled scores");
  if (n_neg == 0) throw ConfigError("no human-labeled scores");
}

void CheckSizes(size_t scores, size_t labels) {
  if (scores != labels) {
    throw ConfigError("scores and labels differ in length");
  }
}

double Oriented(double v, Orientation o) {
  return o == Orientation::kHigherIsMachine ? v : -v;
}

}  // namespace

double Auroc(std::span<const double> machine_scores,
             std::span<const double> human_scores) {
  CheckClasses(machine_scores.size(), human_scores.size());
  struct Item {
    double v;
    bool machine;
  };
  std::vector<Item> items;
  items.reserve(machine_scores.size() + human_scores.size());
  for (double v : machine_scores) items.push_back({v, true});
  for (double v : human_scores) items.push_back({v, false});
  for (const auto& it : items) {
    if (std::isnan(it.v)) throw ConfigError("AUROC over NaN score");
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.v < b.v; });
  // Sum of 1-based midranks of machine items, kept doubled so it stays an
  // exact integer.
  int64_t twice_rank_sum = 0;
  for (size_t i = 0; i < items.size();) {
    size_t j = i;
    int64_t machines = 0;
    while (j < items.size() && items[j].v == items[i].v) {
      machines += items[j].machine;
      ++j;
    }
    twice_rank_sum += machines * static_cast<int64_t>(i + 1 + j);
    i = j;
  }
  const int64_t n1 = static_cast<int64_t>(machine_scores.size());
  const int64_t n0 = static_cast<int64_t>(human_scores.size());
  const int64_t twice_u = twice_rank_sum - n1 * (n1 + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n1 * n0));
}

double Auroc(std::span<const double> scores, std::span<const Label> labels,
             Orientation o) {
  CheckSizes(scores.size(), labels.size());
  std::vector<double> machine, human;
  for (size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == Label::kMachine ? machine : human)
        .push_back(Oriented(scores[i], o));
  }
  return Auroc(machine, human);
}

double AurocStandardError(double auc, int64_t n_pos, int64_t n_neg) {
  CheckClasses(n_pos, n_neg);
  const double n1 = static_cast<double>(n_pos);
  const double n0 = static_cast<double>(n_neg);
  const double q1 = auc / (2.0 - auc);
  const double q2 = 2.0 * auc * auc / (1.0 + auc);
  const double var = (auc * (1.0 - auc) + (n1 - 1.0) * (q1 - auc * auc) +
                      (n0 - 1.0) * (q2 - auc * auc)) /
                     (n1 * n0);
  const double null_se = std::sqrt((n1 + n0 + 1.0) / (12.0 * n1 * n0));
  return std::max(std::sqrt(std::max(var, 0.0)), null_se);
}

Confusion ComputeConfusion(std::span<const double> scores,
                           std::span<const Label> labels, double threshold,
                           Orientation o) {
  CheckSizes(scores.size(), labels.size());
  Confusion c;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = PredictsMachine(scores[i], threshold, o);
    if (labels[i] == Label::kMachine) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

EerResult EerThreshold(std::span<const double> scores,
                       std::span<const Label> labels, Orientation o) {
  CheckSizes(scores.size(), labels.size());
  const int64_t n_pos = std::count(labels.begin(), labels.end(),
                                   Label::kMachine);
  const int64_t n_neg = static_cast<int64_t>(labels.size()) - n_pos;
  CheckClasses(n_pos, n_neg);
  std::vector<double> uniq(scores.begin(), scores.end());
  for (double v : uniq) {
    if (std::isnan(v)) throw ConfigError("EER over NaN score");
  }
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::vector<double> candidates;
  candidates.push_back(uniq.front() - 1.0);
  for (size_t i = 0; i + 1 < uniq.size(); ++i) {
    candidates.push_back(uniq[i] + (uniq[i + 1] - uniq[i]) / 2.0);
  }
  candidates.push_back(uniq.back() + 1.0);

  // |FPR - FNR| compared exactly as |fp * n_pos - fn * n_neg|.
  EerResult best;
  int64_t best_gap = -1;
  for (double thr : candidates) {
    const auto c = ComputeConfusion(scores, labels, thr, o);
    const int64_t gap = std::llabs(c.fp * n_pos - c.fn * n_neg);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best.threshold = thr;
      best.fpr = static_cast<double>(c.fp) / static_cast<double>(n_neg);
      best.fnr = static_cast<double>(c.fn) / static_cast<double>(n_pos);
      best.eer = (best.fpr + best.fnr) / 2.0;
    }
  }
  return best;
}

LengthAudit AuditLengths(std::span<const int> lengths,
                         std::span<const Label> labels) {
  if (lengths.size() != labels.size()) {
    throw ConfigError("lengths and labels differ in length");
  }
  LengthAudit a;
  int64_t sum_h = 0, sum_m = 0;
  int min_h = 0, max_h = 0, min_m = 0, max_m = 0;
  for (size_t i = 0; i < lengths.size(); ++i) {
    const int len = lengths[i];
    if (labels[i] == Label::kHuman) {
      if (a.n_human == 0 || len < min_h) min_h = len;
      if (a.n_human == 0 || len > max_h) max_h = len;
      ++a.n_human;
      sum_h += len;
    } else {
      if (a.n_machine == 0 || len < min_m) min_m = len;
      if (a.n_machine == 0 || len > max_m) max_m = len;
      ++a.n_machine;
      sum_m += len;
    }
  }
  if (a.n_human > 0) a.mean_len_human = static_cast<double>(sum_h) / a.n_human;
  if (a.n_machine > 0) {
    a.mean_len_machine = static_cast<double>(sum_m) / a.n_machine;
  }
  if (a.n_human == 0 || a.n_machine == 0) return a;

  // Means compared on a common denominator so the 10% bound is exact.
  const int64_t scaled_h = sum_h * a.n_machine;
  const int64_t scaled_m = sum_m * a.n_human;
  if (10 * std::llabs(scaled_h - scaled_m) >= std::min(scaled_h, scaled_m) &&
      scaled_h != scaled_m) {
    a.warn = true;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "mean lengths differ by >= 10%% (human %.6g, machine %.6g)",
                  a.mean_len_human, a.mean_len_machine);
    a.reason = buf;
  } else if (max_h < min_m || max_m < min_h) {
    a.warn = true;
    a.reason = "length ranges do not overlap (human " + std::to_string(min_h) +
               ".." + std::to_string(max_h) + ", machine " +
               std::to_string(min_m) + ".." + std::to_string(max_m) + ")";
  }
  return a;
}

LengthAudit AuditLengths(const std::vector<SequenceRecord>& records) {
  std::vector<int> lengths;
  std::vector<Label> labels;
  for (const auto& r : records) {
    lengths.push_back(static_cast<int>(r.tokens.size()));
    labels.push_back(r.label);
  }
  return AuditLengths(lengths, labels);
}

EvalReport Evaluate(const std::string& statistic,
                    std::span<const double> scores,
                    std::span<const Label> labels, Orientation o,
                    const LengthAudit& audit) {
  CheckSizes(scores.size(), labels.size());
  std::vector<double> kept;
  std::vector<Label> kept_labels;
  EvalReport r;
  r.statistic = statistic;
  r.orientation = o;
  r.length_audit = audit;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) {
      ++r.n_excluded;
      continue;
    }
    kept.push_back(scores[i]);
    kept_labels.push_back(labels[i]);
  }
  r.n_pos = std::count(kept_labels.begin(), kept_labels.end(),
                       Label::kMachine);
  r.n_neg = static_cast<int64_t>(kept_labels.size()) - r.n_pos;
  if (r.n_pos == 0 || r.n_neg == 0) {
    throw ConfigError("statistic '" + statistic +
                      "' has no defined scores for one class");
  }
  r.auroc = Auroc(kept, kept_labels, o);
  r.auroc_se = AurocStandardError(r.auroc, r.n_pos, r.n_neg);
  const auto eer = EerThreshold(kept, kept_labels, o);
  r.eer = eer.eer;
  r.eer_threshold = eer.threshold;
  r.confusion = ComputeConfusion(kept, kept_labels, eer.threshold, o);
  return r;
}

nlohmann::json EvalReportToJson(const EvalReport& r) {
  nlohmann::json j = {
      {"statistic", r.statistic},
      {"orientation", OrientationName(r.orientation)},
      {"tau", r.tau ? nlohmann::json(*r.tau) : nlohmann::json(nullptr)},
      {"bucket", r.bucket},
      {"auroc", r.auroc},
      {"auroc_se", r.auroc_se},
      {"eer", r.eer},
      {"eer_threshold", r.eer_threshold},
      {"confusion",
       {{"tp", r.confusion.tp},
        {"fp", r.confusion.fp},
        {"tn", r.confusion.tn},
        {"fn", r.confusion.fn}}},
      {"n_pos", r.n_pos},
      {"n_neg", r.n_neg},
      {"n_excluded", r.n_excluded},
      {"lower_bound", r.lower_bound},
      {"length_audit",
       {{"mean_len_human", r.length_audit.mean_len_human},
        {"mean_len_machine", r.length_audit.mean_len_machine},
        {"warn", r.length_audit.warn},
        {"reason", r.length_audit.reason}}}};
  return j;
}

namespace {

std::string G9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string EvalReportCsvHeader() {
  return "statistic,orientation,tau,bucket,auroc,auroc_se,eer,eer_threshold,"
         "tp,fp,tn,fn,n_pos,n_neg,n_excluded,lower_bound,length_warn";
}

std::string EvalReportCsvRow(const EvalReport& r) {
  return r.statistic + "," + OrientationName(r.orientation) + "," +
         (r.tau ? G9(*r.tau) : "") + "," + r.bucket + "," + G9(r.auroc) +
         "," + G9(r.auroc_se) + "," + G9(r.eer) + "," + G9(r.eer_threshold) +
         "," + std::to_string(r.confusion.tp) + "," +
         std::to_string(r.confusion.fp) + "," +
         std::to_string(r.confusion.tn) + "," +
         std::to_string(r.confusion.fn) + "," + std::to_string(r.n_pos) +
         "," + std::to_string(r.n_neg) + "," + std::to_string(r.n_excluded) +
         "," + (r.lower_bound ? "1" : "0") + "," +
         (r.length_audit.warn ? "1" : "0");
}

ExperimentConfig ExperimentConfig::FromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      c.datasets.push_back(j.at("dataset").get<std::string>());
    }
    if (j.contains("datasets")) {
      for (const auto& d : j.at("datasets")) {
        c.datasets.push_back(d.get<std::string>());
      }
    }
    if (c.datasets.empty()) throw ConfigError("config names no dataset");
    c.provider = j.at("provider");
    if (j.contains("statistics")) {
      for (const auto& s : j.at("statistics")) {
        c.statistics.push_back(ParseStatistic(s.get<std::string>()));
      }
    } else {
      c.statistics.assign(kAllStatistics.begin(), kAllStatistics.end());
    }
    if (j.contains("taus")) {
      c.taus = j.at("taus").get<std::vector<double>>();
    } else if (j.contains("tau")) {
      c.taus = {j.at("tau").get<double>()};
    }
    c.k = j.value("k", c.k);
    c.p = j.value("p", c.p);
    if (j.contains("orientation")) {
      for (const auto& [name, o] : j.at("orientation").items()) {
        c.orientation_overrides.emplace_back(
            ParseStatistic(name), ParseOrientation(o.get<std::string>()));
      }
    }
    c.allow_truncated = j.value("allow_truncated", c.allow_truncated);
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  if (c.taus.empty()) throw ConfigError("config has an empty tau list");
  if (c.statistics.empty()) throw ConfigError("config has no statistics");
  for (double tau : c.taus) ScoringParams{tau, c.k, c.p}.Validate();
  if (c.threads < 0) throw ConfigError("threads must be >= 0");
  return c;
}

nlohmann::json ExperimentConfig::ToJson() const {
  nlohmann::json stats = nlohmann::json::array();
  for (Statistic s : statistics) stats.push_back(StatisticName(s));
  nlohmann::json orient = nlohmann::json::object();
  for (Statistic s : statistics) orient[StatisticName(s)] =
      OrientationName(OrientationFor(s));
  return {{"datasets", datasets},   {"provider", provider},
          {"statistics", stats},    {"taus", taus},
          {"k", k},                 {"p", p},
          {"orientation", orient},  {"allow_truncated", allow_truncated},
          {"threads", threads},     {"output_dir", output_dir}};
}

Orientation ExperimentConfig::OrientationFor(Statistic s) const {
  for (const auto& [stat, o] : orientation_overrides) {
    if (stat == s) return o;
  }
  return DefaultOrientation(s);
}

namespace {

bool DependsOnTau(Statistic s) {
  return s == Statistic::kLogTempNorm || s == Statistic::kTempTest;
}

// Runs fn(i) for i in [0, n) on `threads` workers. Rethrows the exception
// of the lowest failing index.
template <typename Fn>
void ParallelFor(size_t n, int threads, Fn fn) {
  const size_t workers = std::max<size_t>(
      1, std::min<size_t>(n, threads > 0
                                 ? threads
                                 : std::max(1u,
                                            std::thread::hardware_concurrency())));
  std::atomic<size_t> next{0};
  std::mutex mu;
  size_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const std::filesystem::path& base_dir) {
  std::vector<SequenceRecord> records;
  std::set<std::string> ids;
  for (const auto& d : config.datasets) {
    const std::filesystem::path p(d);
    for (auto& r : ReadDataset(p.is_absolute() ? p : base_dir / p)) {
      if (!ids.insert(r.id).second) {
        throw ConfigError("duplicate sequence id '" + r.id + "'");
      }
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) throw ConfigError("datasets contain no sequences");

  std::unique_ptr<ToyLM> toy;
  const auto provider = MakeProvider(config.provider, base_dir, toy);
  const auto cap = provider->capability();
  for (double tau : config.taus) {
    RequireCapability(config.statistics, ScoringParams{tau, config.k, config.p},
                      cap, config.allow_truncated);
  }

  ExperimentResult result;
  result.length_audit = AuditLengths(records);
  result.truncated = !cap.full();
  const size_t n = records.size();
  const size_t n_tau = config.taus.size();
  result.scores.resize(n * n_tau);
  ParallelFor(n, config.threads, [&](size_t i) {
    const auto matrix = provider->Provide(records[i]);
    for (size_t t = 0; t < n_tau; ++t) {
      const ScoringParams params{config.taus[t], config.k, config.p};
      result.scores[t * n + i] =
          Aggregate(ScoreMatrix(matrix, params), records[i].id,
                    records[i].label);
    }
  });

  for (size_t i = 0; i < n; ++i) {
    result.n_unscorable += !result.scores[i].scorable;
  }

  std::vector<int> lengths;
  std::vector<Label> labels;
  for (const auto& r : records) {
    lengths.push_back(static_cast<int>(r.tokens.size()));
    labels.push_back(r.label);
  }
  std::vector<int> buckets;
  if (result.length_audit.warn) {
    buckets = lengths;
    std::sort(buckets.begin(), buckets.end());
    buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  }

  auto report_for = [&](Statistic s, size_t t) {
    const int idx = static_cast<int>(s);
    std::vector<double> values(n);
    bool lower_bound = false;
    for (size_t i = 0; i < n; ++i) {
      const auto& sc = result.scores[t * n + i];
      values[i] = sc.scorable ? sc.value(s) : std::nan("");
      if (sc.scorable && !sc.exact[idx]) lower_bound = true;
    }
    const Orientation o = config.OrientationFor(s);
    auto add = [&](std::span<const double> v, std::span<const Label> l,
                   const LengthAudit& audit, const std::string& bucket) {
      auto r = Evaluate(StatisticName(s), v, l, o, audit);
      if (DependsOnTau(s)) r.tau = config.taus[t];
      r.bucket = bucket;
      r.lower_bound = lower_bound;
      result.reports.push_back(r);
      return r;
    };
    const auto all = add(values, labels, result.length_audit, "all");
    if (DependsOnTau(s)) {
      result.sweep.push_back({config.taus[t], StatisticName(s), all.auroc});
    }
    for (int len : buckets) {
      std::vector<double> v;
      std::vector<Label> l;
      std::vector<int> ls;
      for (size_t i = 0; i < n; ++i) {
        if (lengths[i] != len) continue;
        v.push_back(values[i]);
        l.push_back(labels[i]);
        ls.push_back(len);
      }
      const auto has = [&](Label want) {
        for (size_t i = 0; i < v.size(); ++i) {
          if (l[i] == want && !std::isnan(v[i])) return true;
        }
        return false;
      };
      if (!has(Label::kHuman) || !has(Label::kMachine)) continue;
      add(v, l, AuditLengths(ls, l), "T=" + std::to_string(len));
    }
  };

  for (Statistic s : config.statistics) {
    if (DependsOnTau(s)) {
      for (size_t t = 0; t < n_tau; ++t) report_for(s, t);
    } else {
      report_for(s, 0);
    }
  }
  return result;
}

nlohmann::json ExperimentResultToJson(const ExperimentResult& result,
                                      const ExperimentConfig& config) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : result.reports) reports.push_back(EvalReportToJson(r));
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& row : result.sweep) {
    sweep.push_back(
        {{"tau", row.tau}, {"statistic", row.statistic}, {"auroc", row.auroc}});
  }
  const auto& a = result.length_audit;
  return {{"log_base", "e"},
          {"config", config.ToJson()},
          {"truncated", result.truncated},
          {"n_sequences", result.scores.size() / config.taus.size()},
          {"n_unscorable", result.n_unscorable},
          {"length_audit",
           {{"mean_len_human", a.mean_len_human},
            {"mean_len_machine", a.mean_len_machine},
            {"n_human", a.n_human},
            {"n_machine", a.n_machine},
            {"warn", a.warn},
            {"reason", a.reason}}},
          {"reports", reports},
          {"sweep", sweep}};
}

std::vector<std::filesystem::path> WriteExperimentOutputs(
    const ExperimentResult& result, const ExperimentConfig& config,
    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
  };
  std::vector<std::filesystem::path> written;

  const auto json_path = dir / "report.json";
  open(json_path) << ExperimentResultToJson(result, config).dump(2) << "\n";
  written.push_back(json_path);

  const auto csv_path = dir / "report.csv";
  {
    auto out = open(csv_path);
    out << "# log_base=e\n" << EvalReportCsvHeader() << "\n";
    for (const auto& r : result.reports) out << EvalReportCsvRow(r) << "\n";
  }
  written.push_back(csv_path);

  const auto scores_path = dir / "scores.csv";
  {
    auto out = open(scores_path);
    out << "# log_base=e\n" << ScoreCsvHeader(result.truncated) << "\n";
    for (const auto& s : result.scores) {
      out << ScoreCsvRow(s, result.truncated) << "\n";
    }
  }
  written.push_back(scores_path);
  return written;
}

}  // namespace temptest
