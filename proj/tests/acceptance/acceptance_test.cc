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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "temptest/backends.h"
#include "temptest/bayes.h"
#include "temptest/decode.h"
#include "temptest/eval.h"
#include "temptest/lm.h"
#include "temptest/random.h"
#include "temptest/scan.h"
#include "temptest/stats.h"
#include "test_util.h"

namespace temptest {
namespace {

using testing::AllSequences;
using testing::PowNormalize;
using testing::PureLogProb;
using testing::TemperedLogProb;

struct Outcome {
  bool pass = true;
  std::string detail;

  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void Note(const std::string& s) {
    detail = detail.empty() ? s : detail + "; " + s;
  }
};

std::string Fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string Fmt(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

ScoringParams Params(double tau, int k = 50) {
  ScoringParams p;
  p.tau = tau;
  p.k = k;
  return p;
}

std::vector<SequenceRecord> Sample(const ToyLM& m, const DecodingStrategy& s,
                                   int n, int length, uint64_t seed,
                                   Label label) {
  std::vector<SequenceRecord> out;
  for (int i = 0; i < n; ++i) {
    auto r = SampleSequence(m, s, length, {}, MixSeed(seed, i),
                            LabelName(label) + std::to_string(i));
    r.label = label;
    out.push_back(std::move(r));
  }
  return out;
}

// Rank of token t in a row: 1 + number of tokens that sort ahead of it.
int OracleRank(const std::vector<double>& p, TokenId t) {
  int ahead = 0;
  for (int v = 0; v < static_cast<int>(p.size()); ++v) {
    if (p[v] > p[t] || (p[v] == p[t] && v < t)) ++ahead;
  }
  return ahead + 1;
}

// ---- 1 ----
Outcome TauOneDegeneracy() {
  Outcome o;
  const ToyLM m = RandomToyLM(8, 1, 101);
  auto recs = Sample(m, DecodingStrategy::Pure(), 200, 40, 1, Label::kHuman);
  const auto mach = Sample(m, DecodingStrategy::Temperature(0.6), 200, 40, 2,
                           Label::kMachine);
  recs.insert(recs.end(), mach.begin(), mach.end());
  std::vector<double> scores;
  std::vector<Label> labels;
  double worst = 0.0;
  for (const auto& r : recs) {
    const double t = TempTest(ScoreWithModel(m, r.tokens, Params(1.0)), 1.0);
    worst = std::max(worst, std::abs(t));
    scores.push_back(t);
    labels.push_back(r.label);
  }
  const double auc = Auroc(scores, labels, Orientation::kLowerIsMachine);
  o.Check(worst < 1e-12, Fmt("max |TempTest| = %.3g", worst));
  o.Check(auc == 0.5, Fmt("AUROC = %.17g", auc));
  o.Note(Fmt("max |score| %.3g, AUROC %.1f", worst, auc));
  return o;
}

// ---- 2 ----
Outcome LogRatioIdentity() {
  Outcome o;
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.Below(15));
    const int order = static_cast<int>(rng.Below(3));
    const int length = 1 + static_cast<int>(rng.Below(64));
    const double tau = 0.2 + 0.8 * (1.0 - rng.Uniform());
    const ToyLM m = RandomToyLM(n, order, MixSeed(203, trial));
    const auto strat = trial % 2 ? DecodingStrategy::Temperature(tau)
                                 : DecodingStrategy::Pure();
    const auto w =
        SampleSequence(m, strat, length, {}, MixSeed(204, trial)).tokens;
    const double got = TempTest(ScoreWithModel(m, w, Params(tau)), tau);
    const double want =
        (PureLogProb(m, w) - TemperedLogProb(m, w, tau)) / length;
    worst = std::max(worst, std::abs(got - want));
  }
  o.Check(worst < 1e-9, Fmt("max error %.3g", worst));
  o.Note(Fmt("1000 sequences, max error %.3g", worst));
  return o;
}

struct EnumModel {
  std::string name;
  ToyLM model;
};

std::vector<EnumModel> SmallModels() {
  std::vector<EnumModel> out;
  out.push_back({"cf(0.8,0.2)",
                 ContextFreeLM(std::vector<double>{0.8, 0.2})});
  uint64_t seed = 300;
  for (int n = 2; n <= 4; ++n) {
    for (int order = 0; order <= 2; ++order) {
      out.push_back({"N" + std::to_string(n) + "o" + std::to_string(order),
                     RandomToyLM(n, order, ++seed)});
    }
  }
  return out;
}

// ---- 3 ----
Outcome PosteriorExactness() {
  Outcome o;
  double worst = 0.0;
  int64_t seqs = 0, mismatches = 0;
  for (const auto& [name, m] : SmallModels()) {
    for (int length = 1; length <= 5; ++length) {
      for (double tau : {0.3, 0.5, 0.8}) {
        const auto pure =
            EnumerateSeqDist(m, DecodingStrategy::Pure(), length);
        const auto temp =
            EnumerateSeqDist(m, DecodingStrategy::Temperature(tau), length);
        for (const auto& w : AllSequences(m.vocab_size(), length)) {
          const double lp = pure.LogProbOf(w);
          const double lq = temp.LogProbOf(w);
          const double want = 1.0 / (1.0 + std::exp(lp - lq));
          const auto s = ScoreWithModel(m, w, Params(tau));
          const auto post =
              PosteriorTemperature(RawLogP(s), RawLogTempNorm(s), tau);
          worst = std::max(worst, std::abs(post.posterior - want));
          if (post.favors_temperature() != (TempTest(s, tau) < 0.0)) {
            ++mismatches;
          }
          ++seqs;
        }
      }
    }
  }
  o.Check(worst < 1e-12, Fmt("max posterior error %.3g", worst));
  o.Check(mismatches == 0,
          Fmt("%.0f sign mismatches", static_cast<double>(mismatches)));
  o.Note(Fmt("%.0f sequences, max error %.3g", static_cast<double>(seqs),
             worst));
  return o;
}

// ---- 4 ----
Outcome ExpectationSigns() {
  Outcome o;
  double worst = 0.0;
  for (const auto& [name, m] : SmallModels()) {
    for (int length = 1; length <= 4; ++length) {
      for (double tau : {0.5, 0.8}) {
        double ep = 0.0, eq = 0.0, kl_pq = 0.0, kl_qp = 0.0;
        for (const auto& w : AllSequences(m.vocab_size(), length)) {
          const double lp = PureLogProb(m, w);
          const double lq = TemperedLogProb(m, w, tau);
          const double t = TempTest(ScoreWithModel(m, w, Params(tau)), tau);
          ep += std::exp(lp) * t;
          eq += std::exp(lq) * t;
          kl_pq += std::exp(lp) * (lp - lq);
          kl_qp += std::exp(lq) * (lq - lp);
        }
        worst = std::max(worst, std::abs(ep - kl_pq / length));
        worst = std::max(worst, std::abs(eq + kl_qp / length));
        const auto lib = KlPureVsTemp(m, tau, length);
        worst = std::max(worst, std::abs(lib.kl_pq - kl_pq));
        worst = std::max(worst, std::abs(lib.kl_qp - kl_qp));
        o.Check(ep > 0.0 && eq < 0.0, name + ": expectation sign wrong");
      }
    }
  }
  o.Check(worst < 1e-9, Fmt("max error %.3g", worst));

  const ToyLM cf = ContextFreeLM(std::vector<double>{0.8, 0.2});
  const auto kl = KlPureVsTemp(cf, 0.5, 1);
  o.Check(std::abs(kl.kl_pq - 0.114740) < 5e-7 &&
              std::abs(-kl.kl_qp + 0.080972) < 5e-7,
          Fmt("spot values %.6f / %.6f", kl.kl_pq, -kl.kl_qp));
  o.Note(Fmt("max error %.3g, spot (%+.6f, ", worst, kl.kl_pq) +
         Fmt("%+.6f)", -kl.kl_qp));
  return o;
}

// ---- 5 ----
Outcome CoinFlip() {
  Outcome o;
  const ToyLM cf = ContextFreeLM(std::vector<double>{0.8, 0.2});
  const double tau = 0.5;
  const auto q = PowNormalize({0.8, 0.2}, tau);
  const double want[2] = {q[0] / (0.8 + q[0]), q[1] / (0.2 + q[1])};
  o.Check(std::abs(want[0] - 0.540541) < 5e-7 &&
              std::abs(want[1] - 0.227273) < 5e-7,
          "oracle posteriors differ from 0.540541 / 0.227273");
  const auto table = SimulateCoinFlip(cf, tau, 1, 100000, 505);
  double worst_z = 0.0;
  for (TokenId t = 0; t < 2; ++t) {
    const std::vector<TokenId> w = {t};
    const auto* e = table.Find(w);
    if (e == nullptr || e->count == 0) {
      o.Check(false, "token never drawn");
      continue;
    }
    const double sigma = std::sqrt(want[t] * (1 - want[t]) / e->count);
    const double z = std::abs(e->fraction() - want[t]) / sigma;
    worst_z = std::max(worst_z, z);
    o.Check(z <= 3.0, Fmt("token %.0f off by %.2f sigma", t, z));
  }
  const auto* a = table.Find(std::vector<TokenId>{0});
  const auto* b = table.Find(std::vector<TokenId>{1});
  if (a && b) {
    o.Note(Fmt("empirical %.4f / ", a->fraction()) +
           Fmt("%.4f, ", b->fraction()) + Fmt("max %.2f sigma", worst_z));
  }
  return o;
}

// Exhaustive best-threshold accuracy over both directions; fair prior.
double OracleBestAccuracy(const std::vector<TwoBranchOutcome>& outs) {
  std::vector<double> u;
  for (const auto& x : outs) u.push_back(x.score);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> cand = {u.front() - 1.0, u.back() + 1.0};
  for (size_t i = 0; i + 1 < u.size(); ++i) cand.push_back((u[i] + u[i + 1]) / 2);
  double best = 0.0;
  for (double t : cand) {
    for (bool lower : {false, true}) {
      double acc = 0.0;
      for (const auto& x : outs) {
        const bool temp = lower ? x.score < t : x.score > t;
        acc += 0.5 * (temp ? x.temperature_mass : x.pure_mass);
      }
      best = std::max(best, acc);
    }
  }
  return best;
}

// ---- 6 ----
Outcome BayesOptimality() {
  Outcome o;
  double worst = 0.0;
  double min_margin = 1.0;
  const Statistic baselines[] = {Statistic::kLogLik, Statistic::kLogRank,
                                 Statistic::kEntropy, Statistic::kFastDetect};
  for (const auto& [name, m] : SmallModels()) {
    for (int length = 1; length <= 4; ++length) {
      for (double tau : {0.5, 0.8}) {
        std::vector<TwoBranchOutcome> tt;
        std::map<Statistic, std::vector<TwoBranchOutcome>> base;
        double bayes = 0.0;
        for (const auto& w : AllSequences(m.vocab_size(), length)) {
          const double p = std::exp(PureLogProb(m, w));
          const double q = std::exp(TemperedLogProb(m, w, tau));
          bayes += 0.5 * std::max(p, q);
          const auto s = Aggregate(ScoreWithModel(m, w, Params(tau)), "",
                                   Label::kHuman);
          tt.push_back({p, q, s.temptest});
          for (Statistic b : baselines) base[b].push_back({p, q, s.value(b)});
        }
        const double acc0 = ThresholdAccuracy(tt, 0.0, true);
        worst = std::max(worst, std::abs(acc0 - bayes));
        for (Statistic b : baselines) {
          bool finite = true;
          for (const auto& x : base[b]) finite &= std::isfinite(x.score);
          if (!finite) continue;
          const double acc = OracleBestAccuracy(base[b]);
          min_margin = std::min(min_margin, acc0 - acc);
          o.Check(acc <= acc0 + 1e-12, name + ": " + StatisticName(b) +
                                           " beats threshold-0 TempTest");
        }
      }
    }
  }
  o.Check(worst < 1e-9, Fmt("threshold-0 vs Bayes error %.3g", worst));
  o.Note(Fmt("max error %.3g, min margin over baselines %.3g", worst,
             min_margin));
  return o;
}

// ---- 7 ----
Outcome TopKPosteriorCheck() {
  Outcome o;
  double worst = 0.0;
  int64_t cf_checked = 0;
  bool cf_exact = true;
  for (const auto& [name, m] : SmallModels()) {
    const bool context_free = m.order() == 0;
    for (int length = 1; length <= 5; ++length) {
      for (int k = 1; k < m.vocab_size(); ++k) {
        const auto topk =
            EnumerateSeqDist(m, DecodingStrategy::TopK(k), length);
        // Rejection constant from in-set pure mass.
        std::vector<std::vector<TokenId>> in_set;
        double C = 0.0;
        for (const auto& w : AllSequences(m.vocab_size(), length)) {
          std::vector<TokenId> ctx;
          bool in = true;
          for (TokenId t : w) {
            in &= OracleRank(m.Next(ctx).probs(), t) <= k;
            ctx.push_back(t);
          }
          if (!in) continue;
          C += std::exp(PureLogProb(m, w));
          in_set.push_back(w);
        }
        for (const auto& w : in_set) {
          const double kw = std::exp(topk.LogProbOf(w));
          const double rw = std::exp(PureLogProb(m, w)) / C;
          const double want = kw / (kw + rw);
          const auto got = PosteriorTopK(m, w, k);
          worst = std::max(worst, std::abs(got.posterior - want));
          if (context_free) {
            ++cf_checked;
            cf_exact &= got.posterior == 0.5;
          }
        }
      }
    }
  }
  o.Check(worst < 1e-9, Fmt("max error %.3g", worst));
  o.Check(cf_exact, "context-free posterior not exactly 0.5");
  o.Note(Fmt("max error %.3g, %.0f context-free sequences at 0.5", worst,
             static_cast<double>(cf_checked)));
  return o;
}

// ---- 8 ----
Outcome ToyExperiment() {
  Outcome o;
  const int kN = 32;
  const ToyLM source = RandomToyLM(kN, 2, 808);
  std::vector<std::vector<TokenId>> corpus;
  for (int i = 0; i < 4000; ++i) {
    corpus.push_back(SampleSequence(source, DecodingStrategy::Pure(), 60, {},
                                    MixSeed(809, i))
                         .tokens);
  }
  const ToyLM m = TrainToyLM(corpus, kN, 2, 1.0);

  auto recs = Sample(m, DecodingStrategy::Pure(), 500, 50, 810, Label::kHuman);
  const auto mach = Sample(m, DecodingStrategy::Temperature(0.8), 500, 50, 811,
                           Label::kMachine);
  recs.insert(recs.end(), mach.begin(), mach.end());
  std::vector<Label> labels;
  for (const auto& r : recs) labels.push_back(r.label);

  auto column = [&](double tau, Statistic s) {
    std::vector<double> v;
    for (const auto& r : recs) {
      v.push_back(Aggregate(ScoreWithModel(m, r.tokens, Params(tau)), r.id,
                            r.label)
                      .value(s));
    }
    return v;
  };
  const double auc = Auroc(column(0.8, Statistic::kTempTest), labels,
                           Orientation::kLowerIsMachine);
  const double se = AurocStandardError(auc, 500, 500);
  o.Check(auc > 0.5 + 5 * se, Fmt("TempTest AUROC %.4f, SE %.4f", auc, se));
  std::string base_note;
  for (Statistic b : {Statistic::kLogLik, Statistic::kLogRank,
                      Statistic::kEntropy, Statistic::kFastDetect}) {
    const double a =
        Auroc(column(0.8, b), labels, Orientation::kHigherIsMachine);
    // Either orientation: the baseline gets its better direction.
    const double best = std::max(a, 1.0 - a);
    o.Check(auc >= best, StatisticName(b) + Fmt(" AUROC %.4f", best) +
                             Fmt(" exceeds TempTest %.4f", auc));
    base_note += " " + StatisticName(b) + Fmt("=%.3f", best);
  }

  std::vector<std::pair<double, double>> sweep;
  for (int i = 2; i <= 10; ++i) {
    const double tau = i / 10.0;
    sweep.emplace_back(tau, Auroc(column(tau, Statistic::kTempTest), labels,
                                  Orientation::kLowerIsMachine));
  }
  std::string sweep_note;
  for (const auto& [tau, a] : sweep) {
    sweep_note += Fmt(" %.1f:", tau) + Fmt("%.3f", a);
    if (tau < 1.0) {
      o.Check(a > 0.5 + 5 * AurocStandardError(a, 500, 500),
              Fmt("sweep AUROC at %.1f not clear of 0.5", tau));
    }
  }
  o.Check(sweep.back().second == 0.5, "sweep endpoint is not 0.5");
  o.Check(sweep[sweep.size() - 2].second >= sweep.back().second,
          "sweep rises into the endpoint");
  o.Note(Fmt("TempTest %.4f (SE %.4f);", auc, se) + base_note + "; sweep" +
         sweep_note);
  return o;
}

// ---- 9 ----
ToyLM EngineeredTopTwoModel() {
  // Tokens 0 and 1 are the top two everywhere. Emitting 0 leads to a row
  // with top-2 mass 0.98, emitting anything else to one with mass 0.6.
  const int n = 6;
  const std::vector<double> high = {0.5, 0.48, 0.005, 0.005, 0.005, 0.005};
  const std::vector<double> low = {0.3, 0.3, 0.1, 0.1, 0.1, 0.1};
  nlohmann::json rows = nlohmann::json::object();
  for (int c = 0; c <= n; ++c) {
    std::vector<double> lp;
    for (double p : c == 0 ? high : low) lp.push_back(std::log(p));
    rows[std::to_string(c)] = lp;
  }
  return ToyLMFromJson({{"order", 1},
                        {"alpha", 1.0},
                        {"vocab_size", n},
                        {"bos_id", n},
                        {"rows", rows}});
}

std::vector<TokenRun> OracleRuns(const std::vector<int>& ranks, int k,
                                 int min_run) {
  std::vector<TokenRun> out;
  int start = -1;
  for (int i = 0; i <= static_cast<int>(ranks.size()); ++i) {
    const bool in = i < static_cast<int>(ranks.size()) && ranks[i] >= 1 &&
                    ranks[i] <= k;
    if (in && start < 0) start = i;
    if (!in && start >= 0) {
      if (i - start >= min_run) out.push_back({start, i - 1});
      start = -1;
    }
  }
  return out;
}

Outcome Scanner() {
  Outcome o;
  Rng rng(909);
  int runs_checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng.Below(200));
    const int k = 1 + static_cast<int>(rng.Below(5));
    const int min_run = 1 + static_cast<int>(rng.Below(8));
    ScoredTokens s;
    s.params.k = k;
    std::vector<int> ranks;
    for (int i = 0; i < len; ++i) {
      TokenScore t;
      t.rank = 1 + static_cast<int>(rng.Below(2 * k + 1));
      t.valid = rng.Below(20) != 0;
      ranks.push_back(t.valid ? t.rank : 0);
      s.tokens.push_back(t);
    }
    const auto got = FindTopKRuns(s, k, min_run);
    const auto want = OracleRuns(ranks, k, min_run);
    o.Check(got == want, Fmt("run mismatch in trial %.0f", trial));
    for (size_t i = 0; i + 1 < got.size(); ++i) {
      o.Check(got[i].end + 1 < got[i + 1].start, "runs not disjoint/maximal");
    }
    runs_checked += static_cast<int>(got.size());
    if (!o.pass) break;
  }

  // geo mass is non-decreasing in k.
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    const ToyLM m = RandomToyLM(10, 1, MixSeed(910, trial));
    const auto w = SampleSequence(m, DecodingStrategy::Pure(), 30, {},
                                  MixSeed(911, trial))
                       .tokens;
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const double g = GeoMeanTopKMass(ScoreWithModel(m, w, Params(0.8, k)));
      o.Check(g >= prev, "geo mass decreased in k");
      prev = g;
    }
    o.Check(prev == 1.0, "geo mass at k = N is not 1");
  }

  // Top-2 sampled spans vs pure spans conditioned to stay in the top-2 set.
  const ToyLM m = EngineeredTopTwoModel();
  const int span = 20, per_class = 500, k = 2;
  std::vector<double> scores;
  std::vector<Label> labels;
  for (int i = 0; i < per_class; ++i) {
    const auto w = SampleSequence(m, DecodingStrategy::TopK(k), span, {},
                                  MixSeed(912, i))
                       .tokens;
    scores.push_back(GeoMeanTopKMass(ScoreWithModel(m, w, Params(0.8, k))));
    labels.push_back(Label::kMachine);
  }
  int accepted = 0;
  int64_t tries = 0;
  while (accepted < per_class) {
    const auto w = SampleSequence(m, DecodingStrategy::Pure(), span, {},
                                  MixSeed(913, tries++))
                       .tokens;
    const auto s = ScoreWithModel(m, w, Params(0.8, k));
    if (!FindTopKRuns(s, k, span).empty()) {
      scores.push_back(GeoMeanTopKMass(s));
      labels.push_back(Label::kHuman);
      ++accepted;
    }
  }
  const double auc = Auroc(scores, labels, Orientation::kLowerIsMachine);
  const double se = AurocStandardError(auc, per_class, per_class);
  o.Check(auc > 0.5 + 5 * se, Fmt("geo-mean AUROC %.4f, SE %.4f", auc, se));
  o.Note(Fmt("%.0f runs matched; ", runs_checked) +
         Fmt("top-2 span AUROC %.4f (SE %.4f)", auc, se));
  return o;
}

bool BitEqual(const SequenceScore& a, const SequenceScore& b) {
  const double* fa[] = {&a.per_token_loglik, &a.per_token_logrank,
                        &a.per_token_entropy, &a.log_tempnorm, &a.temptest,
                        &a.fastdetect_analytic, &a.geo_mean_topk_mass,
                        &a.geo_mean_topp_mass};
  const double* fb[] = {&b.per_token_loglik, &b.per_token_logrank,
                        &b.per_token_entropy, &b.log_tempnorm, &b.temptest,
                        &b.fastdetect_analytic, &b.geo_mean_topk_mass,
                        &b.geo_mean_topp_mass};
  for (int i = 0; i < 8; ++i) {
    if (std::memcmp(fa[i], fb[i], sizeof(double)) != 0) return false;
  }
  return a.T == b.T && a.scorable == b.scorable;
}

// ---- 10 ----
Outcome BackendEquivalence() {
  Outcome o;
  const int n = 12;
  const ToyLM m = RandomToyLM(n, 2, 1010);
  std::vector<SequenceRecord> recs;
  for (int i = 0; i < 50; ++i) {
    Rng rng(MixSeed(1011, i));
    const auto prompt =
        SampleTokens(m, DecodingStrategy::Pure(), 5, {}, rng);
    recs.push_back(SampleSequence(m, DecodingStrategy::Temperature(0.7), 30,
                                  prompt, MixSeed(1012, i),
                                  "r" + std::to_string(i)));
  }
  const auto dir = testing::TempDir("acceptance_backend");
  const auto params = Params(0.7, 4);
  ToyProvider toy(m);
  WriteLogprobDump(dir / "full.jsonl", toy, recs);
  const FileProvider file(dir / "full.jsonl");
  int identical = 0;
  for (const auto& r : recs) {
    const auto direct =
        Aggregate(ScoreWithModel(m, r.tokens, params, r.prompt), r.id, r.label);
    const auto via_toy = Aggregate(ScoreMatrix(toy.Provide(r), params), r.id,
                                   r.label);
    const auto via_file = Aggregate(ScoreMatrix(file.Provide(r), params), r.id,
                                    r.label);
    const bool same = BitEqual(direct, via_toy) && BitEqual(direct, via_file);
    identical += same;
  }
  o.Check(identical == static_cast<int>(recs.size()),
          Fmt("%.0f sequences differ",
              static_cast<double>(recs.size() - identical)));

  int bound_checks = 0;
  for (int top : {1, n / 2, n}) {
    TruncatingProvider trunc(toy, top);
    WriteLogprobDump(dir / "top.jsonl", trunc, recs);
    const FileProvider file_top(dir / "top.jsonl");
    for (const auto& r : recs) {
      const auto exact = ScoreWithModel(m, r.tokens, params, r.prompt);
      const auto lower = ScoreMatrix(file_top.Provide(r), params);
      const double le = LogTempNorm(exact, params.tau);
      const double ll = LogTempNorm(lower, params.tau);
      if (top == n) {
        o.Check(std::memcmp(&le, &ll, sizeof(double)) == 0,
                "full-width truncation changed TempNorm");
      } else {
        o.Check(ll <= le, Fmt("lower bound %.17g above exact", ll));
      }
      for (int i = 0; i < exact.size(); ++i) {
        o.Check(lower.tokens[i].log_tempnorm_step <=
                    exact.tokens[i].log_tempnorm_step,
                "per-step bound violated");
      }
      ++bound_checks;
    }
  }
  std::filesystem::remove_all(dir);
  o.Note(Fmt("%.0f sequences bit-identical, ", identical) +
         Fmt("%.0f lower-bound checks", bound_checks));
  return o;
}

// ---- 11 ----
Outcome EvalHarness() {
  Outcome o;
  Rng rng(1111);
  double worst = 0.0;
  int eer_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.Below(999));
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::round(rng.Normal() * 4.0) / 2.0;
      l[i] = rng.Below(2) ? Label::kMachine : Label::kHuman;
    }
    l[0] = Label::kMachine;
    l[1] = Label::kHuman;
    double wins = 0.0, n1 = 0.0, n0 = 0.0;
    for (int i = 0; i < n; ++i) (l[i] == Label::kMachine ? n1 : n0) += 1.0;
    for (int i = 0; i < n; ++i) {
      if (l[i] != Label::kMachine) continue;
      for (int j = 0; j < n; ++j) {
        if (l[j] != Label::kHuman) continue;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    const double auc = Auroc(s, l, Orientation::kHigherIsMachine);
    worst = std::max(worst, std::abs(auc - wins / (n1 * n0)));

    // Exhaustive sweep: every gap midpoint and both ends, first minimum.
    for (auto orient :
         {Orientation::kHigherIsMachine, Orientation::kLowerIsMachine}) {
      std::vector<double> u = s;
      std::sort(u.begin(), u.end());
      u.erase(std::unique(u.begin(), u.end()), u.end());
      std::vector<double> cand = {u.front() - 1.0};
      for (size_t i = 0; i + 1 < u.size(); ++i) {
        cand.push_back((u[i] + u[i + 1]) / 2);
      }
      cand.push_back(u.back() + 1.0);
      double best_gap = 2.0, best_t = 0.0, best_eer = 0.0;
      for (double t : cand) {
        double fp = 0, fn = 0;
        for (int i = 0; i < n; ++i) {
          const bool mach = PredictsMachine(s[i], t, orient);
          fp += mach && l[i] == Label::kHuman;
          fn += !mach && l[i] == Label::kMachine;
        }
        const double gap = std::abs(fp / n0 - fn / n1);
        if (gap < best_gap - 1e-15) {
          best_gap = gap;
          best_t = t;
          best_eer = (fp / n0 + fn / n1) / 2;
        }
      }
      const auto e = EerThreshold(s, l, orient);
      eer_mismatch +=
          e.threshold != best_t || std::abs(e.eer - best_eer) > 1e-15;
    }
  }
  o.Check(worst < 1e-12, Fmt("AUROC error %.3g", worst));
  o.Check(eer_mismatch == 0, Fmt("%.0f EER mismatches", eer_mismatch));

  std::vector<int> lengths;
  std::vector<Label> labels;
  for (int i = 0; i < 20; ++i) {
    lengths.push_back(300);
    labels.push_back(Label::kMachine);
    lengths.push_back(80);
    labels.push_back(Label::kHuman);
  }
  const auto audit = AuditLengths(lengths, labels);
  o.Check(audit.warn, "length audit silent on 300 vs 80 tokens");
  o.Note(Fmt("AUROC max error %.3g; EER sweeps match; length audit: ", worst) +
         audit.reason);
  return o;
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace temptest

int main() {
  using namespace temptest;
  const std::vector<Criterion> criteria = {
      {1, "tau=1 degeneracy", 1.0, TauOneDegeneracy},
      {2, "log-ratio identity", 5.0, LogRatioIdentity},
      {3, "posterior exactness", 0.0, PosteriorExactness},
      {4, "expectation signs", 0.0, ExpectationSigns},
      {5, "coin-flip Monte Carlo", 10.0, CoinFlip},
      {6, "Bayes optimality", 0.0, BayesOptimality},
      {7, "top-k posterior", 0.0, TopKPosteriorCheck},
      {8, "toy detection experiment", 60.0, ToyExperiment},
      {9, "scanner properties", 0.0, Scanner},
      {10, "backend equivalence", 0.0, BackendEquivalence},
      {11, "eval harness", 0.0, EvalHarness},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += Fmt("; took %.2f s, budget %.0f s", secs, c.budget_s);
    }
    std::printf("%s %2d %-26s %7.3fs  %s\n", o.pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
