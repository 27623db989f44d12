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

#include "temptest/stats.h"

#include <gtest/gtest.h>

#include <cmath>

#include "temptest/backends.h"
#include "temptest/decode.h"
#include "temptest/error.h"
#include "temptest/random.h"
#include "test_util.h"

namespace temptest {
namespace {

CondDist Row(std::vector<double> p) { return CondDist::FromProbs(p); }

ScoringParams Params(double tau, int k = 50, double p = 0.95) {
  return ScoringParams{tau, k, p};
}

TEST(ScoreTokenTest, RankCountsTiesTowardLowerId) {
  const auto row = Row({0.25, 0.25, 0.5});
  EXPECT_EQ(ScoreToken(row, 2, Params(0.8)).rank, 1);
  EXPECT_EQ(ScoreToken(row, 0, Params(0.8)).rank, 2);
  EXPECT_EQ(ScoreToken(row, 1, Params(0.8)).rank, 3);
}

TEST(ScoreTokenTest, EntropyIsNonNegativeShannonEntropy) {
  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  double want = 0.0;
  for (double v : p) want -= v * std::log(v);
  const auto ts = ScoreToken(Row(p), 0, Params(0.8));
  EXPECT_NEAR(ts.entropy, want, 1e-12);
  EXPECT_GT(ts.entropy, 0.0);
}

TEST(ScoreTokenTest, TempNormStepIsLogOfPowerSum) {
  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  for (double tau : {0.1, 0.5, 0.8, 0.99}) {
    double s = 0.0;
    for (double v : p) s += std::pow(v, 1.0 / tau);
    EXPECT_NEAR(ScoreToken(Row(p), 1, Params(tau)).log_tempnorm_step,
                std::log(s), 1e-12);
  }
}

TEST(ScoreTokenTest, TauOneGivesExactlyZero) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(5);
    double z = 0.0;
    for (double& v : p) z += (v = rng.Uniform() + 1e-6);
    for (double& v : p) v /= z;
    EXPECT_EQ(ScoreToken(Row(p), 0, Params(1.0)).log_tempnorm_step, 0.0);
  }
}

TEST(ScoreTokenTest, TopKAndNucleusMasses) {
  const auto row = Row({0.5, 0.3, 0.2});
  const auto k1 = ScoreToken(row, 0, Params(0.8, 1, 0.8));
  EXPECT_NEAR(k1.topk_mass(), 0.5, 1e-15);
  EXPECT_NEAR(k1.topp_mass(), 0.8, 1e-15);
  EXPECT_EQ(k1.nucleus_size, 2);
  EXPECT_TRUE(k1.in_topk(1));
  const auto kall = ScoreToken(row, 2, Params(0.8, 50, 1.0));
  EXPECT_EQ(kall.log_topk_mass, 0.0);
  EXPECT_EQ(kall.log_topp_mass, 0.0);
  EXPECT_FALSE(ScoreToken(row, 2, Params(0.8, 2)).in_topk(2));
}

TEST(ScoreTokenTest, RejectsTokenOutsideRow) {
  EXPECT_THROW(ScoreToken(Row({0.5, 0.5}), 2, Params(0.8)), ConfigError);
}

TEST(ScoringParamsTest, Validation) {
  EXPECT_THROW(Params(0.0).Validate(), ConfigError);
  EXPECT_THROW(Params(1.01).Validate(), ConfigError);
  EXPECT_THROW(Params(0.5, 0).Validate(), ConfigError);
  EXPECT_THROW(Params(0.5, 5, 0.0).Validate(), ConfigError);
  EXPECT_NO_THROW(Params(1.0).Validate());
}

// TempTest(w) = (log P(w) - log Q_tau(w)) / T for random models.
TEST(TempTestProperty, LogRatioIdentity) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.Below(15));
    const int order = static_cast<int>(rng.Below(3));
    const ToyLM m = RandomToyLM(n, order, rng.engine()());
    const double tau = 0.1 + 0.9 * rng.Uniform();
    const int T = 1 + static_cast<int>(rng.Below(64));
    const auto w = SampleTokens(m, DecodingStrategy::Pure(), T, {}, rng);
    const auto s = ScoreWithModel(m, w, Params(tau));
    const double want = (testing::PureLogProb(m, w) -
                         testing::TemperedLogProb(m, w, tau)) /
                        T;
    EXPECT_NEAR(TempTest(s, tau), want, 1e-9);
  }
}

TEST(TempTestProperty, TauOneIsZeroForEverySequence) {
  const ToyLM m = RandomToyLM(9, 2, 1);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto w = SampleTokens(m, DecodingStrategy::Temperature(0.5), 30, {},
                                rng);
    const auto s = ScoreWithModel(m, w, Params(1.0));
    EXPECT_EQ(TempTest(s, 1.0), 0.0);
    EXPECT_EQ(LogTempNorm(s, 1.0), 0.0);
  }
}

TEST(TempTestTest, TauMismatchIsAnError) {
  const ToyLM m = RandomToyLM(4, 1, 1);
  const std::vector<TokenId> w = {0, 1};
  const auto s = ScoreWithModel(m, w, Params(0.8));
  EXPECT_THROW(TempTest(s, 0.7), ConfigError);
  EXPECT_THROW(LogTempNorm(s, 0.7), ConfigError);
}

TEST(BaselineTest, PerTokenStatisticsMatchDirectFormulas) {
  const ToyLM m = RandomToyLM(6, 1, 17);
  const std::vector<TokenId> w = {3, 1, 4, 1, 5};
  const auto s = ScoreWithModel(m, w, Params(0.8));
  std::vector<TokenId> ctx;
  double ll = 0.0, lr = 0.0, ent = 0.0, mu = 0.0, var = 0.0;
  for (TokenId t : w) {
    const auto p = m.Next(ctx).probs();
    ll += std::log(p[t]);
    int rank = 1;
    for (int v = 0; v < 6; ++v) rank += p[v] > p[t] || (p[v] == p[t] && v < t);
    lr += std::log(rank);
    double e = 0.0, m1 = 0.0, m2 = 0.0;
    for (double pv : p) {
      e -= pv * std::log(pv);
      m1 += pv * std::log(pv);
      m2 += pv * std::log(pv) * std::log(pv);
    }
    ent += e;
    mu += m1;
    var += m2 - m1 * m1;
    ctx.push_back(t);
  }
  const double T = 5.0;
  EXPECT_NEAR(PerTokenLogLikelihood(s), ll / T, 1e-12);
  EXPECT_NEAR(PerTokenLogRank(s), lr / T, 1e-12);
  EXPECT_NEAR(PerTokenEntropy(s), ent / T, 1e-12);
  EXPECT_NEAR(FastDetectAnalytic(s), (ll / T - mu / T) / (std::sqrt(var) / T),
              1e-9);
}

TEST(BaselineTest, DegenerateRowsMakeFastDetectUndefined) {
  const double probs[] = {1.0, 0.0};
  const ToyLM m = ContextFreeLM(probs);
  const std::vector<TokenId> w = {0, 0, 0};
  const auto s = ScoreWithModel(m, w, Params(0.8));
  EXPECT_THROW(FastDetectAnalytic(s), UnscorableError);
  const auto agg = Aggregate(s, "x", Label::kHuman);
  EXPECT_TRUE(agg.scorable);
  EXPECT_TRUE(std::isnan(agg.fastdetect_analytic));
  EXPECT_FALSE(agg.defined[static_cast<int>(Statistic::kFastDetect)]);
}

TEST(BaselineTest, ZeroProbabilityTokenIsUnscorable) {
  const double probs[] = {1.0, 0.0};
  const ToyLM m = ContextFreeLM(probs);
  const std::vector<TokenId> w = {0, 1};
  const auto s = ScoreWithModel(m, w, Params(0.8));
  EXPECT_FALSE(s.valid());
  EXPECT_THROW(TempTest(s, 0.8), UnscorableError);
  const auto agg = Aggregate(s, "x", Label::kHuman);
  EXPECT_FALSE(agg.scorable);
  EXPECT_TRUE(std::isnan(agg.temptest));
  EXPECT_NE(ScoreCsvRow(agg, false).find("nan"), std::string::npos);
}

TEST(GeoMeanTest, SpanAndWholeSequence) {
  const auto row = Row({0.5, 0.3, 0.2});
  const std::vector<CondDist> rows = {row, row, row};
  const std::vector<TokenId> w = {0, 1, 2};
  const auto s = ScoreTokens(rows, w, Params(0.8, 2, 0.5));
  EXPECT_NEAR(GeoMeanTopKMass(s), 0.8, 1e-15);
  EXPECT_NEAR(GeoMeanTopKMass(s, {1, 2}), 0.8, 1e-15);
  EXPECT_NEAR(GeoMeanTopPMass(s), 0.5, 1e-15);
  EXPECT_THROW(GeoMeanTopKMass(s, {2, 2}), ConfigError);
  EXPECT_THROW(GeoMeanTopKMass(s, {0, 4}), ConfigError);
}

// Every partial sum of a truncated row bounds the full value from below.
TEST(TruncatedTest, LowerBoundsHold) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.Below(12));
    std::vector<double> p(n);
    double z = 0.0;
    for (double& v : p) z += (v = rng.Uniform() + 1e-4);
    for (double& v : p) v /= z;
    const auto row = Row(p);
    const TokenId tok = static_cast<TokenId>(rng.Below(n));
    const auto params = Params(0.2 + 0.8 * rng.Uniform(),
                               1 + static_cast<int>(rng.Below(n)), 0.9);
    const auto full = ScoreToken(row, tok, params);
    for (int top = 1; top <= n; ++top) {
      const auto t = ScoreTokenTruncated(TruncateRow(row, top, tok), tok,
                                         params);
      EXPECT_EQ(t.logprob, full.logprob);
      EXPECT_LE(t.log_tempnorm_step, full.log_tempnorm_step + 1e-12);
      EXPECT_LE(t.entropy, full.entropy + 1e-12);
      EXPECT_LE(t.log_topk_mass, full.log_topk_mass + 1e-12);
      EXPECT_LE(t.log_topp_mass, full.log_topp_mass + 1e-12);
      if (t.rank_exact) {
        EXPECT_EQ(t.rank, full.rank);
      } else {
        EXPECT_GT(full.rank, top);
      }
      if (t.topk_exact) {
        EXPECT_NEAR(t.log_topk_mass, full.log_topk_mass, 1e-12);
      }
      if (top == n) {
        EXPECT_NEAR(t.log_tempnorm_step, full.log_tempnorm_step, 1e-12);
        EXPECT_NEAR(t.entropy, full.entropy, 1e-12);
      }
    }
  }
}

TEST(AggregateTest, TruncatedMarksInexactStatistics) {
  const auto row = Row({0.4, 0.3, 0.2, 0.1});
  const TopNRow top = TruncateRow(row, 2, 3);
  ScoredTokens s;
  s.params = Params(0.8, 2, 0.95);
  s.tokens.push_back(ScoreTokenTruncated(top, 3, s.params));
  const auto agg = Aggregate(s, "x", Label::kMachine);
  EXPECT_TRUE(agg.truncated);
  EXPECT_NEAR(agg.max_residual_mass, 0.3, 1e-12);
  EXPECT_TRUE(agg.exact[static_cast<int>(Statistic::kLogLik)]);
  EXPECT_TRUE(agg.exact[static_cast<int>(Statistic::kGeoTopK)]);
  EXPECT_FALSE(agg.exact[static_cast<int>(Statistic::kLogRank)]);
  EXPECT_FALSE(agg.exact[static_cast<int>(Statistic::kTempTest)]);
  EXPECT_FALSE(agg.defined[static_cast<int>(Statistic::kFastDetect)]);
  EXPECT_NE(ScoreCsvHeader(true).find("residual_mass"), std::string::npos);
}

TEST(StatisticNameTest, RoundTrip) {
  for (Statistic s : kAllStatistics) {
    EXPECT_EQ(ParseStatistic(StatisticName(s)), s);
  }
  EXPECT_THROW(ParseStatistic("perplexity"), ConfigError);
}

}  // namespace
}  // namespace temptest
