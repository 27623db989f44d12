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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "temptest/error.h"
#include "test_util.h"

namespace temptest {
namespace {

CondDist Row(std::vector<double> p) { return CondDist::FromProbs(p); }

TEST(TemperTest, MatchesPowerRenormalization) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.Below(15));
    std::vector<double> p(n);
    double z = 0.0;
    for (double& v : p) z += (v = 0.01 + rng.Uniform());
    for (double& v : p) v /= z;
    const double tau = 0.05 + 0.95 * rng.Uniform();
    const auto q = Temper(Row(p), tau).probs();
    const auto want = testing::PowNormalize(p, tau);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(q[i], want[i], 1e-12);
  }
}

TEST(TemperTest, TauOneIsIdentity) {
  const auto row = Row({0.1, 0.2, 0.7});
  EXPECT_TRUE(Temper(row, 1.0) == row);
}

TEST(TemperTest, RejectsTauOutsideUnitInterval) {
  const auto row = Row({0.5, 0.5});
  for (double tau : {0.0, -0.5, 1.5, std::nan("")}) {
    EXPECT_THROW(Temper(row, tau), ConfigError) << tau;
    EXPECT_THROW(DecodingStrategy::Temperature(tau), ConfigError) << tau;
  }
}

TEST(RankOrderTest, TiesBreakTowardLowerId) {
  const auto order = RankOrder(Row({0.25, 0.25, 0.5}));
  EXPECT_EQ(order, (std::vector<TokenId>{2, 0, 1}));
}

TEST(TruncateTopKTest, KeepsKMostProbable) {
  const auto q = TruncateTopK(Row({0.25, 0.25, 0.5}), 2).probs();
  EXPECT_NEAR(q[0], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(q[1], 0.0);
  EXPECT_NEAR(q[2], 2.0 / 3.0, 1e-15);
  EXPECT_THROW(TruncateTopK(Row({0.5, 0.5}), 0), ConfigError);
  EXPECT_THROW(TruncateTopK(Row({0.5, 0.5}), 3), ConfigError);
}

TEST(TruncateTopPTest, SmallestPrefixReachingP) {
  const auto row = Row({0.5, 0.3, 0.2});
  EXPECT_EQ(NucleusSize(row, RankOrder(row), 0.8), 2);
  EXPECT_EQ(NucleusSize(row, RankOrder(row), 0.5), 1);
  EXPECT_EQ(NucleusSize(row, RankOrder(row), 0.81), 3);
  const auto q = TruncateTopP(row, 0.8).probs();
  EXPECT_NEAR(q[0], 0.625, 1e-15);
  EXPECT_NEAR(q[1], 0.375, 1e-15);
  EXPECT_EQ(q[2], 0.0);
  EXPECT_THROW(TruncateTopP(row, 0.0), ConfigError);
  EXPECT_THROW(TruncateTopP(row, 1.1), ConfigError);
}

TEST(StrategyTest, ApplyAlwaysNormalizes) {
  Rng rng(2);
  const std::vector<DecodingStrategy> strategies = {
      DecodingStrategy::Pure(), DecodingStrategy::Temperature(0.3),
      DecodingStrategy::TopK(3), DecodingStrategy::TopP(0.6)};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(6);
    double z = 0.0;
    for (double& v : p) z += (v = rng.Uniform() + 1e-3);
    for (double& v : p) v /= z;
    for (const auto& s : strategies) {
      double total = 0.0;
      for (double v : s.Apply(Row(p)).probs()) total += v;
      EXPECT_NEAR(total, 1.0, 1e-12) << s.name();
    }
  }
}

TEST(StrategyTest, MetadataDisablesTopKExplicitly) {
  EXPECT_EQ(DecodingStrategy::Pure().ToJson()["top_k"], "disabled");
  EXPECT_EQ(DecodingStrategy::Temperature(0.8).ToJson()["top_k"], "disabled");
  EXPECT_EQ(DecodingStrategy::TopK(5).ToJson()["k"], 5);
  EXPECT_THROW(DecodingStrategy::TopK(9).Validate(4), ConfigError);
  EXPECT_THROW(ParseStrategyKind("beam"), ConfigError);
}

TEST(InverseCdfDrawTest, FollowsCumulativeMass) {
  const auto row = Row({0.2, 0.0, 0.8});
  EXPECT_EQ(InverseCdfDraw(row, 0.0), 0);
  EXPECT_EQ(InverseCdfDraw(row, 0.1999), 0);
  EXPECT_EQ(InverseCdfDraw(row, 0.2001), 2);
  EXPECT_EQ(InverseCdfDraw(row, 0.9999999999), 2);
}

TEST(SampleTest, SameSeedSameSequence) {
  const ToyLM m = RandomToyLM(8, 2, 4);
  const auto s = DecodingStrategy::Temperature(0.7);
  const auto a = SampleSequence(m, s, 40, {}, 123);
  const auto b = SampleSequence(m, s, 40, {}, 123);
  const auto c = SampleSequence(m, s, 40, {}, 124);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_NE(a.tokens, c.tokens);
  EXPECT_EQ(a.meta["seed"], 123);
  EXPECT_EQ(a.meta["strategy"], "temperature");
  EXPECT_EQ(a.label, Label::kMachine);
}

TEST(SampleTest, EmpiricalFrequenciesMatchTemperedRow) {
  const double probs[] = {0.6, 0.3, 0.1};
  const ToyLM m = ContextFreeLM(probs);
  const auto want = testing::PowNormalize({0.6, 0.3, 0.1}, 0.5);
  Rng rng(77);
  const int n = 200000;
  std::vector<int> counts(3, 0);
  const auto tokens =
      SampleTokens(m, DecodingStrategy::Temperature(0.5), n, {}, rng);
  for (TokenId t : tokens) ++counts[t];
  for (int v = 0; v < 3; ++v) {
    const double sd = std::sqrt(want[v] * (1 - want[v]) / n);
    EXPECT_NEAR(counts[v] / static_cast<double>(n), want[v], 5 * sd);
  }
}

TEST(SampleTest, TopKNeverLeavesTheSet) {
  const ToyLM m = RandomToyLM(10, 1, 8);
  Rng rng(5);
  std::vector<TokenId> ctx;
  const auto tokens = SampleTokens(m, DecodingStrategy::TopK(3), 500, {}, rng);
  for (TokenId t : tokens) {
    const auto order = RankOrder(m.Next(ctx));
    EXPECT_TRUE(t == order[0] || t == order[1] || t == order[2]);
    ctx.push_back(t);
  }
}

TEST(EnumerateTest, PureMatchesChainRuleAndSumsToOne) {
  const ToyLM m = RandomToyLM(3, 2, 10);
  const auto d = EnumerateSeqDist(m, DecodingStrategy::Pure(), 4);
  const auto all = testing::AllSequences(3, 4);
  ASSERT_EQ(d.entries().size(), all.size());
  double total = 0.0;
  for (size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(d.entries()[i].tokens, all[i]);
    EXPECT_NEAR(d.entries()[i].logprob, testing::PureLogProb(m, all[i]),
                1e-12);
    total += std::exp(testing::PureLogProb(m, all[i]));
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(d.TotalMass(), 1.0, 1e-12);
}

TEST(EnumerateTest, TemperatureMatchesPerStepPowers) {
  const ToyLM m = RandomToyLM(4, 1, 11);
  const auto d = EnumerateSeqDist(m, DecodingStrategy::Temperature(0.6), 3);
  for (const auto& e : d.entries()) {
    EXPECT_NEAR(e.logprob, testing::TemperedLogProb(m, e.tokens, 0.6), 1e-12);
  }
  EXPECT_NEAR(d.TotalMass(), 1.0, 1e-12);
}

TEST(EnumerateTest, TopKSupportIsInSetSequences) {
  const ToyLM m = RandomToyLM(4, 1, 12);
  const auto d = EnumerateSeqDist(m, DecodingStrategy::TopK(2), 3);
  EXPECT_EQ(d.entries().size(), 8u);
  EXPECT_NEAR(d.TotalMass(), 1.0, 1e-12);
  const std::vector<TokenId> absent = {9, 9, 9};
  EXPECT_EQ(d.LogProbOf(absent), -INFINITY);
}

TEST(EnumerateTest, CapIsEnforced) {
  const ToyLM m = RandomToyLM(10, 1, 1);
  EXPECT_THROW(EnumerateSeqDist(m, DecodingStrategy::Pure(), 7),
               CapExceededError);
  EXPECT_NO_THROW(CheckEnumerationCap(10, 6, kDefaultEnumerationCap));
}

}  // namespace
}  // namespace temptest
