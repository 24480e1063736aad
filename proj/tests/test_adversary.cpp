#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xchain/adversary.hpp"
#include "xchain/gossip.hpp"

using namespace xchain;
using namespace xchain::testing;

namespace {

CheckResponse honest_absent(std::size_t hashes) {
  CheckResponse r;
  r.results.assign(hashes, std::nullopt);
  return r;
}

std::vector<SystemConfig> systems(std::size_t n, std::uint32_t q = 10, std::uint32_t r = 7) {
  std::vector<SystemConfig> out;
  for (std::size_t i = 0; i < n; ++i) {
    SystemConfig c = system_config(static_cast<std::uint16_t>(i));
    c.q = q;
    c.r = r;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(Adv1, NoControlledNodesPassesThrough) {
  Rng rng(401);
  const Adv1Params params{ChannelMode::PermissionedSampled, 10, 7, 0, 1};
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(adv1_intercept({}, honest_absent(1), params, rng).has_value());
  }
}

TEST(Adv1, PermissionlessNeverForged) {
  Rng rng(403);
  const Adv1Params params{ChannelMode::Permissionless, 10, 7, 9, 1};
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(adv1_intercept({}, honest_absent(1), params, rng).has_value());
  }
}

TEST(Adv1, ForgedResponseFlipsResultsAndCannotCarryQuorum) {
  Rng rng(405);
  const Adv1Params params{ChannelMode::PermissionedSampled, 10, 7, 6, 1};
  std::optional<CheckResponse> forged;
  for (int i = 0; i < 100 && !forged; ++i) forged = adv1_intercept({}, honest_absent(2), params, rng);
  ASSERT_TRUE(forged.has_value());
  EXPECT_TRUE(forged->forged);
  for (const auto& r : forged->results) EXPECT_TRUE(r.has_value());
  EXPECT_FALSE(proof_is_valid(forged->view.proof, 10, 7));
}

TEST(SampleAllControlled, FrequencyMatchesHypergeometric) {
  const std::uint32_t q = 10, controlled = 6, m = 3;
  const double p = 20.0 / 120.0;  // C(6,3) / C(10,3)
  Rng rng(407);
  const int trials = 200000;
  int hits = 0;
  for (int i = 0; i < trials; ++i) hits += sample_all_controlled(q, controlled, m, rng) ? 1 : 0;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  EXPECT_NEAR(static_cast<double>(hits) / trials, p, 4 * sigma);
  EXPECT_NEAR(all_in_group_probability(q, controlled, m), p, 1e-12);
}

TEST(SampleAllControlled, ImpossibleCases) {
  Rng rng(409);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(sample_all_controlled(10, 6, 7, rng));
    EXPECT_FALSE(sample_all_controlled(10, 6, 11, rng));
  }
  EXPECT_TRUE(sample_all_controlled(10, 10, 4, rng));
}

TEST(Adv1MonteCarlo, RateWithinBound) {
  for (double p : {0.01, 0.001}) {
    const auto rep = adv1_monte_carlo(10, 7, p, 100000, ChannelMode::PermissionedSampled, 411);
    EXPECT_EQ(rep.controlled, 6u);
    EXPECT_EQ(rep.m, min_confirmations(10, 7, p).m);
    EXPECT_LE(rep.rate, p + 3 * rep.sigma) << "p=" << p;
    EXPECT_TRUE(to_json(rep).at("within_bound").get<bool>());
  }
}

TEST(Adv1MonteCarlo, LooserSamplingIsExploitable) {
  // Sanity check on the harness: with too few confirmations the forgery rate
  // tracks the hypergeometric probability instead of vanishing.
  Rng rng(413);
  const Adv1Params params{ChannelMode::PermissionedSampled, 10, 7, 6, 2};
  RequestChannel ch;
  ch.responder = [](const CheckRequest& req) {
    return std::optional<CheckResponse>(honest_absent(req.hashes.size()));
  };
  ch.interceptor = make_adv1_interceptor(params, rng);
  const int trials = 50000;
  int forged = 0;
  for (int i = 0; i < trials; ++i) forged += send_check(ch, CheckRequest{{hash_bytes("x")}, {}, 0}).forged;
  const double p = all_in_group_probability(10, 6, 2);
  EXPECT_NEAR(static_cast<double>(forged) / trials, p, 4 * std::sqrt(p * (1 - p) / trials));
}

TEST(Adv2Fork, AtGenesisSharesOnlyGenesis) {
  Chain c(system_config(1));
  grow(c, 10);
  auto [a, b] = adv2_fork(c, 0);
  EXPECT_EQ(a.header_hash_at(0), c.header_hash_at(0));
  EXPECT_EQ(b.header_hash_at(0), c.header_hash_at(0));
  for (Height h = 1; h < std::min(a.height(), b.height()); ++h) {
    EXPECT_NE(a.header_hash_at(h), b.header_hash_at(h));
  }
}

TEST(Adv2Fork, BranchesAreFinalAndIrreconcilable) {
  Chain c(system_config(1, 2));
  grow(c, 15);
  auto [a, b] = adv2_fork(c, 9);
  for (Height h = 0; h <= 9; ++h) EXPECT_EQ(a.header_hash_at(h), c.header_hash_at(h));
  EXPECT_GE(a.finalized_length(), 11u);
  const View va = generate_view(a, 5, a.config());
  const View vb = generate_view(b, 5, b.config());
  ASSERT_EQ(va.height, vb.height);
  EXPECT_FALSE(can_extend(va, vb, 5));
  EXPECT_FALSE(can_extend(vb, va, 5));

  ViewList local;
  local.owner = SystemId(0);
  local.entries[SystemId(1)] = va;
  ViewList incoming;
  incoming.owner = SystemId(2);
  incoming.entries[SystemId(1)] = vb;
  const Registry reg = {system_config(0, 2), system_config(1, 2), system_config(2, 2)};
  const auto r = merge(local, incoming, reg);
  ASSERT_EQ(r.conflicts.size(), 1u);
  EXPECT_TRUE(validate_evidence(r.conflicts[0], reg));
}

TEST(Adv2Fork, BeyondTipThrows) {
  Chain c(system_config(1));
  grow(c, 5);
  EXPECT_THROW(adv2_fork(c, 5), std::out_of_range);
  EXPECT_NO_THROW(adv2_fork(c, 4));
}

TEST(Adv2DoubleTask, Preset) {
  const auto spec = adv2_double_task(SystemId(1), SystemId(0), SystemId(2));
  EXPECT_EQ(spec.kind, AdversaryKind::Adv2);
  EXPECT_EQ(spec.strategy, Strategy::ForkAndDoubleTask);
  EXPECT_EQ(spec.branch_of(SystemId(0)), Branch::A);
  EXPECT_EQ(spec.branch_of(SystemId(2)), Branch::B);
  EXPECT_TRUE(spec.serves(SystemId(0)));
  EXPECT_FALSE(spec.serves(SystemId(3)));
  EXPECT_NO_THROW(spec.validate(systems(4)));
}

TEST(AdversarySpec, Validation) {
  AdversarySpec adv1;
  adv1.kind = AdversaryKind::Adv1;
  adv1.controlled[SystemId(1)] = 0.6;
  EXPECT_NO_THROW(adv1.validate(systems(3)));
  adv1.controlled[SystemId(1)] = 0.7;
  EXPECT_THROW(adv1.validate(systems(3)), std::invalid_argument);
  adv1.controlled = {{SystemId(5), 0.1}};
  EXPECT_THROW(adv1.validate(systems(3)), std::invalid_argument);

  auto adv2 = adv2_double_task(SystemId(1), SystemId(0), SystemId(1));
  EXPECT_THROW(adv2.validate(systems(3)), std::invalid_argument);
  adv2 = adv2_double_task(SystemId(1), SystemId(0), SystemId(2));
  adv2.victims.pop_back();
  EXPECT_THROW(adv2.validate(systems(3)), std::invalid_argument);
}

TEST(AdversarySpec, JsonRoundTripAndStrictKeys) {
  const auto spec = adv2_double_task(SystemId(1), SystemId(0), SystemId(2));
  const auto j = to_json(spec);
  const auto back = adversary_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_THROW(adversary_from_json(nlohmann::json{{"kind", "adv2"}, {"bogus", 1}}),
               std::invalid_argument);
  EXPECT_THROW(adversary_from_json(nlohmann::json{{"kind", "adv3"}}), std::invalid_argument);
  EXPECT_THROW(adversary_from_json(nlohmann::json{{"kind", "adv2"}, {"branches", {{"0", "C"}}}}),
               std::invalid_argument);
}

TEST(AdversarySpec, StrategyNames) {
  for (auto s : {Strategy::ForgeCheckResponse, Strategy::ForkAndDoubleTask, Strategy::LateCommit,
                 Strategy::ForgedCheckOnFork}) {
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  }
  EXPECT_EQ(to_string(Strategy::LateCommit), "late-commit");
}
