#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xchain/sim.hpp"

using namespace xchain;
using namespace xchain::testing;

namespace {

SimConfig small(std::size_t n, double p_c, double g, Height blocks, std::uint64_t seed = 1) {
  SimConfig c;
  c.n = n;
  c.p_c = p_c;
  c.g = g;
  c.num_blocks = blocks;
  c.seed = seed;
  c.finalize();
  return c;
}

double mean_draws(double p_c, int draws, std::uint64_t seed) {
  Rng rng(seed);
  std::uint64_t total = 0;
  for (int i = 0; i < draws; ++i) total += draw_task_count(p_c, rng);
  return static_cast<double>(total) / draws;
}

}  // namespace

TEST(DrawTaskCount, ZeroRate) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(draw_task_count(0.0, rng), 0u);
}

TEST(DrawTaskCount, GeometricMeans) {
  auto closed_form = [](double p) { return p / (1 - p); };
  EXPECT_NEAR(mean_draws(0.1, 1000000, 501), closed_form(0.1), 0.001);
  EXPECT_NEAR(mean_draws(0.4, 1000000, 503), closed_form(0.4), 0.003);
}

TEST(Metrics, HistogramStatisticsMatchExpandedSamples) {
  Metrics m;
  m.gap_histogram = {{0, 50}, {1, 30}, {2, 10}, {5, 9}, {9, 1}};
  std::vector<double> xs;
  for (const auto& [g, f] : m.gap_histogram) xs.insert(xs.end(), f, static_cast<double>(g));
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();
  std::sort(xs.begin(), xs.end());
  EXPECT_DOUBLE_EQ(m.mean_gap(), mean);
  EXPECT_NEAR(m.gap_variance(), var, 1e-12);
  EXPECT_EQ(m.gap_percentile(99), static_cast<Height>(xs[98]));
  EXPECT_EQ(m.gap_percentile(50), static_cast<Height>(xs[49]));
  EXPECT_EQ(m.gap_percentile(100), 9u);
  EXPECT_EQ(m.gap_count(), 100u);
}

TEST(Metrics, MaxAndTotal) {
  Metrics m;
  m.requests_sent = {3, 9, 4};
  m.gossips_sent = {1, 1, 7};
  EXPECT_EQ(m.max_requests(), 9u);
  EXPECT_EQ(m.total_requests(), 16u);
  EXPECT_EQ(m.max_gossips(), 7u);
  EXPECT_EQ(m.total_gossips(), 9u);
}

TEST(ClassifyTask, TruthTable) {
  const SideState none{true, false, false};
  const SideState done{true, true, false};
  const SideState undone{true, true, true};
  const SideState orphan_reverse{true, false, true};
  EXPECT_EQ(classify_task(done, done), TaskOutcome::Succeeded);
  EXPECT_EQ(classify_task(none, none), TaskOutcome::Aborted);
  EXPECT_EQ(classify_task(undone, none), TaskOutcome::Reversed);
  EXPECT_EQ(classify_task(undone, undone), TaskOutcome::Reversed);
  EXPECT_EQ(classify_task(done, none), TaskOutcome::Partial);
  EXPECT_EQ(classify_task(done, undone), TaskOutcome::Partial);
  EXPECT_EQ(classify_task(orphan_reverse, none), TaskOutcome::Partial);
}

TEST(SampleGap, FreshViewHasZeroGap) {
  Chain c0(system_config(0));
  Chain c1(system_config(1));
  grow(c0, 10);
  grow(c1, 14);
  std::vector<ViewList> lists(2);
  lists[0].owner = SystemId(0);
  lists[1].owner = SystemId(1);
  lists[0].entries[SystemId(1)] = generate_view(c1, 5, c1.config());
  const std::vector<Height> truth = {generate_view(c0, 5, c0.config()).height,
                                     generate_view(c1, 5, c1.config()).height};
  const auto gaps = sample_gap(lists, truth, 3);
  ASSERT_EQ(gaps.size(), 2u);
  EXPECT_EQ(gaps[0].observer, SystemId(0));
  EXPECT_EQ(gaps[0].gap, 0u);
  EXPECT_EQ(gaps[1].observer, SystemId(1));
  EXPECT_EQ(gaps[1].gap, truth[0]);
  EXPECT_TRUE(sample_gap(lists, truth, 3, {true, false}).empty());
}

TEST(Run, InertRunHasNoTraffic) {
  const SimResult r = run(small(2, 0.0, 0.0, 1000));
  EXPECT_EQ(r.metrics.total_requests(), 0u);
  EXPECT_EQ(r.metrics.total_gossips(), 0u);
  EXPECT_EQ(r.metrics.tasks_started, 0u);
  EXPECT_TRUE(r.violations.empty());
}

TEST(Run, SameSeedSameTranscript) {
  const SimResult a = run(small(4, 0.2, 0.3, 1500, 9));
  const SimResult b = run(small(4, 0.2, 0.3, 1500, 9));
  EXPECT_EQ(a.transcript, b.transcript);
  EXPECT_EQ(a.metrics.requests_sent, b.metrics.requests_sent);
  EXPECT_EQ(a.metrics.gossips_sent, b.metrics.gossips_sent);
  EXPECT_EQ(a.metrics.gap_histogram, b.metrics.gap_histogram);
  const SimResult c = run(small(4, 0.2, 0.3, 1500, 10));
  EXPECT_NE(a.transcript, c.transcript);
}

TEST(Run, HonestRunIsSafe) {
  const SimResult r = run(small(5, 0.2, 0.1, 3000, 3));
  EXPECT_TRUE(r.violations.empty());
  EXPECT_EQ(r.metrics.conflicts_detected, 0u);
  EXPECT_GT(r.metrics.tasks_succeeded, 0u);
  for (const auto& t : r.tasks) {
    const auto si = side_state(r.chains[t.initiator.value], t.ctx_i, t.tx_i, t.rev_i);
    const auto sj = side_state(r.chains[t.counterparty.value], t.ctx_j, t.tx_j, t.rev_j);
    EXPECT_NE(classify_task(si, sj), TaskOutcome::Partial) << "task " << t.id;
  }
}

TEST(Run, SynchronousBroadcastKeepsGapAtMostOne) {
  SimConfig c = small(4, 0.2, 1.0, 2000, 5);
  c.latency = 0;
  c.jitter = 0;
  c.gossip_timer = 1;
  const SimResult r = run(c);
  ASSERT_GT(r.metrics.gap_count(), 0u);
  EXPECT_LE(r.metrics.gap_histogram.rbegin()->first, 1u);
}

TEST(Run, EveryRequestCounted) {
  // Each task issues at least one poll and one timeout query per side.
  const SimResult r = run(small(2, 0.1, 0.1, 2000, 7));
  EXPECT_GE(r.metrics.total_requests(), 4 * r.metrics.tasks_succeeded);
}

TEST(Config, Validation) {
  SimConfig c = small(1, 0.1, 0.1, 10);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(3, 1.0, 0.1, 10);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(3, 0.1, 1.5, 10);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(4, 0.1, 0.1, 10);
  c.edges = {{SystemId(0), SystemId(1)}, {SystemId(2), SystemId(3)}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(3, 0.1, 0.1, 10);
  c.systems[1].r = 9;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(small(3, 0.1, 0.1, 10).validate());
}

TEST(Config, ExpiryMargin) {
  SimConfig c;
  EXPECT_EQ(c.expiry_margin(5), 16u);
  c.expiry_factor = 2.5;
  EXPECT_EQ(c.expiry_margin(5), 20u);
}

TEST(Audit, FlagsReverseAfterPeerCompleted) {
  Chain ci(system_config(0));
  Chain cj(system_config(1));
  TaskRecord t;
  t.id = 4;
  t.initiator = SystemId(0);
  t.counterparty = SystemId(1);
  t.tx_i = Transaction::make(TxKind::Target, "i", {}, SystemId(0));
  t.rev_i = make_reverse(t.tx_i, "ri");
  t.tx_j = Transaction::make(TxKind::Target, "j", {}, SystemId(1));
  t.rev_j = make_reverse(t.tx_j, "rj");
  ci.commit({t.tx_i});
  cj.commit({t.tx_j});
  std::vector<Chain> chains = {ci, cj};
  EXPECT_TRUE(audit_late_commits({t}, chains).empty());
  chains[1].commit({t.rev_j});
  const auto flags = audit_late_commits({t}, chains);
  ASSERT_EQ(flags.size(), 1u);
  EXPECT_EQ(flags[0].system, SystemId(1));
  EXPECT_EQ(flags[0].task, 4u);
}
