#include <bit>
#include <chrono>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xchain/channel.hpp"

using namespace xchain;
using namespace xchain::testing;

namespace {

// Counts m-subsets of q nodes by enumeration: total[m] and, for each r,
// inside[r][m] = subsets lying entirely within the first r nodes.
struct SubsetCounts {
  std::vector<std::uint64_t> total;
  std::vector<std::vector<std::uint64_t>> inside;
};

SubsetCounts enumerate_subsets(std::uint32_t q) {
  SubsetCounts c;
  c.total.assign(q + 1, 0);
  std::vector<std::vector<std::uint64_t>> by_top(q + 1, std::vector<std::uint64_t>(q + 1, 0));
  for (std::uint32_t mask = 1; mask < (1u << q); ++mask) {
    const auto m = static_cast<std::uint32_t>(std::popcount(mask));
    const auto top = static_cast<std::uint32_t>(std::bit_width(mask));  // max element + 1
    ++c.total[m];
    ++by_top[top][m];
  }
  c.inside.assign(q + 1, std::vector<std::uint64_t>(q + 1, 0));
  for (std::uint32_t r = 1; r <= q; ++r) {
    for (std::uint32_t m = 1; m <= q; ++m) c.inside[r][m] = c.inside[r - 1][m] + by_top[r][m];
  }
  return c;
}

Confirmations brute_force(const SubsetCounts& c, std::uint32_t q, std::uint32_t r, double p) {
  for (std::uint32_t m = 1; m <= q; ++m) {
    if (static_cast<double>(c.inside[r][m]) / static_cast<double>(c.total[m]) < p) return {m, true};
  }
  return {q - r + 1, false};
}

RequestChannel channel_to(const Chain& chain) {
  RequestChannel ch;
  ch.responder = [&chain](const CheckRequest& req) {
    return std::optional<CheckResponse>(answer_check(chain, req));
  };
  return ch;
}

}  // namespace

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(10, 3), 120.0);
  EXPECT_EQ(binomial(7, 7), 1.0);
  EXPECT_EQ(binomial(7, 0), 1.0);
  EXPECT_EQ(binomial(3, 5), 0.0);
  EXPECT_EQ(binomial(60, 30), 118264581564861424.0);
}

TEST(MinConfirmations, SpotValue) {
  const auto c = min_confirmations(10, 7, 0.01);
  EXPECT_EQ(c.m, 7u);
  EXPECT_TRUE(c.satisfied);
  EXPECT_NEAR(all_in_group_probability(10, 7, 7), 1.0 / 120.0, 1e-15);
}

TEST(MinConfirmations, MatchesExhaustiveEnumeration) {
  for (std::uint32_t q = 1; q <= 20; ++q) {
    const SubsetCounts counts = enumerate_subsets(q);
    for (std::uint32_t r = 1; r <= q; ++r) {
      for (double p : {0.1, 0.01, 0.001}) {
        const auto want = brute_force(counts, q, r, p);
        const auto got = min_confirmations(q, r, p);
        ASSERT_EQ(got.m, want.m) << "q=" << q << " r=" << r << " p=" << p;
        ASSERT_EQ(got.satisfied, want.satisfied) << "q=" << q << " r=" << r << " p=" << p;
      }
    }
  }
}

TEST(MinConfirmations, FullGridUnderOneSecond) {
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t sink = 0;
  for (std::uint32_t q = 1; q <= 20; ++q) {
    for (std::uint32_t r = 1; r <= q; ++r) {
      for (double p : {0.1, 0.01, 0.001}) sink += min_confirmations(q, r, p).m;
    }
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GT(sink, 0u);
  EXPECT_LT(elapsed, std::chrono::seconds(1));
}

TEST(MinConfirmations, DegenerateAllHonestThreshold) {
  const auto c = min_confirmations(6, 6, 0.01);
  EXPECT_FALSE(c.satisfied);
  EXPECT_EQ(c.m, 1u);
}

TEST(MinConfirmations, Guards) {
  EXPECT_THROW(min_confirmations(10, 7, 1.0), InvalidParams);
  EXPECT_THROW(min_confirmations(10, 7, 0.0), InvalidParams);
  EXPECT_THROW(min_confirmations(10, 11, 0.1), InvalidParams);
  EXPECT_THROW(min_confirmations(10, 0, 0.1), InvalidParams);
}

TEST(RequestCost, Modes) {
  EXPECT_EQ(request_cost(ChannelMode::PermissionedFull, 3, 4, 0), 24u);
  EXPECT_EQ(request_cost(ChannelMode::PermissionedDelegated, 3, 4, 0), 4u);
  EXPECT_EQ(request_cost(ChannelMode::PermissionedSampled, 3, 7, 7), 7u);
  EXPECT_EQ(request_cost(ChannelMode::PermissionedSampled, 1, 7, 2), 2u);
  EXPECT_EQ(request_cost(ChannelMode::Permissionless, 3, 4, 0), 2u);
}

TEST(ChannelMode, StringRoundTrip) {
  for (auto m : {ChannelMode::Permissionless, ChannelMode::PermissionedFull,
                 ChannelMode::PermissionedDelegated, ChannelMode::PermissionedSampled}) {
    EXPECT_EQ(channel_mode_from_string(to_string(m)), m);
  }
  EXPECT_FALSE(channel_mode_from_string("carrier-pigeon").has_value());
}

TEST(SendCheck, HonestCommittedTransaction) {
  Chain chain(system_config(1));
  grow(chain, 3);
  const Transaction tx = local_tx("x", SystemId(1));
  chain.commit({tx});
  grow(chain, 4);
  RequestChannel ch = channel_to(chain);
  auto [found, view] = send_check(ch, tx.id);
  EXPECT_EQ(found, 3u);
  EXPECT_EQ(view, generate_view(chain, chain.config().k, chain.config()));
  auto [missing, view2] = send_check(ch, hash_bytes("absent"));
  EXPECT_FALSE(missing.has_value());
  EXPECT_EQ(ch.requests_sent, 2u);
}

TEST(SendCheck, MultipleHashesKeepOrder) {
  Chain chain(system_config(1));
  const Transaction a = local_tx("a");
  const Transaction b = local_tx("b");
  chain.commit({a});
  chain.commit({b});
  grow(chain, 2);
  RequestChannel ch = channel_to(chain);
  CheckRequest req;
  req.hashes = {b.id, hash_bytes("none"), a.id};
  const auto resp = send_check(ch, req);
  ASSERT_EQ(resp.results.size(), 3u);
  EXPECT_EQ(resp.results[0], 1u);
  EXPECT_FALSE(resp.results[1].has_value());
  EXPECT_EQ(resp.results[2], 0u);
}

TEST(SendCheck, LostRequestTimesOutButIsCounted) {
  RequestChannel ch;
  ch.responder = [](const CheckRequest&) { return std::optional<CheckResponse>{}; };
  EXPECT_THROW(send_check(ch, hash_bytes("x")), ChannelTimeout);
  EXPECT_EQ(ch.requests_sent, 1u);
}

TEST(SendCheck, InterceptorReplacesResponse) {
  Chain chain(system_config(1));
  grow(chain, 3);
  RequestChannel ch = channel_to(chain);
  ch.interceptor = [](const CheckRequest&, const CheckResponse& honest) {
    CheckResponse f = honest;
    f.results.assign(honest.results.size(), Height{0});
    f.forged = true;
    return std::optional<CheckResponse>(f);
  };
  auto [found, view] = send_check(ch, hash_bytes("absent"));
  EXPECT_EQ(found, 0u);
}

TEST(CheckMessages, JsonRoundTrip) {
  Chain chain(system_config(1));
  grow(chain, 8);
  CheckRequest req;
  req.hashes = {hash_bytes("a"), hash_bytes("b")};
  req.view = generate_view(chain, 5, chain.config());
  req.tick = 42;
  const auto req2 = check_request_from_json(to_json(req));
  EXPECT_EQ(req2.hashes, req.hashes);
  EXPECT_EQ(req2.view, req.view);
  EXPECT_EQ(req2.tick, 42u);

  CheckResponse resp;
  resp.results = {std::nullopt, Height{0}, Height{7}};
  resp.view = *req.view;
  resp.tick = 43;
  const auto j = to_json(resp);
  EXPECT_EQ(j.at("result"), nlohmann::json::parse("[-1,0,7]"));
  const auto resp2 = check_response_from_json(j);
  EXPECT_EQ(resp2.results, resp.results);
  EXPECT_EQ(resp2.view, resp.view);
  EXPECT_THROW(check_response_from_json(to_json(req)), DecodeError);
}
