#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xchain/chain.hpp"
#include "xchain/types.hpp"

namespace xchain {

enum class ChannelMode {
  Permissionless,
  PermissionedFull,
  PermissionedDelegated,
  PermissionedSampled,
};

std::string_view to_string(ChannelMode mode);
std::optional<ChannelMode> channel_mode_from_string(std::string_view s);

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// C(n, k) as a double. Exact while the value fits in 53 bits.
double binomial(std::uint32_t n, std::uint32_t k);

/// Probability that m distinct nodes drawn uniformly from q all fall inside a
/// fixed group of `group` nodes: C(group, m) / C(q, m).
double all_in_group_probability(std::uint32_t q, std::uint32_t group, std::uint32_t m);

struct Confirmations {
  std::uint32_t m = 0;
  /// False when no m <= q brings the ratio below p (only when r == q).
  bool satisfied = true;
};

/// Smallest m with C(r, m) / C(q, m) < p. Throws InvalidParams unless
/// 1 <= r <= q and 0 < p < 1.
Confirmations min_confirmations(std::uint32_t q, std::uint32_t r, double p);

/// Node-to-node messages needed for one request under `mode`.
std::uint64_t request_cost(ChannelMode mode, std::uint32_t r_i, std::uint32_t r_j,
                           std::uint32_t m_j);

struct CheckRequest {
  std::vector<HashDigest> hashes;
  /// The requester's own view; every request carries one.
  std::optional<View> view;
  std::uint64_t tick = 0;
};

struct CheckResponse {
  std::vector<std::optional<Height>> results;
  /// The responder's own view.
  View view;
  std::uint64_t tick = 0;
  bool forged = false;
};

/// Honest answer from a chain.
CheckResponse answer_check(const Chain& chain, const CheckRequest& request);

class ChannelTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request path between two systems. `responder` stands for the remote end
/// (nullopt models a lost request); `interceptor` is the adversary hook and
/// may replace the honest response.
struct RequestChannel {
  using Responder = std::function<std::optional<CheckResponse>(const CheckRequest&)>;
  using Interceptor =
      std::function<std::optional<CheckResponse>(const CheckRequest&, const CheckResponse&)>;

  SystemId from;
  SystemId to;
  ChannelMode mode = ChannelMode::PermissionedSampled;
  double p_fail_target = 0.01;
  Responder responder;
  Interceptor interceptor;

  std::uint64_t requests_sent = 0;
};

/// Sends one check request (counted once) and returns the possibly
/// intercepted response. Throws ChannelTimeout when nothing comes back.
CheckResponse send_check(RequestChannel& channel, CheckRequest request);

/// Single-hash convenience form.
std::pair<std::optional<Height>, View> send_check(RequestChannel& channel,
                                                  const HashDigest& target_hash);

nlohmann::json to_json(const CheckRequest& r);
nlohmann::json to_json(const CheckResponse& r);
CheckRequest check_request_from_json(const nlohmann::json& j);
CheckResponse check_response_from_json(const nlohmann::json& j);

}  // namespace xchain
