#include "xchain/channel.hpp"

#include <algorithm>
#include <cmath>

namespace xchain {

std::string_view to_string(ChannelMode mode) {
  switch (mode) {
    case ChannelMode::Permissionless: return "permissionless";
    case ChannelMode::PermissionedFull: return "permissioned-full";
    case ChannelMode::PermissionedDelegated: return "permissioned-delegated";
    case ChannelMode::PermissionedSampled: return "permissioned-sampled";
  }
  return "unknown";
}

std::optional<ChannelMode> channel_mode_from_string(std::string_view s) {
  for (auto m : {ChannelMode::Permissionless, ChannelMode::PermissionedFull,
                 ChannelMode::PermissionedDelegated, ChannelMode::PermissionedSampled}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

double binomial(std::uint32_t n, std::uint32_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  // Exact multiplicative form while it fits; each partial product is itself
  // a binomial coefficient, so the division is exact.
  unsigned __int128 acc = 1;
  constexpr unsigned __int128 kLimit = static_cast<unsigned __int128>(1) << 120;
  for (std::uint32_t i = 1; i <= k; ++i) {
    if (acc > kLimit / (n - k + i)) {
      return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
    }
    acc = acc * (n - k + i) / i;
  }
  return static_cast<double>(acc);
}

double all_in_group_probability(std::uint32_t q, std::uint32_t group, std::uint32_t m) {
  if (m > q) return 0.0;
  return binomial(group, m) / binomial(q, m);
}

Confirmations min_confirmations(std::uint32_t q, std::uint32_t r, double p) {
  if (r < 1 || r > q) throw InvalidParams("min_confirmations: need 1 <= r <= q");
  if (!(p > 0.0 && p < 1.0)) throw InvalidParams("min_confirmations: need 0 < p < 1");
  for (std::uint32_t m = 1; m <= q; ++m) {
    if (all_in_group_probability(q, r, m) < p) return {m, true};
  }
  return {q - r + 1, false};
}

std::uint64_t request_cost(ChannelMode mode, std::uint32_t r_i, std::uint32_t r_j,
                           std::uint32_t m_j) {
  switch (mode) {
    case ChannelMode::PermissionedFull:
      return 2ULL * r_i * r_j;
    case ChannelMode::PermissionedDelegated:
      return r_j;
    case ChannelMode::PermissionedSampled:
      return std::min<std::uint64_t>(r_j, static_cast<std::uint64_t>(m_j) * r_i);
    case ChannelMode::Permissionless:
      return 2;  // request + block-proof response
  }
  return 0;
}

CheckResponse answer_check(const Chain& chain, const CheckRequest& request) {
  CheckResponse resp;
  resp.results.reserve(request.hashes.size());
  for (const auto& h : request.hashes) resp.results.push_back(chain.check(h));
  resp.view = generate_view(chain, chain.config().k, chain.config());
  resp.tick = request.tick;
  return resp;
}

CheckResponse send_check(RequestChannel& channel, CheckRequest request) {
  ++channel.requests_sent;
  if (!channel.responder) throw ChannelTimeout("channel has no responder");
  auto honest = channel.responder(request);
  if (!honest) throw ChannelTimeout("no response");
  if (channel.interceptor) {
    if (auto forged = channel.interceptor(request, *honest)) return *forged;
  }
  return *honest;
}

std::pair<std::optional<Height>, View> send_check(RequestChannel& channel,
                                                  const HashDigest& target_hash) {
  CheckRequest req;
  req.hashes.push_back(target_hash);
  auto resp = send_check(channel, std::move(req));
  std::optional<Height> result;
  if (!resp.results.empty()) result = resp.results.front();
  return {result, std::move(resp.view)};
}

namespace {

nlohmann::json result_json(const std::optional<Height>& h) {
  return h ? nlohmann::json(*h) : nlohmann::json(-1);
}

std::optional<Height> result_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::int64_t>();
  if (v < 0) return std::nullopt;
  return static_cast<Height>(v);
}

}  // namespace

nlohmann::json to_json(const CheckRequest& r) {
  nlohmann::json hashes = nlohmann::json::array();
  for (const auto& h : r.hashes) hashes.push_back(h.hex());
  nlohmann::json j = {{"type", "check-req"}, {"hash", std::move(hashes)}, {"tick", r.tick}};
  j["view"] = r.view ? view_to_json(*r.view) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const CheckResponse& r) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& h : r.results) results.push_back(result_json(h));
  return {{"type", "check-resp"},
          {"result", std::move(results)},
          {"view", view_to_json(r.view)},
          {"tick", r.tick}};
}

CheckRequest check_request_from_json(const nlohmann::json& j) {
  if (j.at("type") != "check-req") throw DecodeError("not a check-req");
  CheckRequest r;
  for (const auto& h : j.at("hash")) {
    auto d = HashDigest::from_hex(h.get<std::string>());
    if (!d) throw DecodeError("bad hash");
    r.hashes.push_back(*d);
  }
  if (j.contains("view") && !j.at("view").is_null()) r.view = view_from_json(j.at("view"));
  r.tick = j.at("tick").get<std::uint64_t>();
  return r;
}

CheckResponse check_response_from_json(const nlohmann::json& j) {
  if (j.at("type") != "check-resp") throw DecodeError("not a check-resp");
  CheckResponse r;
  for (const auto& v : j.at("result")) r.results.push_back(result_from_json(v));
  r.view = view_from_json(j.at("view"));
  r.tick = j.at("tick").get<std::uint64_t>();
  return r;
}

}  // namespace xchain
