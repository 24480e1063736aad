#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace xchain;
using namespace xchain::testing;

TEST(Hash, EmptyInputIsSha256OfEmptyString) {
  EXPECT_EQ(hash_bytes(std::string_view{}).hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, Deterministic) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Bytes x(rng.below(64));
    for (auto& b : x) b = static_cast<std::uint8_t>(rng.below(256));
    EXPECT_EQ(hash_bytes(x), hash_bytes(x));
  }
}

TEST(Hash, NoCollisionsOverDistinctInputs) {
  Rng rng(11);
  std::set<Bytes> inputs;
  while (inputs.size() < 20000) {
    Bytes x(1 + rng.below(40));
    for (auto& b : x) b = static_cast<std::uint8_t>(rng.below(256));
    inputs.insert(x);
  }
  std::set<HashDigest> digests;
  for (const auto& x : inputs) digests.insert(hash_bytes(x));
  EXPECT_EQ(digests.size(), inputs.size());
}

TEST(Hash, PairIsHashOfConcatenation) {
  Rng rng(3);
  const HashDigest a = random_digest(rng);
  const HashDigest b = random_digest(rng);
  Bytes cat;
  put_raw(cat, a);
  put_raw(cat, b);
  EXPECT_EQ(hash_pair(a, b), hash_bytes(cat));
}

TEST(Hash, HexRoundTrip) {
  Rng rng(5);
  const HashDigest d = random_digest(rng);
  EXPECT_EQ(HashDigest::from_hex(d.hex()), d);
  EXPECT_FALSE(HashDigest::from_hex("xyz").has_value());
  EXPECT_FALSE(HashDigest::from_hex(std::string(63, 'a')).has_value());
}

TEST(ContractEncoding, RoundTrip) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const ContractTx c = random_ctx(rng);
    const Bytes enc = encode_ctx(c);
    ASSERT_EQ(enc.size(), kEncodedCtxSize);
    EXPECT_EQ(decode_ctx(enc), c);
  }
}

TEST(ContractEncoding, ExpiryChangesBytes) {
  Rng rng(19);
  ContractTx a = random_ctx(rng);
  ContractTx b = a;
  b.local_expiry = a.local_expiry + 1;
  EXPECT_NE(encode_ctx(a), encode_ctx(b));
}

TEST(ContractEncoding, InjectiveOverRandomPairs) {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    const ContractTx a = random_ctx(rng);
    ContractTx b = random_ctx(rng);
    if (rng.bernoulli(0.5)) {
      b = a;
      b.peer = SystemId(static_cast<std::uint16_t>(a.peer.value ^ 1));
    }
    ASSERT_NE(a, b);
    EXPECT_NE(encode_ctx(a), encode_ctx(b));
  }
}

TEST(ContractEncoding, ByteLayout) {
  Rng rng(29);
  const ContractTx c = random_ctx(rng);
  Bytes want;
  put_raw(want, c.local_tx);
  put_raw(want, c.local_reverse);
  put_be(want, c.local_expiry, 8);
  put_be(want, c.peer.value, 2);
  put_raw(want, c.remote_tx);
  put_raw(want, c.remote_reverse);
  put_be(want, c.remote_expiry, 8);
  EXPECT_EQ(encode_ctx(c), want);
}

TEST(ContractEncoding, SwapPerspectiveLayout) {
  Rng rng(31);
  const ContractTx ci = random_ctx(rng);
  const SystemId self(4);
  Bytes want;
  put_raw(want, ci.remote_tx);
  put_raw(want, ci.remote_reverse);
  put_be(want, ci.remote_expiry, 8);
  put_be(want, self.value, 2);
  put_raw(want, ci.local_tx);
  put_raw(want, ci.local_reverse);
  put_be(want, ci.local_expiry, 8);
  EXPECT_EQ(swap_perspective(encode_ctx(ci), self), want);
}

TEST(ContractEncoding, RejectsWrongLength) {
  Bytes short_input(kEncodedCtxSize - 1);
  EXPECT_THROW(decode_ctx(short_input), DecodeError);
}

TEST(ContractEncoding, ContractTransactionCarriesCtx) {
  Rng rng(37);
  const ContractTx c = random_ctx(rng);
  const Transaction tx = contract_transaction(c, SystemId(2));
  EXPECT_EQ(tx.kind, TxKind::Contract);
  EXPECT_EQ(contract_of(tx), c);
  EXPECT_FALSE(contract_of(local_tx("x")).has_value());
}

TEST(Transaction, IdCoversEveryField) {
  const Transaction base = Transaction::make(TxKind::Target, "p", {}, SystemId(1));
  EXPECT_NE(base.id, Transaction::make(TxKind::Local, "p", {}, SystemId(1)).id);
  EXPECT_NE(base.id, Transaction::make(TxKind::Target, "q", {}, SystemId(1)).id);
  EXPECT_NE(base.id, Transaction::make(TxKind::Target, "p", {}, SystemId(2)).id);
  EXPECT_NE(base.id, Transaction::make(TxKind::Target, "p", {base.id}, SystemId(1)).id);
}

TEST(Transaction, ReverseDependsOnTarget) {
  const Transaction t = Transaction::make(TxKind::Target, "t", {}, SystemId(1));
  const Transaction r = make_reverse(t, "undo");
  EXPECT_EQ(r.kind, TxKind::Reverse);
  ASSERT_EQ(r.preconditions.size(), 1u);
  EXPECT_EQ(r.preconditions[0], t.id);
}

TEST(Header, RoundTripAndLayout) {
  Rng rng(41);
  BlockHeader h;
  h.height = 0x0102030405060708ULL;
  h.prev_hash = random_digest(rng);
  h.body_digest = random_digest(rng);
  h.creator_sigs = {0, 2, 3};
  Bytes want;
  put_be(want, h.height, 8);
  put_raw(want, h.prev_hash);
  put_raw(want, h.body_digest);
  put_be(want, 3, 2);
  for (auto s : h.creator_sigs) put_be(want, s, 2);
  EXPECT_EQ(encode_header(h), want);
  EXPECT_EQ(decode_header(want), h);
  want.push_back(0);
  EXPECT_THROW(decode_header(want), DecodeError);
}

TEST(Header, ChainIntegrity) {
  Chain chain(system_config(0, 2));
  for (int i = 0; i < 50; ++i) {
    if (i % 3 == 0) chain.submit(local_tx("tx" + std::to_string(i)));
    chain.seal();
  }
  const auto& blocks = chain.blocks();
  for (Height h = 0; h < chain.height(); ++h) {
    EXPECT_EQ(header_hash(blocks[h].header), chain.header_hash_at(h));
    EXPECT_EQ(blocks[h].header.body_digest, body_digest(blocks[h].body));
    if (h > 0) EXPECT_EQ(blocks[h].header.prev_hash, header_hash(blocks[h - 1].header));
  }
}

TEST(Proof, Validity) {
  EXPECT_TRUE(proof_is_valid({0, 1, 2}, 4, 3));
  EXPECT_FALSE(proof_is_valid({0, 1}, 4, 3));
  EXPECT_FALSE(proof_is_valid({0, 1, 1}, 4, 3));
  EXPECT_FALSE(proof_is_valid({0, 1, 4}, 4, 3));
  EXPECT_FALSE(proof_is_valid({2, 1, 0}, 4, 3));
  for (Height h = 0; h < 20; ++h) EXPECT_TRUE(proof_is_valid(quorum_proof(h, 7, 5), 7, 5));
}
