#include <doctest.h>

#include <random>

#include "fraft/types.hpp"

using namespace fraft;

namespace {

int rank(Ordering o) {
  switch (o) {
    case Ordering::Staler: return -1;
    case Ordering::Equal: return 0;
    default: return 1;
  }
}

NodeState make_state(const KeyRegistry& reg, std::initializer_list<std::pair<Term, const char*>> tail) {
  NodeState st;
  st.id = 0;
  st.log.push_back(LogEntry::init());
  st.pointer_cache.push_back(Digest::zero());
  LogIndex idx = 0;
  for (auto& [term, payload] : tail) {
    LogEntry e{term, ++idx, {}};
    std::string s(payload);
    e.payload.assign(s.begin(), s.end());
    st.pointer_cache.push_back(hash_step(st.pointer_cache.back(), e));
    st.log.push_back(e);
  }
  st.tip_pointer = st.pointer_cache.back();
  (void)reg;
  return st;
}

CommitCert cert_over(const KeyRegistry& reg, const NodeState& st, LogIndex index, std::uint64_t f) {
  CommitCert cc;
  cc.term = st.log[index].term;
  cc.index = index;
  cc.pointer = st.pointer_cache[index];
  for (NodeId id = 0; id <= f; ++id) {
    cc.voters.push_back(id);
    cc.signatures.push_back(reg.sign(id, cc.pointer));
  }
  return cc;
}

}  // namespace

TEST_CASE("freshness ordering matches the definition") {
  CHECK(compare_freshness({2, 5}, {2, 3}) == Ordering::Fresher);
  CHECK(compare_freshness({3, 1}, {2, 9}) == Ordering::Fresher);
  CHECK(compare_freshness({2, 3}, {2, 3}) == Ordering::Equal);
  CHECK(compare_freshness({1, 9}, {2, 0}) == Ordering::Staler);
}

TEST_CASE("freshness is a total order") {
  std::mt19937_64 rng(11);
  auto draw = [&]() -> Freshness { return {rng() % 6, rng() % 6}; };
  for (int i = 0; i < 10000; ++i) {
    Freshness a = draw(), b = draw();
    Ordering ab = compare_freshness(a, b);
    Ordering ba = compare_freshness(b, a);
    CHECK(rank(ab) == -rank(ba));
    CHECK((ab == Ordering::Equal) == (a == b));
  }
  // transitivity over random triples
  for (int i = 0; i < 10000; ++i) {
    Freshness a = draw(), b = draw(), c = draw();
    if (rank(compare_freshness(a, b)) >= 0 && rank(compare_freshness(b, c)) >= 0) {
      CHECK(rank(compare_freshness(a, c)) >= 0);
    }
  }
}

TEST_CASE("chain_pointer folds hash_step") {
  auto reg = KeyRegistry::create(3);
  NodeState st = make_state(reg, {{1, "a"}, {1, "b"}, {2, "c"}});

  CHECK(chain_pointer({}, st.tip_pointer) == st.tip_pointer);
  std::span<const LogEntry> tail(st.log.data() + 1, st.log.size() - 1);
  CHECK(chain_pointer(tail, Digest::zero()) == st.tip_pointer);

  SUBCASE("mutating an entry changes every later pointer") {
    auto mutated = st.log;
    mutated[2].payload = {'x'};
    std::span<const LogEntry> span(mutated.data() + 1, mutated.size() - 1);
    CHECK(chain_pointer(span, Digest::zero()) != st.tip_pointer);
  }
  SUBCASE("non-contiguous indices are rejected") {
    auto gap = st.log;
    gap[2].index = 7;
    std::span<const LogEntry> span(gap.data() + 1, gap.size() - 1);
    CHECK_THROWS_AS(chain_pointer(span, Digest::zero()), std::invalid_argument);
  }
}

TEST_CASE("assemble_commit_cert enforces the quorum arithmetic") {
  auto reg = KeyRegistry::create(5);
  Digest ptr = sha256(std::string_view("ptr"));
  Signature own = reg.sign(0, ptr);
  std::vector<Signature> acks{reg.sign(1, ptr), reg.sign(2, ptr)};

  CommitCert cc = assemble_commit_cert(3, 9, ptr, acks, own, reg, 2);
  CHECK(verify_quorum_cert(cc, reg, 2));
  CHECK(cc.voters == std::vector<NodeId>{0, 1, 2});

  SUBCASE("below quorum") {
    std::vector<Signature> one{reg.sign(1, ptr)};
    CHECK_THROWS_AS(assemble_commit_cert(3, 9, ptr, one, own, reg, 2), std::invalid_argument);
  }
  SUBCASE("duplicate voter") {
    std::vector<Signature> dup{reg.sign(1, ptr), reg.sign(1, ptr)};
    CHECK_THROWS_AS(assemble_commit_cert(3, 9, ptr, dup, own, reg, 2), std::invalid_argument);
  }
  SUBCASE("f=1 with a single follower ack") {
    auto reg3 = KeyRegistry::create(3);
    std::vector<Signature> one{reg3.sign(1, ptr)};
    CommitCert small = assemble_commit_cert(1, 1, ptr, one, reg3.sign(0, ptr), reg3, 1);
    CHECK(small.voters.size() == 2);
  }
}

TEST_CASE("receipts cover the sub-chain from the transaction to the certificate") {
  auto reg = KeyRegistry::create(3);
  NodeState st = make_state(reg, {{1, "a"}, {1, "b"}, {1, "c"}});
  CommitCert cc = cert_over(reg, st, 3, 1);

  SUBCASE("single entry receipt") {
    ClientReceipt r = make_receipt(st, 3, cc);
    CHECK(r.entries.size() == 1);
    CHECK(verify_receipt(r, reg, 1));
  }
  SUBCASE("multi entry receipt") {
    ClientReceipt r = make_receipt(st, 1, cc);
    CHECK(r.entries.size() == 3);
    CHECK(r.pointer == Digest::zero());
    CHECK(verify_receipt(r, reg, 1));
  }
  SUBCASE("tampered payload fails verification") {
    ClientReceipt r = make_receipt(st, 1, cc);
    r.entries[1].payload = {'x'};
    CHECK_FALSE(verify_receipt(r, reg, 1));
  }
  SUBCASE("duplicate voter padding fails verification") {
    ClientReceipt r = make_receipt(st, 3, cc);
    r.certificate.voters.push_back(r.certificate.voters[0]);
    r.certificate.signatures.push_back(r.certificate.signatures[0]);
    CHECK_FALSE(verify_receipt(r, reg, 1));
  }
  SUBCASE("certificate for an absent entry is rejected") {
    CommitCert bad = cc;
    bad.index = 9;
    CHECK_THROWS_AS(make_receipt(st, 1, bad), std::invalid_argument);
  }
  SUBCASE("start beyond the certificate is rejected") {
    CHECK_THROWS_AS(make_receipt(st, 4, cc), std::invalid_argument);
  }
}

TEST_CASE("core types round-trip through canonical json") {
  auto reg = KeyRegistry::create(3);
  NodeState st = make_state(reg, {{1, "a"}, {2, "b"}});
  CommitCert cc = cert_over(reg, st, 2, 1);
  CHECK(commit_cert_from_json(to_json(cc)) == cc);

  VoteRequest req{2, 3, {1, 1}, st.pointer_cache[1]};
  LeaderCert lc;
  lc.request = req;
  lc.voters = {2, 0};
  lc.signatures = {reg.sign(2, req.digest()), reg.sign(0, req.digest())};
  CHECK(leader_cert_from_json(to_json(lc)) == lc);

  ClientReceipt r = make_receipt(st, 1, cc);
  CHECK(receipt_from_json(to_json(r)) == r);

  LogEntry e{4, 17, {0x00, 0xff, 0x10}};
  CHECK(log_entry_from_json(to_json(e)) == e);
}

TEST_CASE("genesis certificate passes verification") {
  auto reg = KeyRegistry::create(5);
  CommitCert g = genesis_commit_cert(reg);
  CHECK(g.index == 0);
  CHECK(g.pointer == Digest::zero());
  CHECK(verify_quorum_cert(g, reg, 2));
}
