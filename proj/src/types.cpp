#include "fraft/types.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace fraft {

Ordering compare_freshness(const Freshness& a, const Freshness& b) {
  if (a.term > b.term || (a.term == b.term && a.index > b.index)) return Ordering::Fresher;
  if (a == b) return Ordering::Equal;
  return Ordering::Staler;
}

Digest hash_step(const Digest& prev, const LogEntry& entry) {
  std::vector<std::uint8_t> buf;
  buf.reserve(32 + 16 + entry.payload.size());
  buf.insert(buf.end(), prev.bytes.begin(), prev.bytes.end());
  append_be64(buf, entry.term);
  append_be64(buf, entry.index);
  buf.insert(buf.end(), entry.payload.begin(), entry.payload.end());
  return sha256(buf);
}

Digest chain_pointer(std::span<const LogEntry> entries, const Digest& base) {
  Digest h = base;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].index != entries[k - 1].index + 1) {
      throw std::invalid_argument("chain_pointer: non-contiguous indices");
    }
    h = hash_step(h, entries[k]);
  }
  return h;
}

Digest VoteRequest::digest() const {
  std::vector<std::uint8_t> buf;
  buf.reserve(64);
  append_be64(buf, leader);
  append_be64(buf, term);
  append_be64(buf, freshness.term);
  append_be64(buf, freshness.index);
  buf.insert(buf.end(), pointer.bytes.begin(), pointer.bytes.end());
  return sha256(buf);
}

namespace {

bool verify_cert_lists(const std::vector<NodeId>& voters, const std::vector<Signature>& sigs,
                       const Digest& signed_digest, const KeyRegistry& registry, std::uint64_t f) {
  if (voters.size() != sigs.size() || voters.size() < f + 1) return false;
  std::unordered_set<NodeId> seen;
  for (std::size_t i = 0; i < voters.size(); ++i) {
    if (!seen.insert(voters[i]).second) return false;
    if (sigs[i].signer != voters[i]) return false;
    if (!registry.verify(voters[i], signed_digest, sigs[i])) return false;
  }
  return true;
}

}  // namespace

bool verify_quorum_cert(const CommitCert& cert, const KeyRegistry& registry, std::uint64_t f) {
  return verify_cert_lists(cert.voters, cert.signatures, cert.pointer, registry, f);
}

bool verify_quorum_cert(const LeaderCert& cert, const KeyRegistry& registry, std::uint64_t f) {
  return verify_cert_lists(cert.voters, cert.signatures, cert.request.digest(), registry, f);
}

bool verify_sig_by_id(const Signature& sig, const Digest& digest, const KeyRegistry& registry) {
  return registry.verify(sig.signer, digest, sig);
}

CommitCert assemble_commit_cert(Term term, LogIndex index, const Digest& pointer,
                                std::span<const Signature> acks, const Signature& own,
                                const KeyRegistry& registry, std::uint64_t f) {
  CommitCert cert;
  cert.term = term;
  cert.index = index;
  cert.pointer = pointer;
  cert.voters.push_back(own.signer);
  cert.signatures.push_back(own);
  for (const Signature& ack : acks) {
    if (std::find(cert.voters.begin(), cert.voters.end(), ack.signer) != cert.voters.end()) {
      throw std::invalid_argument("assemble_commit_cert: duplicate voter");
    }
    cert.voters.push_back(ack.signer);
    cert.signatures.push_back(ack);
  }
  if (!verify_quorum_cert(cert, registry, f)) {
    throw std::invalid_argument("assemble_commit_cert: quorum verification failed");
  }
  return cert;
}

CommitCert genesis_commit_cert(const KeyRegistry& registry) {
  CommitCert cert;
  cert.term = 0;
  cert.index = 0;
  cert.pointer = Digest::zero();
  for (NodeId id = 0; id <= registry.f(); ++id) {
    cert.voters.push_back(id);
    cert.signatures.push_back(registry.sign(id, cert.pointer));
  }
  return cert;
}

ClientReceipt make_receipt(const NodeState& state, LogIndex start_index, const CommitCert& cc) {
  if (start_index == 0 || start_index > cc.index || cc.index >= state.log.size()) {
    throw std::invalid_argument("make_receipt: indices out of range");
  }
  if (state.log[cc.index].term != cc.term) {
    throw std::invalid_argument("make_receipt: certificate does not match log entry");
  }
  ClientReceipt receipt;
  receipt.entries.assign(state.log.begin() + static_cast<std::ptrdiff_t>(start_index),
                         state.log.begin() + static_cast<std::ptrdiff_t>(cc.index) + 1);
  receipt.pointer = state.pointer_cache[start_index - 1];
  receipt.certificate = cc;
  return receipt;
}

bool verify_receipt(const ClientReceipt& receipt, const KeyRegistry& registry, std::uint64_t f) {
  if (receipt.entries.empty()) return false;
  Digest end;
  try {
    end = chain_pointer(receipt.entries, receipt.pointer);
  } catch (const std::invalid_argument&) {
    return false;
  }
  const LogEntry& last = receipt.entries.back();
  if (end != receipt.certificate.pointer) return false;
  if (last.term != receipt.certificate.term || last.index != receipt.certificate.index) return false;
  return verify_quorum_cert(receipt.certificate, registry, f);
}

std::string evidence_type(const Evidence& e) {
  switch (e.index()) {
    case 0: return "double_vote";
    case 1: return "forked_term";
    case 2: return "illegal_vote_pair";
    default: return "illegitimate_data";
  }
}

namespace {

std::set<NodeId> intersect(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  std::set<NodeId> sa(a.begin(), a.end());
  std::set<NodeId> out;
  for (NodeId v : b) {
    if (sa.count(v)) out.insert(v);
  }
  return out;
}

}  // namespace

bool evidence_verifies(const Evidence& e, const KeyRegistry& registry, std::uint64_t f) {
  if (const auto* dv = std::get_if<EvidenceDoubleVote>(&e)) {
    if (dv->lc_a.request.term != dv->term || dv->lc_b.request.term != dv->term) return false;
    if (dv->lc_a.request.leader == dv->lc_b.request.leader) return false;
    if (!verify_quorum_cert(dv->lc_a, registry, f)) return false;
    if (!verify_quorum_cert(dv->lc_b, registry, f)) return false;
    return !intersect(dv->lc_a.voters, dv->lc_b.voters).empty();
  }
  if (const auto* ft = std::get_if<EvidenceForkedTerm>(&e)) {
    if (ft->digest_a == ft->digest_b) return false;
    if (ft->sig_a.signer != ft->leader || ft->sig_b.signer != ft->leader) return false;
    if (!registry.verify(ft->leader, ft->digest_a, ft->sig_a)) return false;
    if (!registry.verify(ft->leader, ft->digest_b, ft->sig_b)) return false;
    return ft->entry_a.index == ft->entry_b.index && !(ft->entry_a == ft->entry_b);
  }
  if (const auto* vp = std::get_if<EvidenceIllegalVotePair>(&e)) {
    if (!verify_quorum_cert(vp->cc, registry, f)) return false;
    if (!verify_quorum_cert(vp->lc, registry, f)) return false;
    return !intersect(vp->cc.voters, vp->lc.voters).empty();
  }
  return true;  // illegitimate data re-verifies against the snapshot, not here
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string payload_hex(const std::vector<std::uint8_t>& payload) { return to_hex(payload); }

std::vector<std::uint8_t> payload_from_hex(const std::string& hex) {
  auto raw = from_hex(hex);
  if (!raw) throw std::invalid_argument("bad payload hex");
  return *raw;
}

Json sigs_to_json(const std::vector<Signature>& sigs) {
  Json arr = Json::array();
  for (const auto& s : sigs) {
    arr.push_back(Json{{"signer", s.signer}, {"bytes", s.hex()}});
  }
  return arr;
}

std::vector<Signature> sigs_from_json(const Json& arr) {
  std::vector<Signature> out;
  for (const auto& j : arr) {
    auto sig = Signature::from_hex(j.at("signer").get<NodeId>(), j.at("bytes").get<std::string>());
    if (!sig) throw std::invalid_argument("bad signature hex");
    out.push_back(*sig);
  }
  return out;
}

Digest digest_from_json(const Json& j) {
  auto d = Digest::from_hex(j.get<std::string>());
  if (!d) throw std::invalid_argument("bad digest hex");
  return *d;
}

}  // namespace

Json to_json(const LogEntry& e) {
  return Json{{"term", e.term}, {"index", e.index}, {"payload", payload_hex(e.payload)}};
}

LogEntry log_entry_from_json(const Json& j) {
  LogEntry e;
  e.term = j.at("term").get<Term>();
  e.index = j.at("index").get<LogIndex>();
  e.payload = payload_from_hex(j.at("payload").get<std::string>());
  return e;
}

Json to_json(const CommitCert& c) {
  return Json{{"term", c.term},
              {"index", c.index},
              {"pointer", c.pointer.hex()},
              {"voters", c.voters},
              {"signatures", sigs_to_json(c.signatures)}};
}

CommitCert commit_cert_from_json(const Json& j) {
  CommitCert c;
  c.term = j.at("term").get<Term>();
  c.index = j.at("index").get<LogIndex>();
  c.pointer = digest_from_json(j.at("pointer"));
  c.voters = j.at("voters").get<std::vector<NodeId>>();
  c.signatures = sigs_from_json(j.at("signatures"));
  return c;
}

Json to_json(const VoteRequest& r) {
  return Json{{"leader", r.leader},
              {"term", r.term},
              {"freshness", Json{{"term", r.freshness.term}, {"index", r.freshness.index}}},
              {"pointer", r.pointer.hex()}};
}

VoteRequest vote_request_from_json(const Json& j) {
  VoteRequest r;
  r.leader = j.at("leader").get<NodeId>();
  r.term = j.at("term").get<Term>();
  r.freshness.term = j.at("freshness").at("term").get<Term>();
  r.freshness.index = j.at("freshness").at("index").get<LogIndex>();
  r.pointer = digest_from_json(j.at("pointer"));
  return r;
}

Json to_json(const LeaderCert& c) {
  return Json{{"request", to_json(c.request)},
              {"voters", c.voters},
              {"signatures", sigs_to_json(c.signatures)}};
}

LeaderCert leader_cert_from_json(const Json& j) {
  LeaderCert c;
  c.request = vote_request_from_json(j.at("request"));
  c.voters = j.at("voters").get<std::vector<NodeId>>();
  c.signatures = sigs_from_json(j.at("signatures"));
  return c;
}

Json to_json(const ClientReceipt& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  return Json{{"entries", entries},
              {"pointer", r.pointer.hex()},
              {"certificate", to_json(r.certificate)}};
}

ClientReceipt receipt_from_json(const Json& j) {
  ClientReceipt r;
  for (const auto& e : j.at("entries")) r.entries.push_back(log_entry_from_json(e));
  r.pointer = digest_from_json(j.at("pointer"));
  r.certificate = commit_cert_from_json(j.at("certificate"));
  return r;
}

Json to_json(const Evidence& e) {
  Json j;
  j["type"] = evidence_type(e);
  if (const auto* dv = std::get_if<EvidenceDoubleVote>(&e)) {
    j["term"] = dv->term;
    j["lc_a"] = to_json(dv->lc_a);
    j["lc_b"] = to_json(dv->lc_b);
  } else if (const auto* ft = std::get_if<EvidenceForkedTerm>(&e)) {
    j["term"] = ft->term;
    j["leader"] = ft->leader;
    j["digest_a"] = ft->digest_a.hex();
    j["sig_a"] = Json{{"signer", ft->sig_a.signer}, {"bytes", ft->sig_a.hex()}};
    j["digest_b"] = ft->digest_b.hex();
    j["sig_b"] = Json{{"signer", ft->sig_b.signer}, {"bytes", ft->sig_b.hex()}};
    j["conflict_index"] = ft->conflict_index;
    j["entry_a"] = to_json(ft->entry_a);
    j["entry_b"] = to_json(ft->entry_b);
  } else if (const auto* vp = std::get_if<EvidenceIllegalVotePair>(&e)) {
    j["cc"] = to_json(vp->cc);
    j["lc"] = to_json(vp->lc);
  } else if (const auto* il = std::get_if<EvidenceIllegitimateData>(&e)) {
    j["node"] = il->node;
    j["reason"] = il->reason;
  }
  return j;
}

Json to_json(const AuditVerdict& v) {
  Json culprits = Json::array();
  for (NodeId id : v.culprits) culprits.push_back(id);
  Json evidence = Json::array();
  for (const auto& e : v.evidence) evidence.push_back(to_json(e));
  return Json{{"culprits", culprits},
              {"evidence_type", v.evidence.empty() ? "consistent" : evidence_type(v.evidence.front())},
              {"evidence", evidence}};
}

}  // namespace fraft
