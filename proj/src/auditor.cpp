#include "fraft/auditor.hpp"

#include <algorithm>
#include <stdexcept>

namespace fraft {

const char* to_string(IntegrityReason r) {
  switch (r) {
    case IntegrityReason::Ok: return "ok";
    case IntegrityReason::BadInit: return "bad_init";
    case IntegrityReason::BadIndex: return "bad_index";
    case IntegrityReason::BadTermOrder: return "bad_term_order";
    case IntegrityReason::MissingLc: return "missing_lc";
    case IntegrityReason::MissingSig: return "missing_sig";
    case IntegrityReason::BadLeaderSig: return "bad_leader_sig";
    case IntegrityReason::BadLcLink: return "bad_lc_link";
    case IntegrityReason::BadCcPointer: return "bad_cc_pointer";
    case IntegrityReason::BadCcEntry: return "bad_cc_entry";
    case IntegrityReason::BadCcQuorum: return "bad_cc_quorum";
    case IntegrityReason::BadLcQuorum: return "bad_lc_quorum";
  }
  return "unknown";
}

Json AuditCounters::to_json() const {
  return Json{{"entries_scanned", entries_scanned}, {"hash_ops", hash_ops},
              {"cert_checks", cert_checks},         {"sig_checks", sig_checks},
              {"entry_reads", entry_reads},         {"chunks_opened", chunks_opened},
              {"entries_loaded", entries_loaded}};
}

namespace {

std::set<NodeId> voter_intersection(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  std::set<NodeId> sa(a.begin(), a.end());
  std::set<NodeId> out;
  for (NodeId id : b) {
    if (sa.count(id)) out.insert(id);
  }
  return out;
}

bool entries_equal(const LogEntry& a, const LogEntry& b) {
  // comparison is by (term, index, payload hash)
  if (a.term != b.term || a.index != b.index) return false;
  return sha256(std::span<const std::uint8_t>(a.payload.data(), a.payload.size())) ==
         sha256(std::span<const std::uint8_t>(b.payload.data(), b.payload.size()));
}

std::optional<Signature> cert_signature_of(const CommitCert& cc, NodeId voter) {
  for (std::size_t i = 0; i < cc.voters.size(); ++i) {
    if (cc.voters[i] == voter) return cc.signatures[i];
  }
  return std::nullopt;
}

}  // namespace

IntegrityResult check_integrity(SnapshotView& snap, const KeyRegistry& registry, std::uint64_t f,
                                AuditCounters* counters) {
  AuditCounters scratch;
  AuditCounters& c = counters ? *counters : scratch;
  IntegrityResult res;
  auto fail = [&](IntegrityReason why) {
    res.ok = false;
    res.reason = why;
    return res;
  };

  const std::map<Term, LeaderCert>& elections = snap.elections();
  const std::map<Term, Signature>& sigs = snap.sigs();

  if (snap.size() == 0 || !(snap.entry(0) == LogEntry::init())) return fail(IntegrityReason::BadInit);

  std::set<Term> log_terms;
  Digest h = Digest::zero();
  Term prev_term = 0;
  std::optional<LogEntry> next;
  for (LogIndex i = 1; i < snap.size(); ++i) {
    LogEntry e = next ? *next : snap.entry(i);
    next = (i + 1 < snap.size()) ? std::optional<LogEntry>(snap.entry(i + 1)) : std::nullopt;
    ++c.entries_scanned;
    if (e.index != i) return fail(IntegrityReason::BadIndex);
    if (e.term < prev_term) return fail(IntegrityReason::BadTermOrder);
    auto lc_it = elections.find(e.term);
    if (lc_it == elections.end()) return fail(IntegrityReason::MissingLc);
    auto sig_it = sigs.find(e.term);
    if (sig_it == sigs.end()) return fail(IntegrityReason::MissingSig);
    h = hash_step(h, e);
    ++c.hash_ops;

    bool term_final = !next || next->term > e.term;
    if (term_final) {
      // the creator locked itself to this branch tip
      ++c.sig_checks;
      if (sig_it->second.signer != lc_it->second.request.leader ||
          !registry.verify(sig_it->second.signer, h, sig_it->second)) {
        return fail(IntegrityReason::BadLeaderSig);
      }
      if (next) {
        auto next_lc = elections.find(next->term);
        if (next_lc == elections.end()) return fail(IntegrityReason::MissingLc);
        if (next_lc->second.request.pointer != h ||
            !(next_lc->second.request.freshness == Freshness{e.term, e.index})) {
          return fail(IntegrityReason::BadLcLink);
        }
      }
    }
    prev_term = e.term;
    log_terms.insert(e.term);
  }

  const CommitCert& cc = snap.cc();
  if (cc.pointer != h) return fail(IntegrityReason::BadCcPointer);
  LogIndex last = snap.size() - 1;
  if (cc.index != last || cc.term != prev_term) return fail(IntegrityReason::BadCcEntry);
  ++c.cert_checks;
  if (!verify_quorum_cert(cc, registry, f)) return fail(IntegrityReason::BadCcQuorum);

  for (const auto& [term, lc] : elections) {
    ++c.cert_checks;
    if (!verify_quorum_cert(lc, registry, f)) return fail(IntegrityReason::BadLcQuorum);
    if (log_terms.count(term)) {
      res.elections.emplace(term, lc);
    } else {
      res.unused_elections.emplace(term, lc);  // accepted leaders that shipped no entry
    }
  }
  res.ok = true;
  res.reason = IntegrityReason::Ok;
  return res;
}

AuditVerdict audit_pair(SnapshotView& u, const IntegrityResult& iu, SnapshotView& v,
                        const IntegrityResult& iv, const KeyRegistry& registry, std::uint64_t f,
                        AuditCounters* counters) {
  (void)registry;
  (void)f;
  AuditCounters scratch;
  AuditCounters& c = counters ? *counters : scratch;
  AuditVerdict verdict;

  // Case 0: one term, two leaders -> whoever voted for both
  for (const auto& [term, lc_u] : iu.elections) {
    auto it = iv.elections.find(term);
    if (it == iv.elections.end()) continue;
    const LeaderCert& lc_v = it->second;
    if (lc_u.request.leader != lc_v.request.leader) {
      verdict.culprits = voter_intersection(lc_u.voters, lc_v.voters);
      verdict.evidence.push_back(EvidenceDoubleVote{term, lc_u, lc_v});
      return verdict;
    }
  }

  LogIndex i_min = std::min(u.cc().index, v.cc().index);
  LogEntry eu = u.entry(i_min);
  LogEntry ev = v.entry(i_min);
  c.entry_reads += 2;
  if (entries_equal(eu, ev)) return AuditVerdict::clean();  // prefix-ordered

  // Case 1: both certificates sit in the same term -> that term's creator
  // signed two branches
  if (u.cc().term == v.cc().term) {
    Term t = u.cc().term;
    NodeId leader = iu.elections.at(t).request.leader;
    verdict.culprits = {leader};
    verdict.evidence.push_back(EvidenceForkedTerm{t, leader, u.cc().pointer, u.sigs().at(t),
                                                  v.cc().pointer, v.sigs().at(t), i_min, eu, ev});
    return verdict;
  }

  bool u_is_hi = u.cc().term > v.cc().term;
  SnapshotView& hi = u_is_hi ? u : v;
  SnapshotView& lo = u_is_hi ? v : u;
  const IntegrityResult& ihi = u_is_hi ? iu : iv;
  const IntegrityResult& ilo = u_is_hi ? iv : iu;

  Term t_lo = lo.cc().term;
  auto tau_it = ihi.elections.upper_bound(t_lo);
  if (tau_it == ihi.elections.end()) {
    throw std::logic_error("audit_pair: no election above the lower certificate term");
  }
  const LeaderCert& lc_tau = tau_it->second;

  if (ihi.elections.count(t_lo)) {
    LogIndex j = lc_tau.request.freshness.index;
    if (j < lo.size() && j < hi.size()) {
      LogEntry elo = lo.entry(j);
      LogEntry ehi = hi.entry(j);
      c.entry_reads += 2;
      if (!entries_equal(elo, ehi)) {
        // Case 2: term t_lo itself forked
        NodeId leader = ilo.elections.at(t_lo).request.leader;
        verdict.culprits = {leader};
        verdict.evidence.push_back(EvidenceForkedTerm{t_lo, leader, lo.cc().pointer,
                                                      lo.sigs().at(t_lo), lc_tau.request.pointer,
                                                      hi.sigs().at(t_lo), j, elo, ehi});
        return verdict;
      }
    }
  }

  // Cases 3 & 4: someone endorsed the lower commit and then the election that
  // abandoned it
  verdict.culprits = voter_intersection(lc_tau.voters, lo.cc().voters);
  verdict.evidence.push_back(EvidenceIllegalVotePair{lo.cc(), lc_tau});
  return verdict;
}

namespace {

std::size_t longest_of(std::span<SnapshotView* const> snaps, const std::vector<std::size_t>& pool) {
  std::size_t best = pool.front();
  for (std::size_t idx : pool) {
    if (snaps[idx]->size() > snaps[best]->size()) best = idx;
  }
  return best;
}

void fold_chunk_counter(std::span<SnapshotView* const> snaps, AuditCounters& c) {
  for (SnapshotView* s : snaps) {
    c.chunks_opened = std::max(c.chunks_opened, s->chunks_opened());
    c.entries_loaded = std::max(c.entries_loaded, s->entries_loaded());
  }
}

}  // namespace

GlobalAudit audit_all_early(std::span<SnapshotView* const> snaps, const KeyRegistry& registry,
                            std::uint64_t f) {
  GlobalAudit out;
  std::vector<IntegrityResult> integrity(snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    integrity[i] = check_integrity(*snaps[i], registry, f, &out.integrity_counters);
    out.integrity.emplace_back(snaps[i]->node(), integrity[i].reason);
    if (!integrity[i].ok) {
      out.verdict.culprits = {snaps[i]->node()};
      out.verdict.evidence.push_back(
          EvidenceIllegitimateData{snaps[i]->node(), to_string(integrity[i].reason)});
      return out;
    }
  }
  for (SnapshotView* s : snaps) s->reset_counters();

  std::vector<std::size_t> pool(snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) pool[i] = i;
  std::size_t w = longest_of(snaps, pool);
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    if (i == w) continue;
    AuditVerdict verdict =
        audit_pair(*snaps[i], integrity[i], *snaps[w], integrity[w], registry, f,
                   &out.consistency_counters);
    if (!verdict.consistent()) {
      out.verdict = std::move(verdict);
      break;
    }
  }
  fold_chunk_counter(snaps, out.consistency_counters);
  return out;
}

GlobalAudit audit_all_full(std::span<SnapshotView* const> snaps, const KeyRegistry& registry,
                           std::uint64_t f) {
  GlobalAudit out;
  std::vector<IntegrityResult> integrity(snaps.size());
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    integrity[i] = check_integrity(*snaps[i], registry, f, &out.integrity_counters);
    out.integrity.emplace_back(snaps[i]->node(), integrity[i].reason);
    if (integrity[i].ok) {
      pool.push_back(i);
    } else {
      out.verdict.culprits.insert(snaps[i]->node());
      out.verdict.evidence.push_back(
          EvidenceIllegitimateData{snaps[i]->node(), to_string(integrity[i].reason)});
    }
  }
  for (SnapshotView* s : snaps) s->reset_counters();

  while (pool.size() > 1) {
    std::size_t w = longest_of(snaps, pool);
    std::vector<std::size_t> conflicting;
    for (std::size_t idx : pool) {
      if (idx == w) continue;
      AuditVerdict verdict =
          audit_pair(*snaps[idx], integrity[idx], *snaps[w], integrity[w], registry, f,
                     &out.consistency_counters);
      if (!verdict.consistent()) {
        out.verdict.culprits.insert(verdict.culprits.begin(), verdict.culprits.end());
        for (auto& e : verdict.evidence) out.verdict.evidence.push_back(std::move(e));
        conflicting.push_back(idx);
      }
    }
    pool = std::move(conflicting);
  }
  fold_chunk_counter(snaps, out.consistency_counters);
  return out;
}

AuditVerdict audit_receipt(const ClientReceipt& receipt, SnapshotView& snap,
                           const IntegrityResult& integrity, const KeyRegistry& registry,
                           std::uint64_t f, const std::map<Term, LeaderCert>& lc_pool,
                           AuditCounters* counters) {
  if (!verify_receipt(receipt, registry, f)) {
    throw std::invalid_argument("audit_receipt: receipt does not verify");
  }
  if (!integrity.ok) {
    throw std::invalid_argument("audit_receipt: snapshot failed integrity");
  }
  AuditCounters scratch;
  AuditCounters& c = counters ? *counters : scratch;

  LogIndex start = receipt.entries.front().index;
  LogIndex end = receipt.certificate.index;
  std::optional<LogIndex> conflict;
  LogEntry node_entry;
  for (LogIndex i = start; i <= std::min<LogIndex>(end, snap.size() - 1); ++i) {
    LogEntry mine = snap.entry(i);
    ++c.entry_reads;
    if (!entries_equal(mine, receipt.entries[i - start])) {
      conflict = i;
      node_entry = mine;
      break;
    }
  }
  if (!conflict) return AuditVerdict::clean();

  AuditVerdict verdict;
  Term t_c = receipt.certificate.term;
  Term t_n = snap.cc().term;
  if (t_c == t_n) {
    // same creator signed the receipt's branch and the node's branch
    NodeId leader = integrity.elections.at(t_n).request.leader;
    auto receipt_sig = cert_signature_of(receipt.certificate, leader);
    if (!receipt_sig) throw std::logic_error("receipt certificate lacks the leader's signature");
    verdict.culprits = {leader};
    verdict.evidence.push_back(EvidenceForkedTerm{
        t_c, leader, receipt.certificate.pointer, *receipt_sig, snap.cc().pointer,
        snap.sigs().at(t_n), *conflict, receipt.entries[*conflict - start], node_entry});
    return verdict;
  }
  if (t_c > t_n) {
    auto lc = lc_pool.find(t_c);
    if (lc == lc_pool.end()) {
      throw std::runtime_error("audit_receipt: no leader certificate for the receipt term");
    }
    verdict.culprits = voter_intersection(snap.cc().voters, lc->second.voters);
    verdict.evidence.push_back(EvidenceIllegalVotePair{snap.cc(), lc->second});
    return verdict;
  }
  // t_c < t_n: first term above t_c on the node's chain
  auto tau_it = integrity.elections.upper_bound(t_c);
  if (tau_it == integrity.elections.end()) {
    throw std::logic_error("audit_receipt: no term above the receipt term on a fresher chain");
  }
  verdict.culprits = voter_intersection(receipt.certificate.voters, tau_it->second.voters);
  verdict.evidence.push_back(EvidenceIllegalVotePair{receipt.certificate, tau_it->second});
  return verdict;
}

}  // namespace fraft
