#pragma once

#include <span>

#include "fraft/storage.hpp"

namespace fraft {

enum class IntegrityReason {
  Ok,
  BadInit,
  BadIndex,
  BadTermOrder,
  MissingLc,
  MissingSig,
  BadLeaderSig,
  BadLcLink,
  BadCcPointer,
  BadCcEntry,
  BadCcQuorum,
  BadLcQuorum,
};

const char* to_string(IntegrityReason r);

struct IntegrityResult {
  bool ok = false;
  IntegrityReason reason = IntegrityReason::Ok;
  std::map<Term, LeaderCert> elections;         // terms backed by log entries
  std::map<Term, LeaderCert> unused_elections;  // certificates for entry-less terms
};

struct AuditCounters {
  std::uint64_t entries_scanned = 0;
  std::uint64_t hash_ops = 0;
  std::uint64_t cert_checks = 0;
  std::uint64_t sig_checks = 0;
  std::uint64_t entry_reads = 0;     // view reads during the consistency phase
  std::uint64_t chunks_opened = 0;   // max chunk opens of any view, consistency phase
  std::uint64_t entries_loaded = 0;  // max log lines pulled off disk by any view

  Json to_json() const;
};

// Chain integrity: the log starts at the init entry and replays to the
// certificate under valid creator signatures and leader certificates.
IntegrityResult check_integrity(SnapshotView& snap, const KeyRegistry& registry, std::uint64_t f,
                                AuditCounters* counters = nullptr);

// Pairwise consistency. Both snapshots must have passed check_integrity; the
// pruned election lists from those results are consulted here.
AuditVerdict audit_pair(SnapshotView& u, const IntegrityResult& iu, SnapshotView& v,
                        const IntegrityResult& iv, const KeyRegistry& registry, std::uint64_t f,
                        AuditCounters* counters = nullptr);

struct GlobalAudit {
  AuditVerdict verdict;
  std::vector<std::pair<NodeId, IntegrityReason>> integrity;  // per node, input order
  AuditCounters integrity_counters;
  AuditCounters consistency_counters;
};

// Early-exit audit: first integrity violator, else first conflicting pair
// against the longest committed log.
GlobalAudit audit_all_early(std::span<SnapshotView* const> snaps, const KeyRegistry& registry,
                            std::uint64_t f);

// Full audit: keeps pairing conflicting nodes against the current longest
// until at most one remains, accumulating the culprit union.
GlobalAudit audit_all_full(std::span<SnapshotView* const> snaps, const KeyRegistry& registry,
                           std::uint64_t f);

// Receipt audit against one integrity-passing snapshot. lc_pool supplies
// leader certificates the snapshot itself may not hold (gathered from all
// nodes' election lists, used ones and unused ones alike).
AuditVerdict audit_receipt(const ClientReceipt& receipt, SnapshotView& snap,
                           const IntegrityResult& integrity, const KeyRegistry& registry,
                           std::uint64_t f,
                           const std::map<Term, LeaderCert>& lc_pool = {},
                           AuditCounters* counters = nullptr);

}  // namespace fraft
