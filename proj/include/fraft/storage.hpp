#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "fraft/node.hpp"

namespace fraft {

// Read surface the auditor works against. Chunked implementations count how
// much of the log they actually touch, which is what the complexity
// assertions measure.
class SnapshotView {
 public:
  virtual ~SnapshotView() = default;
  virtual NodeId node() const = 0;
  virtual LogIndex size() const = 0;  // committed length, init entry included
  virtual LogEntry entry(LogIndex i) = 0;
  virtual const std::map<Term, LeaderCert>& elections() const = 0;
  virtual const CommitCert& cc() const = 0;
  virtual const std::map<Term, Signature>& sigs() const = 0;

  virtual std::uint64_t entry_reads() const = 0;
  virtual std::uint64_t chunks_opened() const = 0;
  virtual std::uint64_t entries_loaded() const = 0;  // log lines pulled off disk
  virtual void reset_counters() = 0;
};

class MemorySnapshotView final : public SnapshotView {
 public:
  explicit MemorySnapshotView(Node::AuditData data) : data_(std::move(data)) {}
  NodeId node() const override { return data_.node; }
  LogIndex size() const override { return data_.log.size(); }
  LogEntry entry(LogIndex i) override {
    ++reads_;
    return data_.log.at(i);
  }
  const std::map<Term, LeaderCert>& elections() const override { return data_.elections; }
  const CommitCert& cc() const override { return data_.cc; }
  const std::map<Term, Signature>& sigs() const override { return data_.sigs; }
  std::uint64_t entry_reads() const override { return reads_; }
  std::uint64_t chunks_opened() const override { return 0; }
  std::uint64_t entries_loaded() const override { return 0; }
  void reset_counters() override { reads_ = 0; }

  const Node::AuditData& data() const { return data_; }

 private:
  Node::AuditData data_;
  std::uint64_t reads_ = 0;
};

struct ChunkInfo {
  std::string file;
  LogIndex first_index = 0;
  LogIndex last_index = 0;
  Term first_term = 0;
  Term last_term = 0;
};

struct StoreNodeInfo {
  NodeId id = 0;
  std::string dir;
  LogIndex entries = 0;
  std::vector<ChunkInfo> chunks;
};

struct StoreManifest {
  std::uint64_t format = 1;
  std::uint64_t n = 0;
  std::uint64_t chunk_size = 0;  // 0 = unlimited
  std::vector<StoreNodeInfo> nodes;
  Json extra;  // config echo from the simulation
};

struct LocateResult {
  bool found = false;       // false: every entry has term <= t (end sentinel)
  std::size_t chunk = 0;    // chunk holding the answer
  LogIndex index = 0;       // global index of the first entry with term > t
};

// On-disk layout, fixed for CLI interop:
//   <dir>/manifest.json
//   <dir>/node_<id>/chunk_<k>.log   one {"term","index","payload_hex"} per line
//   <dir>/node_<id>/meta.json       certificates, election list, leader sigs
class ChunkStore {
 public:
  // chunk_size 0 means a single unbounded chunk per node. The manifest is
  // written last, so an interrupted write is detectable by its absence.
  static void write(const std::filesystem::path& dir, std::span<const Node::AuditData> snaps,
                    std::uint64_t chunk_size, const Json& extra = Json::object());
  static ChunkStore open(const std::filesystem::path& dir);  // throws on missing/corrupt manifest

  const StoreManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::vector<NodeId> node_ids() const;

  Node::AuditData read_snapshot(NodeId id) const;            // full load
  std::unique_ptr<SnapshotView> view(NodeId id) const;       // lazy, one chunk cached

  // First entry with term > t: binary search over per-chunk term ranges, then
  // a scan inside the single chunk. Matches a full linear scan.
  LocateResult locate_term(NodeId id, Term t) const;

 private:
  std::filesystem::path dir_;
  StoreManifest manifest_;
  const StoreNodeInfo& info(NodeId id) const;
};

std::vector<LogEntry> read_chunk_file(const std::filesystem::path& file);

}  // namespace fraft
