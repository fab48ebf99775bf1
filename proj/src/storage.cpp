#include "fraft/storage.hpp"

#include <fstream>
#include <stdexcept>

namespace fraft {

namespace fs = std::filesystem;

namespace {

Json meta_to_json(const Node::AuditData& snap) {
  Json elections = Json::object();
  for (const auto& [term, lc] : snap.elections) elections[std::to_string(term)] = to_json(lc);
  Json sigs = Json::object();
  for (const auto& [term, sig] : snap.sigs) {
    sigs[std::to_string(term)] = Json{{"signer", sig.signer}, {"bytes", sig.hex()}};
  }
  return Json{{"node", snap.node},
              {"cc", to_json(snap.cc)},
              {"election_list", elections},
              {"leader_sigs", sigs}};
}

void meta_from_json(const Json& j, Node::AuditData& snap) {
  snap.node = j.at("node").get<NodeId>();
  snap.cc = commit_cert_from_json(j.at("cc"));
  for (const auto& [key, value] : j.at("election_list").items()) {
    snap.elections[std::stoull(key)] = leader_cert_from_json(value);
  }
  for (const auto& [key, value] : j.at("leader_sigs").items()) {
    auto sig = Signature::from_hex(value.at("signer").get<NodeId>(),
                                   value.at("bytes").get<std::string>());
    if (!sig) throw std::runtime_error("corrupt signature in meta.json");
    snap.sigs[std::stoull(key)] = *sig;
  }
}

Json load_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  Json j;
  in >> j;
  return j;
}

void store_json(const fs::path& file, const Json& j) {
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, file);
}

LogEntry entry_from_line(const std::string& line) {
  Json j = Json::parse(line);
  LogEntry e;
  e.term = j.at("term").get<Term>();
  e.index = j.at("index").get<LogIndex>();
  auto payload = from_hex(j.at("payload_hex").get<std::string>());
  if (!payload) throw std::runtime_error("corrupt payload_hex in chunk");
  e.payload = std::move(*payload);
  return e;
}

}  // namespace

std::vector<LogEntry> read_chunk_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<LogEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(entry_from_line(line));
  }
  return out;
}

void ChunkStore::write(const fs::path& dir, std::span<const Node::AuditData> snaps,
                       std::uint64_t chunk_size, const Json& extra) {
  fs::create_directories(dir);
  Json nodes = Json::array();
  for (const Node::AuditData& snap : snaps) {
    std::string node_dir = "node_" + std::to_string(snap.node);
    fs::create_directories(dir / node_dir);

    Json chunks = Json::array();
    std::uint64_t per_chunk = chunk_size == 0 ? snap.log.size() : chunk_size;
    std::size_t k = 0;
    for (std::size_t base = 0; base < snap.log.size(); base += per_chunk, ++k) {
      std::size_t end = std::min(snap.log.size(), base + per_chunk);
      std::string name = "chunk_" + std::to_string(k) + ".log";
      std::ofstream out(dir / node_dir / name);
      if (!out) throw std::runtime_error("cannot write chunk " + name);
      for (std::size_t i = base; i < end; ++i) {
        const LogEntry& e = snap.log[i];
        out << Json{{"term", e.term}, {"index", e.index}, {"payload_hex", to_hex(e.payload)}}
                   .dump()
            << '\n';
      }
      chunks.push_back(Json{{"file", name},
                            {"first_index", snap.log[base].index},
                            {"last_index", snap.log[end - 1].index},
                            {"first_term", snap.log[base].term},
                            {"last_term", snap.log[end - 1].term}});
    }
    store_json(dir / node_dir / "meta.json", meta_to_json(snap));
    nodes.push_back(Json{{"id", snap.node},
                         {"dir", node_dir},
                         {"entries", snap.log.size()},
                         {"chunks", chunks}});
  }
  Json manifest{{"format", 1}, {"chunk_size", chunk_size}, {"n", snaps.size()},
                {"nodes", nodes}, {"extra", extra}};
  store_json(dir / "manifest.json", manifest);
}

ChunkStore ChunkStore::open(const fs::path& dir) {
  ChunkStore store;
  store.dir_ = dir;
  Json j;
  try {
    j = load_json(dir / "manifest.json");
  } catch (const std::exception&) {
    throw std::runtime_error("missing or unreadable manifest in " + dir.string());
  }
  try {
    store.manifest_.format = j.at("format").get<std::uint64_t>();
    store.manifest_.chunk_size = j.at("chunk_size").get<std::uint64_t>();
    store.manifest_.n = j.at("n").get<std::uint64_t>();
    store.manifest_.extra = j.value("extra", Json::object());
    for (const auto& nj : j.at("nodes")) {
      StoreNodeInfo info;
      info.id = nj.at("id").get<NodeId>();
      info.dir = nj.at("dir").get<std::string>();
      info.entries = nj.at("entries").get<LogIndex>();
      for (const auto& cj : nj.at("chunks")) {
        info.chunks.push_back({cj.at("file").get<std::string>(),
                               cj.at("first_index").get<LogIndex>(),
                               cj.at("last_index").get<LogIndex>(),
                               cj.at("first_term").get<Term>(), cj.at("last_term").get<Term>()});
      }
      store.manifest_.nodes.push_back(std::move(info));
    }
  } catch (const std::exception&) {
    throw std::runtime_error("corrupt manifest in " + dir.string());
  }
  return store;
}

std::vector<NodeId> ChunkStore::node_ids() const {
  std::vector<NodeId> ids;
  for (const auto& info : manifest_.nodes) ids.push_back(info.id);
  return ids;
}

const StoreNodeInfo& ChunkStore::info(NodeId id) const {
  for (const auto& n : manifest_.nodes) {
    if (n.id == id) return n;
  }
  throw std::out_of_range("node not present in store");
}

Node::AuditData ChunkStore::read_snapshot(NodeId id) const {
  const StoreNodeInfo& n = info(id);
  Node::AuditData snap;
  meta_from_json(load_json(dir_ / n.dir / "meta.json"), snap);
  snap.node = id;
  for (const ChunkInfo& c : n.chunks) {
    auto entries = read_chunk_file(dir_ / n.dir / c.file);
    snap.log.insert(snap.log.end(), entries.begin(), entries.end());
  }
  if (snap.log.size() != n.entries) throw std::runtime_error("chunk contents disagree with manifest");
  return snap;
}

namespace {

// Lazy view: holds meta in memory, loads one chunk at a time.
class ChunkedSnapshotView final : public SnapshotView {
 public:
  ChunkedSnapshotView(fs::path node_dir, const StoreNodeInfo& info) : dir_(std::move(node_dir)), info_(info) {
    Node::AuditData meta_only;
    meta_from_json(load_json(dir_ / "meta.json"), meta_only);
    node_ = meta_only.node;
    elections_ = std::move(meta_only.elections);
    cc_ = std::move(meta_only.cc);
    sigs_ = std::move(meta_only.sigs);
  }

  NodeId node() const override { return node_; }
  LogIndex size() const override { return info_.entries; }

  LogEntry entry(LogIndex i) override {
    ++reads_;
    std::size_t chunk = chunk_of_index(i);
    if (!cached_ || cached_chunk_ != chunk) {
      cache_ = read_chunk_file(dir_ / info_.chunks[chunk].file);
      cached_ = true;
      cached_chunk_ = chunk;
      ++opens_;
      loaded_ += cache_.size();
    }
    return cache_.at(i - info_.chunks[chunk].first_index);
  }

  const std::map<Term, LeaderCert>& elections() const override { return elections_; }
  const CommitCert& cc() const override { return cc_; }
  const std::map<Term, Signature>& sigs() const override { return sigs_; }
  std::uint64_t entry_reads() const override { return reads_; }
  std::uint64_t chunks_opened() const override { return opens_; }
  std::uint64_t entries_loaded() const override { return loaded_; }
  void reset_counters() override { reads_ = opens_ = loaded_ = 0; }

 private:
  std::size_t chunk_of_index(LogIndex i) const {
    std::size_t lo = 0, hi = info_.chunks.size();
    while (lo + 1 < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (info_.chunks[mid].first_index <= i) lo = mid;
      else hi = mid;
    }
    if (i < info_.chunks[lo].first_index || i > info_.chunks[lo].last_index) {
      throw std::out_of_range("entry index outside store");
    }
    return lo;
  }

  fs::path dir_;
  StoreNodeInfo info_;
  NodeId node_ = 0;
  std::map<Term, LeaderCert> elections_;
  CommitCert cc_;
  std::map<Term, Signature> sigs_;
  std::vector<LogEntry> cache_;
  bool cached_ = false;
  std::size_t cached_chunk_ = 0;
  std::uint64_t reads_ = 0;
  std::uint64_t opens_ = 0;
  std::uint64_t loaded_ = 0;
};

}  // namespace

std::unique_ptr<SnapshotView> ChunkStore::view(NodeId id) const {
  const StoreNodeInfo& n = info(id);
  return std::make_unique<ChunkedSnapshotView>(dir_ / n.dir, n);
}

LocateResult ChunkStore::locate_term(NodeId id, Term t) const {
  const StoreNodeInfo& n = info(id);
  if (n.chunks.empty() || n.chunks.back().last_term <= t) {
    return {false, n.chunks.size(), n.entries};  // end sentinel
  }
  // first chunk whose last_term exceeds t
  std::size_t lo = 0, hi = n.chunks.size() - 1;
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (n.chunks[mid].last_term > t) hi = mid;
    else lo = mid + 1;
  }
  auto entries = read_chunk_file(dir_ / n.dir / n.chunks[lo].file);
  for (const LogEntry& e : entries) {
    if (e.term > t) return {true, lo, e.index};
  }
  throw std::logic_error("manifest term range disagrees with chunk contents");
}

}  // namespace fraft
