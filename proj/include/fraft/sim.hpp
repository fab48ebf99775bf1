#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fraft/node.hpp"

namespace fraft {

// Deterministic RNG. All sampling goes through here so transcripts are
// reproducible bit-for-bit from the seed alone (std::distributions are
// implementation-defined, so we do our own reductions).
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : eng_(seed) {}
  std::uint64_t next() { return eng_(); }
  SimTime uniform(SimTime lo, SimTime hi) {
    return lo + static_cast<SimTime>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double unit() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }

 private:
  std::mt19937_64 eng_;
};

struct CrashWindow {
  NodeId node = 0;
  SimTime down_at = 0;
  SimTime up_at = 0;  // up_at <= down_at means no recovery
};

struct SimConfig {
  std::uint64_t n = 3;
  std::uint64_t seed = 1;
  SimTime gst = 0;
  SimTime delta = 10;
  SimTime link_delay = 2;    // post-GST per-pair delay unless the matrix says otherwise
  SimTime client_delay = 2;  // client <-> node delay
  std::vector<std::vector<SimTime>> delay_matrix;  // optional; [from][to]
  bool pre_gst_chaos = true;  // pre-GST: delays in [delta, 10*delta], drops with pre_gst_drop
  double pre_gst_drop = 0.2;
  std::vector<CrashWindow> crashes;
  std::set<NodeId> byzantine;
  bool live = false;
  NodeConfig node;
  SimTime horizon = 120000;
  SimTime base_client_retry = 600;
  bool record_transcript = true;
  bool paranoid_checks = false;  // recompute hash chains after every event

  std::uint64_t f() const { return (n - 1) / 2; }
  SimTime pair_delay(NodeId from, NodeId to) const;
  void finalize();  // derives node.n/f/live and validates

  Json to_json() const;
  static SimConfig from_json(const Json& j);
};

struct Injection {
  SimTime time = 0;
  std::vector<std::uint8_t> payload;
};

struct Workload {
  std::vector<Injection> requests;
  static Workload generate(std::size_t count, SimTime start, SimTime interval);
};

struct RequestRecord {
  std::string payload_hex;
  SimTime submitted = 0;
  std::optional<SimTime> receipt_at;
  std::optional<SimTime> committed_at;  // first commit on any honest node
  std::optional<ClientReceipt> receipt;
  std::uint32_t attempts = 0;
};

struct ConflictRecord {
  LogIndex index = 0;
  NodeId node_a = 0;
  NodeId node_b = 0;
};

struct Transcript {
  std::vector<Json> lines;
  std::vector<RequestRecord> requests;
  bool safety_violation = false;
  std::vector<ConflictRecord> conflicts;
  std::vector<Node::AuditData> snapshots;  // per node, ascending id
  std::map<NodeId, LogIndex> commit_heights;
  std::map<NodeId, Term> commit_terms;
  std::uint64_t events_processed = 0;
  std::uint64_t messages_delivered = 0;
  std::uint64_t messages_dropped = 0;
  bool hit_horizon = false;
  // protocol-invariant tallies (honest nodes only)
  std::map<std::pair<NodeId, Term>, int> votes_cast;
  std::map<std::pair<NodeId, Term>, int> prevotes_cast;

  Json summary_json() const;
};

struct DeliveryDecision {
  bool drop = false;
  std::optional<SimTime> delay;  // replaces the sampled/pair delay
};
using DeliveryFilter =
    std::function<DeliveryDecision(SimTime now, NodeId from, NodeId to, const Message&)>;
using TimerOverride =
    std::function<std::optional<SimTime>(SimTime now, NodeId node, TimerKind kind, SimTime proposed)>;

// Byzantine nodes get their events routed here instead of a Node.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual NodeOutput start(SimTime now) = 0;
  virtual NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) = 0;
  virtual NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now) = 0;
  virtual Node::AuditData audit_data() const = 0;
};

class Sim {
 public:
  Sim(SimConfig cfg, const KeyRegistry* registry);

  void install_adversary(NodeId id, std::unique_ptr<Adversary> adv);
  void set_delivery_filter(DeliveryFilter f) { delivery_filter_ = std::move(f); }
  void set_timer_override(TimerOverride f) { timer_override_ = std::move(f); }
  void add_workload(const Workload& w);

  Transcript run();

  const SimConfig& config() const { return cfg_; }
  const KeyRegistry& registry() const { return *registry_; }
  Node& node(NodeId id) { return *nodes_.at(id); }
  bool has_adversary(NodeId id) const { return adversaries_.count(id) > 0; }
  SimTime now() const { return now_; }

 private:
  struct Delivery {
    NodeId from, to;
    Message msg;
  };
  struct TimerFire {
    NodeId node;
    TimerKind kind;
    std::uint64_t gen;
    Digest key;
  };
  struct ClientSubmit {
    std::size_t request;
    std::uint32_t attempt;
    NodeId target;      // ignored when trial_broadcast
    bool second_trial = false;
  };
  struct ReceiptArrival {
    ClientReceipt receipt;
  };
  struct CrashFlip {
    NodeId node;
    bool down;
  };
  using EventBody = std::variant<Delivery, TimerFire, ClientSubmit, ReceiptArrival, CrashFlip>;
  struct Event {
    SimTime time;
    std::uint64_t seq;
    EventBody body;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      return a.time > b.time || (a.time == b.time && a.seq > b.seq);
    }
  };

  void push(SimTime time, EventBody body);
  void schedule_send(NodeId from, NodeId to, Message msg);
  void apply_output(NodeId origin, NodeOutput&& out);
  void apply_timer_cmds(NodeId node, const std::vector<TimerCmd>& cmds);
  void handle_notes(NodeId origin, const std::vector<Note>& notes);
  void observe_commits(NodeId node);
  void client_submit(const ClientSubmit& ev);
  void client_receipt(const ClientReceipt& receipt);
  void record_line(Json line);
  void paranoid_check(NodeId node) const;

  SimConfig cfg_;
  const KeyRegistry* registry_;
  SimRng rng_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::uint64_t seq_ = 0;
  SimTime now_ = 0;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<NodeId, std::unique_ptr<Adversary>> adversaries_;
  std::vector<bool> alive_;
  std::map<std::pair<NodeId, int>, std::uint64_t> timer_gen_;
  DeliveryFilter delivery_filter_;
  TimerOverride timer_override_;

  // client actor
  std::vector<Injection> workload_;
  std::vector<RequestRecord> requests_;
  std::map<Digest, std::size_t> request_by_payload_;
  std::vector<Term> request_resubmit_term_;

  // monitors
  Transcript out_;
  std::map<LogIndex, std::pair<Digest, NodeId>> committed_digests_;
  std::vector<LogIndex> observed_commit_;
  // FIFO check: last delivery time per ordered pair
  std::map<std::pair<NodeId, NodeId>, SimTime> last_pair_send_;
};

}  // namespace fraft
