#include "fraft/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <stdexcept>

namespace fraft {

SimTime SimConfig::pair_delay(NodeId from, NodeId to) const {
  if (!delay_matrix.empty()) return delay_matrix[from][to];
  return link_delay;
}

void SimConfig::finalize() {
  if (n < 3 || n % 2 == 0) throw std::invalid_argument("n must be odd and >= 3");
  node.n = n;
  node.f = f();
  node.live = live;
  node.delta = delta;
  if (!delay_matrix.empty()) {
    if (delay_matrix.size() != n) throw std::invalid_argument("delay matrix must be n x n");
    for (const auto& row : delay_matrix) {
      if (row.size() != n) throw std::invalid_argument("delay matrix must be n x n");
      for (SimTime d : row) {
        if (d < 0 || d > delta) throw std::invalid_argument("post-GST delay exceeds delta");
      }
    }
  } else if (link_delay < 0 || link_delay > delta) {
    throw std::invalid_argument("post-GST delay exceeds delta");
  }
  for (NodeId b : byzantine) {
    if (b >= n) throw std::invalid_argument("byzantine id out of range");
  }
  if (live) node.live_timers.validate(delta);
}

Json SimConfig::to_json() const {
  Json j;
  j["n"] = n;
  j["seed"] = seed;
  j["gst"] = gst;
  j["delta"] = delta;
  j["link_delay"] = link_delay;
  j["client_delay"] = client_delay;
  j["pre_gst_chaos"] = pre_gst_chaos;
  j["pre_gst_drop"] = pre_gst_drop;
  j["live"] = live;
  j["horizon"] = horizon;
  j["base_client_retry"] = base_client_retry;
  Json crash_arr = Json::array();
  for (const auto& c : crashes) {
    crash_arr.push_back(Json{{"node", c.node}, {"down_at", c.down_at}, {"up_at", c.up_at}});
  }
  j["crashes"] = crash_arr;
  j["byzantine"] = std::vector<NodeId>(byzantine.begin(), byzantine.end());
  j["tau_lo"] = node.tau_lo;
  j["tau_hi"] = node.tau_hi;
  j["tau_heart"] = node.tau_heart;
  j["live_timers"] = Json{{"heart", node.live_timers.heart},
                          {"cand", node.live_timers.cand},
                          {"voter", node.live_timers.voter},
                          {"client", node.live_timers.client},
                          {"req", node.live_timers.req}};
  j["prevote_threshold"] = node.prevote_threshold;
  return j;
}

SimConfig SimConfig::from_json(const Json& j) {
  SimConfig c;
  c.n = j.value("n", c.n);
  c.seed = j.value("seed", c.seed);
  c.gst = j.value("gst", c.gst);
  c.delta = j.value("delta", c.delta);
  c.link_delay = j.value("link_delay", c.link_delay);
  c.client_delay = j.value("client_delay", c.client_delay);
  c.pre_gst_chaos = j.value("pre_gst_chaos", c.pre_gst_chaos);
  c.pre_gst_drop = j.value("pre_gst_drop", c.pre_gst_drop);
  c.live = j.value("live", c.live);
  c.horizon = j.value("horizon", c.horizon);
  c.base_client_retry = j.value("base_client_retry", c.base_client_retry);
  if (j.contains("crashes")) {
    for (const auto& cj : j.at("crashes")) {
      c.crashes.push_back({cj.at("node").get<NodeId>(), cj.at("down_at").get<SimTime>(),
                           cj.at("up_at").get<SimTime>()});
    }
  }
  if (j.contains("byzantine")) {
    for (NodeId b : j.at("byzantine").get<std::vector<NodeId>>()) c.byzantine.insert(b);
  }
  c.node.tau_lo = j.value("tau_lo", c.node.tau_lo);
  c.node.tau_hi = j.value("tau_hi", c.node.tau_hi);
  c.node.tau_heart = j.value("tau_heart", c.node.tau_heart);
  if (j.contains("live_timers")) {
    const Json& t = j.at("live_timers");
    c.node.live_timers.heart = t.value("heart", c.node.live_timers.heart);
    c.node.live_timers.cand = t.value("cand", c.node.live_timers.cand);
    c.node.live_timers.voter = t.value("voter", c.node.live_timers.voter);
    c.node.live_timers.client = t.value("client", c.node.live_timers.client);
    c.node.live_timers.req = t.value("req", c.node.live_timers.req);
  }
  c.node.prevote_threshold = j.value("prevote_threshold", c.node.prevote_threshold);
  return c;
}

Workload Workload::generate(std::size_t count, SimTime start, SimTime interval) {
  Workload w;
  w.requests.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "tx-%06zu", k);
    std::string s(buf);
    w.requests.push_back(
        {start + static_cast<SimTime>(k) * interval, {s.begin(), s.end()}});
  }
  return w;
}

Json Transcript::summary_json() const {
  Json j;
  Json reqs = Json::array();
  for (const auto& r : requests) {
    Json rj{{"payload", r.payload_hex},
            {"submitted", r.submitted},
            {"attempts", r.attempts}};
    rj["receipt_at"] = r.receipt_at ? Json(*r.receipt_at) : Json(nullptr);
    rj["committed_at"] = r.committed_at ? Json(*r.committed_at) : Json(nullptr);
    rj["latency"] = r.committed_at ? Json(*r.committed_at - r.submitted) : Json(nullptr);
    reqs.push_back(rj);
  }
  j["requests"] = reqs;
  j["safety_violation"] = safety_violation;
  Json confl = Json::array();
  for (const auto& c : conflicts) {
    confl.push_back(Json{{"index", c.index}, {"node_a", c.node_a}, {"node_b", c.node_b}});
  }
  j["conflicts"] = confl;
  Json heights = Json::object();
  for (const auto& [id, h] : commit_heights) heights[std::to_string(id)] = h;
  j["commit_heights"] = heights;
  j["events"] = events_processed;
  j["messages_delivered"] = messages_delivered;
  j["messages_dropped"] = messages_dropped;
  j["hit_horizon"] = hit_horizon;
  return j;
}

// ---------------------------------------------------------------------------

Sim::Sim(SimConfig cfg, const KeyRegistry* registry)
    : cfg_(std::move(cfg)), registry_(registry), rng_(cfg_.seed) {
  cfg_.finalize();
  alive_.assign(cfg_.n, true);
  for (NodeId id = 0; id < cfg_.n; ++id) {
    nodes_.push_back(std::make_unique<Node>(id, cfg_.node, registry_));
  }
  observed_commit_.assign(cfg_.n, 0);
}

void Sim::install_adversary(NodeId id, std::unique_ptr<Adversary> adv) {
  if (!cfg_.byzantine.count(id)) throw std::invalid_argument("adversary on a non-byzantine id");
  adversaries_[id] = std::move(adv);
}

void Sim::add_workload(const Workload& w) {
  for (const auto& inj : w.requests) workload_.push_back(inj);
  std::stable_sort(workload_.begin(), workload_.end(),
                   [](const Injection& a, const Injection& b) { return a.time < b.time; });
}

void Sim::push(SimTime time, EventBody body) { queue_.push({time, seq_++, std::move(body)}); }

void Sim::record_line(Json line) {
  if (cfg_.record_transcript) out_.lines.push_back(std::move(line));
}

void Sim::schedule_send(NodeId from, NodeId to, Message msg) {
  SimTime d;
  if (from == kClientId || to == kClientId) {
    d = cfg_.client_delay;
  } else if (now_ >= cfg_.gst) {
    d = cfg_.pair_delay(from, to);
  } else if (cfg_.pre_gst_chaos) {
    if (rng_.unit() < cfg_.pre_gst_drop) {
      ++out_.messages_dropped;
      return;
    }
    d = rng_.uniform(cfg_.delta, 10 * cfg_.delta);
  } else {
    d = cfg_.pair_delay(from, to);
  }
  if (delivery_filter_) {
    DeliveryDecision decision = delivery_filter_(now_, from, to, msg);
    if (decision.drop) {
      ++out_.messages_dropped;
      return;
    }
    if (decision.delay) d = *decision.delay;
  }
  SimTime at = std::max(cfg_.gst, now_) + d;
  // per-pair FIFO: a later send never arrives before an earlier one
  auto key = std::make_pair(from, to);
  auto it = last_pair_send_.find(key);
  if (it != last_pair_send_.end() && at < it->second) at = it->second;
  last_pair_send_[key] = at;
  push(at, Delivery{from, to, std::move(msg)});
}

void Sim::apply_timer_cmds(NodeId node, const std::vector<TimerCmd>& cmds) {
  for (const TimerCmd& cmd : cmds) {
    auto key = std::make_pair(node, static_cast<int>(cmd.kind));
    std::uint64_t gen = ++timer_gen_[key];
    if (cmd.cancel) continue;
    SimTime dur = cmd.duration;
    if (cmd.randomized) dur = rng_.uniform(cfg_.node.tau_lo, cfg_.node.tau_hi);
    if (timer_override_) {
      if (auto forced = timer_override_(now_, node, cmd.kind, dur)) dur = *forced;
    }
    push(now_ + dur, TimerFire{node, cmd.kind, gen, cmd.key});
  }
}

void Sim::handle_notes(NodeId origin, const std::vector<Note>& notes) {
  bool honest = !adversaries_.count(origin);
  for (const Note& n : notes) {
    switch (n.kind) {
      case Note::Kind::Committed:
        if (honest) observe_commits(origin);
        break;
      case Note::Kind::VoteGranted:
        if (honest) out_.votes_cast[{origin, n.term}] += 1;
        record_line({{"t", now_}, {"node", origin}, {"event", "vote"}, {"term", n.term}, {"for", n.peer}});
        break;
      case Note::Kind::PrevoteSent:
        if (honest) out_.prevotes_cast[{origin, n.term}] += 1;
        record_line({{"t", now_}, {"node", origin}, {"event", "prevote"}, {"term", n.term}});
        break;
      case Note::Kind::BecameCandidate:
        record_line({{"t", now_}, {"node", origin}, {"event", "candidate"}, {"term", n.term}});
        break;
      case Note::Kind::BecameLeader:
        record_line({{"t", now_}, {"node", origin}, {"event", "leader"}, {"term", n.term}});
        break;
      case Note::Kind::AdmittedLeader: {
        record_line(
            {{"t", now_}, {"node", origin}, {"event", "admit"}, {"term", n.term}, {"leader", n.peer}});
        if (cfg_.live && honest) {
          // clients resubmit within delta of any node admitting a new leader
          for (std::size_t k = 0; k < requests_.size(); ++k) {
            RequestRecord& r = requests_[k];
            if (r.attempts == 0 || r.receipt_at || request_resubmit_term_[k] >= n.term) continue;
            request_resubmit_term_[k] = n.term;
            push(now_ + cfg_.delta, ClientSubmit{k, r.attempts, n.peer, false});
          }
        }
        break;
      }
      case Note::Kind::ElectionEntered:
        record_line({{"t", now_}, {"node", origin}, {"event", "election"}, {"term", n.term}});
        break;
    }
  }
}

void Sim::observe_commits(NodeId id) {
  const NodeState& st = nodes_[id]->state();
  LogIndex from = observed_commit_[id];
  LogIndex to = st.latest_cc.index;
  for (LogIndex j = from + 1; j <= to; ++j) {
    const Digest& h = st.pointer_cache[j];
    auto it = committed_digests_.find(j);
    if (it == committed_digests_.end()) {
      committed_digests_[j] = {h, id};
    } else if (it->second.first != h) {
      out_.safety_violation = true;
      out_.conflicts.push_back({j, it->second.second, id});
      record_line({{"t", now_}, {"event", "safety_violation"}, {"index", j},
                   {"node_a", it->second.second}, {"node_b", id}});
    }
    Digest pd = sha256(std::span<const std::uint8_t>(st.log[j].payload.data(),
                                                     st.log[j].payload.size()));
    auto req = request_by_payload_.find(pd);
    if (req != request_by_payload_.end() && !requests_[req->second].committed_at) {
      requests_[req->second].committed_at = now_;
    }
  }
  observed_commit_[id] = std::max(observed_commit_[id], to);
}

void Sim::paranoid_check(NodeId id) const {
  if (adversaries_.count(id)) return;
  const NodeState& st = nodes_[id]->state();
  std::span<const LogEntry> tail_span(st.log.data() + 1, st.log.size() - 1);
  if (chain_pointer(tail_span, Digest::zero()) != st.tip_pointer) {
    throw std::logic_error("paranoid: tip pointer mismatch");
  }
  std::span<const LogEntry> committed_span(st.log.data() + 1, st.latest_cc.index);
  if (chain_pointer(committed_span, Digest::zero()) != st.committed_pointer) {
    throw std::logic_error("paranoid: committed pointer mismatch");
  }
  if (!verify_quorum_cert(st.latest_cc, *registry_, cfg_.f())) {
    throw std::logic_error("paranoid: stored cc fails verification");
  }
  for (const auto& [term, lc] : st.election_list) {
    if (!verify_quorum_cert(lc, *registry_, cfg_.f())) {
      throw std::logic_error("paranoid: stored lc fails verification");
    }
  }
}

void Sim::apply_output(NodeId origin, NodeOutput&& out) {
  for (Envelope& env : out.msgs) {
    if (env.broadcast) {
      for (NodeId to = 0; to < cfg_.n; ++to) {
        if (to != origin) schedule_send(origin, to, env.msg);
      }
    } else {
      schedule_send(origin, env.to, std::move(env.msg));
    }
  }
  apply_timer_cmds(origin, out.timers);
  for (ClientReceipt& r : out.receipts) {
    push(now_ + cfg_.client_delay, ReceiptArrival{std::move(r)});
  }
  handle_notes(origin, out.notes);
  if (cfg_.paranoid_checks && !adversaries_.count(origin)) paranoid_check(origin);
}

void Sim::client_submit(const ClientSubmit& ev) {
  RequestRecord& r = requests_[ev.request];
  if (r.receipt_at) return;  // satisfied; stop retrying
  if (r.attempts == 0) r.submitted = now_;
  r.attempts += 1;
  const std::vector<std::uint8_t>& payload = workload_[ev.request].payload;
  record_line({{"t", now_}, {"event", ev.second_trial ? "second_trial" : "submit"},
               {"request", ev.request}, {"attempt", r.attempts}});
  if (ev.second_trial) {
    for (NodeId to = 0; to < cfg_.n; ++to) {
      schedule_send(kClientId, to, MsgClientTx{payload, true});
    }
  } else {
    schedule_send(kClientId, ev.target, MsgClientTx{payload, false});
  }
  if (cfg_.live) {
    push(now_ + cfg_.node.live_timers.client, ClientSubmit{ev.request, r.attempts, 0, true});
  } else {
    NodeId target = static_cast<NodeId>((ev.request + r.attempts) % cfg_.n);
    push(now_ + cfg_.base_client_retry, ClientSubmit{ev.request, r.attempts, target, false});
  }
}

void Sim::client_receipt(const ClientReceipt& receipt) {
  if (receipt.entries.empty()) return;
  const auto& payload = receipt.entries.front().payload;
  Digest pd = sha256(std::span<const std::uint8_t>(payload.data(), payload.size()));
  auto it = request_by_payload_.find(pd);
  if (it == request_by_payload_.end()) return;
  RequestRecord& r = requests_[it->second];
  if (r.receipt_at) return;
  if (!verify_receipt(receipt, *registry_, cfg_.f())) return;
  r.receipt_at = now_;
  r.receipt = receipt;
  record_line({{"t", now_}, {"event", "receipt"}, {"request", it->second}});
}

Transcript Sim::run() {
  requests_.resize(workload_.size());
  request_resubmit_term_.assign(workload_.size(), 0);
  for (std::size_t k = 0; k < workload_.size(); ++k) {
    const auto& payload = workload_[k].payload;
    requests_[k].payload_hex = to_hex(payload);
    request_by_payload_[sha256(std::span<const std::uint8_t>(payload.data(), payload.size()))] = k;
    push(workload_[k].time, ClientSubmit{k, 0, static_cast<NodeId>(k % cfg_.n), false});
  }
  for (const CrashWindow& c : cfg_.crashes) {
    push(c.down_at, CrashFlip{c.node, true});
    if (c.up_at > c.down_at) push(c.up_at, CrashFlip{c.node, false});
  }
  for (NodeId id = 0; id < cfg_.n; ++id) {
    now_ = 0;
    if (auto adv = adversaries_.find(id); adv != adversaries_.end()) {
      apply_output(id, adv->second->start(0));
    } else {
      apply_output(id, nodes_[id]->start(0));
    }
  }

  std::optional<SimTime> drain_deadline;
  std::size_t receipted = 0;
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    if (ev.time > cfg_.horizon) {
      out_.hit_horizon = true;
      break;
    }
    if (drain_deadline && ev.time > *drain_deadline) break;
    assert(ev.time >= now_);
    now_ = ev.time;
    ++out_.events_processed;

    if (auto* d = std::get_if<Delivery>(&ev.body)) {
      if (d->to >= cfg_.n || !alive_[d->to]) {
        ++out_.messages_dropped;
        continue;
      }
      ++out_.messages_delivered;
      if (auto adv = adversaries_.find(d->to); adv != adversaries_.end()) {
        apply_output(d->to, adv->second->on_message(d->from, d->msg, now_));
      } else {
        apply_output(d->to, nodes_[d->to]->on_message(d->from, d->msg, now_));
      }
    } else if (auto* t = std::get_if<TimerFire>(&ev.body)) {
      if (!alive_[t->node]) continue;
      auto key = std::make_pair(t->node, static_cast<int>(t->kind));
      if (timer_gen_[key] != t->gen) continue;  // restarted or cancelled
      if (auto adv = adversaries_.find(t->node); adv != adversaries_.end()) {
        apply_output(t->node, adv->second->on_timer(t->kind, t->key, now_));
      } else {
        apply_output(t->node, nodes_[t->node]->on_timer(t->kind, t->key, now_));
      }
    } else if (auto* s = std::get_if<ClientSubmit>(&ev.body)) {
      client_submit(*s);
    } else if (auto* rc = std::get_if<ReceiptArrival>(&ev.body)) {
      std::size_t before = receipted;
      client_receipt(rc->receipt);
      receipted = 0;
      for (const auto& r : requests_) {
        if (r.receipt_at) ++receipted;
      }
      if (receipted > before && receipted == requests_.size() && !drain_deadline) {
        drain_deadline = now_ + 20 * (cfg_.delta + cfg_.client_delay);
      }
    } else if (auto* c = std::get_if<CrashFlip>(&ev.body)) {
      alive_[c->node] = !c->down;
      record_line({{"t", now_}, {"event", c->down ? "crash" : "recover"}, {"node", c->node}});
      if (!c->down && !adversaries_.count(c->node)) {
        apply_output(c->node, nodes_[c->node]->on_recover(now_));
      }
    }
  }

  for (NodeId id = 0; id < cfg_.n; ++id) {
    if (alive_[id] && !adversaries_.count(id)) observe_commits(id);
    Node::AuditData data = adversaries_.count(id) ? adversaries_.at(id)->audit_data()
                                                  : nodes_[id]->audit_data();
    out_.commit_heights[id] = data.cc.index;
    out_.commit_terms[id] = data.cc.term;
    out_.snapshots.push_back(std::move(data));
  }
  out_.requests = requests_;
  return out_;
}

}  // namespace fraft
