#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fraft/live.hpp"
#include "fraft/scenario.hpp"

namespace py = pybind11;
using namespace fraft;

namespace {

Digest digest_from_hex_or_throw(const std::string& hex) {
  auto d = Digest::from_hex(hex);
  if (!d) throw std::invalid_argument("expected a 64-char hex digest");
  return *d;
}

ScenarioOptions options_from_json(const std::string& options_json) {
  Json j = Json::parse(options_json);
  ScenarioOptions opts;
  opts.nodes = j.value("nodes", opts.nodes);
  opts.txs = j.value("txs", opts.txs);
  opts.seed = j.value("seed", opts.seed);
  opts.attack = j.value("attack", opts.attack);
  opts.attack_at = j.value("attack_at", opts.attack_at);
  if (j.contains("byzantine") && !j.at("byzantine").is_null()) {
    opts.byzantine = j.at("byzantine").get<NodeId>();
  }
  opts.chunk_size = j.value("chunk_size", opts.chunk_size);
  opts.live = j.value("live", opts.live);
  opts.gst = j.value("gst", opts.gst);
  opts.delta = j.value("delta", opts.delta);
  opts.receipt_case = j.value("receipt_case", opts.receipt_case);
  opts.snapshot_mode = j.value("snapshot_mode", opts.snapshot_mode);
  if (j.contains("horizon") && !j.at("horizon").is_null()) {
    opts.horizon = j.at("horizon").get<SimTime>();
  }
  opts.record_transcript = j.value("record_transcript", opts.record_transcript);
  return opts;
}

std::string simulate_json(const std::string& options_json, const std::string& out_dir) {
  ScenarioOptions opts = options_from_json(options_json);
  ScenarioResult result = run_scenario(opts);
  if (!out_dir.empty()) write_run(out_dir, opts, result);
  return run_report(opts, result).dump();
}

std::string audit_json(const std::string& dir, const std::string& mode,
                       const std::string& receipt_path) {
  AuditOptions opts;
  opts.in = dir;
  opts.mode = mode;
  if (!receipt_path.empty()) opts.receipt = receipt_path;
  AuditRun audit = run_audit(opts);
  Json out = audit.report;
  out["exit_code"] = audit.exit_code;
  return out.dump();
}

bool verify_receipt_json(const std::string& receipt_json, std::uint64_t n) {
  ClientReceipt receipt = receipt_from_json(Json::parse(receipt_json));
  KeyRegistry reg = KeyRegistry::create(n);
  return verify_receipt(receipt, reg, reg.f());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Accountable Raft: simulator, hash-chained log primitives and offline auditor";

  m.def(
      "hash_step",
      [](const std::string& prev_hex, Term term, LogIndex index, py::bytes payload) {
        std::string data = payload;
        LogEntry e{term, index, {data.begin(), data.end()}};
        return hash_step(digest_from_hex_or_throw(prev_hex), e).hex();
      },
      py::arg("prev_hex"), py::arg("term"), py::arg("index"), py::arg("payload"),
      "Advance the hash pointer by one log entry; returns the new pointer as hex.");

  m.def(
      "compare_freshness",
      [](std::pair<Term, LogIndex> a, std::pair<Term, LogIndex> b) {
        switch (compare_freshness({a.first, a.second}, {b.first, b.second})) {
          case Ordering::Staler: return -1;
          case Ordering::Equal: return 0;
          default: return 1;
        }
      },
      py::arg("a"), py::arg("b"),
      "Total order on (term, index) pairs: -1 staler, 0 equal, 1 fresher.");

  m.def("round_robin_candidate", &round_robin_candidate, py::arg("term"), py::arg("n"));
  m.def(
      "expected_election_rounds",
      [](std::uint64_t n) { return expected_election_rounds(n).value(); }, py::arg("n"),
      "Expected rounds until the designated candidate can win: (n+1)/(f+2).");

  py::class_<KeyRegistry>(m, "KeyRegistry")
      .def(py::init([](std::uint64_t n) { return KeyRegistry::create(n); }), py::arg("n"))
      .def_property_readonly("n", &KeyRegistry::size)
      .def_property_readonly("f", &KeyRegistry::f)
      .def(
          "sign",
          [](const KeyRegistry& reg, NodeId id, const std::string& digest_hex) {
            return reg.sign(id, digest_from_hex_or_throw(digest_hex)).hex();
          },
          py::arg("node"), py::arg("digest_hex"))
      .def(
          "verify",
          [](const KeyRegistry& reg, NodeId id, const std::string& digest_hex,
             const std::string& sig_hex) {
            auto sig = Signature::from_hex(id, sig_hex);
            if (!sig) return false;
            return reg.verify(id, digest_from_hex_or_throw(digest_hex), *sig);
          },
          py::arg("node"), py::arg("digest_hex"), py::arg("sig_hex"));

  m.def("_simulate_json", &simulate_json, py::arg("options_json"), py::arg("out_dir"));
  m.def("_audit_json", &audit_json, py::arg("dir"), py::arg("mode"), py::arg("receipt_path"));
  m.def("verify_receipt", &verify_receipt_json, py::arg("receipt_json"), py::arg("n"),
        "Check a client receipt against the public key registry of an n-node system.");
}
