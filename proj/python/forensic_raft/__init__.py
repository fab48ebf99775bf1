"""Accountable Raft: deterministic simulator and offline forensic auditor."""

import json

from ._core import (
    KeyRegistry,
    _audit_json,
    _simulate_json,
    compare_freshness,
    expected_election_rounds,
    hash_step,
    round_robin_candidate,
    verify_receipt,
)

__all__ = [
    "KeyRegistry",
    "audit",
    "compare_freshness",
    "expected_election_rounds",
    "hash_step",
    "round_robin_candidate",
    "simulate",
    "verify_receipt",
]


def simulate(out_dir=None, **options):
    """Run one simulation scenario; returns the run report as a dict.

    Options mirror the CLI flags: nodes, txs, seed, attack, attack_at,
    byzantine, chunk_size, live, gst, delta, receipt_case, snapshot_mode,
    horizon. When out_dir is given, node stores are written there in the
    chunked layout the `audit` function consumes.
    """
    return json.loads(_simulate_json(json.dumps(options), str(out_dir) if out_dir else ""))


def audit(store_dir, mode="full", receipt=None):
    """Audit a directory written by simulate; returns the audit report."""
    return json.loads(_audit_json(str(store_dir), mode, str(receipt) if receipt else ""))
