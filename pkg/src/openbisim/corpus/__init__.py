"""Bundled acceptance corpus: theories, processes, formulas, expectations."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from typing import Optional


def read(name: str) -> str:
    return (importlib.resources.files(__package__) / name).read_text()


def path(name: str) -> str:
    return str(importlib.resources.files(__package__) / name)


@dataclass(frozen=True)
class Entry:
    name: str
    kind: str                 # bisim | bisim-pi | static | model-check | distinguish
    theory: str
    left: str                 # .pi file (or frame literal file)
    right: Optional[str] = None
    formula: Optional[str] = None
    expect: str = ""          # bisimilar | distinguished | equivalent | sat | unsat
    recipe_depth: int = 1
    max_depth: int = 24
    note: str = ""


ENTRIES: tuple[Entry, ...] = (
    Entry("server-a-vs-b", "bisim", "dy-asym.thy", "server_a.pi", "server_b.pi",
          expect="bisimilar", note="privacy of the intended recipient"),
    Entry("server-a-vs-c", "bisim", "dy-asym.thy", "server_a.pi", "server_c.pi",
          expect="distinguished", note="deterministic ciphertext leaks"),
    Entry("mobility", "bisim", "dy-asym.thy", "mobility_l.pi", "mobility_r.pi",
          expect="distinguished", note="private channels are usable after extrusion"),
    Entry("aenc-under-refinement", "bisim", "dy-asym.thy",
          "aenc_pair_l.pi", "aenc_pair_r.pi", expect="distinguished",
          note="static equivalence must survive fresh substitutions"),
    Entry("lem-choice", "bisim", "dy-asym.thy", "lem_r.pi", "lem_s.pi",
          expect="distinguished", note="deciding on the input is observable"),
    Entry("lem-grounded", "bisim", "dy-asym.thy",
          "lem_r_grounded.pi", "lem_s_grounded.pi", expect="bisimilar"),
    Entry("blind-without-equation", "bisim", "dy-sign.thy",
          "blind_r.pi", "blind_s.pi", expect="bisimilar"),
    Entry("blind-forgery", "bisim", "dy-blind.thy", "blind_r.pi", "blind_s.pi",
          expect="distinguished", note="blind-signature forgery"),
    Entry("hash-and-sign", "bisim", "dy-blind.thy",
          "hashsign_l.pi", "hashsign_r.pi", expect="bisimilar"),
    Entry("broken-servers", "bisim", "dy-asym.thy",
          "broken_server.pi", "broken_server_p.pi", expect="distinguished",
          recipe_depth=2),
    Entry("fixed-servers", "bisim", "dy-asym.thy",
          "fixed_server.pi", "fixed_server_p.pi", expect="bisimilar",
          recipe_depth=2),
    Entry("pair-mismatch-worlds", "bisim", "dy-asym.thy",
          "pair_mismatch_l.pi", "pair_mismatch_r.pi", expect="bisimilar",
          note="documented design point: no canonical world choice; the"
               " coarse equivalence equates what open bisimilarity splits"),
    Entry("open-guard", "bisim-pi", "dy-asym.thy",
          "open_guard_l.pi", "open_guard_r.pi", expect="bisimilar"),
    Entry("open-fresh", "bisim-pi", "dy-asym.thy",
          "open_fresh_l.pi", "open_fresh_r.pi", expect="bisimilar"),
    Entry("om-deadlock", "bisim-pi", "dy-asym.thy",
          "om_deadlock.pi", "om_guarded_tau.pi", expect="distinguished"),
    Entry("om-tau", "bisim-pi", "dy-asym.thy",
          "om_tau.pi", "om_guarded_tau.pi", expect="distinguished"),
    Entry("om-sums", "bisim-pi", "dy-asym.thy",
          "om_sum_l.pi", "om_sum_r.pi", expect="distinguished"),
    Entry("om-outin", "bisim-pi", "dy-asym.thy",
          "om_outin_l.pi", "om_outin_r.pi", expect="distinguished"),
    Entry("attack-on-c", "model-check", "dy-asym.thy", "server_c.pi",
          formula="attack_server.fm", expect="sat"),
    Entry("attack-not-on-a", "model-check", "dy-asym.thy", "server_a.pi",
          formula="attack_server.fm", expect="unsat"),
    Entry("lem-holds-on-r", "model-check", "dy-asym.thy", "lem_r.pi",
          formula="lem.fm", expect="sat"),
    Entry("lem-fails-on-s", "model-check", "dy-asym.thy", "lem_s.pi",
          formula="lem.fm", expect="unsat"),
    Entry("blind-attack-trace", "model-check", "dy-blind.thy", "blind_r.pi",
          formula="blind_attack.fm", expect="sat"),
    Entry("broken-trace-left", "model-check", "dy-asym.thy", "broken_server.pi",
          formula="broken_trace.fm", expect="sat", recipe_depth=2),
    Entry("broken-trace-right", "model-check", "dy-asym.thy", "broken_server_p.pi",
          formula="broken_trace.fm", expect="unsat", recipe_depth=2),
)
