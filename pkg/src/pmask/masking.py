"""Deciding probabilistic masking simulation through the attractor levels U^i."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Dist, Pts, dirac, transitions_from
from .coupling import CouplingSystem, feasible, find_coupling
from .game import ERR, P, R, V, GameGraph, build, eq_system

INF = math.inf


class WitnessError(RuntimeError):
    """The extracted relation failed re-verification (an internal bug)."""


@dataclass
class ULevels:
    level: list          # int or math.inf per vertex id
    rounds: int

    def __getitem__(self, v):
        return self.level[v]

    def members(self, i) -> set[int]:
        """Vertices of U^i (levels never exceed i once reached, so this is cumulative)."""
        return {v for v, lv in enumerate(self.level) if lv <= i}


def compute_u(g: GameGraph) -> ULevels:
    """Round-based computation of U^0, U^1, ... until no vertex is added.

    err keeps a self-loop and sits on the Refuter side, so U^i only grows and
    ``v in U^i`` is the same as ``level(v) <= i``.
    """
    n = len(g)
    level = [INF] * n
    level[g.err] = 0
    frontier = {g.err}
    i = 0
    while frontier:
        cand = {p for w in frontier for p in g.pred[w] if level[p] == INF}
        added = set()
        for v in sorted(cand):
            k = g.kind[v]
            post = g.succ[v]
            if k == R:
                ok = any(level[w] <= i for w in post)
            elif k == V:
                ok = all(level[w] <= i for w in post)
            elif k == P:
                hit = [w for w in post if level[w] <= i]
                ok = bool(hit) and not feasible(eq_system(g, v, hit))
            else:
                ok = False
            if ok:
                added.add(v)
        i += 1
        for v in added:
            level[v] = i
        frontier = added
    return ULevels(level, i)


def refutation_trace(g: GameGraph, lv: ULevels) -> list[int]:
    """Path from v0 to err along which the level strictly decreases."""
    v = g.v0
    if lv[v] == INF:
        raise ValueError("initial vertex is not in U")
    trace = [v]
    while v != g.err:
        below = [w for w in g.succ[v] if lv[w] < lv[v]]
        v = min(below, key=lambda w: (lv[w], w))
        trace.append(v)
    return trace


def masking_relation(g: GameGraph, lv: ULevels) -> set[tuple[int, int]]:
    return {(key[1], key[2]) for v, key in enumerate(g.vertices)
            if key[0] == "R" and lv[v] == INF}


def _lifts(mu: Dist, mu2: Dist, rel) -> bool:
    forb = frozenset((u, u2) for u in mu.support for u2 in mu2.support if (u, u2) not in rel)
    return feasible(CouplingSystem(mu, mu2, forb))


def check_masking_relation(nominal: Pts, impl: Pts, rel) -> list[str]:
    """Clauses of a masking simulation; returns the violated ones (empty means valid)."""
    rel = set(rel)
    faults = impl.fault_names()
    bad = []
    if (nominal.initial, impl.initial) not in rel:
        bad.append("initial pair not related")
    for s, t in sorted(rel):
        nom = [(nominal.action_name(a), mu) for a, mu in transitions_from(nominal, s)]
        imp = [(impl.action_name(a), mu2) for a, mu2 in transitions_from(impl, t)]
        where = f"({nominal.label(s)}, {impl.label(t)})"
        for a, mu in nom:
            if not any(b == a and _lifts(mu, mu2, rel) for b, mu2 in imp):
                bad.append(f"{where}: nominal {a} not matched")
        for b, mu2 in imp:
            if b in faults:
                if not _lifts(dirac(s), mu2, rel):
                    bad.append(f"{where}: fault {b} not masked")
            elif not any(a == b and _lifts(mu, mu2, rel) for a, mu in nom):
                bad.append(f"{where}: implementation {b} not matched")
    return bad


@dataclass
class MaskingResult:
    verdict: bool
    graph: GameGraph
    levels: ULevels
    relation: set | None = None
    trace: list | None = None

    def to_json(self) -> dict:
        g = self.graph
        out = {"verdict": self.verdict, "rounds": self.levels.rounds, "vertices": len(g)}
        if self.verdict:
            out["relation"] = [
                {"nominal": s, "impl": t,
                 "nominal_label": g.nominal.label(s), "impl_label": g.impl.label(t)}
                for s, t in sorted(self.relation)]
        else:
            out["trace"] = [{"id": v, "level": self.levels[v], "vertex": g.describe(v)}
                            for v in self.trace]
        return out


def decide_masking(nominal: Pts, impl: Pts, graph: GameGraph | None = None) -> MaskingResult:
    g = graph if graph is not None else build(nominal, impl)
    lv = compute_u(g)
    if lv[g.v0] == INF:
        rel = masking_relation(g, lv)
        problems = check_masking_relation(nominal, impl, rel)
        if problems:
            raise WitnessError("; ".join(problems[:5]))
        return MaskingResult(True, g, lv, relation=rel)
    return MaskingResult(False, g, lv, trace=refutation_trace(g, lv))


def witness_coupling(mu: Dist, mu2: Dist, rel) -> dict | None:
    """A coupling of (mu, mu2) supported on ``rel``, if one exists."""
    forb = frozenset((u, u2) for u in mu.support for u2 in mu2.support if (u, u2) not in rel)
    w = find_coupling(CouplingSystem(mu, mu2, forb))
    return None if w is None else dict(w.items())


__all__ = ["ULevels", "MaskingResult", "WitnessError", "compute_u", "decide_masking",
           "refutation_trace", "masking_relation", "check_masking_relation", "witness_coupling",
           "INF", "ERR"]
