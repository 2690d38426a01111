"""Almost-sure failing under fairness, via symbolic predecessor closures.

The result concerns memoryless strategies: Verifier strategies and fair
Refuter strategies that do not depend on the history of the play.  Nothing
stronger is claimed.
"""
from __future__ import annotations

from dataclasses import dataclass

from .coupling import feasible
from .game import ERR, P, R, V, GameGraph, eq_system


def _is_refuter(g: GameGraph, v: int) -> bool:
    return g.kind[v] in (R, ERR)


def _forall_member(g: GameGraph, v: int, C) -> bool:
    k = g.kind[v]
    if k == P:
        hit = [w for w in g.succ[v] if w in C]
        return bool(hit) and not feasible(eq_system(g, v, hit))
    if k == V:
        return all(w in C for w in g.succ[v])
    return any(w in C for w in g.succ[v])


def forall_pre_f(g: GameGraph, C) -> set[int]:
    """Vertices from which the next step enters C no matter how Verifier resolves it."""
    C = set(C)
    cand = {p for w in C for p in g.pred[w]}
    return {v for v in cand if _forall_member(g, v, C)}


def exists_pre_f(g: GameGraph, C) -> set[int]:
    """Vertices with some move into C.

    For a P vertex this means some Refuter vertex of C lies in the support
    product, which is exactly being a predecessor of it.
    """
    C = set(C)
    return {p for w in C for p in g.pred[w] if g.kind[p] != P or _is_refuter(g, w)}


def closure(g: GameGraph, op, seed) -> set[int]:
    """Least fixpoint of ``X -> seed | op(X)``, grown from the predecessors of new members."""
    X = set(seed)
    if op is exists_pre_f:
        stack = list(X)
        while stack:
            w = stack.pop()
            for p in exists_pre_f(g, {w}):
                if p not in X:
                    X.add(p)
                    stack.append(p)
        return X
    if op is forall_pre_f:
        frontier = set(X)
        while frontier:
            cand = {p for w in frontier for p in g.pred[w] if p not in X}
            new = {v for v in sorted(cand) if _forall_member(g, v, X)}
            X |= new
            frontier = new
        return X
    # generic operator: plain Kleene iteration
    while True:
        nxt = X | set(op(g, X))
        if nxt == X:
            return X
        X = nxt


@dataclass
class AsfResult:
    asf: bool
    doomed: set           # closure of forall_pre_f from err
    unsafe: set           # exists_pre_f closure of the complement

    def to_json(self, g: GameGraph | None = None) -> dict:
        out = {"asf": self.asf, "unsafe_witness_vertices": sorted(self.unsafe) if not self.asf else []}
        if g is not None and not self.asf:
            out["unsafe_witness"] = [g.describe(v) for v in sorted(self.unsafe)[:50]]
        return out


def decide_asf(g: GameGraph) -> AsfResult:
    doomed = closure(g, forall_pre_f, {g.err})
    safe = set(range(len(g))) - doomed
    unsafe = closure(g, exists_pre_f, safe)
    return AsfResult(g.v0 not in unsafe, doomed, unsafe)


__all__ = ["forall_pre_f", "exists_pre_f", "closure", "decide_asf", "AsfResult"]
