"""Symbolic game graph for the stochastic masking game.

Vertices are hash-consed tuples:

* ``("R", s, t)``: Refuter to move from nominal state ``s`` and impl state ``t``
* ``("E",)``: the error vertex
* ``("V", s, t, action, side, dist)``: Verifier must answer ``action`` played
  on ``side`` (1 nominal, 2 implementation) with distribution ``dist``
* ``("P", s, t, mu, mu2)``: the distributions are fixed, a coupling is pending

Only vertices reachable from the initial Refuter vertex are built, plus the
error vertex, which is always present together with its self-loop.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import Dist, Pts, dirac, transitions_from
from .coupling import CouplingSystem

R, V, P, ERR = 0, 1, 2, 3
KIND_NAMES = {R: "R", V: "V", P: "P", ERR: "E"}


@dataclass
class GameGraph:
    nominal: Pts
    impl: Pts
    vertices: list[tuple]
    index: dict[tuple, int]
    succ: list[list[int]]
    pred: list[list[int]]
    kind: np.ndarray
    v0: int
    err: int
    milestones: frozenset = frozenset()
    _csr: tuple | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.vertices)

    def ids_of(self, k: int) -> list[int]:
        return [i for i in range(len(self.vertices)) if self.kind[i] == k]

    def is_fault_vertex(self, v: int) -> bool:
        key = self.vertices[v]
        return key[0] == "V" and key[4] == 2 and key[3] in self.impl.fault_names()

    def csr(self):
        """(indptr, indices) of the successor relation, cached."""
        if self._csr is None:
            indptr = np.zeros(len(self.succ) + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([len(s) for s in self.succ])
            indices = np.fromiter((w for s in self.succ for w in s), dtype=np.int64, count=int(indptr[-1]))
            self._csr = (indptr, indices)
        return self._csr

    def describe(self, v: int) -> str:
        key = self.vertices[v]
        nl, il = self.nominal.label, self.impl.label
        if key[0] == "E":
            return "err"
        if key[0] == "R":
            return f"R({nl(key[1])} | {il(key[2])})"
        if key[0] == "V":
            _, s, t, a, side, d = key
            return f"V({nl(s)} | {il(t)}; {a}^{side} -> {_fmt_dist(d, nl if side == 1 else il)})"
        _, s, t, mu, mu2 = key
        return f"P({nl(s)} | {il(t)}; {_fmt_dist(mu, nl)} x {_fmt_dist(mu2, il)})"


def _fmt_dist(d: Dist, label) -> str:
    return "{" + ", ".join(f"{label(s)}: {p}" for s, p in d.items()) + "}"


def build(nominal: Pts, impl: Pts, milestones=()) -> GameGraph:
    """Construct the reachable part of the symbolic game graph."""
    faults = impl.fault_names()
    clash = faults & set(nominal.actions)
    if clash:
        raise ValueError(f"nominal model uses fault actions: {sorted(clash)}")
    nom_out = [[(nominal.action_name(a), mu) for a, mu in transitions_from(nominal, s)]
               for s in range(nominal.state_count)]
    imp_out = [[(impl.action_name(a), mu) for a, mu in transitions_from(impl, t)]
               for t in range(impl.state_count)]

    vertices: list[tuple] = []
    index: dict[tuple, int] = {}
    succ: list[list[int]] = []
    queue: deque[int] = deque()

    def intern(key):
        vid = index.get(key)
        if vid is None:
            vid = len(vertices)
            index[key] = vid
            vertices.append(key)
            succ.append([])
            queue.append(vid)
        return vid

    v0 = intern(("R", nominal.initial, impl.initial))
    err = intern(("E",))

    while queue:
        vid = queue.popleft()
        key = vertices[vid]
        tag = key[0]
        out: list[tuple] = []
        if tag == "R":
            _, s, t = key
            out += [("V", s, t, a, 1, mu) for a, mu in nom_out[s]]
            out += [("V", s, t, a, 2, mu2) for a, mu2 in imp_out[t]]
        elif tag == "V":
            _, s, t, a, side, d = key
            if side == 1:
                out += [("P", s, t, d, mu2) for b, mu2 in imp_out[t] if b == a]
            elif a in faults:
                out.append(("P", s, t, dirac(s), d))
            else:
                out += [("P", s, t, mu, d) for b, mu in nom_out[s] if b == a]
        elif tag == "P":
            _, s, t, mu, mu2 = key
            out += [("R", u, u2) for u in mu.support for u2 in mu2.support]
        ids = []
        for k in out:
            w = intern(k)
            if w not in ids:
                ids.append(w)
        if not ids and tag in ("V", "E"):
            ids = [err]
        succ[vid] = ids

    pred: list[list[int]] = [[] for _ in vertices]
    for v, ws in enumerate(succ):
        for w in ws:
            pred[w].append(v)
    tags = {"R": R, "V": V, "P": P, "E": ERR}
    kind = np.array([tags[k[0]] for k in vertices], dtype=np.int8)
    ms = frozenset((a, int(side)) for a, side in milestones)
    return GameGraph(nominal, impl, vertices, index, succ, pred, kind, v0, err, ms)


def eq_system(g: GameGraph, v: int, avoid=()) -> CouplingSystem:
    """Coupling system of a P vertex, forbidding mass on the Refuter vertices in ``avoid``."""
    key = g.vertices[v]
    if key[0] != "P":
        raise ValueError(f"vertex {v} is not probabilistic")
    _, _, _, mu, mu2 = key
    forb = set()
    for u in avoid:
        k = g.vertices[u]
        if k[0] == "R":
            forb.add((k[1], k[2]))
    return CouplingSystem(mu, mu2, frozenset(forb))


def stats(g: GameGraph) -> dict:
    counts = {name: int(np.sum(g.kind == k)) for k, name in KIND_NAMES.items()}
    return {"R": counts["R"], "V": counts["V"], "P": counts["P"], "err": counts["E"],
            "E": sum(len(s) for s in g.succ)}


def dump_text(g: GameGraph) -> str:
    """Line format: ``<id> <kind> <payload>`` for vertices, ``edge <a> <b>`` for edges."""
    lines = [f"{v} {KIND_NAMES[int(g.kind[v])]} {g.describe(v)}" for v in range(len(g))]
    lines += [f"edge {v} {w}" for v, ws in enumerate(g.succ) for w in ws]
    return "\n".join(lines) + "\n"


def to_dot(g: GameGraph) -> str:
    shapes = {R: "box", V: "diamond", P: "circle", ERR: "doubleoctagon"}
    out = ["digraph game {", "  rankdir=LR;"]
    for v in range(len(g)):
        label = g.describe(v).replace('"', '\\"')
        extra = ", penwidth=2" if v == g.v0 else ""
        out.append(f'  n{v} [shape={shapes[int(g.kind[v])]}, label="{label}"{extra}];')
    for v, ws in enumerate(g.succ):
        for w in ws:
            out.append(f"  n{v} -> n{w};")
    out.append("}")
    return "\n".join(out) + "\n"
