"""Brute-force reference implementations used by the test suite.

The explicit game keeps one probabilistic vertex per vertex coupling of the
transportation polytope, so every P vertex has a fixed distribution.  The
code here deliberately does not reuse the symbolic graph builder.
"""
from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Dist, Pts, dirac, make_pts, transitions_from
from .coupling import DEFAULT_VERTEX_CAP, CouplingSystem, enumerate_vertices, is_forest, tree_solution


@dataclass
class ExplicitGame:
    vertices: list[tuple]
    index: dict
    succ: list[list[int]]
    delta: dict            # P vertex id -> {successor id: Fraction}
    v0: int
    err: int

    def kind(self, v) -> str:
        return self.vertices[v][0]


def build_explicit(nominal: Pts, impl: Pts, cap: int = DEFAULT_VERTEX_CAP) -> ExplicitGame:
    faults = impl.fault_names()
    vertices, index, succ, delta = [], {}, [], {}
    todo = deque()
    polys: dict = {}

    def vid(key):
        if key not in index:
            index[key] = len(vertices)
            vertices.append(key)
            succ.append([])
            todo.append(index[key])
        return index[key]

    def couplings(mu, mu2):
        if (mu, mu2) not in polys:
            polys[(mu, mu2)] = enumerate_vertices(CouplingSystem(mu, mu2), cap=cap)
        return polys[(mu, mu2)]

    v0 = vid(("R", nominal.initial, impl.initial))
    err = vid(("E",))
    while todo:
        v = todo.popleft()
        key = vertices[v]
        nxt = []
        if key[0] == "R":
            s, t = key[1], key[2]
            for a, mu in transitions_from(nominal, s):
                nxt.append(("V", s, t, nominal.action_name(a), 1, mu))
            for a, mu2 in transitions_from(impl, t):
                nxt.append(("V", s, t, impl.action_name(a), 2, mu2))
        elif key[0] == "V":
            _, s, t, a, side, d = key
            pairs = []
            if side == 1:
                pairs = [(d, mu2) for b, mu2 in transitions_from(impl, t) if impl.action_name(b) == a]
            elif a in faults:
                pairs = [(dirac(s), d)]
            else:
                pairs = [(mu, d) for b, mu in transitions_from(nominal, s) if nominal.action_name(b) == a]
            for mu, mu2 in pairs:
                for w in couplings(mu, mu2):
                    nxt.append(("P", s, t, mu, mu2, w))
        elif key[0] == "P":
            w = key[5]
            dist = {}
            for (x, y), p in w.items():
                dist[vid(("R", x, y))] = p
            delta[v] = dist
            nxt = [vertices[u] for u in dist]
        ids = []
        for k in nxt:
            u = vid(k)
            if u not in ids:
                ids.append(u)
        if not ids and key[0] in ("V", "E"):
            ids = [err]
        succ[v] = ids
    return ExplicitGame(vertices, index, succ, delta, v0, err)


def compute_w(eg: ExplicitGame) -> list:
    """Levels of the sets W^i, each round recomputed from scratch over all vertices."""
    n = len(eg.vertices)
    levels = [float("inf")] * n
    levels[eg.err] = 0
    cur = {eg.err}
    union = set(cur)
    i = 0
    while True:
        nxt = set()
        for v in range(n):
            k = eg.kind(v)
            post = eg.succ[v]
            if k in ("R", "E"):
                ok = any(w in cur for w in post)
            elif k == "V":
                ok = all(w in union for w in post) and any(w in cur for w in post)
            else:
                ok = sum(p for w, p in eg.delta[v].items() if w in cur) > 0
            if ok:
                nxt.add(v)
        i += 1
        for v in nxt:
            if levels[v] == float("inf"):
                levels[v] = i
        if nxt == cur:
            return levels
        cur = nxt
        union |= nxt


def _forall_pre(eg, C):
    out = set()
    for v in range(len(eg.vertices)):
        k = eg.kind(v)
        if k == "P":
            if sum(p for w, p in eg.delta[v].items() if w in C) > 0:
                out.add(v)
        elif k == "V":
            if all(w in C for w in eg.succ[v]):
                out.add(v)
        elif any(w in C for w in eg.succ[v]):
            out.add(v)
    return out


def _exists_pre(eg, C):
    return {v for v in range(len(eg.vertices)) if any(w in C for w in eg.succ[v])}


def _star(eg, op, seed):
    X = set(seed)
    while True:
        nxt = X | op(eg, X)
        if nxt == X:
            return X
        X = nxt


def fair_reach_check(eg: ExplicitGame) -> bool:
    doomed = _star(eg, _forall_pre, {eg.err})
    rest = set(range(len(eg.vertices))) - doomed
    return eg.v0 not in _star(eg, _exists_pre, rest)


def explicit_value(eg: ExplicitGame, milestones, u: float, eps: float = 1e-12,
                   max_iters: int = 2_000_000, strict_sides: bool = False) -> np.ndarray:
    """Plain greatest-fixpoint iteration of the Bellman equations on the explicit game."""
    n = len(eg.vertices)
    names = {a for a, _ in milestones}
    rew = np.zeros(n)
    for v, key in enumerate(eg.vertices):
        if key[0] == "V":
            hit = (key[3], key[4]) in milestones if strict_sides else key[3] in names
            rew[v] = float(hit)
    f = np.full(n, float(u))
    f[eg.err] = 0.0
    kinds = [eg.kind(v) for v in range(n)]
    succ = [np.array(s, dtype=np.int64) for s in eg.succ]
    probs = {v: (np.array(list(d), dtype=np.int64), np.array([float(p) for p in d.values()]))
             for v, d in eg.delta.items()}
    for _ in range(max_iters):
        nf = np.empty(n)
        for v in range(n):
            k = kinds[v]
            if k == "E":
                nf[v] = 0.0
            elif k == "R":
                nf[v] = min(u, f[succ[v]].min())
            elif k == "V":
                nf[v] = min(u, rew[v] + f[succ[v]].max())
            else:
                idx, p = probs[v]
                nf[v] = min(u, float(p @ f[idx]))
        diff = np.abs(nf - f) / np.maximum(1.0, np.abs(nf))
        f = nf
        if diff.max() < eps:
            return f
    raise RuntimeError("explicit value iteration did not converge")


def feasible_bruteforce(sys: CouplingSystem) -> bool:
    """Dense search over basic supports: some forest of allowed cells carries a coupling."""
    rows, cols = sys.rows, sys.cols
    m, n = len(rows), len(cols)
    a = [sys.row_margins[r] for r in rows]
    b = [sys.col_margins[c] for c in cols]
    allowed = [(i, j) for i in range(m) for j in range(n) if (rows[i], cols[j]) not in sys.forbidden]
    for size in range(1, m + n):
        for cells in itertools.combinations(allowed, size):
            if not is_forest([(i, m + j) for i, j in cells]):
                continue
            x = tree_solution(cells, a, b)
            if x is not None and all(v >= 0 for v in x.values()):
                return True
    return False


# --- random instances ---------------------------------------------------------

def _random_dist(rng: random.Random, states: int, max_support: int = 3) -> dict:
    k = rng.randint(1, min(max_support, states))
    support = rng.sample(range(states), k)
    d = rng.randint(k, 6)
    cuts = sorted(rng.sample(range(1, d), k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [d])]
    return {s: Fraction(p, d) for s, p in zip(support, parts)}


def random_pair(seed: int) -> tuple[Pts, Pts]:
    """Seeded small pair: 2-4 states each, 1-3 actions, at most one fault, supports <= 3."""
    rng = random.Random(seed)
    acts = ["a", "b", "c"][: rng.randint(1, 3)]

    def random_pts(n, extra=()):
        trans = []
        for s in range(n):
            chosen = [x for x in acts if rng.random() < 0.6] or [rng.choice(acts)]
            for x in chosen:
                for _ in range(1 if rng.random() < 0.8 else 2):
                    trans.append((s, x, _random_dist(rng, n)))
        return trans + list(extra)

    n1 = rng.randint(2, 4)
    nominal = random_pts(n1)
    if rng.random() < 0.6:
        # implementation close to the nominal model, possibly with an extra state
        n2 = min(4, n1 + rng.randint(0, 1))
        impl = list(nominal)
        for s in range(n1, n2):
            impl.append((s, rng.choice(acts), _random_dist(rng, n2)))
        if rng.random() < 0.4 and impl:
            i = rng.randrange(len(impl))
            s, x, _ = impl[i]
            impl[i] = (s, x, _random_dist(rng, n2))
    else:
        n2 = rng.randint(2, 4)
        impl = random_pts(n2)
    faults = ()
    if rng.random() < 0.7:
        faults = ("F",)
        for s in rng.sample(range(n2), rng.randint(1, min(2, n2))):
            impl.append((s, "F", _random_dist(rng, n2)))
    # states only reachable through added targets still need an outgoing move
    nom_pts = make_pts(nominal, 0, (), n1)
    for s in range(n2):
        if not any(t[0] == s for t in impl):
            impl.append((s, rng.choice(acts), _random_dist(rng, n2)))
    imp_pts = make_pts(impl, 0, faults, n2)
    return nom_pts, imp_pts


__all__ = ["ExplicitGame", "build_explicit", "compute_w", "fair_reach_check", "explicit_value",
           "feasible_bruteforce", "random_pair"]
