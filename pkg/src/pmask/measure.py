"""Masking-tolerance metric: greatest fixpoint of the clamped Bellman functional L.

Values are computed by synchronous value iteration from the top of the
lattice (``u`` everywhere except err).  Probabilistic vertices maximise over
couplings; for small polytopes the vertex couplings are tabulated once and
the max is a sparse mat-vec, larger ones go through the transportation
simplex with warm-started bases.

Plain iteration from above can need millions of sweeps when the value is
large (tens of thousands of expected milestones).  Every so often we freeze
the greedy policies of the current iterate, solve the resulting linear
system exactly and test whether the solution ``g`` is the greatest fixpoint
(see :meth:`_Solver.certify`).  When the test passes, iteration resumes from
``min(g, f)``, which keeps the iterates non-increasing.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .core import Dist, Pts
from .coupling import CouplingSystem, enumerate_vertices, feasible, solve_transport
from .fairness import decide_asf
from .game import ERR, P, R, V, GameGraph, build

TABLE_MAX_CELLS = 9


class MeasureError(RuntimeError):
    pass


class NotAsfError(MeasureError):
    def __init__(self):
        super().__init__("not almost-sure failing under fairness: metric undefined")


class NoConvergence(MeasureError):
    def __init__(self, iters, residual):
        super().__init__(f"no convergence after {iters} iterations (residual {residual:.3e})")
        self.iters = iters
        self.residual = residual


class EscalationLimit(MeasureError):
    def __init__(self, u):
        super().__init__(f"u escalation limit reached (u = {u:g})")
        self.u = u


@dataclass
class MeasureConfig:
    milestones: frozenset = frozenset()
    epsilon: float = 1e-9
    max_iters: int = 1_000_000
    u_initial: float = 64.0
    u_growth: float = 4.0
    relative: bool = True
    max_escalations: int = 8
    strict_sides: bool = False     # count a milestone only on its own side
    accelerate: bool = True
    p_solver: str = "auto"         # "auto" | "simplex"

    def __post_init__(self):
        self.milestones = frozenset((a, int(s)) for a, s in self.milestones)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.u_growth > 1:
            raise ValueError("u_growth must exceed 1")
        if self.p_solver not in ("auto", "simplex"):
            raise ValueError(f"unknown p_solver {self.p_solver!r}")


@dataclass
class ValueVector:
    values: np.ndarray
    u: float
    iters: int
    residual: float
    max_increase: float = 0.0      # largest pointwise rise between iterates (should be ~0)
    accelerated_at: int | None = None
    history: list = field(default_factory=list, repr=False)

    def __getitem__(self, v):
        return float(self.values[v])


@dataclass
class MeasureResult:
    value: float
    u_used: float
    iters: int
    residual: float
    vector: ValueVector
    graph: GameGraph
    escalations: int = 0

    def to_json(self) -> dict:
        return {"value": self.value, "u_used": self.u_used, "iters": self.iters,
                "residual": self.residual, "escalations": self.escalations}


def reward(g: GameGraph, v: int, milestones, strict_sides: bool = False) -> int:
    key = g.vertices[v]
    if key[0] != "V":
        return 0
    a, side = key[3], key[4]
    if strict_sides:
        return int((a, side) in milestones)
    return int(any(a == m for m, _ in milestones))


def reward_vector(g: GameGraph, milestones, strict_sides: bool = False) -> np.ndarray:
    return np.array([reward(g, v, milestones, strict_sides) for v in range(len(g))], dtype=float)


def _residual(new, old, relative):
    diff = np.abs(new - old)
    if relative:
        diff = diff / np.maximum(1.0, np.abs(new))
    return float(diff.max()) if diff.size else 0.0


def _segments(lists):
    starts = np.zeros(len(lists), dtype=np.int64)
    flat = []
    for i, ws in enumerate(lists):
        starts[i] = len(flat)
        flat.extend(ws)
    return np.array(flat, dtype=np.int64), starts


class _Solver:
    """Vectorised application of L on one game graph for a fixed reward vector."""

    def __init__(self, g: GameGraph, rew: np.ndarray, p_solver: str = "auto"):
        self.g = g
        self.n = n = len(g)
        self.rew = rew
        kind = g.kind
        self.R_ids = np.array([v for v in range(n) if kind[v] == R], dtype=np.int64)
        self.V_ids = np.array([v for v in range(n) if kind[v] == V], dtype=np.int64)
        self.R_succ, self.R_starts = _segments([g.succ[v] for v in self.R_ids])
        self.V_succ, self.V_starts = _segments([g.succ[v] for v in self.V_ids])
        self.rV = rew[self.V_ids]

        tab_ids, rows, row_groups, row_targets = [], [], [], []
        data, ri, ci = [], [], []
        self.lp = []            # (vertex, a, b, target matrix) for simplex-solved P vertices
        cache: dict = {}
        for v in range(n):
            if kind[v] != P:
                continue
            _, _, _, mu, mu2 = g.vertices[v]
            tgt = [[g.index[("R", x, y)] for y in mu2.support] for x in mu.support]
            m, k = len(mu), len(mu2)
            if m == 1 or k == 1:
                verts = [[(i, j, mu[x] * mu2[y]) for i, x in enumerate(mu.support)
                          for j, y in enumerate(mu2.support)]]
            elif p_solver == "auto" and m * k <= TABLE_MAX_CELLS:
                key = (mu, mu2)
                if key not in cache:
                    cs = CouplingSystem(mu, mu2)
                    pos_r = {x: i for i, x in enumerate(mu.support)}
                    pos_c = {y: j for j, y in enumerate(mu2.support)}
                    cache[key] = [[(pos_r[x], pos_c[y], w) for (x, y), w in c.items()]
                                  for c in enumerate_vertices(cs, cap=TABLE_MAX_CELLS)]
                verts = cache[key]
            else:
                self.lp.append((v, [mu[x] for x in mu.support], [mu2[y] for y in mu2.support],
                                np.array(tgt, dtype=np.int64)))
                continue
            tab_ids.append(v)
            row_groups.append(len(rows))
            for cells in verts:
                r = len(rows)
                rows.append(v)
                targets = []
                for i, j, w in cells:
                    ri.append(r)
                    ci.append(tgt[i][j])
                    data.append(float(w))
                    targets.append(tgt[i][j])
                row_targets.append(targets)
        self.tab_ids = np.array(tab_ids, dtype=np.int64)
        self.tab_starts = np.array(row_groups, dtype=np.int64)
        self.row_owner = np.array(rows, dtype=np.int64)
        self.row_targets = row_targets
        self.W = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
        self.bases: dict[int, list] = {}
        self._tab_pos = {int(v): i for i, v in enumerate(self.tab_ids)}
        self._lp_info = {v: (a, b, tgt) for v, a, b, tgt in self.lp}

    # -- one application of L ------------------------------------------------

    def apply(self, f: np.ndarray, u: float) -> np.ndarray:
        out = np.empty_like(f)
        if self.R_ids.size:
            out[self.R_ids] = np.minimum.reduceat(f[self.R_succ], self.R_starts)
        if self.V_ids.size:
            out[self.V_ids] = self.rV + np.maximum.reduceat(f[self.V_succ], self.V_starts)
        if self.tab_ids.size:
            out[self.tab_ids] = np.maximum.reduceat(self.W @ f, self.tab_starts)
        for v, a, b, tgt in self.lp:
            res = solve_transport(a, b, f[tgt].tolist(), basis=self.bases.get(v))
            self.bases[v] = res.basis
            out[v] = res.value
        np.minimum(out, u, out=out)
        out[self.g.err] = 0.0
        return out

    # -- policy evaluation ----------------------------------------------------

    def _tol(self, x):
        return 1e-7 * max(1.0, abs(x))

    def _p_row(self, f, v):
        """Targets and weights of an optimal coupling at P vertex v for values f."""
        gi = self._tab_pos.get(v)
        if gi is not None:
            lo, hi = self._group(gi)
            vals = self.W[lo:hi] @ f
            row = self.W.getrow(lo + int(np.argmax(vals)))
            return row.indices.tolist(), row.data.tolist()
        a, b, tgt = self._lp_info[v]
        res = solve_transport(a, b, f[tgt].tolist(), basis=self.bases.get(v))
        cells = list(res.coupling.items())
        return [int(tgt[i, j]) for (i, j), _ in cells], [float(w) for _, w in cells]

    def _group(self, gi):
        lo = self.tab_starts[gi]
        hi = self.tab_starts[gi + 1] if gi + 1 < len(self.tab_starts) else self.W.shape[0]
        return lo, hi

    def evaluate_greedy(self, f: np.ndarray, u: float) -> np.ndarray | None:
        """Solve the linear system of a greedy policy pair for ``f``; None if that fails.

        Ties are broken towards err: policies are assigned while growing an
        attractor backwards from err and the clamped vertices, so a tied
        choice never closes a loop that the other candidate would leave.
        Vertices the attractor never reaches are pinned at u.
        """
        g, n = self.g, self.n
        b = np.zeros(n)
        pinned = np.array([g.kind[v] == ERR or f[v] >= u - self._tol(u) for v in range(n)])
        b[pinned & (g.kind != ERR)] = u
        choice: dict[int, tuple] = {}
        for v in range(n):
            if not pinned[v] and g.kind[v] == P:
                choice[v] = self._p_row(f, v)
        reached = pinned.copy()
        queue = deque(np.flatnonzero(pinned).tolist())
        while queue:
            w = queue.popleft()
            for p in g.pred[w]:
                if reached[p]:
                    continue
                k = g.kind[p]
                if k == P:
                    if w not in choice[p][0]:
                        continue
                else:
                    vals = [f[x] for x in g.succ[p]]
                    best = min(vals) if k == R else max(vals)
                    if abs(f[w] - best) > 1e-9 * max(1.0, abs(best)):
                        continue
                    choice[p] = ([w], [1.0])
                reached[p] = True
                queue.append(p)
        rows, cols, vals = [], [], []
        for v in range(n):
            if not reached[v]:
                b[v] = u
            elif not pinned[v]:
                ts, ws = choice[v]
                rows.extend([v] * len(ts)); cols.extend(ts); vals.extend(ws)
                if g.kind[v] == V:
                    b[v] = self.rew[v]
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        M = (sp.identity(n, format="csr") - A).tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                x = spsolve(M, b)
            except Exception:
                return None
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return None
        return x

    def certify(self, gv: np.ndarray, f: np.ndarray, u: float) -> bool:
        """True when ``gv`` is (numerically) the greatest fixpoint of L.

        Requires L(gv) = gv, gv <= f, and that no nonempty set T of unclamped,
        non-err vertices is closed: R in T with every tight successor in T, V
        in T with some tight successor in T, P in T with an optimal coupling
        supported in T.  If gfp > gv somewhere, the set where the gap is
        maximal would be such a T, so emptiness certifies gv = gfp.
        """
        g = self.g
        scale = np.maximum(1.0, np.abs(gv))
        Lg = self.apply(gv, u)
        if np.any(np.abs(Lg - gv) > 1e-8 * scale):
            return False
        if np.any(gv > f + 1e-8 * scale):
            return False
        tol = 1e-7 * scale
        inT = np.array([g.kind[v] != ERR and gv[v] < u - tol[v] for v in range(self.n)])
        rowvals = self.W @ gv

        def still_ok(v):
            k = g.kind[v]
            succ = g.succ[v]
            if k == R:
                best = min(gv[w] for w in succ)
                return all(inT[w] for w in succ if gv[w] <= best + tol[v])
            if k == V:
                best = max(gv[w] for w in succ)
                return any(inT[w] for w in succ if gv[w] >= best - tol[v])
            if v in self._tab_pos:
                lo, hi = self._group(self._tab_pos[v])
                best = rowvals[lo:hi].max()
                return any(all(inT[t] for t in self.row_targets[r])
                           for r in range(lo, hi) if rowvals[r] >= best - tol[v])
            a, b, tgt = self._lp_info[v]
            cost = gv[tgt].tolist()
            res = solve_transport(a, b, cost, basis=self.bases.get(v))
            forb = frozenset((i, j) for i in range(len(a)) for j in range(len(b))
                             if not inT[tgt[i, j]] or res.reduced_cost(cost, i, j) < -tol[v])
            return feasible(CouplingSystem(Dist(enumerate(a)), Dist(enumerate(b)), forb))

        queue = deque(v for v in range(self.n) if inT[v])
        while queue:
            v = queue.popleft()
            if inT[v] and not still_ok(v):
                inT[v] = False
                queue.extend(p for p in g.pred[v] if inT[p])
        return not inT.any()


def value_iteration(g: GameGraph, cfg: MeasureConfig, u: float | None = None,
                    solver: _Solver | None = None, track: bool = False) -> ValueVector:
    """Iterate L from the top element until the residual drops below epsilon."""
    u = cfg.u_initial if u is None else u
    if solver is None:
        solver = _Solver(g, reward_vector(g, cfg.milestones, cfg.strict_sides), cfg.p_solver)
    f = np.full(len(g), float(u))
    f[g.err] = 0.0
    max_inc = 0.0
    hist = []
    next_check = 32
    accelerated = None
    residual = math.inf
    for it in range(1, cfg.max_iters + 1):
        nf = solver.apply(f, u)
        inc = float(np.max((nf - f) / np.maximum(1.0, np.abs(f)))) if f.size else 0.0
        max_inc = max(max_inc, inc)
        if inc > 1e-6:
            raise MeasureError(f"iterate increased by {inc:g} at step {it}")
        residual = _residual(nf, f, cfg.relative)
        f = nf
        if track:
            hist.append(f.copy())
        if residual < cfg.epsilon:
            return ValueVector(f, u, it, residual, max_inc, accelerated, hist)
        if cfg.accelerate and accelerated is None and it == next_check:
            next_check *= 2
            cand = f
            for _ in range(8):
                gv = solver.evaluate_greedy(cand, u)
                if gv is None:
                    break
                if solver.certify(gv, f, u):
                    f = np.minimum(gv, f)
                    accelerated = it
                    break
                cand = gv
    raise NoConvergence(cfg.max_iters, residual)


def clamp_active(vec: ValueVector, eps: float) -> np.ndarray:
    return vec.values >= vec.u - eps * max(1.0, vec.u)


def measure(nominal: Pts, impl: Pts, cfg: MeasureConfig, graph: GameGraph | None = None,
            check_asf: bool = True) -> MeasureResult:
    g = graph if graph is not None else build(nominal, impl, cfg.milestones)
    if check_asf and not decide_asf(g).asf:
        raise NotAsfError()
    solver = _Solver(g, reward_vector(g, cfg.milestones, cfg.strict_sides), cfg.p_solver)
    u = cfg.u_initial
    total = 0
    for esc in range(cfg.max_escalations + 1):
        vec = value_iteration(g, cfg, u, solver)
        total += vec.iters
        if not clamp_active(vec, cfg.epsilon).any():
            return MeasureResult(float(vec.values[g.v0]), u, total, vec.residual, vec, g, esc)
        u *= cfg.u_growth
    raise EscalationLimit(u / cfg.u_growth)


__all__ = ["MeasureConfig", "MeasureResult", "ValueVector", "MeasureError", "NotAsfError",
           "NoConvergence", "EscalationLimit", "reward", "reward_vector", "value_iteration",
           "measure", "clamp_active", "apply_l"]


def apply_l(g: GameGraph, f, u: float, milestones, strict_sides: bool = False) -> np.ndarray:
    """One synchronous application of L (convenience wrapper)."""
    solver = _Solver(g, reward_vector(g, milestones, strict_sides))
    return solver.apply(np.asarray(f, dtype=float), u)
