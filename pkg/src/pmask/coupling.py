"""Coupling polytopes: exact feasibility, linear maximisation, vertex enumeration.

A coupling of ``mu`` (rows) and ``mu2`` (columns) is a nonnegative matrix on
``Supp(mu) x Supp(mu2)`` with those margins.  Forbidden cells must carry zero
mass.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from .core import Dist

__all__ = [
    "CouplingSystem", "Coupling", "OracleScaleExceeded", "TransportResult",
    "feasible", "find_coupling", "maximize", "solve_transport", "enumerate_vertices",
    "tree_solution", "is_forest",
]

DEFAULT_VERTEX_CAP = 16


class OracleScaleExceeded(ValueError):
    pass


@dataclass(frozen=True)
class CouplingSystem:
    row_margins: Dist
    col_margins: Dist
    forbidden: frozenset = frozenset()

    def __post_init__(self):
        rows, cols = set(self.row_margins), set(self.col_margins)
        # pairs outside the support grid are vacuous
        kept = frozenset((r, c) for r, c in self.forbidden if r in rows and c in cols)
        object.__setattr__(self, "forbidden", kept)

    @property
    def rows(self) -> tuple[int, ...]:
        return self.row_margins.support

    @property
    def cols(self) -> tuple[int, ...]:
        return self.col_margins.support

    def cells(self) -> list[tuple[int, int]]:
        return [(r, c) for r in self.rows for c in self.cols]


class Coupling(Mapping):
    """Sparse joint distribution keyed by (row state, column state)."""

    def __init__(self, weights: Mapping[tuple[int, int], Fraction]):
        self._w = {k: v for k, v in sorted(weights.items()) if v != 0}

    def __getitem__(self, k):
        return self._w[k]

    def get(self, k, default=Fraction(0)):
        return self._w.get(k, default)

    def __iter__(self):
        return iter(self._w)

    def __len__(self):
        return len(self._w)

    def __eq__(self, other):
        if isinstance(other, Coupling):
            return self._w == other._w
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self._w.items()))

    @property
    def support(self):
        return tuple(self._w)

    def row_sums(self):
        out: dict[int, Fraction] = {}
        for (r, _), p in self._w.items():
            out[r] = out.get(r, Fraction(0)) + p
        return out

    def col_sums(self):
        out: dict[int, Fraction] = {}
        for (_, c), p in self._w.items():
            out[c] = out.get(c, Fraction(0)) + p
        return out

    def is_coupling_of(self, mu: Dist, mu2: Dist) -> bool:
        if any(p < 0 for p in self._w.values()):
            return False
        return self.row_sums() == dict(mu.items()) and self.col_sums() == dict(mu2.items())

    def __repr__(self):
        return "Coupling(" + ", ".join(f"{k}: {v}" for k, v in self._w.items()) + ")"


# --- feasibility -----------------------------------------------------------

def _max_flow(sys: CouplingSystem):
    """Edmonds-Karp on source -> rows -> allowed cells -> cols -> sink, exact."""
    rows, cols = sys.rows, sys.cols
    m = len(rows)
    src, snk = m + len(cols), m + len(cols) + 1
    cap: dict[tuple[int, int], Fraction] = {}
    adj: list[list[int]] = [[] for _ in range(snk + 1)]

    def add(u, v, c):
        if (u, v) not in cap:
            adj[u].append(v)
            adj[v].append(u)
            cap.setdefault((v, u), Fraction(0))
        cap[(u, v)] = c

    for i, r in enumerate(rows):
        add(src, i, sys.row_margins[r])
    for j, c in enumerate(cols):
        add(m + j, snk, sys.col_margins[c])
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            if (r, c) not in sys.forbidden:
                add(i, m + j, Fraction(1))
    flow = Fraction(0)
    while True:
        parent = {src: None}
        q = deque([src])
        while q and snk not in parent:
            u = q.popleft()
            for v in adj[u]:
                if v not in parent and cap[(u, v)] > 0:
                    parent[v] = u
                    q.append(v)
        if snk not in parent:
            break
        path, v = [], snk
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        push = min(cap[e] for e in path)
        for u, v in path:
            cap[(u, v)] -= push
            cap[(v, u)] += push
        flow += push
    weights = {}
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            if (r, c) not in sys.forbidden:
                used = cap[(m + j, i)]
                if used > 0:
                    weights[(r, c)] = used
    return flow, weights


def feasible(sys: CouplingSystem) -> bool:
    """True iff some coupling puts zero mass on every forbidden cell."""
    if not sys.forbidden:
        return True
    flow, _ = _max_flow(sys)
    return flow == 1


def find_coupling(sys: CouplingSystem) -> Coupling | None:
    flow, weights = _max_flow(sys)
    return Coupling(weights) if flow == 1 else None


# --- transportation simplex ------------------------------------------------

@dataclass
class TransportResult:
    value: float
    coupling: dict          # (i, j) index cell -> weight, basis cells only
    basis: list[tuple[int, int]]           # index pairs into (rows, cols)
    row_pot: list[float] = field(repr=False, default_factory=list)
    col_pot: list[float] = field(repr=False, default_factory=list)
    pivots: int = 0

    def reduced_cost(self, cost, i, j) -> float:
        return cost[i][j] - self.row_pot[i] - self.col_pot[j]


def _northwest(a, b):
    a, b = list(a), list(b)
    m, n = len(a), len(b)
    i = j = 0
    basis, x = [], {}
    while i < m and j < n:
        t = min(a[i], b[j])
        basis.append((i, j))
        x[(i, j)] = t
        a[i] -= t
        b[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if a[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1
    return basis, x


def _tree_adj(basis, m):
    adj: dict[int, list[int]] = {}
    for i, j in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    return adj


def _potentials(basis, cost, m, n):
    u = [None] * m
    v = [None] * n
    adj = _tree_adj(basis, m)
    u[0] = 0.0
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj.get(node, ()):
            if node < m:
                j = nb - m
                if v[j] is None:
                    v[j] = cost[node][j] - u[node]
                    stack.append(nb)
            else:
                i = nb
                if u[i] is None:
                    u[i] = cost[i][node - m] - v[node - m]
                    stack.append(nb)
    return u, v


def _cycle(basis, m, ei, ej):
    """Cells of the unique cycle formed by adding (ei, ej) to the basis tree."""
    adj = _tree_adj(basis, m)
    start, goal = m + ej, ei
    parent = {start: None}
    q = deque([start])
    while q:
        node = q.popleft()
        if node == goal:
            break
        for nb in adj.get(node, ()):
            if nb not in parent:
                parent[nb] = node
                q.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    # path: row ei -> ... -> col ej ; cycle cells alternate starting at entering
    cells = [(ei, ej)]
    for a, b in zip(path, path[1:]):
        cells.append((a, b - m) if a < m else (b, a - m))
    return cells


def _is_spanning_tree(basis, m, n):
    if len(basis) != m + n - 1:
        return False
    return is_forest([(i, m + j) for i, j in basis]) and len(set(basis)) == len(basis)


def solve_transport(a, b, cost, basis=None, max_pivots=10_000) -> TransportResult:
    """Maximise ``sum x[i][j] * cost[i][j]`` over couplings with margins a, b.

    ``a`` and ``b`` are exact (Fractions); ``cost`` is a float matrix.
    ``basis`` optionally warm-starts from a previous spanning-tree basis.
    Entering cells are chosen by lowest index among improving ones and ties
    for the leaving cell by lowest index, so the method cannot cycle.
    """
    m, n = len(a), len(b)
    x = None
    if basis is not None and _is_spanning_tree(basis, m, n):
        x = tree_solution(basis, a, b)
        if x is None or any(val < 0 for val in x.values()):
            x = None
    if x is None:
        basis, x = _northwest(a, b)
    basis = list(basis)
    scale = max((abs(c) for row in cost for c in row), default=0.0)
    tol = 1e-12 * (1.0 + scale)
    pivots = 0
    while True:
        u, v = _potentials(basis, cost, m, n)
        inbasis = set(basis)
        entering = None
        for i in range(m):
            for j in range(n):
                if (i, j) not in inbasis and cost[i][j] - u[i] - v[j] > tol:
                    entering = (i, j)
                    break
            if entering:
                break
        if entering is None:
            break
        if pivots >= max_pivots:
            raise RuntimeError("transportation simplex exceeded pivot limit")
        cyc = _cycle(basis, m, *entering)
        minus = cyc[1::2]
        theta = min(x[c] for c in minus)
        leaving = min(c for c in minus if x[c] == theta)
        for k, c in enumerate(cyc):
            if k % 2 == 0:
                x[c] = x.get(c, Fraction(0)) + theta
            else:
                x[c] -= theta
        basis.remove(leaving)
        del x[leaving]
        basis.append(entering)
        pivots += 1
    value = float(sum(float(x[c]) * cost[c[0]][c[1]] for c in basis))
    return TransportResult(value, x, basis, u, v, pivots)


def maximize(sys: CouplingSystem, objective: Callable | Mapping) -> tuple[float, Coupling]:
    """Maximum of the expected objective over all couplings, and a vertex attaining it."""
    if sys.forbidden:
        raise ValueError("maximize works on the full polytope (no forbidden cells)")
    rows, cols = sys.rows, sys.cols
    obj = objective if callable(objective) else (lambda r, c: objective.get((r, c), 0.0))
    cost = [[float(obj(r, c)) for c in cols] for r in rows]
    res = solve_transport([sys.row_margins[r] for r in rows], [sys.col_margins[c] for c in cols], cost)
    w = Coupling({(rows[i], cols[j]): p for (i, j), p in res.coupling.items()})
    return res.value, w


# --- vertex enumeration ----------------------------------------------------

def is_forest(edges) -> bool:
    parent: dict = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def tree_solution(cells, a, b):
    """Unique solution supported on a forest of cells, by leaf peeling.

    Returns ``{cell: weight}`` or None if the margins cannot be met on these
    cells.  Weights may be negative; callers check sign.
    """
    m = len(a)
    ra = list(a)
    rb = list(b)
    live = set(cells)
    deg: dict[int, int] = {}
    inc: dict[int, set] = {}
    for i, j in live:
        for node in (i, m + j):
            deg[node] = deg.get(node, 0) + 1
            inc.setdefault(node, set()).add((i, j))
    x = {}
    leaves = deque(node for node, d in deg.items() if d == 1)
    while leaves:
        node = leaves.popleft()
        if deg.get(node, 0) != 1:
            continue
        (cell,) = inc[node]
        i, j = cell
        val = ra[i] if node < m else rb[j]
        x[cell] = val
        ra[i] -= val
        rb[j] -= val
        for nd in (i, m + j):
            inc[nd].discard(cell)
            deg[nd] -= 1
            if deg[nd] == 1:
                leaves.append(nd)
        live.discard(cell)
    if live:
        return None  # cycle
    if any(r != 0 for r in ra) or any(r != 0 for r in rb):
        return None
    return x


def enumerate_vertices(sys: CouplingSystem, cap: int = DEFAULT_VERTEX_CAP) -> list[Coupling]:
    """All vertices of the coupling polytope, via every spanning-tree basis."""
    if sys.forbidden:
        raise ValueError("enumerate_vertices works on the full polytope (no forbidden cells)")
    rows, cols = sys.rows, sys.cols
    m, n = len(rows), len(cols)
    if m * n > cap:
        raise OracleScaleExceeded(f"oracle scale exceeded: {m}x{n} cells > cap {cap}")
    a = [sys.row_margins[r] for r in rows]
    b = [sys.col_margins[c] for c in cols]
    cells = [(i, j) for i in range(m) for j in range(n)]
    seen = {}
    for basis in itertools.combinations(cells, m + n - 1):
        if not is_forest([(i, m + j) for i, j in basis]):
            continue
        x = tree_solution(basis, a, b)
        if x is None or any(v < 0 for v in x.values()):
            continue
        w = Coupling({(rows[i], cols[j]): v for (i, j), v in x.items()})
        seen.setdefault(tuple(w.items()), w)
    return [seen[k] for k in sorted(seen)]
