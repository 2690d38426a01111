"""Exact distributions and probabilistic transition systems.

Probabilities are :class:`fractions.Fraction` throughout; states are dense
integer ids assigned at elaboration time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

Rat = Fraction
StateId = int
ActionId = int


def to_rat(x) -> Fraction:
    """Convert ints, strings ("0.05", "1/20") and Fractions exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # floats only reach here from user code; go through repr to keep 0.1 == 1/10
        return Fraction(repr(x))
    return Fraction(x)


class DistError(ValueError):
    pass


class Dist(Mapping):
    """Sparse probability distribution with exact rational weights.

    Entries are kept sorted by state id, so equal distributions compare and
    hash equal regardless of construction order.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, entries: Mapping[int, Fraction] | Iterable[tuple[int, Fraction]]):
        pairs = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict[int, Fraction] = {}
        for s, p in pairs:
            p = to_rat(p)
            if p < 0:
                raise DistError(f"negative probability {p} on state {s}")
            if p == 0:
                continue
            acc[s] = acc.get(s, Fraction(0)) + p
        if not acc:
            raise DistError("distribution has empty support")
        total = sum(acc.values(), Fraction(0))
        if total != 1:
            raise DistError(f"distribution not normalized (sums to {total})")
        self._items = tuple(sorted(acc.items()))
        self._map = dict(self._items)
        self._hash = hash(self._items)

    @classmethod
    def _trusted(cls, items: tuple[tuple[int, Fraction], ...]) -> "Dist":
        d = object.__new__(cls)
        d._items = items
        d._map = dict(items)
        d._hash = hash(items)
        return d

    def __getitem__(self, s):
        return self._map[s]

    def get(self, s, default=Fraction(0)):
        return self._map.get(s, default)

    def __iter__(self):
        return (s for s, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Dist):
            return self._items == other._items
        return NotImplemented

    def items(self):
        return self._items

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self._items)

    def total(self) -> Fraction:
        return sum((p for _, p in self._items), Fraction(0))

    def is_dirac(self) -> bool:
        return len(self._items) == 1

    def __repr__(self):
        inner = ", ".join(f"{s}: {p}" for s, p in self._items)
        return "{" + inner + "}"


def dirac(s: StateId) -> Dist:
    return Dist._trusted(((s, Fraction(1)),))


@dataclass(frozen=True)
class Transition:
    source: StateId
    action: ActionId
    target: Dist


@dataclass
class Pts:
    """Finite PTS with a designated set of fault actions.

    ``actions`` interns action names; ``faults`` holds ids into it.
    """

    state_count: int
    actions: list[str]
    transitions: list[Transition]
    initial: StateId = 0
    faults: frozenset[int] = frozenset()
    state_labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self._by_source: list[list[Transition]] = [[] for _ in range(self.state_count)]
        for t in self.transitions:
            if 0 <= t.source < self.state_count:
                self._by_source[t.source].append(t)

    def action_id(self, name: str) -> int:
        return self.actions.index(name)

    def action_name(self, a: int) -> str:
        return self.actions[a]

    def is_fault(self, a: int) -> bool:
        return a in self.faults

    def label(self, s: StateId) -> str:
        return self.state_labels.get(s, str(s))

    def fault_names(self) -> set[str]:
        return {self.actions[a] for a in self.faults}


def transitions_from(pts: Pts, s: StateId) -> list[tuple[ActionId, Dist]]:
    return [(t.action, t.target) for t in pts._by_source[s]]


def validate(pts: Pts) -> list[str]:
    """Return every invariant violation; an empty list means the PTS is valid."""
    problems = []
    n = pts.state_count
    if not 0 <= pts.initial < n:
        problems.append(f"initial state {pts.initial} out of range")
    for a in pts.faults:
        if not 0 <= a < len(pts.actions):
            problems.append(f"fault action id {a} not in action table")
    for i, t in enumerate(pts.transitions):
        if not 0 <= t.source < n:
            problems.append(f"transition {i}: source {t.source} out of range")
        if not 0 <= t.action < len(pts.actions):
            problems.append(f"transition {i}: unknown action id {t.action}")
        bad = [s for s in t.target if not 0 <= s < n]
        if bad:
            problems.append(f"transition {i}: target states {bad} out of range")
        total = t.target.total()
        if total != 1:
            problems.append(f"transition {i}: distribution not normalized (sums to {total})")
    for s in range(n):
        if not pts._by_source[s]:
            problems.append(f"state {pts.label(s)} has no transition")
    return problems


def make_pts(transitions, initial=0, faults=(), state_count=None, labels=None) -> Pts:
    """Small-model helper: ``transitions`` holds (src, action name, {tgt: prob}) triples.

    Distributions are built unchecked so that :func:`validate` can report bad mass.
    """
    actions: list[str] = []
    trans = []
    for src, name, dist in transitions:
        if name not in actions:
            actions.append(name)
        if isinstance(dist, int):
            target = dirac(dist)
        elif isinstance(dist, Dist):
            target = dist
        else:
            items = tuple(sorted((s, to_rat(p)) for s, p in dict(dist).items() if to_rat(p) != 0))
            target = Dist._trusted(items)
        trans.append(Transition(src, actions.index(name), target))
    for f in faults:
        if f not in actions:
            actions.append(f)
    if state_count is None:
        ids = {initial}
        for t in trans:
            ids.add(t.source)
            ids.update(t.target)
        state_count = max(ids) + 1
    fault_ids = frozenset(actions.index(f) for f in faults)
    return Pts(state_count, actions, trans, initial, fault_ids, dict(labels or {}))
