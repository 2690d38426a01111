"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import random
import time
from collections import defaultdict

import numpy as np
import pytest

from pmask.cli import parse_milestones
from pmask.core import Dist
from pmask.corpus import corpus_manifest, load_row, model_path
from pmask.coupling import CouplingSystem, enumerate_vertices, feasible, maximize
from pmask.fairness import decide_asf
from pmask.game import build
from pmask.lang import load
from pmask.masking import INF, compute_u, decide_masking
from pmask.measure import MeasureConfig, NotAsfError, apply_l, clamp_active, measure, value_iteration
from pmask.oracle import (_random_dist, build_explicit, compute_w, explicit_value, fair_reach_check,
                          feasible_bruteforce, random_pair)

MANIFEST = corpus_manifest()
TOL = MANIFEST["tolerance"]
SEEDS = 500


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def run_rows(criterion):
    """Measure every manifest row of a criterion, sharing the game graph between columns."""
    graphs = {}
    out = []
    for row in MANIFEST["rows"]:
        if row["criterion"] != criterion:
            continue
        key = (row["nominal"], row["impl"], tuple(sorted(row["impl_constants"].items())),
               tuple(sorted(row["nominal_constants"].items())))
        if key not in graphs:
            nom, imp = load_row(row)
            graphs[key] = (nom, imp, build(nom, imp))
        nom, imp, g = graphs[key]
        res = measure(nom, imp, MeasureConfig(parse_milestones(row["milestone"])), graph=g)
        delta = (res.value - row["expected"]) / row["expected"]
        out.append((row, res.value, delta))
    return out


def within(rows):
    return [r for r in rows if abs(r[2]) <= TOL], [r for r in rows if abs(r[2]) > TOL]


def worst(rows):
    r = max(rows, key=lambda r: abs(r[2]))
    return f"worst {r[0]['id']}: {r[1]:.4g} vs {r[0]['expected']} ({100 * r[2]:+.2f}%)"


def test_criterion_1_memory_three_bits(capsys):
    t0 = time.perf_counter()
    rows = run_rows(1)
    dt = time.perf_counter() - t0
    good, bad = within(rows)
    ok = len(rows) == 18 and not bad and dt < 10
    report(capsys, 1, ok, f"{len(good)}/{len(rows)} cells within {TOL:.0%}; {worst(rows)}; {dt:.1f}s")
    assert ok


def test_criterion_2_memory_five_and_seven_bits(capsys):
    t0 = time.perf_counter()
    rows = run_rows(2)
    dt = time.perf_counter() - t0
    good, bad = within(rows)
    documented = MANIFEST["documented_deviations"]
    bad_ids = {r[0]["id"] for r in bad}
    largest = next(r for r in rows if r[0]["id"] == "mem7-q0.05-p0.5-tick")
    ok = (len(rows) == 36 and bad_ids == set(documented) and abs(largest[2]) <= TOL and dt < 120)
    notes = "; ".join(f"reported {r[0]['id']}: {r[1]:.4g} vs {r[0]['expected']} "
                      f"({100 * r[2]:+.2f}%, authored model: {documented.get(r[0]['id'], 'UNDOCUMENTED')})"
                      for r in bad)
    report(capsys, 2, ok, f"{len(good)}/{len(rows)} cells within {TOL:.0%}; 7-bit largest cell "
                          f"{largest[1]:.2f} vs {largest[0]['expected']}; {dt:.1f}s"
                          + (f"\n    {notes}" if notes else ""))
    assert ok


def test_criterion_3_nmr(capsys):
    t0 = time.perf_counter()
    rows = run_rows(3)
    dt = time.perf_counter() - t0
    good, bad = within(rows)
    ok = len(rows) == 9 and not bad and dt < 30
    report(capsys, 3, ok, f"{len(good)}/{len(rows)} rows within {TOL:.0%}; {worst(rows)}; {dt:.1f}s")
    assert ok


def _vals(label):
    return {k: int(v) for k, v in (kv.split("=") for kv in label.split(","))}


def test_criterion_4_masking_decisions(capsys):
    t0 = time.perf_counter()
    nom = load(model_path("mem_nominal.pm"))
    lim = load(model_path("mem_faulty3_limited.pm"))
    unl = load(model_path("mem_faulty3.pm"))
    yes = decide_masking(nom, lim)
    no = decide_masking(nom, unl)
    reachable = {(k[1], k[2]) for k in yes.graph.vertices if k[0] == "R"}
    expected_rel = set()
    for s, t in reachable:
        a, b = _vals(nom.label(s)), _vals(lim.label(t))
        if 2 * a["b"] <= b["v"] <= 2 * a["b"] + 1 and (a["m"] == 1) == (b["s"] == 2):
            expected_rel.add((s, t))
    dt = time.perf_counter() - t0
    contained = bool(expected_rel) and expected_rel <= (yes.relation or set())
    ok = yes.verdict and not no.verdict and contained and dt < 5
    report(capsys, 4, ok, f"limited={yes.verdict}, unlimited={no.verdict}, relation {len(yes.relation)} pairs "
                          f"contains the {len(expected_rel)} reachable expected pairs={contained}; {dt:.2f}s")
    assert ok


def test_criterion_5_oracle_equivalences(capsys):
    t0 = time.perf_counter()
    fails = defaultdict(list)
    asf_count = 0
    for seed in range(SEEDS):
        nom, imp = random_pair(seed)
        g = build(nom, imp)
        eg = build_explicit(nom, imp)
        u, w = compute_u(g), compute_w(eg)
        # (a) a symbolic vertex is at level k exactly when its concrete copies are; a symbolic
        # P vertex enters once every concrete coupling copy has
        groups = defaultdict(list)
        for v, key in enumerate(eg.vertices):
            groups[g.index[key[:5] if key[0] == "P" else key]].append(w[v])
        for v, ws in groups.items():
            if u[v] != (max(ws) if g.vertices[v][0] == "P" else ws[0]) or \
                    (g.vertices[v][0] != "P" and len(ws) != 1):
                fails["a"].append(seed)
                break
        if len(groups) != len(g):
            fails["a"].append(seed)
        # (b)
        asf = decide_asf(g).asf
        if asf != fair_reach_check(eg):
            fails["b"].append(seed)
        # (c)
        ms = frozenset({("a", 2)})
        if asf:
            asf_count += 1
            val = measure(nom, imp, MeasureConfig(ms), graph=g).value
            ref = explicit_value(eg, ms, 4096.0)[eg.v0]
            if abs(val - ref) > 1e-6:
                fails["c"].append(seed)
        # (d) and (e) on random margins, denominators <= 6, supports up to 3x4
        rng = random.Random(10_000 + seed)
        mu = Dist(_random_dist(rng, 5, 3))
        mu2 = Dist(_random_dist(rng, 5, 4) if rng.random() < 0.5 else _random_dist(rng, 5, 3))
        obj = {(r, c): rng.uniform(-3, 3) for r in mu.support for c in mu2.support}
        val, _ = maximize(CouplingSystem(mu, mu2), obj)
        best = max(sum(float(p) * obj[c] for c, p in v.items()) for v in enumerate_vertices(CouplingSystem(mu, mu2)))
        if abs(val - best) > 1e-9:
            fails["d"].append(seed)
        cells = [(r, c) for r in mu.support for c in mu2.support]
        forb = frozenset(c for c in cells if rng.random() < 0.4)
        sysf = CouplingSystem(mu, mu2, forb)
        if feasible(sysf) != feasible_bruteforce(sysf):
            fails["e"].append(seed)
    dt = time.perf_counter() - t0
    ok = not fails and dt < 120
    parts = ", ".join(f"({k}) {len(fails.get(k, []))} mismatches" for k in "abcde")
    report(capsys, 5, ok, f"{SEEDS} seeds ({asf_count} almost-sure failing): {parts}; {dt:.1f}s")
    assert ok, dict(fails)


def test_criterion_6_numerical_properties(capsys):
    problems = []
    cases = [r for r in MANIFEST["rows"] if r["criterion"] in (1, 3)][::3]
    for row in cases:
        nom, imp = load_row(row)
        g = build(nom, imp)
        cfg = MeasureConfig(parse_milestones(row["milestone"]))
        res = measure(nom, imp, cfg, graph=g)
        u = res.u_used
        vec = value_iteration(g, cfg, u=u, track=True)
        hist = [np.full(len(g), u)] + vec.history
        hist[0][g.err] = 0
        if any(np.any(b > a + 1e-9 * np.maximum(1, a)) for a, b in zip(hist, hist[1:])):
            problems.append(f"{row['id']}: iterate increased")
        if any(h[g.err] != 0 for h in hist):
            problems.append(f"{row['id']}: err value nonzero")
        nxt = apply_l(g, vec.values, u, cfg.milestones)
        resid = float(np.max(np.abs(nxt - vec.values) / np.maximum(1, np.abs(nxt))))
        if resid >= cfg.epsilon:
            problems.append(f"{row['id']}: fixpoint residual {resid:.2e}")
        if clamp_active(vec, cfg.epsilon).any():
            problems.append(f"{row['id']}: clamp active")
        vec2 = value_iteration(g, cfg, u=2 * u)
        gap = float(np.max(np.abs(vec2.values - vec.values) / np.maximum(1, np.abs(vec.values))))
        if gap >= cfg.epsilon:
            problems.append(f"{row['id']}: 2u rerun moved values by {gap:.2e}")
    ok = not problems
    report(capsys, 6, ok, f"{len(cases)} corpus instances checked"
                          + (": " + "; ".join(problems) if problems else
                             ": monotone iterates, residual < eps, 2u rerun < eps, err = 0"))
    assert ok


def test_criterion_7_voters_reported(capsys):
    rows = run_rows(7)
    for row, val, delta in rows:
        assert row["gated"] is False
    good, bad = within(rows)
    detail = f"reported only, not gated: {len(good)}/{len(rows)} rows within {TOL:.0%}; {worst(rows)}"
    with capsys.disabled():
        print(f"\ncriterion 7: REPORTED  {detail}")
        for row, val, delta in rows:
            print(f"    {row['id']:<28}{val:>10.2f}{row['expected']:>10}{100 * delta:>+9.2f}%")
