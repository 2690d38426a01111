from fractions import Fraction as Fr

import pytest

from pmask.core import Dist, dirac, make_pts, transitions_from
from pmask.coupling import feasible
from pmask.game import ERR, P, R, V, build, dump_text, eq_system, stats, to_dot


def test_identical_one_state(loop_a):
    g = build(loop_a, loop_a)
    assert stats(g) == {"R": 1, "V": 2, "P": 1, "err": 1, "E": 6}
    assert g.pred[g.err] == [g.err]
    assert g.succ[g.err] == [g.err]


def test_toy_fault_graph(toy_fault):
    nom, imp = toy_fault
    g = build(nom, imp)
    fv = g.index[("V", 0, 0, "F", 2, dirac(1))]
    assert g.is_fault_vertex(fv)
    (p,) = g.succ[fv]
    assert g.vertices[p] == ("P", 0, 0, dirac(0), dirac(1))
    assert [g.vertices[w] for w in g.succ[p]] == [("R", 0, 1)]
    bad = g.index[("R", 0, 1)]
    dead = [w for w in g.succ[bad] if g.succ[w] == [g.err]]
    assert sorted(g.vertices[w][3:5] for w in dead) == [("a", 1), ("b", 2)]


def test_fault_vertices_in_memory_cell(mem_pair):
    nom, imp = mem_pair()
    g = build(nom, imp)
    for v in g.ids_of(R):
        t = g.vertices[v][2]
        if imp.label(t).endswith("s=1"):
            assert any(g.vertices[w][0] == "V" and g.vertices[w][3] == "fault" and g.vertices[w][4] == 2
                       for w in g.succ[v])


def test_graph_invariants(mem_pair):
    nom, imp = mem_pair()
    g = build(nom, imp)
    assert stats(g) == {"R": 48, "V": 288, "P": 84, "err": 1, "E": 709}
    for v, ws in enumerate(g.succ):
        assert ws, v
        assert all(0 <= w < len(g) for w in ws)
        k = g.kind[v]
        if k == V:
            to_err = g.err in ws
            assert not to_err or ws == [g.err]
            if g.is_fault_vertex(v):
                (p,) = ws
                assert g.vertices[p][3] == dirac(g.vertices[v][1])
        if k == P:
            _, s, t, mu, mu2 = g.vertices[v]
            assert sorted(g.vertices[w][1:] for w in ws) == sorted((a, b) for a in mu.support for b in mu2.support)
        if k == R:
            assert any(w != g.err for w in ws)
    edges = {(v, w) for v, ws in enumerate(g.succ) for w in ws}
    redges = {(v, w) for w, ps in enumerate(g.pred) for v in ps}
    assert edges == redges


def test_build_is_deterministic(mem_pair):
    nom, imp = mem_pair()
    assert dump_text(build(nom, imp)) == dump_text(build(nom, imp))


def test_milestones_do_not_change_shape(mem_pair):
    nom, imp = mem_pair()
    assert stats(build(nom, imp)) == stats(build(nom, imp, milestones=[("tick", 2)]))


def test_nominal_against_itself(mem_pair):
    nom, _ = mem_pair()
    g = build(nom, nom)
    expected = set()
    for v in g.ids_of(R):
        _, s, t = g.vertices[v]
        for a, mu in transitions_from(nom, s):
            for b, mu2 in transitions_from(nom, t):
                if nom.action_name(a) == nom.action_name(b):
                    expected.add((s, t, mu, mu2))
    assert stats(g)["P"] == len(expected)


def test_nominal_may_not_use_faults():
    nom = make_pts([(0, "F", 0)])
    imp = make_pts([(0, "F", 0)], faults=("F",))
    with pytest.raises(ValueError, match="fault"):
        build(nom, imp)


def test_eq_system_examples(toy_fault):
    nom, imp = toy_fault
    g = build(nom, imp)
    p = g.index[("P", 0, 0, dirac(0), dirac(1))]
    assert eq_system(g, p).forbidden == frozenset()
    assert feasible(eq_system(g, p))
    assert not feasible(eq_system(g, p, g.succ[p]))
    half = Fr(1, 2)
    two = Dist({0: half, 1: half})
    nom2 = make_pts([(0, "a", two), (1, "a", two)])
    g2 = build(nom2, nom2)
    p2 = g2.index[("P", 0, 0, two, two)]
    sysm = eq_system(g2, p2, [g2.index[("R", 0, 0)]])
    assert sysm.forbidden == {(0, 0)} and feasible(sysm)
    with pytest.raises(ValueError):
        eq_system(g2, g2.v0)


def test_exports(loop_a):
    g = build(loop_a, loop_a)
    dot = to_dot(g)
    assert dot.startswith("digraph") and sum(" -> n" in l and "[" not in l for l in dot.splitlines()) == 6
    lines = dump_text(g).splitlines()
    assert sum(l.startswith("edge ") for l in lines) == 6
    assert int(g.kind[g.err]) == ERR and int(g.kind[g.v0]) == R and P in set(g.kind.tolist())
