import numpy as np
import pytest

from pmask.core import make_pts
from pmask.game import P, R, V, build
from pmask.measure import (EscalationLimit, MeasureConfig, NoConvergence, NotAsfError, apply_l, clamp_active,
                           measure, reward, value_iteration)

TICK = frozenset({("tick", 2)})


def chain_pair():
    """a once, then the Refuter can force failure: the value is exactly 1 for milestone a."""
    nom = make_pts([(0, "a", 1), (1, "b", 1)])
    imp = make_pts([(0, "a", 1), (1, "F", 2), (2, "d", 2)], faults=("F",))
    return nom, imp


def test_toy_value_is_zero(toy_fault):
    res = measure(*toy_fault, MeasureConfig(frozenset({("a", 2)})))
    assert res.value == 0
    assert res.u_used == 64 and res.escalations == 0
    assert not clamp_active(res.vector, 1e-9).any()


def test_chain_value():
    assert measure(*chain_pair(), MeasureConfig(frozenset({("a", 2)}))).value == pytest.approx(1.0)
    assert measure(*chain_pair(), MeasureConfig(frozenset({("b", 2)}))).value == pytest.approx(0.0)


@pytest.mark.parametrize("ms,expected", [("tick", 6.0), ("rfsh", 3.0)])
def test_memory_cell_values(mem_pair, ms, expected):
    res = measure(*mem_pair(), MeasureConfig(frozenset({(ms, 2)})))
    assert res.value == pytest.approx(expected, abs=5e-3)


def test_memory_cell_low_fault_rate(mem_pair):
    res = measure(*mem_pair(p="1/10", q="1/10"), MeasureConfig(TICK))
    assert round(res.value, 2) == 30.00


def test_rewards(mem_pair):
    g = build(*mem_pair())
    v1 = next(v for v, k in enumerate(g.vertices) if k[0] == "V" and k[3] == "tick" and k[4] == 1)
    v2 = next(v for v, k in enumerate(g.vertices) if k[0] == "V" and k[3] == "tick" and k[4] == 2)
    assert reward(g, v2, TICK) == 1
    assert reward(g, g.v0, TICK) == 0
    assert reward(g, v1, TICK, strict_sides=True) == 0
    assert reward(g, v1, TICK) == 1


def test_strict_sides_changes_the_value(mem_pair):
    res = measure(*mem_pair(), MeasureConfig(TICK, strict_sides=True))
    assert res.value == pytest.approx(0.0)


def test_limited_memory_is_undefined(mem_pair):
    with pytest.raises(NotAsfError, match="not almost-sure failing"):
        measure(*mem_pair(limited=True), MeasureConfig(TICK))


def test_apply_l_base_cases(mem_pair):
    g = build(*mem_pair())
    f = apply_l(g, np.zeros(len(g)), 64.0, TICK)
    for v in range(len(g)):
        if g.kind[v] == V:
            assert f[v] == reward(g, v, TICK)
        elif g.kind[v] != R:
            assert f[v] == 0
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, len(g))
    x[g.err] = 0
    fx = apply_l(g, x, 64.0, TICK)
    assert fx[g.err] == 0
    for v, key in enumerate(g.vertices):
        if key[0] == "P" and key[3].is_dirac() and key[4].is_dirac():
            (w,) = g.succ[v]
            assert fx[v] == pytest.approx(x[w])
    y = x + rng.uniform(0, 1, len(g))
    y[g.err] = 0
    assert np.all(apply_l(g, y, 64.0, TICK) >= fx - 1e-12)


def test_iteration_invariants(mem_pair):
    g = build(*mem_pair())
    cfg = MeasureConfig(TICK, accelerate=False)
    vec = value_iteration(g, cfg, track=True)
    hist = vec.history
    assert all(h[g.err] == 0 for h in hist)
    assert all(np.all(b <= a + 1e-9 * np.maximum(1, a)) for a, b in zip(hist, hist[1:]))
    assert np.all((vec.values >= 0) & (vec.values <= vec.u))
    nxt = apply_l(g, vec.values, vec.u, TICK)
    assert np.max(np.abs(nxt - vec.values) / np.maximum(1, vec.values)) < 1e-8


def test_clamp_independence(mem_pair):
    g = build(*mem_pair(q="1/5"))
    cfg = MeasureConfig(TICK)
    a = value_iteration(g, cfg, u=64.0)
    assert not clamp_active(a, cfg.epsilon).any()
    b = value_iteration(g, cfg, u=128.0)
    assert np.max(np.abs(a.values - b.values)) < 1e-6


def test_acceleration_matches_plain_iteration(mem_pair):
    g = build(*mem_pair(p="1/10", q="1/10"))
    fast = value_iteration(g, MeasureConfig(TICK))
    slow = value_iteration(g, MeasureConfig(TICK, accelerate=False))
    assert fast.accelerated_at is not None
    assert fast[g.v0] == pytest.approx(slow[g.v0], rel=1e-6)


def test_simplex_matches_vertex_tables(mem_pair):
    nom, imp = mem_pair(p="1/10", q="1/20")
    a = measure(nom, imp, MeasureConfig(TICK))
    b = measure(nom, imp, MeasureConfig(TICK, p_solver="simplex"))
    assert a.value == pytest.approx(b.value, rel=1e-7)


def test_escalation_and_errors(mem_pair):
    nom, imp = mem_pair(p="1/10", q="1/10")
    res = measure(nom, imp, MeasureConfig(TICK, u_initial=8))
    assert res.escalations == 1 and res.u_used == 32
    assert res.value == pytest.approx(30.0, abs=5e-3)
    with pytest.raises(EscalationLimit):
        measure(nom, imp, MeasureConfig(TICK, u_initial=8, max_escalations=0))
    with pytest.raises(NoConvergence) as e:
        measure(nom, imp, MeasureConfig(TICK, max_iters=3, accelerate=False))
    assert e.value.residual > 0


def test_config_validation():
    with pytest.raises(ValueError):
        MeasureConfig(epsilon=0)
    with pytest.raises(ValueError):
        MeasureConfig(u_growth=1)
