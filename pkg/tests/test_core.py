from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from pmask.core import Dist, DistError, dirac, make_pts, to_rat, transitions_from, validate
from pmask.corpus import model_path
from pmask.lang import load


def test_dirac():
    assert dict(dirac(0).items()) == {0: 1}
    assert dirac(5).support == (5,)
    assert dirac(3).total() == 1


def test_dist_rejects_bad_mass():
    with pytest.raises(DistError, match="not normalized"):
        Dist({0: Fraction(1, 2), 1: Fraction(2, 5)})
    with pytest.raises(DistError, match="negative"):
        Dist({0: Fraction(3, 2), 1: Fraction(-1, 2)})
    with pytest.raises(DistError, match="empty"):
        Dist({})


def test_dist_is_canonical():
    a = Dist([(2, Fraction(1, 3)), (0, Fraction(2, 3))])
    b = Dist([(0, Fraction(1, 3)), (2, Fraction(1, 3)), (5, 0), (0, Fraction(1, 3))])
    assert a == Dist({0: Fraction(2, 3), 2: Fraction(1, 3)})
    assert hash(a) == hash(Dist({2: Fraction(1, 3), 0: Fraction(2, 3)}))
    assert a.support == (0, 2)
    assert b.support == (0, 2) and 5 not in b


def test_to_rat_is_exact():
    assert to_rat("0.1") == Fraction(1, 10)
    assert to_rat(0.1) == Fraction(1, 10)
    assert to_rat("1/20") == Fraction(1, 20)


@given(st.lists(st.fractions(min_value=0, max_value=1), min_size=1, max_size=6))
def test_dist_normalization_property(ws):
    total = sum(ws, Fraction(0))
    pairs = list(enumerate(ws))
    if total == 1:
        d = Dist(pairs)
        assert d.total() == 1
        assert sum(d.get(i) for i, _ in pairs) == 1
    else:
        with pytest.raises(DistError):
            Dist(pairs)


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(1, 50)), min_size=1, max_size=8))
def test_rational_arithmetic_matches_integer_oracle(pairs):
    acc = Fraction(0)
    num, den = 0, 1
    for a, b in pairs:
        acc += Fraction(a, b)
        num, den = num * b + a * den, den * b
    from math import gcd
    g = gcd(num, den)
    assert (acc.numerator, acc.denominator) == (num // g, den // g)


def test_nominal_transitions_match_model():
    nom = load(model_path("mem_nominal.pm"))
    s00 = next(s for s, l in nom.state_labels.items() if l == "b=0,m=0")
    s01 = next(s for s, l in nom.state_labels.items() if l == "b=0,m=1")
    assert [nom.action_name(a) for a, _ in transitions_from(nom, s00)] == ["w0", "w1", "r0", "tick"]
    assert [nom.action_name(a) for a, _ in transitions_from(nom, s01)] == ["rfsh"]
    assert validate(nom) == []
    for s in range(nom.state_count):
        assert transitions_from(nom, s)


def test_transitions_from_partitions():
    pts = load(model_path("mem_faulty3.pm"))
    rebuilt = [(s, a, d) for s in range(pts.state_count) for a, d in transitions_from(pts, s)]
    assert sorted(rebuilt, key=repr) == sorted(((t.source, t.action, t.target) for t in pts.transitions), key=repr)


def test_validate_reports():
    bad = make_pts([(0, "a", {0: Fraction(3, 5), 1: Fraction(3, 10)}), (1, "a", 1)])
    assert any("distribution not normalized" in m for m in validate(bad))
    sink = make_pts([(0, "a", 1)], state_count=2)
    assert any("has no transition" in m for m in validate(sink))
