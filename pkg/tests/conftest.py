import pytest

from pmask.core import make_pts
from pmask.corpus import model_path
from pmask.lang import load


@pytest.fixture
def mem_pair():
    def get(limited=False, **consts):
        p = consts.get("p", "1/2")
        nom = load(model_path("mem_nominal.pm"), {"p": p})
        name = "mem_faulty3_limited.pm" if limited else "mem_faulty3.pm"
        imp = load(model_path(name), {"p": p, "q": consts.get("q", "1/2")})
        return nom, imp
    return get


@pytest.fixture
def loop_a():
    return make_pts([(0, "a", 0)])


@pytest.fixture
def toy_fault():
    """Nominal: a-loop on s.  Impl: a-loop on t plus fault F to 'bad', where only b is enabled."""
    nom = make_pts([(0, "a", 0)])
    imp = make_pts([(0, "a", 0), (0, "F", 1), (1, "b", 1)], faults=("F",))
    return nom, imp
