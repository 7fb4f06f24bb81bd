import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import moment_type_a
from selmerlab.chains import ChainSpec, equilibrium_closed
from selmerlab.descent import CurveFamily, TwistClass
from selmerlab.model import ModelParams
from selmerlab.moments import (
    GenFnSpec,
    UnlinkedFrame,
    augment,
    class_hb_average,
    gen_fn_eval,
    hb_average,
    is_normalized,
    lagrangians,
    linked,
    maximal_unlinked,
    mc_average,
    moment,
    normalize,
    unlinked_bruteforce,
)
from selmerlab.redei import K, UNRESTRICTED

GEN_SPECS = [GenFnSpec(0), GenFnSpec(1), GenFnSpec(0, (-2,)), GenFnSpec(0, (0,)), GenFnSpec(0, (2,)),
             GenFnSpec(1, (1,)), GenFnSpec(0, (None,)), GenFnSpec(0, (0, 0)), GenFnSpec(0, (0, -2)),
             GenFnSpec(0, (2, -2)), GenFnSpec(1, (1, -3)), GenFnSpec(0, (None, 0))]


def test_moment_examples():
    assert [moment(GenFnSpec(0), xi) for xi in (1, 2, 3)] == [3, 15, 135]
    assert moment(GenFnSpec(0, (2,)), 1) == 7
    assert moment(GenFnSpec(0, (0, 0)), 1) == 5
    with pytest.raises(ValueError):
        moment(GenFnSpec(0), -1)


@pytest.mark.parametrize("xi", range(8))
def test_type_a_moment_product(xi):
    assert moment(GenFnSpec(xi % 2), xi) == moment_type_a(xi)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1), st.integers(-3, 3), st.integers(-3, 3))
def test_first_moment_is_three_plus_sum(r, a, b):
    t1, t2 = 2 * a + r, 2 * b + r
    assert moment(GenFnSpec(r, (t1,)), 1) == 3 + Fraction(2) ** t1
    if t1 + t2 <= 0:
        assert moment(GenFnSpec(r, (t1, t2)), 1) == 3 + Fraction(2) ** t1 + Fraction(2) ** t2


@pytest.mark.parametrize("spec", GEN_SPECS, ids=lambda s: f"r{s.r}t{s.t}")
def test_generating_function_is_normalized(spec):
    assert gen_fn_eval(spec, 1.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("r,t", [(0, ()), (1, ()), (0, (2,)), (1, (1,)), (0, (0, -2)), (1, (1, -3))])
def test_moments_agree_with_chain_equilibrium(r, t):
    eq = equilibrium_closed(ChainSpec(ModelParams(r, t)))
    spec = GenFnSpec(r, t)
    for xi in (1, 2):
        assert eq.moment(xi) == pytest.approx(float(moment(spec, xi)), rel=1e-9)
    assert gen_fn_eval(spec, 1.5) == pytest.approx(sum(p * 1.5 ** m for m, p in eq.marginal(0).items()), rel=1e-9)


def test_gen_fn_spec_validation():
    with pytest.raises(ValueError):
        GenFnSpec(0, (1,))
    with pytest.raises(ValueError):
        GenFnSpec(0, (2, 2))
    assert GenFnSpec(0, (None, 0)).type == "C"


def test_lagrangians_and_unlinked_sets():
    assert len(lagrangians(1)) == 3
    assert len(lagrangians(2)) == 15
    family = maximal_unlinked(2)
    assert len(family) == 24
    assert family == unlinked_bruteforce(2)
    assert maximal_unlinked(1) == unlinked_bruteforce(1)
    for S in family:
        assert all(not linked(p, q, 2) for p, q in itertools.combinations(S, 2))


def _classes():
    out = []
    for e in [(1, -1), (1, -3), (9, 25)]:
        out.extend(TwistClass.enumerate(CurveFamily(*e))[::5])
    return out


@pytest.mark.parametrize("cls", _classes(), ids=lambda c: f"{c.family.e1},{c.family.e2}-q{c.q}-s{''.join(map(str, c.s))}")
def test_class_average_is_three_plus_sum(cls):
    want = 3 + sum((Fraction(2) ** t for t in cls.parameter), Fraction(0))
    assert class_hb_average(cls) == want
    assert class_hb_average(cls, "direct") == want
    expr = normalize(cls.high_rank.expr)
    assert is_normalized(expr)
    assert 1 <= want < UnlinkedFrame.of(expr, cls.s).upper_bound()


def test_average_is_invariant_under_augmentation():
    cls = TwistClass.enumerate(CurveFamily(1, -3))[0]
    expr = cls.high_rank.expr
    base = hb_average(expr, cls.s)
    krows = [i for i, x in enumerate(expr.row_dims) if x == K]
    assert hb_average(augment(expr, krows[:1]), cls.s) == base
    with pytest.raises(ValueError):
        hb_average(expr, cls.s, route="other")


def test_monte_carlo_average_near_exact():
    cls = TwistClass.enumerate(CurveFamily(1, -3))[0]
    mean, se = mc_average(cls.high_rank.expr, cls.s, 24, 20_000, seed=1, view=UNRESTRICTED)
    assert abs(mean - float(class_hb_average(cls))) <= 3 * se
