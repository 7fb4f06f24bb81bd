from collections import Counter
from fractions import Fraction

import pytest

from oracles import TYPE_A_EVEN, TYPE_A_ODD, dyadic_sum_is_one
from selmerlab.chains import (
    ChainSpec,
    check_drift,
    compare_transitions,
    dyadic,
    equilibrium_closed,
    equilibrium_power,
    is_forbidden,
    is_irreducible,
    lam,
    lazy_failures,
    model_transitions,
    row_sum_defects,
    stationarity_defect,
    table_csv,
    transition_row,
    tv,
)
from selmerlab.model import ModelParams

SPECS = [ModelParams(0), ModelParams(1), ModelParams(0, (-2,)), ModelParams(0, (0,)), ModelParams(0, (2,)),
         ModelParams(1, (1,)), ModelParams(0, (0, 0)), ModelParams(0, (0, -2)), ModelParams(0, (2, -2)),
         ModelParams(1, (1, -3))]
IDS = [f"r{p.r}t{p.t}" for p in SPECS]


@pytest.mark.parametrize("p", SPECS, ids=IDS)
def test_rows_are_dyadic_probability_vectors(p):
    spec = ChainSpec(p)
    assert row_sum_defects(spec, 20) == []
    for s in spec.states(12):
        row = transition_row(spec, s)
        assert dyadic_sum_is_one(row.values())
        assert all(not is_forbidden(s, new) for new in row)


def test_type_a_rows_by_hand():
    row = transition_row(ChainSpec(ModelParams(0)), (0,))
    assert row == {(0,): Fraction(1, 2), (2,): Fraction(1, 2)}
    row = transition_row(ChainSpec(ModelParams(0)), (2,))
    assert row == {(0,): Fraction(3, 8), (2,): Fraction(19, 32), (4,): Fraction(1, 32)}


def test_dyadic_helper():
    assert dyadic(Fraction(3, 16)) == (3, 4)
    with pytest.raises(ValueError):
        dyadic(Fraction(1, 3))


@pytest.mark.parametrize("p", SPECS, ids=IDS)
def test_closed_form_matches_power_iteration(p):
    spec = ChainSpec(p)
    closed = equilibrium_closed(spec)
    power = equilibrium_power(spec)
    assert tv(closed, power) <= 1e-9
    assert abs(closed.total() - 1) < 1e-12
    assert stationarity_defect(spec, closed) < 1e-10


@pytest.mark.parametrize("r,frozen", [(0, TYPE_A_EVEN), (1, TYPE_A_ODD)])
def test_type_a_equilibrium_against_frozen_values(r, frozen):
    eq = equilibrium_closed(ChainSpec(ModelParams(r))).marginal(0)
    for m, want in frozen.items():
        assert eq[m] == pytest.approx(want, rel=1e-12, abs=1e-18)


def test_lambda_is_a_probability_weight():
    for T in (-4, -2, 0, 2):
        for A in range(4):
            for B in range(4):
                assert lam(T, A, B) >= 0


@pytest.mark.parametrize("p", SPECS, ids=IDS)
def test_irreducible_and_lazy(p):
    spec = ChainSpec(p)
    assert is_irreducible(spec, 16)
    assert lazy_failures(spec, 16) == [] or p.s == 0


@pytest.mark.parametrize("p", SPECS, ids=IDS)
@pytest.mark.parametrize("xi", [1, 2, 3])
def test_two_step_drift_is_eventually_contracting(p, xi):
    rep = check_drift(ChainSpec(p), xi, steps=2)
    assert rep.m0 <= 8 and rep.sup_beyond < 1
    assert rep.to_json()["steps"] == 2


@pytest.mark.parametrize("p", SPECS, ids=IDS)
def test_one_step_drift(p):
    rep = check_drift(ChainSpec(p), 1)
    if p.s == 1:
        # the diagonal (m, m) keeps m with probability 1 - O(2^-m)
        assert rep.ratios[(40 - p.r, 40 - p.r)] > 0.999
        assert rep.m0 > 40 - p.r
    else:
        assert rep.m0 <= 8 and rep.sup_beyond < 1


def test_forbidden_moves():
    assert is_forbidden((2,), (6,))
    assert is_forbidden((4, 1), (4, 3))
    assert not is_forbidden((4, 1, 1), (2, 0, 0))


def test_model_transitions_match_table():
    p = ModelParams(0, (0,))
    counts = model_transitions(p, 8, 60_000, seed=3)
    rep = compare_transitions(ChainSpec(p), counts, "model", 8)
    assert rep.forbidden == 0 and rep.outside_support == 0
    assert rep.max_joint_dev < 0.01
    assert rep.to_json()["samples"] == 60_000


def test_compare_flags_forbidden_counts():
    p = ModelParams(0)
    rep = compare_transitions(ChainSpec(p), Counter({((2,), (6,)): 3, ((2,), (2,)): 5}), "model", 1)
    assert rep.forbidden == 3


def test_table_csv_header():
    text = table_csv(ChainSpec(ModelParams(0, (0,))), 4)
    assert text.splitlines()[0] == "m,m1,m2,m_new,m1_new,m2_new,prob_num,prob_den_log2"
