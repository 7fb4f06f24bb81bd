import numpy as np
import pytest

from selmerlab.arith import INF, PlaceSet, omega_of
from selmerlab.descent import (
    CurveFamily,
    QuadraticSpace,
    TwistClass,
    build_gram_matrix,
    build_kernel_matrix,
    check_lagrangian_complement,
    essential_gram,
    find_lagrangian_complement,
    kummer_image,
    selmer_oracle,
)
from selmerlab.gf2 import BitMatrix
from selmerlab.redei import UNRESTRICTED

FAMILIES = [(1, -1), (1, -3), (9, 25)]


# Lagrangian complements ---------------------------------------------------------

def split_space(g: int) -> QuadraticSpace:
    """Hyperbolic space of dimension 2g with phi = sum x_i y_i (basis x_1..x_g, y_1..y_g)."""
    J = np.zeros((2 * g, 2 * g), dtype=np.uint8)
    J[:g, g:] = np.eye(g, dtype=np.uint8)
    J[g:, :g] = np.eye(g, dtype=np.uint8)
    return QuadraticSpace(J, np.zeros(2 * g, dtype=np.uint8))


def random_orthogonal(space: QuadraticSpace, rng, steps: int = 30) -> np.ndarray:
    """Product of random reflections v -> v + e(v, a) a with phi(a) = 1."""
    n = space.dim
    M = np.eye(n, dtype=np.int64)
    for _ in range(steps):
        while True:
            a = rng.integers(0, 2, n)
            if space.phi(a)[0] == 1:
                break
        R = (np.eye(n, dtype=np.int64) + np.outer(space.pairing.astype(np.int64) @ a, a)) % 2
        M = (R @ M) % 2
    return M


def test_lagrangian_hyperbolic_plane():
    space = split_space(1)
    K = find_lagrangian_complement(space, [[1, 0]], [[1, 0]])
    assert [v.tolist() for v in K] == [[0, 1]]


def test_lagrangian_random_instances():
    rng = np.random.default_rng(14)
    for i in range(100):
        g = 1 + i % 6
        space = split_space(g)
        std = np.eye(2 * g, dtype=np.int64)[:g]
        U = (std @ random_orthogonal(space, rng).T) % 2
        W = (std @ random_orthogonal(space, rng).T) % 2
        K = find_lagrangian_complement(space, U.tolist(), W.tolist())
        check_lagrangian_complement(space, U.tolist(), W.tolist(), K)
        # the postconditions do not depend on the basis chosen for K
        if g > 1:
            K2 = [K[0] ^ K[-1]] + list(K[1:])
            check_lagrangian_complement(space, U.tolist(), W.tolist(), K2)


def test_lagrangian_rejects_bad_input():
    space = split_space(2)
    with pytest.raises(ValueError):
        find_lagrangian_complement(space, [[1, 0, 1, 0], [0, 1, 0, 0]], [[1, 0, 0, 0], [0, 1, 0, 0]])


# local images and the oracle ----------------------------------------------------

@pytest.mark.parametrize("e", FAMILIES)
def test_kummer_image_dimensions(e):
    fam = CurveFamily(*e)
    for m in (1, -1, 5, -7, 3 if 3 not in fam.sigma0 else 11):
        for v in fam.sigma0:
            img = kummer_image(fam, m, v)
            assert img.dim == {INF: 1, 2: 3}.get(v, 2)
    img = kummer_image(CurveFamily(1, -1), 1, INF)
    assert img.dim == 1


def test_oracle_congruent_one():
    sd = selmer_oracle(CurveFamily(1, -1), 1)
    assert (sd.sel2, sd.essential) == (2, 0)
    assert sd.to_json()["dims"]["sel2"] == 2


def test_oracle_lower_bound_example():
    fam = CurveFamily(1, -3)
    seen = 0
    for s in [(0, 0, 0), (0, 1, 0)]:
        cls = TwistClass(fam, fam.sigma0, -1, s)
        for n, _ in cls.members(500):
            assert n % 12 == 1
            assert selmer_oracle(fam, -n).essential >= 2
            seen += 1
    assert seen > 20


def test_oracle_cap():
    with pytest.raises(ValueError):
        selmer_oracle(CurveFamily(1, -1), 3 * 5 * 7 * 11 * 13 * 17 * 19 * 23 * 29, cap=8)


@pytest.mark.parametrize("e", FAMILIES)
def test_three_routes_agree(e):
    fam = CurveFamily(*e)
    for cls in TwistClass.enumerate(fam)[::3]:
        hr = cls.high_rank
        t = cls.parameter
        for n, ps in cls.members(300):
            sd = selmer_oracle(fam, cls.twist(n))
            M = build_kernel_matrix(cls, n, ps)
            G = build_gram_matrix(cls, n, ps)
            assert G.is_alternating()
            assert sd.sel2 == M.B.corank() == G.corank()
            assert sd.phi == tuple(x.corank() for x in M.strict)
            assert sd.phi_mod == tuple(x.corank() for x in M.modified)
            assert essential_gram(G, len(ps)).corank() == sd.essential == sd.sel2 - 2
            om = omega_of(n, ps, cls.sigma)
            assert hr.expr.eval(om, UNRESTRICTED).corank() == sd.essential
            assert sd.essential % 2 == cls.r
            # lower bound chain for each pillar
            for j, pi in enumerate(cls.pillar_directions):
                sp = sd.phi_mod_essential[pi - 1]
                assert 0 <= sp <= sd.essential <= 2 * sp - t[j]
            assert sd.essential >= max(t, default=0)
            assert all(a <= b <= sd.sel2 for a, b in zip(sd.phi, sd.phi_mod))


def test_strict_equals_modified_when_square():
    fam = CurveFamily(1, -3)  # e1(e1 - e2) = 4 is a square
    cls = TwistClass(fam, fam.sigma0, -1, (0, 0, 0))
    hits = 0
    for n, ps in cls.members(60_000):
        om = omega_of(n, ps, cls.sigma)
        if om.k < 4 or BitMatrix.from_dense(om.z[:, :-1]).rank() < len(cls.sigma):
            continue
        M = build_kernel_matrix(cls, n, ps)
        assert M.strict[0].corank() == M.modified[0].corank()
        hits += 1
    assert hits >= 20


def test_parameter_example_and_witness_stability():
    fam = CurveFamily(1, -3)
    for s in [(0, 0, 0), (0, 1, 0)]:
        cls = TwistClass(fam, fam.sigma0, -1, s)
        assert cls.parameter == (2,)
        assert {cls.parameter_at(*cls.witness(o)) for o in range(5)} == {(2,)}


def test_parameter_refinement_one_prime():
    fam = CurveFamily(1, -3)
    cls = TwistClass(fam, fam.sigma0, -1, (0, 0, 0))
    refined = cls.refinements(5)
    assert len(refined) == 4
    assert {c.parameter for c in refined} == {(2,)}


def test_type_a_parameter_is_empty_and_class_identity():
    fam = CurveFamily(1, -1)
    cls = TwistClass.of_twist(fam, -15)
    assert cls.parameter == () and cls.type == "A"
    assert cls == TwistClass(fam, fam.sigma0, -1, cls.s)
    assert cls.twist(15) == -15
    with pytest.raises(ValueError):
        TwistClass(CurveFamily(1, -3), PlaceSet(), 1, (0, 0))
    with pytest.raises(ValueError):
        build_kernel_matrix(cls, 9)


def test_curve_family_rejects_singular():
    with pytest.raises(ValueError):
        CurveFamily(3, 3)
    fam = CurveFamily(9, 25)
    assert fam.sigma0.generators == (-1, 2, 3, 5)
    assert fam.d == (-144, 225, 400)
