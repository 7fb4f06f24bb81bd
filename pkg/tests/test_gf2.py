import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import rank_dense
from selmerlab.gf2 import BitMatrix, assemble, batch_rank_dense, hstack, pack_bits, unpack_bits, vstack


def dense_matrices(max_rows=70, max_cols=70):
    shapes = st.tuples(st.integers(0, max_rows), st.integers(0, max_cols))
    return shapes.flatmap(lambda s: arrays(np.uint8, s, elements=st.integers(0, 1)))


def test_kernel_examples():
    assert len(BitMatrix.zeros(3, 3).kernel_basis()) == 3
    assert BitMatrix.identity(5).kernel_basis() == []
    ker = BitMatrix.from_rows(["110", "011", "101"]).kernel_basis()
    assert [v.tolist() for v in ker] == [[1, 1, 1]]


def test_in_span_examples():
    M = BitMatrix.from_dense(np.array([[1, 0], [0, 1], [0, 0]]))
    assert not M.in_span([0, 0, 1])
    assert M.in_span([0, 0, 0])
    assert BitMatrix.identity(4).in_span([1, 0, 1, 1])
    with pytest.raises(ValueError):
        M.in_span([1, 0])


def test_assemble_examples():
    A = BitMatrix.from_rows(["101", "011"])
    assert assemble([[A]]) == A
    I2, I3 = BitMatrix.identity(2), BitMatrix.identity(3)
    diag = assemble([[I2, BitMatrix.zeros(2, 3)], [BitMatrix.zeros(3, 2), I3]])
    assert diag == BitMatrix.identity(5)
    stacked = vstack([BitMatrix.from_rows(["11"]), BitMatrix.from_rows(["01"])])
    assert stacked.submatrix(cols=[0]).to_dense().ravel().tolist() == [1, 0]
    with pytest.raises(ValueError):
        assemble([[I2, I3]])


def test_submatrix_rejects_unsorted_or_duplicate_indices():
    M = BitMatrix.identity(3)
    with pytest.raises(ValueError):
        M.submatrix(rows=[1, 0])
    with pytest.raises(ValueError):
        M.submatrix(cols=[1, 1])


def test_dump_is_one_line_per_row():
    assert BitMatrix.from_rows(["10", "01"]).dump() == "10\n01"


def test_rank_matches_oracle_on_random_matrices():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        r, c = rng.integers(1, 65, size=2)
        dense = (rng.random((r, c)) < rng.uniform(0.05, 0.95)).astype(np.uint8)
        assert BitMatrix.from_dense(dense).rank() == rank_dense(dense)


@settings(max_examples=150, deadline=None)
@given(dense_matrices())
def test_kernel_vectors_are_annihilated(dense):
    M = BitMatrix.from_dense(dense)
    ker = M.kernel_basis()
    assert len(ker) == M.corank()
    for v in ker:
        assert not M.matvec(v).any()
    if ker:
        assert BitMatrix.from_dense(np.array(ker)).rank() == len(ker)


@settings(max_examples=150, deadline=None)
@given(dense_matrices())
def test_rank_of_transpose(dense):
    M = BitMatrix.from_dense(dense)
    assert M.rank() == M.T.rank()


@settings(max_examples=100, deadline=None)
@given(dense_matrices(30, 30), st.integers(0, 30))
def test_rank_of_concatenation(dense, extra):
    A = BitMatrix.from_dense(dense)
    B = BitMatrix.from_dense(np.random.default_rng(extra).integers(0, 2, (A.rows, extra), dtype=np.uint8))
    assert hstack([A, B]).rank() >= max(A.rank(), B.rank())


@settings(max_examples=100, deadline=None)
@given(dense_matrices(20, 20), st.integers(0, 2 ** 32 - 1))
def test_solve_and_in_span(dense, seed):
    M = BitMatrix.from_dense(dense)
    x = np.random.default_rng(seed).integers(0, 2, M.cols, dtype=np.uint8)
    b = M.matvec(x)
    sol = M.solve(b)
    assert sol is not None and np.array_equal(M.matvec(sol), b)


def test_rank_does_not_mutate():
    M = BitMatrix.from_rows(["11", "11"])
    before = M.to_dense().copy()
    M.rank()
    M.kernel_basis()
    assert np.array_equal(M.to_dense(), before)


def test_pack_roundtrip_and_wide_matrices():
    rng = np.random.default_rng(1)
    dense = rng.integers(0, 2, (7, 150), dtype=np.uint8)
    assert np.array_equal(unpack_bits(pack_bits(dense), 150), dense)
    assert BitMatrix.from_dense(dense).rank() == rank_dense(dense)


def test_batch_rank_matches_single():
    rng = np.random.default_rng(2)
    stack = rng.integers(0, 2, (200, 12, 70), dtype=np.uint8)
    ranks = batch_rank_dense(stack)
    assert ranks.tolist() == [rank_dense(m) for m in stack]


def test_alternating_and_product():
    A = BitMatrix.from_rows(["011", "101", "110"])
    assert A.is_alternating()
    assert (A @ BitMatrix.identity(3)) == A
    assert not BitMatrix.from_rows(["10", "01"]).is_alternating()
