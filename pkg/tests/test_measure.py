import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from mamsketch.measure import (
    CoherentParams,
    HadamardEnsemble,
    HadamardParams,
    MeasurementVector,
    SizingWarning,
    adjoint_hadamard,
    apply_coherent,
    apply_hadamard,
    bit_test_matrix,
    build_coherent,
    coherent_column,
    coherent_params,
    ensemble_from_descriptor,
    fwht,
    rademacher,
)
from mamsketch.sparse import SparseVector

from oracles import dense_coherent_oracle, hadamard_oracle, w_column_oracle


# --- bit testing --------------------------------------------------------------


def test_b8_columns_match_displayed_matrix():
    B = bit_test_matrix(8)
    assert B.shape == (8, 8)
    np.testing.assert_array_equal(B[:4, 5], [1, 1, 0, 1])
    np.testing.assert_array_equal(B[:4, 0], [1, 0, 0, 0])
    assert np.all(B.sum(axis=0) == 4)


@pytest.mark.parametrize("N", [1, 2, 3, 8, 100, 1023, 1024, 1025])
def test_bit_test_column_weights_and_distinctness(N):
    B = bit_test_matrix(N)
    L = B.shape[0] // 2
    assert np.all(B.sum(axis=0) == L)
    top = B[:L]
    assert len({tuple(c) for c in top.T}) == N


# --- coherent ensemble --------------------------------------------------------


def test_small_params_shape():
    ens = build_coherent(CoherentParams(N=8, K=2, q=2, d=2))
    assert ens.m_w == 4
    W = np.column_stack([w_column_oracle(j, 8, 2, 2, 2) for j in range(8)])
    assert np.all(W.sum(axis=0) == 2)
    assert all(len(coherent_column(ens, j)[0]) == 8 for j in range(8))


@pytest.mark.parametrize(
    "kw, msg",
    [
        (dict(N=100, K=4, q=6, d=2), "prime"),
        (dict(N=100, K=4, q=3, d=2), "exceeds"),
        (dict(N=1000, K=5, q=5, d=2), "q\\^"),
        (dict(N=10, K=3, q=5, d=0), "positive"),
    ],
)
def test_param_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        CoherentParams(**kw)


def test_s_max_warning():
    with pytest.warns(SizingWarning):
        CoherentParams(N=100, K=5, q=5, d=2, s_max=1)


def test_coherent_params_defaults():
    p = coherent_params(4096, 16)
    assert (p.q, p.d) == (17, 2)  # 17**3 = 4913 >= 4096
    assert p.m == 2 * 13 * 17 * 17


def test_w_matches_oracle_and_coherence_exhaustive():
    N, K, q, d = 343, 7, 7, 2
    ens = build_coherent(CoherentParams(N, K, q, d))
    W = np.zeros((q * q, N))
    rows = ens.w_rows(np.arange(N))
    W[rows, np.arange(N)[:, None]] = 1
    Wo = np.column_stack([w_column_oracle(j, N, K, q, d) for j in range(N)])
    np.testing.assert_array_equal(W, Wo)
    G = Wo.T @ Wo
    assert np.all(np.diag(G) == K)
    assert G[~np.eye(N, dtype=bool)].max() <= d


def test_coherence_sampled_pairs():
    ens = build_coherent(CoherentParams(N=4096, K=16, q=17, d=3, seed=7))
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4096, 1000)
    b = (a + rng.integers(1, 4096, 1000)) % 4096
    ra, rb = ens.w_rows(a), ens.w_rows(b)
    overlap = (ra[:, :, None] == rb[:, None, :]).sum(axis=(1, 2))
    assert overlap.max() <= 3


def test_dense_matches_oracle_and_unit_columns():
    ens = build_coherent(coherent_params(64, 5, seed=3, q=5, d=2))
    M = ens.to_dense()
    np.testing.assert_allclose(M, dense_coherent_oracle(ens), atol=0)
    np.testing.assert_allclose(np.linalg.norm(M, axis=0), 1.0, rtol=0, atol=1e-14)
    assert np.all((M != 0).sum(axis=0) == ens.K * ens.L)


def test_apply_matches_dense(rng):
    ens = build_coherent(coherent_params(64, 5, seed=11, q=5, d=2))
    M = dense_coherent_oracle(ens)
    for _ in range(5):
        v = rng.standard_normal(64)
        y = apply_coherent(ens, v)
        assert np.linalg.norm(y - M @ v) <= 1e-12 * np.linalg.norm(M @ v)
    vc = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    np.testing.assert_allclose(apply_coherent(ens, vc), M @ vc, atol=1e-13)
    np.testing.assert_array_equal(apply_coherent(ens, np.zeros(64)), np.zeros(ens.m))
    sv = SparseVector.from_dense(v * (rng.random(64) < 0.2))
    np.testing.assert_allclose(apply_coherent(ens, sv), M @ sv.to_dense(), atol=1e-13)


def test_apply_basis_vector_is_column():
    ens = build_coherent(coherent_params(200, 7, seed=2))
    for j in (0, 17, 199):
        e = np.zeros(200)
        e[j] = 1
        rows, vals = coherent_column(ens, j)
        col = np.zeros(ens.m)
        col[rows] = vals
        np.testing.assert_array_equal(apply_coherent(ens, e), col)
    with pytest.raises(IndexError):
        coherent_column(ens, 200)
    with pytest.raises(ValueError):
        apply_coherent(ens, np.zeros(199))


def test_adjoint_coherent(rng):
    ens = build_coherent(coherent_params(100, 5, seed=4))
    M = dense_coherent_oracle(ens)
    y = rng.standard_normal(ens.m)
    np.testing.assert_allclose(ens.adjoint(y), M.T @ y, atol=1e-13)


def test_sign_flip_flips_columns():
    ens = build_coherent(coherent_params(64, 5, seed=1))
    flipped = ens.with_sign_flip(99)
    d2 = rademacher(99, np.arange(64))
    np.testing.assert_array_equal(flipped.to_dense(), ens.to_dense() * d2[None, :])


def test_rademacher_deterministic_and_balanced():
    a = rademacher(5, np.arange(100000))
    assert set(np.unique(a)) == {-1.0, 1.0}
    assert abs(a.mean()) < 0.02
    np.testing.assert_array_equal(a[[7, 3, 99]], rademacher(5, [7, 3, 99]))
    assert not np.array_equal(a[:64], rademacher(6, np.arange(64)))


def test_empirical_jl_smoke():
    # m >= 64 s log2 N with s = 1 at N = 1024
    ens = build_coherent(coherent_params(1024, 11, seed=3))
    assert ens.m >= 64 * 1 * 10
    rng = np.random.default_rng(1)
    ok = 0
    for _ in range(100):
        v = rng.standard_normal(1024)
        v /= np.linalg.norm(v)
        ok += abs(np.linalg.norm(ens.apply(v)) ** 2 - 1) <= 0.5
    assert ok >= 95


# --- Hadamard ensemble --------------------------------------------------------


def test_fwht_matches_scipy(rng):
    for n in (1, 2, 8, 256):
        x = rng.standard_normal(n)
        H = scipy.linalg.hadamard(n) / math.sqrt(n)
        np.testing.assert_allclose(fwht(x), H @ x, atol=1e-13)
        np.testing.assert_allclose(fwht(fwht(x)), x, atol=1e-13)


@pytest.mark.parametrize("N, m", [(256, 128), (200, 64), (1000, 300)])
def test_hadamard_apply_adjoint_dense(N, m, rng):
    ens = HadamardEnsemble(HadamardParams(N, m, seed=3, rows_seed=4))
    assert ens.N_pad == 1 << math.ceil(math.log2(N))
    M = hadamard_oracle(ens)
    v = rng.standard_normal(N)
    y = rng.standard_normal(m)
    np.testing.assert_allclose(apply_hadamard(ens, v), M @ v, rtol=0, atol=1e-12 * np.linalg.norm(M @ v))
    np.testing.assert_allclose(adjoint_hadamard(ens, y), M.T @ y, rtol=0, atol=1e-12 * np.linalg.norm(M.T @ y))
    np.testing.assert_allclose(ens.to_dense(), M, atol=1e-14)
    np.testing.assert_array_equal(apply_hadamard(ens, np.zeros(N)), np.zeros(m))


def test_hadamard_adjoint_identity(rng):
    ens = HadamardEnsemble(HadamardParams(256, 100, seed=1))
    for _ in range(20):
        v = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        y = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        lhs = np.vdot(y, ens.apply(v))
        rhs = np.vdot(ens.adjoint(y), v)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_hadamard_errors():
    ens = HadamardEnsemble(HadamardParams(64, 16))
    with pytest.raises(ValueError):
        ens.apply(np.zeros(63))
    with pytest.raises(ValueError):
        ens.adjoint(np.zeros(15))
    with pytest.raises(ValueError):
        HadamardParams(64, 2, rows=np.array([0, 64]))


# --- descriptors and measurement vectors --------------------------------------


def test_descriptor_roundtrip():
    for ens in (
        build_coherent(coherent_params(500, 7, seed=123)),
        build_coherent(coherent_params(500, 7, seed=123)).with_sign_flip(5),
        HadamardEnsemble(HadamardParams(500, 50, seed=9, rows_seed=2)),
    ):
        ens2 = ensemble_from_descriptor(ens.descriptor())
        np.testing.assert_array_equal(ens.to_dense(), ens2.to_dense())
        assert ens2.descriptor() == ens.descriptor()


def test_measurement_vector_invariants():
    assert len(MeasurementVector(np.ones(3))) == 3
    with pytest.raises(ValueError):
        MeasurementVector(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        MeasurementVector(np.ones((2, 2)))


@given(st.integers(2, 300), st.integers(0, 2**63 - 1))
def test_column_weight_property(N, seed):
    p = coherent_params(N, 5, seed=seed)
    ens = build_coherent(p)
    js = np.unique(np.linspace(0, N - 1, 7).astype(int))
    rows = ens.column_support(js)
    assert rows.shape == (js.size, ens.K * ens.L)
    for r in rows:
        assert len(set(r.tolist())) == r.size
        assert r.max() < ens.m


def test_distinct_columns_of_w_are_distinct():
    ens = build_coherent(coherent_params(125, 5, q=5, d=2))
    rows = ens.w_rows(np.arange(125))
    assert len({tuple(r) for r in rows}) == 125
    for a, b in itertools.combinations(range(0, 125, 13), 2):
        assert len(set(rows[a]) & set(rows[b])) <= 2
