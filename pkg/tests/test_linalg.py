import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wcnn.linalg import (LinalgError, NotPositiveSemidefinite, SvdNotConverged,
                         frobenius_norm_sq, make_rng, matmul, spd_sqrt, svd_jacobi,
                         svd_thin, uniform_fill)
import wcnn.linalg as linalg

from oracles import jacobi_eigh, matmul_loops

SVD_METHODS = ["lapack", "jacobi"]


def test_matmul_identity():
    a = make_rng(0).normal(size=(3, 4))
    assert np.array_equal(matmul(np.eye(3), a), a)


def test_matmul_hand_product():
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])


def test_matmul_matches_loops():
    rng = make_rng(1)
    a, b = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(matmul(a, b), matmul_loops(a.tolist(), b.tolist()), rtol=1e-13, atol=1e-14)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(LinalgError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_matmul_associative(n, k, l, m, seed):
    rng = make_rng(seed)
    a, b, c = rng.normal(size=(n, k)), rng.normal(size=(k, l)), rng.normal(size=(l, m))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


def test_frobenius():
    assert frobenius_norm_sq(np.zeros((3, 3))) == 0
    assert frobenius_norm_sq([[3, 4]]) == 25
    a = make_rng(2).normal(size=(6, 6))
    assert frobenius_norm_sq(a) == pytest.approx(sum(v * v for v in a.ravel()), rel=1e-13)


@pytest.mark.parametrize("method", SVD_METHODS)
def test_svd_trivial(method):
    np.testing.assert_allclose(svd_thin(np.eye(4), method).s, [1, 1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(svd_thin(np.diag([3.0, 1.0]), method).s, [3, 1], atol=1e-15)
    np.testing.assert_allclose(svd_thin(np.diag([1.0, 3.0]), method).s, [3, 1], atol=1e-15)


def check_svd_invariants(a, r):
    assert np.all(np.diff(r.s) <= 0) and np.all(r.s >= 0)
    assert np.linalg.norm(r.reconstruct() - a) <= 1e-10 * max(1.0, np.linalg.norm(a))
    k = r.s.size
    assert np.abs(r.u.T @ r.u - np.eye(k)).max() <= 1e-8
    assert np.abs(r.vt @ r.vt.T - np.eye(k)).max() <= 1e-8


@pytest.mark.parametrize("method", SVD_METHODS)
def test_svd_random_matches_jacobi_eigen_oracle(method):
    a = make_rng(3).normal(size=(8, 5))
    r = svd_thin(a, method)
    check_svd_invariants(a, r)
    evals, _ = jacobi_eigh(a.T @ a)
    oracle = np.sqrt(np.sort(np.clip(evals, 0, None))[::-1])
    np.testing.assert_allclose(r.s, oracle, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32), st.sampled_from(SVD_METHODS))
def test_svd_invariants_and_row_permutation(m, n, seed, method):
    rng = make_rng(seed)
    a = rng.normal(size=(m, n))
    r = svd_thin(a, method)
    check_svd_invariants(a, r)
    r2 = svd_thin(a[rng.permutation(m)], method)
    np.testing.assert_allclose(r.s, r2.s, atol=1e-9)


def test_jacobi_rank_deficient_gives_orthonormal_u():
    a = np.zeros((5, 3))
    a[:, 0] = 1.0
    a[:, 2] = 2.0
    r = svd_jacobi(a)
    check_svd_invariants(a, r)
    assert r.s[1] == 0 and r.s[2] == 0


def test_jacobi_is_deterministic():
    a = make_rng(4).normal(size=(6, 6))
    r1, r2 = svd_jacobi(a), svd_jacobi(a)
    assert np.array_equal(r1.u, r2.u) and np.array_equal(r1.s, r2.s)


def test_jacobi_nonconvergence_reports_sweeps(monkeypatch):
    monkeypatch.setattr(linalg, "JACOBI_MAX_SWEEPS", 1)
    with pytest.raises(SvdNotConverged) as err:
        svd_jacobi(make_rng(5).normal(size=(6, 6)))
    assert err.value.sweeps == 1


def test_svd_rejects_nonfinite():
    with pytest.raises(LinalgError):
        svd_thin([[1.0, np.nan]])


def test_spd_sqrt_trivial():
    np.testing.assert_allclose(spd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


def spd(rng, n):
    b = rng.normal(size=(n, n))
    return b.T @ b + 0.1 * np.eye(n)


@pytest.mark.parametrize("seed", range(5))
def test_spd_sqrt_reconstructs(seed):
    rng = make_rng(seed)
    a = spd(rng, 6)
    s = spd_sqrt(a)
    assert np.linalg.norm(s @ s - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
    np.testing.assert_array_equal(s, s.T)
    assert np.linalg.eigvalsh(s).min() >= -1e-12
    # independent route: eigenvectors from the Jacobi oracle
    evals, v = jacobi_eigh(a)
    np.testing.assert_allclose(s, (v * np.sqrt(evals)) @ v.T, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_spd_sqrt_matches_svd_route(seed):
    a = spd(make_rng(seed + 10), 5)
    r = svd_thin(a, "jacobi")
    np.testing.assert_allclose(spd_sqrt(a), (r.u * np.sqrt(r.s)) @ r.u.T, atol=1e-8)


def test_spd_sqrt_clamps_tiny_negative():
    a = np.diag([1.0, -1e-12])
    np.testing.assert_allclose(spd_sqrt(a), np.diag([1.0, 0.0]))


def test_spd_sqrt_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveSemidefinite) as err:
        spd_sqrt(np.diag([1.0, -0.5]))
    assert err.value.min_eigenvalue == pytest.approx(-0.5)
    with pytest.raises(NotPositiveSemidefinite):
        spd_sqrt([[1.0, 0.5], [0.0, 1.0]])


def test_uniform_fill_bounds_and_determinism():
    x = uniform_fill(make_rng(0), 20, 20, 1e-12)
    assert np.all(np.abs(x) < 1e-12)
    np.testing.assert_array_equal(uniform_fill(make_rng(7), 4, 5, 1.0),
                                  uniform_fill(make_rng(7), 4, 5, 1.0))
    with pytest.raises(ValueError):
        uniform_fill(make_rng(0), 2, 2, 0.0)


def test_uniform_fill_moments():
    x = uniform_fill(make_rng(11), 1, 100_000, 0.5)
    assert abs(x.mean()) < 0.01
    assert abs(x.var() - 0.25 / 3) < 0.1 * 0.25 / 3


def test_rng_is_counter_based_philox_with_pinned_stream():
    rng = make_rng(12345)
    assert isinstance(rng.bit_generator, np.random.Philox)
    # pinned so a silent change of generator or seeding shows up here
    assert rng.bit_generator.random_raw(3).tolist() == [
        7761547988346370368, 12048877680314648833, 7990457742470656338]
