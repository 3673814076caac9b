import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import legendre as npleg

from sparseapprox import _backend
from sparseapprox.index_sets import MultiIndexSet, hyperbolic_cross
from sparseapprox.orthopoly import (
    DomainError,
    MeasurementMatrix,
    build_measurement_matrix,
    eval_1d,
    eval_tensor,
    evaluation_matrix,
    intrinsic_weights,
    operator_norm_estimate,
    operator_norm_upper_bound,
)

BACKENDS = ["python"] + (["compiled"] if _backend.COMPILED else [])


def legendre_oracle(nmax, z):
    return np.stack([math.sqrt(2 * j + 1) * npleg.legval(z, [0] * j + [1])
                     for j in range(nmax + 1)], axis=-1)


def chebyshev_closed_form(nmax, z):
    z = np.asarray(z)
    cols = [np.ones_like(z)] + [math.sqrt(2) * np.cos(j * np.arccos(z)) for j in range(1, nmax + 1)]
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("backend", BACKENDS)
def test_eval_1d_examples(backend):
    np.testing.assert_allclose(eval_1d("legendre", 1, 0.5, backend), [1, math.sqrt(3) / 2], rtol=1e-15)
    np.testing.assert_allclose(eval_1d("chebyshev", 2, 1.0, backend), [1, math.sqrt(2), math.sqrt(2)],
                               rtol=1e-15)
    np.testing.assert_allclose(eval_1d("legendre", 2, 1.0, backend), [1, math.sqrt(3), math.sqrt(5)],
                               rtol=1e-15)
    assert eval_1d("legendre", 0, 0.3, backend).shape == (1,)


@pytest.mark.parametrize("backend", BACKENDS)
def test_eval_1d_against_library_and_closed_form(backend):
    z = np.random.default_rng(1).uniform(-1, 1, 1000)
    np.testing.assert_allclose(eval_1d("legendre", 25, z, backend), legendre_oracle(25, z),
                               atol=1e-12)
    np.testing.assert_allclose(eval_1d("chebyshev", 25, z, backend), chebyshev_closed_form(25, z),
                               atol=1e-12)


def test_backends_agree():
    if not _backend.COMPILED:
        pytest.skip("compiled kernels not built")
    z = np.random.default_rng(2).uniform(-1, 1, 500)
    for basis in ("legendre", "chebyshev"):
        np.testing.assert_allclose(eval_1d(basis, 40, z, "compiled"), eval_1d(basis, 40, z, "python"),
                                   rtol=0, atol=1e-13)
    hc = hyperbolic_cross(40, 3)
    Y = np.random.default_rng(3).uniform(-1, 1, (50, 3))
    np.testing.assert_allclose(evaluation_matrix(Y, hc, "legendre", "compiled"),
                               evaluation_matrix(Y, hc, "legendre", "python"), atol=1e-12)


@pytest.mark.parametrize("basis", ["legendre", "chebyshev"])
def test_orthonormality(basis):
    n = 500
    if basis == "legendre":
        x, wq = npleg.leggauss(n)
        wq = wq / 2.0
    else:
        x, wq = npcheb.chebgauss(n)
        wq = wq / math.pi
    V = eval_1d(basis, 20, x)
    M = V.T @ (wq[:, None] * V)
    assert np.abs(M - np.eye(21)).max() <= 1e-10


def test_domain_handling():
    assert eval_1d("legendre", 2, 1.0 + 5e-15)[1] == pytest.approx(math.sqrt(3))
    with pytest.raises(DomainError):
        eval_1d("legendre", 2, 1.001)
    with pytest.raises(DomainError):
        eval_1d("chebyshev", 2, np.nan)
    with pytest.raises(ValueError):
        eval_1d("hermite", 2, 0.0)


def test_eval_tensor():
    assert eval_tensor("legendre", (0, 0, 0), (0.1, -0.4, 0.9)) == 1.0
    assert eval_tensor("chebyshev", (1, 1), (1.0, 1.0)) == pytest.approx(2.0, rel=1e-15)
    p2 = math.sqrt(5) * (3 * 0.3**2 - 1) / 2
    p1 = math.sqrt(3) * -0.7
    assert eval_tensor("legendre", (2, 1), (0.3, -0.7)) == pytest.approx(p2 * p1, rel=1e-14)
    with pytest.raises(ValueError):
        eval_tensor("legendre", (1, 0), (0.1,))


def test_intrinsic_weights_examples():
    S = MultiIndexSet.from_indices([(0, 0, 0), (1, 2, 0), (1, 0, 0)])
    assert intrinsic_weights("legendre", S)[(0, 0, 0)] == 1.0
    assert intrinsic_weights("legendre", S)[(1, 2, 0)] == pytest.approx(math.sqrt(15), rel=1e-15)
    assert intrinsic_weights("chebyshev", S)[(1, 2, 0)] == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("basis", ["legendre", "chebyshev"])
def test_weights_are_sup_norms(basis):
    hc = hyperbolic_cross(12, 2)
    u = intrinsic_weights(basis, hc).values
    assert np.all(u >= 1.0)
    Y = np.random.default_rng(4).uniform(-1, 1, (10_000, 2))
    V = evaluation_matrix(Y, hc, basis)
    assert np.all(np.abs(V).max(axis=0) <= u + 1e-10)
    corner = evaluation_matrix(np.ones((1, 2)), hc, basis)[0]
    if basis == "legendre":
        np.testing.assert_allclose(np.abs(corner), u, atol=1e-10)


def test_measurement_matrix_examples():
    A = build_measurement_matrix(np.zeros((4, 1)), MultiIndexSet.from_indices([(0,)]), "legendre")
    np.testing.assert_array_equal(A.entries, np.full((4, 1), 0.5))
    A = build_measurement_matrix([[1.0]], MultiIndexSet.from_indices([(0,), (1,)]), "legendre")
    np.testing.assert_allclose(A.entries, [[1.0, math.sqrt(3)]], rtol=1e-15)
    hc = hyperbolic_cross(3, 2)
    Y = np.random.default_rng(5).uniform(-1, 1, (2, 2))
    A = build_measurement_matrix(Y, hc, "chebyshev")
    naive = np.array([[eval_tensor("chebyshev", nu, y) for nu in hc.indices] for y in Y]) / math.sqrt(2)
    np.testing.assert_allclose(A.entries, naive, rtol=1e-14)
    assert A.index_hash == hc.ordering_hash()
    with pytest.raises(ValueError):
        build_measurement_matrix(np.zeros((3, 1)), hc, "legendre")


@given(st.integers(1, 30), st.integers(1, 4), st.sampled_from(["legendre", "chebyshev"]))
@settings(max_examples=25, deadline=None)
def test_constant_column(m, d, basis):
    Y = np.random.default_rng(m).uniform(-1, 1, (m, d))
    A = build_measurement_matrix(Y, hyperbolic_cross(8, d), basis).entries
    np.testing.assert_allclose(A[:, 0], 1 / math.sqrt(m), rtol=1e-15)
    assert not A.flags.writeable


def test_measurement_matrix_csv(tmp_path):
    Y = np.random.default_rng(6).uniform(-1, 1, (7, 2))
    A = build_measurement_matrix(Y, hyperbolic_cross(5, 2), "legendre")
    A.to_csv(tmp_path / "A.csv")
    lines = (tmp_path / "A.csv").read_text().splitlines()
    assert lines[0] == "m,N,basis" and lines[1] == "7,10,legendre"
    back = MeasurementMatrix.from_csv(tmp_path / "A.csv")
    np.testing.assert_array_equal(back.entries, A.entries)


def test_norm_upper_bound():
    assert operator_norm_upper_bound(MultiIndexSet.from_indices([(0,)]), "legendre") == 1.0
    hc = hyperbolic_cross(185, 2)
    assert operator_norm_upper_bound(hc, "legendre") == 997.0
    S = MultiIndexSet.from_indices([(k,) for k in range(81)])
    assert operator_norm_upper_bound(S, "chebyshev") == pytest.approx(3 ** (math.log(81) / math.log(4)))
    assert operator_norm_upper_bound(S, "chebyshev") == pytest.approx(32.5415768924, rel=1e-10)


def test_norm_upper_bound_holds():
    hc = hyperbolic_cross(20, 2)
    Y = np.random.default_rng(7).uniform(-1, 1, (40, 2))
    for basis in ("legendre", "chebyshev"):
        A = build_measurement_matrix(Y, hc, basis).entries
        assert np.linalg.norm(A, 2) <= operator_norm_upper_bound(hc, basis)


def test_norm_estimate():
    m = 9
    assert operator_norm_estimate(np.full((m, 1), 1 / math.sqrt(m))) == pytest.approx(1.0, rel=1e-12)
    assert operator_norm_estimate(np.array([[2.0]])) == pytest.approx(2.0, rel=1e-14)
    rng = np.random.default_rng(8)
    for seed in range(5):
        M = rng.standard_normal((20, 10))
        est = operator_norm_estimate(M, seed=seed)
        assert abs(est - np.linalg.svd(M, compute_uv=False)[0]) <= 1e-6 * est
    Mc = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    assert operator_norm_estimate(Mc) == pytest.approx(np.linalg.norm(Mc, 2), rel=1e-6)
    with pytest.raises(ValueError):
        operator_norm_estimate(np.zeros((3, 3)))


def test_norm_estimate_reports_nonconvergence():
    # two nearly equal top singular values make power iteration crawl
    M = np.diag([1.0, 1.0 - 1e-9, 0.5])
    M[0, 1] = 1e-3
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        res = operator_norm_estimate(M, maxiter=3, full_output=True)
    assert not res.converged and res.iterations == 3
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)
