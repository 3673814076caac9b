"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with the measured value and the
tolerance; the lines are printed in the pytest terminal summary and when
this file is run directly (``python tests/test_acceptance.py``).
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from sparseapprox.hilbert import GramOperator, apply_A, apply_A_adjoint, block_frobenius_G
from sparseapprox.index_sets import cardinality_bounds, hyperbolic_cross
from sparseapprox.orthopoly import build_measurement_matrix, eval_1d, intrinsic_weights
from sparseapprox.pde import SparsePolynomial, StructuredMesh, assemble, get_function, solve_diffusion
from sparseapprox.pipeline import (
    ProblemSpec,
    approximate,
    monte_carlo,
    relative_error,
    sample_points,
    tensor_clenshaw_curtis,
)
from sparseapprox.srlasso import (
    SolverConfig,
    default_config,
    objective,
    primal_dual,
    proj_dual_ball,
    prox_shrink,
    restarted,
    theory_rate,
)

RESULTS = []


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


M_F1 = 250
N_F1 = 185  # |HC_{185,2}| = 997 indices


@lru_cache(maxsize=None)
def f1_setup():
    f = get_function("f1")
    iset = hyperbolic_cross(N_F1, 2)
    quad = tensor_clenshaw_curtis(2, 6, "legendre")
    return f, iset, quad, f.batch(quad.nodes)


@lru_cache(maxsize=None)
def f1_error(seed, zeta, eta=0.0):
    f, iset, quad, ref = f1_setup()
    rng = np.random.default_rng(seed)
    Y = sample_points(M_F1, 2, "legendre", rng)
    D = f.batch(Y)
    if eta:
        noise = rng.standard_normal(D.shape)
        D = D + eta * np.linalg.norm(D) / np.linalg.norm(noise) * noise
    ap, rep = approximate(Y, D, ProblemSpec(2, m=M_F1), index_set=iset, zeta=zeta,
                          total_iterations=20_000)
    return relative_error(ap, ref, quadrature=quad)


# 1 -------------------------------------------------------------------------

def ergodic_instance(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(10, 31))
    N = int(rng.integers(m + 1, 61))
    K = int(rng.integers(1, 5))
    A = rng.standard_normal((m, N)) / math.sqrt(m)
    B = rng.standard_normal((m, K))
    Mg = rng.standard_normal((K, K))
    G = Mg @ Mg.T + 0.5 * np.eye(K)
    w = 1.0 + rng.random(N)
    lam = float(rng.uniform(0.05, 0.5))
    return A, B, w, G, lam


def test_ergodic_rate_bound():
    t0 = time.perf_counter()
    n_max = 10_000
    worst = -np.inf
    for seed in range(20):
        A, B, w, G, lam = ergodic_instance(seed)
        gram = GramOperator(G)
        nA = float(np.linalg.svd(A, compute_uv=False)[0])
        tau = sigma = 1.0 / nA
        T = math.ceil(2 * math.e * nA)
        ref_cfg = SolverConfig(lam=lam, tau=tau, sigma=sigma, T=T, R=math.ceil(1_000_000 / T),
                               zeta=1e-15, s=T / (2 * nA), norm_A=nA)
        C_star, _ = restarted(A, B, w, gram, ref_cfg)
        f_star = objective(C_star, A, B, w, gram, lam)
        res = primal_dual(A, B, w, gram, lam, tau, sigma, n_max, record_objective=True, norm_A=nA)
        n = np.arange(1, n_max + 1)
        bound = (block_frobenius_G(C_star, gram) ** 2 / tau + 1.0 / sigma) / n
        excess = res.report.inner_objective - f_star - bound
        worst = max(worst, float(excess.max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= 120
    report("1 ergodic 1/n bound", ok,
           f"max(gap - bound) = {worst:.3e} (<= 1e-9) over 20 instances, {elapsed:.0f} s (<= 120 s)")
    assert ok


# 2 -------------------------------------------------------------------------

def test_restart_slope():
    t0 = time.perf_counter()
    f, iset, _, _ = f1_setup()
    Y = sample_points(M_F1, 2, "legendre", np.random.default_rng(0))
    A = build_measurement_matrix(Y, iset, "legendre").entries
    B = f.batch(Y) / math.sqrt(M_F1)
    w = intrinsic_weights("legendre", iset).values
    cfg = default_config("practical", M_F1, 2, 0.5, "legendre", iset, A, zeta=1e-8, R=60,
                         norm_A=float(np.linalg.norm(A, 2)))
    _, ref = restarted(A, B, w, None, cfg.replace(zeta=1e-15, R=3000))
    f_star = min(ref.objective)
    _, rep = restarted(A, B, w, None, cfg)
    gap = np.array(rep.objective) - f_star
    t = np.array(rep.inner_iters_cum, dtype=float)
    floor = float(np.median(gap[-10:]))
    # fit only the part of the curve that is well above the zeta floor
    keep = gap > 10 * floor
    slope = np.polyfit(t[keep], np.log(gap[keep]), 1)[0]
    c = theory_rate(cfg.norm_A)
    ratio = -slope / c
    elapsed = time.perf_counter() - t0
    ok = 0.5 <= ratio <= 2.0 and keep.sum() >= 5 and elapsed <= 300
    report("2 restart slope", ok,
           f"fitted slope {slope:.4f} vs -c = {-c:.4f} (ratio {ratio:.2f}, in [0.5, 2]) "
           f"over {int(keep.sum())} restarts, {elapsed:.0f} s")
    assert ok


# 3 -------------------------------------------------------------------------

def test_f1_accuracy():
    t0 = time.perf_counter()
    errs = [f1_error(seed, 1e-8) for seed in range(5)]
    med = float(np.median(errs))
    elapsed = time.perf_counter() - t0
    ok = med <= 1e-5 and elapsed <= 300
    report("3 f1 accuracy", ok, f"median relative L2 error {med:.3e} (<= 1e-5) over 5 seeds, "
                                f"{elapsed:.0f} s")
    assert ok


# 4 -------------------------------------------------------------------------

def test_f3_accuracy():
    t0 = time.perf_counter()
    f = get_function("f3", q=17)
    iset = hyperbolic_cross(N_F1, 2)
    quad = tensor_clenshaw_curtis(2, 5, "legendre")
    ref = f.batch(quad.nodes)
    errs = []
    for seed in range(3):
        Y = sample_points(M_F1, 2, "legendre", np.random.default_rng(seed))
        ap, _ = approximate(Y, f.batch(Y), ProblemSpec(2, m=M_F1), f.gram, index_set=iset,
                            zeta=1e-8)
        errs.append(relative_error(ap, ref, f.gram, quad))
    med = float(np.median(errs))
    elapsed = time.perf_counter() - t0
    ok = med <= 1e-4 and elapsed <= 900
    report("4 f3 accuracy", ok, f"median relative L2(H1_0) error {med:.3e} (<= 1e-4) over 3 seeds, "
                                f"q=17, {elapsed:.0f} s")
    assert ok


# 5 -------------------------------------------------------------------------

def test_zeta_insensitivity():
    zetas = (1e-4, 1e-8, 1e-10)
    med = {z: float(np.median([f1_error(seed, z) for seed in range(5)])) for z in zetas}
    below = [v for v in med.values() if v < 1e-4]
    spread = max(below) / min(below) if len(below) >= 2 else math.inf
    ok = len(below) >= 2 and spread <= 10.0
    detail = ", ".join(f"zeta={z:.0e}: {v:.2e}" for z, v in med.items())
    report("5 zeta insensitivity", ok,
           f"{detail}; spread among errors below 1e-4 = {spread:.2f} (<= 10)")
    assert ok


# 6 -------------------------------------------------------------------------

def test_sparse_recovery():
    iset = hyperbolic_cross(N_F1, 2)
    worst = 0.0
    for seed in range(10):
        p = SparsePolynomial(2, 5, "legendre", seed=seed)
        Y = sample_points(M_F1, 2, "legendre", np.random.default_rng(100 + seed))
        ap, _ = approximate(Y, p.batch(Y), ProblemSpec(2, m=M_F1), index_set=iset, zeta=1e-10)
        worst = max(worst, float(np.abs(ap.coefficients[:, 0] - p.coefficients_on(iset)).max()))
    ok = worst <= 1e-4
    report("6 sparse recovery", ok, f"max coefficient error {worst:.2e} (<= 1e-4) on 10/10 seeds")
    assert ok


# 7 -------------------------------------------------------------------------

def test_noise_linearity():
    parts = []
    ok = True
    for eta in (1e-3, 1e-2):
        worst = max(f1_error(seed, 1e-8, eta) for seed in range(5))
        ok &= worst <= 10 * eta
        parts.append(f"eta={eta:.0e}: max error {worst:.2e} (<= {10 * eta:.0e})")
    report("7 noise linearity", ok, "; ".join(parts) + " over 5 seeds")
    assert ok


# 8 -------------------------------------------------------------------------

def structural_checks():
    out = {}
    # orthonormality against Gauss rules of the matching measure
    x, wq = np.polynomial.legendre.leggauss(500)
    V = eval_1d("legendre", 20, x)
    dev_l = np.abs(V.T @ (wq[:, None] / 2 * V) - np.eye(21)).max()
    x, wq = np.polynomial.chebyshev.chebgauss(500)
    V = eval_1d("chebyshev", 20, x)
    dev_c = np.abs(V.T @ (wq[:, None] / np.pi * V) - np.eye(21)).max()
    out["orthonormality"] = (max(dev_l, dev_c) <= 1e-10, f"{max(dev_l, dev_c):.1e} <= 1e-10")

    rng = np.random.default_rng(0)
    K = 3
    Mg = rng.standard_normal((K, K))
    Gm = Mg @ Mg.T + np.eye(K)
    G = GramOperator(Gm)
    # prox identity: P = prox(P) + projection onto the radius-t V-ball
    P = rng.standard_normal((8, K))
    t = rng.random(8) * 2
    nrm = np.sqrt(np.einsum("ij,jk,ik->i", P, Gm, P))
    dev = np.abs(P - prox_shrink(P, t, G) - P * np.minimum(1, t / nrm)[:, None]).max()
    out["prox identities"] = (dev <= 1e-12, f"{dev:.1e} <= 1e-12")
    worst = max(block_frobenius_G(proj_dual_ball(rng.standard_normal((6, K)) * s, G), G)
                for s in np.logspace(-2, 2, 50))
    out["dual-ball feasibility"] = (worst <= 1 + 1e-12, f"{worst:.15f} <= 1 + 1e-12")
    A = rng.standard_normal((7, 9)) + 1j * rng.standard_normal((7, 9))
    C = rng.standard_normal((9, K)) + 1j * rng.standard_normal((9, K))
    Xi = rng.standard_normal((7, K)) + 1j * rng.standard_normal((7, K))
    lhs, rhs = np.vdot(Xi, apply_A(A, C)), np.vdot(apply_A_adjoint(A, Xi), C)
    rel = abs(lhs - rhs) / abs(lhs)
    out["adjoint consistency"] = (rel <= 1e-10, f"{rel:.1e} <= 1e-10")
    card_ok = all(len(hyperbolic_cross(n, d)) <= min(cardinality_bounds(n, d))
                  for n in (2, 8, 32, 100) for d in (1, 2, 3, 4))
    out["cross cardinality bounds"] = (card_ok, "all (n, d) in {2,8,32,100} x {1..4}")
    B = rng.standard_normal((7, K))
    Ar = rng.standard_normal((7, 9)) / 3
    nA = np.linalg.norm(Ar, 2)
    cfg = SolverConfig(lam=0.1, tau=1 / nA, sigma=1 / nA, T=5, R=10, zeta=1e-3, s=1.5)
    _, rep = restarted(Ar, B, np.ones(9), G, cfg)
    eps = [rep.epsilon[0]]
    for _ in range(10):
        eps.append(cfg.r * (eps[-1] + cfg.zeta))
    out["epsilon recursion"] = (eps == rep.epsilon, "bitwise equal to the left fold")
    M = rng.standard_normal((K, K)) + 3 * np.eye(K)
    MinvT = np.linalg.inv(M).T
    C1, _ = restarted(Ar, B, np.ones(9), G, cfg)
    C2, _ = restarted(Ar, B @ MinvT, np.ones(9), M.T @ Gm @ M, cfg)
    dev = np.abs(C2 - C1 @ MinvT).max()
    out["Gram invariance"] = (dev <= 1e-8, f"{dev:.1e} <= 1e-8")
    vals = []
    for q in (33, 65):
        mesh = StructuredMesh(q)
        vals.append(solve_diffusion(assemble(mesh, 1.0), 10.0)[mesh.center_dof()])
    rel = abs(vals[0] - vals[1]) / abs(vals[1])
    out["FEM refinement"] = (rel <= 0.02, f"{rel:.1e} <= 2e-2")
    return out


def test_structural_suites():
    checks = structural_checks()
    ok = all(v[0] for v in checks.values())
    detail = "; ".join(f"{k} {'ok' if v[0] else 'FAILED'} ({v[1]})" for k, v in checks.items())
    report("8 structural suites", ok, detail)
    assert ok


# smoke: high-dimensional figures at reduced size --------------------------

@pytest.mark.parametrize("name,d,n,m,q", [("f2", 16, 16, 1000, 33), ("f4", 30, 10, 500, 9)])
def test_high_dimensional_smoke(name, d, n, m, q):
    t0 = time.perf_counter()
    f = get_function(name, d=d, q=q)
    quad = monte_carlo(d, 1000, 1, "legendre")
    ref = f.batch(quad.nodes)
    Y = sample_points(m, d, "legendre", np.random.default_rng(0))
    ap, rep = approximate(Y, f.batch(Y), ProblemSpec(d, m=m), f.gram, n=n, zeta=1e-4,
                          total_iterations=400)
    err = relative_error(ap, ref, f.gram, quad)
    ok = err < 0.1
    report(f"smoke {name}", ok, f"d={d}, N={len(ap.index_set)}, m={m}: relative error {err:.2e} (< 1e-1), "
                                f"{time.perf_counter() - t0:.0f} s")
    assert ok


if __name__ == "__main__":
    tests = [test_ergodic_rate_bound, test_restart_slope, test_f1_accuracy, test_f3_accuracy,
             test_zeta_insensitivity, test_sparse_recovery, test_noise_linearity,
             test_structural_suites]
    for fn in tests:
        try:
            fn()
        except AssertionError:
            pass
    for args in [("f2", 16, 16, 1000, 33), ("f4", 30, 10, 500, 9)]:
        try:
            test_high_dimensional_smoke(*args)
        except AssertionError:
            pass
