"""Acceptance criteria 1 to 9.

Each test prints one ``criterion N: PASS/FAIL`` line (collected in the terminal
summary) before asserting.  Expected values come from closed forms or from the
independent direct minimizer in :mod:`marginbound.oracle`, never from the
Newton solver itself.
"""
import time

import numpy as np
import pytest

from marginbound import (DiagonalCounterexampleSpec, FeasibleSet, MarginalSet, MultiplierSet, SolveOptions,
                         assemble_diagonal, build_witness, certify_divergence, correlated_gaussian, integrate,
                         min_norm_direct, nonuniqueness_witness, null_space_element, random_feasible, residual,
                         residual_jacobian, solve_newton, solve_p2, uniform_density, weighted_marginals)
from marginbound.counterexamples import block_grid
from marginbound.grid import marginal_density

from conftest import mixture3, smooth_field, unit_grid


def diagonal_half(K, per_unit):
    return assemble_diagonal(DiagonalCounterexampleSpec(0.5, np.arange(1, K + 1) ** -2.0 /
                                                        np.sum(np.arange(1, K + 1) ** -2.0)),
                             block_grid(K, per_unit))


def make_density(kind, n, N):
    if kind == "uniform":
        return uniform_density(unit_grid(n, N))
    if kind == "mixture":
        return mixture3(unit_grid(n, N))
    K, per_unit = N
    return diagonal_half(K, per_unit)


# (density, dimension, nodes per axis or (K, nodes per block), p)
INSTANCES = [
    ("uniform", 2, 8, 1.5), ("uniform", 2, 16, 2.0), ("uniform", 2, 32, 3.0), ("uniform", 2, 24, 1.5),
    ("uniform", 3, 6, 1.5), ("uniform", 3, 12, 3.0),
    ("mixture", 2, 12, 1.5), ("mixture", 2, 24, 2.0), ("mixture", 2, 32, 3.0), ("mixture", 2, 20, 3.0),
    ("mixture", 3, 8, 1.5), ("mixture", 3, 10, 2.0), ("mixture", 3, 12, 3.0), ("mixture", 3, 12, 1.5),
    ("mixture", 3, 6, 2.0),
    ("diagonal", 2, (4, 4), 1.5), ("diagonal", 2, (4, 8), 2.0), ("diagonal", 2, (4, 8), 3.0),
    ("diagonal", 2, (8, 2), 3.0), ("diagonal", 2, (8, 4), 1.5),
]


def weighted_p_norm(values, w, p):
    return integrate(np.abs(values) ** p, w) ** (1.0 / p)


def marginal_sup(values, w):
    return max(float(np.max(np.abs(a))) for a in weighted_marginals(values, w).arrays)


@pytest.fixture(scope="module")
def solved():
    """Solve every instance with Newton and with the oracle; record wall time."""
    out = []
    start = time.perf_counter()
    for seed, (kind, n, N, p) in enumerate(INSTANCES):
        w = make_density(kind, n, N)
        g = weighted_marginals(smooth_field(w.grid, seed), w)
        phi, rep = solve_newton(w, g, p)
        orc = min_norm_direct(w, g, p)
        out.append({"label": f"{kind} n={n} N={N} p={p}", "w": w, "g": g, "p": p, "phi": phi, "rep": rep,
                    "oracle": orc})
    return out, time.perf_counter() - start


def test_criterion_1_hypercube_closed_form(criterion):
    start = time.perf_counter()
    errors = {}
    for N in (64, 128):
        g = unit_grid(2, N)
        w = uniform_density(g)
        x, y = g.mesh()
        _, rep = solve_p2(w, weighted_marginals(x + y, w))
        errors[N] = abs(rep.bound_value - 7 / 6)
    elapsed = time.perf_counter() - start
    ok = errors[64] <= 2e-3 and errors[128] <= errors[64] / 2 and elapsed < 5.0
    criterion(1, ok, f"err64={errors[64]:.3e} err128={errors[128]:.3e} "
                     f"ratio={errors[64] / errors[128]:.2f} time={elapsed:.2f}s")
    assert ok


def test_criterion_2_solver_matches_oracle(solved, criterion):
    rows, elapsed = solved
    worst, failures = 0.0, []
    for r in rows:
        value = r["oracle"].value
        gap = abs(r["rep"].bound_value - value)
        worst = max(worst, gap / (1 + abs(value)))
        if not (r["rep"].converged and gap <= 1e-6 * (1 + abs(value))):
            failures.append(r["label"])
    ok = not failures and len(rows) == 20 and elapsed < 180.0
    criterion(2, ok, f"{len(rows)} instances worst scaled gap={worst:.2e} time={elapsed:.1f}s "
                     f"failures={failures}")
    assert ok


def test_criterion_3_feasible_fields_respect_bound(solved, criterion):
    scales = (1e-3, 1e-1, 1.0)
    worst, bad = np.inf, []
    for k, r in enumerate(solved[0]):
        w, p = r["w"], r["p"]
        bound = r["rep"].bound_value
        fs = FeasibleSet(w, r["g"])
        fields = []
        for j, s in enumerate(scales):
            fields += random_feasible(w, r["g"], seed=1000 * k + j, count=34 if j < 2 else 32,
                                      base=r["oracle"].h, scale=s)
        assert len(fields) == 100
        for h in fields:
            norm_p = integrate(np.abs(h.values) ** p, w)
            slack = (norm_p - bound) / (1 + bound)
            worst = min(worst, slack)
            if slack < -1e-8 or fs.residual(h) > 1e-10:
                bad.append(r["label"])
                break
    ok = not bad
    criterion(3, ok, f"2000 feasible fields, min (norm^p - bound)/(1+bound)={worst:.2e} failures={bad}")
    assert ok


def test_criterion_4_first_variation_vanishes(solved, criterion):
    worst_ratio, worst_marg, bad = 0.0, 0.0, []
    for k, r in enumerate(solved[0]):
        w, p = r["w"], r["p"]
        h = r["rep"].minimizer.values
        grad = np.sign(h) * np.abs(h) ** (p - 1)
        rng = np.random.default_rng(500 + k)
        for _ in range(50):
            phi = null_space_element(rng.standard_normal(w.grid.shape), w).values
            ratio = abs(integrate(grad * phi, w)) / weighted_p_norm(phi, w, p)
            marg = marginal_sup(phi, w)
            worst_ratio, worst_marg = max(worst_ratio, ratio), max(worst_marg, marg)
            if ratio > 1e-8 or marg > 1e-10:
                bad.append(r["label"])
                break
    ok = not bad
    criterion(4, ok, f"1000 null-space samples, worst |<grad,phi>|/||phi||_p={worst_ratio:.2e} "
                     f"worst marginal residual={worst_marg:.2e} failures={bad}")
    assert ok


def test_criterion_5_jacobian_central_differences(criterion):
    worst, step = 0.0, 1e-6
    for kind, N in (("uniform", 8), ("mixture", 8), ("diagonal", (4, 2))):
        w = make_density(kind, 2, N)
        g = w.grid
        zero = MarginalSet(g, tuple(np.zeros(m) for m in g.shape))
        for p in (1.5, 2.0, 3.0):
            rng = np.random.default_rng(int(10 * p))
            x = np.concatenate([rng.uniform(0.5, 1.5, g.shape[0]), rng.uniform(-0.2, 0.2, g.shape[1])])
            J = residual_jacobian(MultiplierSet.from_stacked(g, x, p), w)
            fd = np.empty_like(J)
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = step
                fp = np.concatenate(residual(MultiplierSet.from_stacked(g, x + e, p), w, zero).marginal)
                fm = np.concatenate(residual(MultiplierSet.from_stacked(g, x - e, p), w, zero).marginal)
                fd[:, k] = (fp - fm) / (2 * step)
            worst = max(worst, np.max(np.abs(J - fd)) / np.max(np.abs(fd)))
    ok = worst <= 1e-5
    criterion(5, ok, f"3 densities x p in (1.5, 2, 3) on 8x8, worst relative error={worst:.2e}")
    assert ok


def test_criterion_6_initializations_agree(criterion):
    worst = 0.0
    for n, N, p, seed in ((2, 16, 1.5, 1), (2, 16, 3.0, 2), (3, 8, 1.5, 3), (3, 8, 4.0, 4)):
        w = mixture3(unit_grid(n, N))
        g = weighted_marginals(smooth_field(w.grid, seed), w)
        a, ra = solve_newton(w, g, p, SolveOptions(init="zeros"))
        b, rb = solve_newton(w, g, p, SolveOptions(init="from_p2"))
        assert ra.converged and rb.converged
        worst = max(worst, float(np.max(np.abs(a.phi_bar() - b.phi_bar()))))
    ok = worst <= 1e-7
    criterion(6, ok, f"zeros vs from_p2 on product mixtures, max |Phibar difference|={worst:.2e}")
    assert ok


def test_criterion_7_q2_divergence_certificate(criterion):
    start = time.perf_counter()
    ws = build_witness(2.0, 512)
    cert = certify_divergence(ws, [64, 128, 256, 512])
    elapsed = time.perf_counter() - start
    ok = (cert.holds and min(cert.growth_ratios) >= 1.2 and max(cert.increment_ratios) <= 0.9
          and cert.sum_pair == 0.0 and elapsed < 1.0)
    criterion(7, ok, f"growth ratios={np.round(cert.growth_ratios, 3).tolist()} "
                     f"increment ratios={np.round(cert.increment_ratios, 3).tolist()} "
                     f"sum_pair={cert.sum_pair} time={elapsed:.3f}s")
    assert ok


def test_criterion_8_nonuniqueness_witness(criterion):
    nu = nonuniqueness_witness(build_witness(2.0, 512))
    chk = nu.p2_check()
    res = max(nu.eq1_residual, nu.eq2_residual, nu.eq3_residual)
    pair_zero = bool(np.all(nu.witness.f + nu.witness.g == 0))
    ok = (res <= 1e-12 and chk["singular"] and chk["singular_value_ratio"] < 1e-10
          and chk["null_vector_emitted"] and chk["witness_residual"] <= 1e-12 and nu.nonzero and pair_zero)
    criterion(8, ok, f"K=512 residual={res:.1e} singular ratio={chk['singular_value_ratio']:.1e} "
                     f"null vector={chk['null_vector_emitted']} nonzero={nu.nonzero} f+g=0: {pair_zero}")
    assert ok


def test_criterion_9_constant_marginal_ratio(criterion):
    densities = {
        "uniform": uniform_density(unit_grid(2, 10)),
        "mixture2d": mixture3(unit_grid(2, 12)),
        "mixture3d": mixture3(unit_grid(3, 6)),
        "gaussian": correlated_gaussian(unit_grid(2, 10), 0.6),
        "diagonal": diagonal_half(4, 3),
    }
    worst_h, worst_b = 0.0, 0.0
    for name, w in densities.items():
        for c in (1.7, -0.6):
            g = MarginalSet(w.grid, tuple(c * marginal_density(w, i) for i in range(w.grid.ndim)))
            for p in (1.5, 2.0, 3.0, 5.0):
                _, rep = solve_newton(w, g, p)
                worst_h = max(worst_h, float(np.max(np.abs(rep.minimizer.values - c))))
                worst_b = max(worst_b, abs(rep.bound_value - abs(c) ** p))
    ok = worst_h <= 1e-10 and worst_b <= 1e-10
    criterion(9, ok, f"5 densities x c in (1.7, -0.6) x p in (1.5, 2, 3, 5): "
                     f"max |h - c|={worst_h:.1e} max |bound - |c|^p|={worst_b:.1e}")
    assert ok
