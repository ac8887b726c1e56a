import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginbound import (ConfigurationError, InputError, MarginalSet, MultiplierSet, PositivityError,
                         SolveOptions, build_grid, integrate, lower_bound, normalize_multipliers,
                         reconstruct_minimizer, residual, residual_jacobian, solve_newton, solve_p2,
                         uniform_density, weighted_marginals)
from marginbound.grid import marginal_density

from conftest import mixture3, smooth_marginals, unit_grid


def phis(grid, arrays, p):
    return MultiplierSet(grid, tuple(np.asarray(a, float) for a in arrays), p)


def test_reconstruct_examples():
    g = unit_grid(2, 3)
    h = reconstruct_minimizer(phis(g, [np.full(3, 2.0), np.zeros(3)], 2.0))
    np.testing.assert_allclose(h.values, 1.0)
    # Phibar = -8 at every node, p = 4: sign(-8) 8^(1/3)
    h = reconstruct_minimizer(phis(g, [np.full(3, -16.0), np.zeros(3)], 4.0))
    np.testing.assert_allclose(h.values, -2.0, rtol=1e-14)
    h = reconstruct_minimizer(phis(g, [np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])], 3.0))
    assert h.values[0, 0] == 0.0 and np.signbit(h.values[0, 0]) == np.signbit(0.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_residual_constant_case(p):
    c = -0.7
    g = build_grid([(0, 1), (0, 2)], [6, 5])
    w = mixture3(g)
    gm = weighted_marginals(c, w)
    phi = phis(g, [np.full(6, 2 * np.sign(c) * abs(c) ** (p - 1)), np.zeros(5)], p)
    assert residual(phi, w, gm).sup <= 1e-12


def test_residual_of_zero_multipliers_is_minus_g():
    w = mixture3(unit_grid(2, 6))
    gm = smooth_marginals(w, 3)
    r = residual(MultiplierSet.zeros(w.grid, 2.5), w, gm)
    for a, b in zip(r.marginal, gm.arrays):
        np.testing.assert_array_equal(a, -b)


def test_p2_hypercube_against_closed_form():
    g = unit_grid(2, 32)
    w = uniform_density(g)
    x, y = g.mesh()
    gm = weighted_marginals(x + y, w)
    phi, rep = solve_p2(w, gm)
    assert rep.converged and rep.final_residual_inf <= 1e-12
    # uniform weight: minimizer is g_1 + g_2 - 1 = x + y, so Phibar = 2 h / 2 ... = x + y
    np.testing.assert_allclose(phi.phi_bar(), x + y + 0 * y, atol=1e-12)
    quad = sum(gm[i] ** 2 @ g.axes[i].quad_weights for i in range(2)) - 1.0
    assert abs(rep.bound_value - quad) <= 1e-12


def test_p2_constant_ratio_gives_constant_phibar():
    w = mixture3(unit_grid(3, 5))
    c = 1.7
    phi, rep = solve_p2(w, MarginalSet(w.grid, tuple(c * marginal_density(w, i) for i in range(3))))
    np.testing.assert_allclose(phi.phi_bar(), c, rtol=1e-12)
    assert abs(rep.bound_value - c * c) <= 1e-12


def test_p2_newton_single_step():
    w = uniform_density(unit_grid(2, 16))
    gm = smooth_marginals(w, 11)
    _, rep = solve_newton(w, gm, 2.0, SolveOptions(init="zeros"))
    assert rep.converged and rep.iterations == 1


@pytest.mark.parametrize("init", ["from_p2", "from_marginal_ratio", "zeros"])
@pytest.mark.parametrize("p", [1.2, 1.5, 3.0, 5.0])
def test_all_inits_converge(init, p):
    w = mixture3(unit_grid(2, 12))
    gm = smooth_marginals(w, 5)
    phi, rep = solve_newton(w, gm, p, SolveOptions(init=init))
    assert rep.converged, rep.warnings
    assert max(rep.marginal_residuals) <= 1e-10
    assert max(rep.normalization_residuals) <= 1e-10
    assert phi.normalized == (False, True)


def test_user_init_and_homotopy_path():
    w = uniform_density(unit_grid(2, 10))
    gm = smooth_marginals(w, 2)
    phi2, _ = solve_p2(w, gm)
    _, rep = solve_newton(w, gm, 4.0, SolveOptions(homotopy_steps=2))
    assert rep.homotopy_path == pytest.approx((8 / 3, 10 / 3, 4.0))
    _, rep_u = solve_newton(w, gm, 2.5, SolveOptions(init="user", user_init=phi2))
    assert rep_u.converged and rep_u.homotopy_path == (2.5,)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_jacobian_matches_central_differences(p, seed):
    rng = np.random.default_rng(seed)
    g = build_grid([(0, 1), (0, 1.5)], 8)
    w = mixture3(g)
    zero = MarginalSet(g, (np.zeros(8), np.zeros(8)))
    sign = 1.0 if seed % 2 == 0 else -1.0
    x = np.concatenate([sign * rng.uniform(0.5, 1.5, 8), rng.uniform(-0.2, 0.2, 8)])
    J = residual_jacobian(MultiplierSet.from_stacked(g, x, p), w)
    step = 1e-6
    fd = np.empty_like(J)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        fp = np.concatenate(residual(MultiplierSet.from_stacked(g, x + e, p), w, zero).marginal)
        fm = np.concatenate(residual(MultiplierSet.from_stacked(g, x - e, p), w, zero).marginal)
        fd[:, k] = (fp - fm) / (2 * step)
    assert np.max(np.abs(J - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_jacobian_is_symmetric_after_axis_scaling():
    g = unit_grid(2, 6)
    w = mixture3(g)
    x = np.random.default_rng(1).normal(size=12) + 1
    J = residual_jacobian(MultiplierSet.from_stacked(g, x, 3.0), w, smoothing_eps=1e-12)
    a = np.concatenate([ax.quad_weights for ax in g.axes])
    H = a[:, None] * J
    np.testing.assert_allclose(H, H.T, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-5, 5), p=st.sampled_from([1.5, 2.0, 3.0]), seed=st.integers(0, 2**16))
def test_gauge_shift_invariance(c, p, seed):
    g = unit_grid(2, 5)
    w = mixture3(g)
    rng = np.random.default_rng(seed)
    a0, a1 = rng.normal(size=5), rng.normal(size=5)
    base = phis(g, [a0, a1], p)
    shifted = phis(g, [a0 + c, a1 - c], p)
    np.testing.assert_allclose(reconstruct_minimizer(shifted).values, reconstruct_minimizer(base).values,
                               rtol=1e-12, atol=1e-12)
    b0, b1 = lower_bound(base, w), lower_bound(shifted, w)
    assert abs(b0 - b1) <= 1e-12 * max(1.0, b0)
    n0 = normalize_multipliers(base, w)
    np.testing.assert_allclose(n0.phi_bar(), base.phi_bar(), atol=1e-12)
    assert abs(n0[1] @ (g.axes[1].quad_weights * marginal_density(w, 1))) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16), p=st.sampled_from([1.5, 2.5, 3.0]))
def test_random_instances_converge(seed, p):
    w = mixture3(unit_grid(2, 6))
    gm = smooth_marginals(w, seed)
    _, rep = solve_newton(w, gm, p)
    assert rep.converged
    assert np.isfinite(rep.bound_value) and rep.bound_value >= 0


@pytest.mark.parametrize("make", [uniform_density, mixture3])
def test_p2_paths_agree(make):
    w = make(build_grid([(0, 1), (0, 1), (0, 1)], 6))
    gm = smooth_marginals(w, 8)
    a, _ = solve_p2(w, gm)
    b, rep = solve_newton(w, gm, 2.0, SolveOptions(init="zeros"))
    assert rep.converged
    assert np.max(np.abs(a.phi_bar() - b.phi_bar())) <= 1e-8


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_smoothing_eps_halving(p):
    w = mixture3(unit_grid(2, 12))
    c = weighted_marginals(2.0 + sum(w.grid.mesh()), w)  # Phibar stays well away from zero
    _, r1 = solve_newton(w, c, p, SolveOptions(smoothing_eps=1e-6))
    _, r2 = solve_newton(w, c, p, SolveOptions(smoothing_eps=5e-7))
    assert r1.converged and r2.converged
    assert abs(r1.bound_value - r2.bound_value) < 1e-9


def test_bound_lower_bound_examples():
    w = mixture3(unit_grid(2, 7))
    for p in (1.5, 2.0, 4.0):
        assert lower_bound(phis(w.grid, [np.full(7, 2.0), np.zeros(7)], p), w) == pytest.approx(1.0, abs=1e-12)
        assert lower_bound(MultiplierSet.zeros(w.grid, p), w) == 0.0


def test_nonconvergence_is_reported_not_raised():
    w = uniform_density(unit_grid(2, 16))
    x, y = w.grid.mesh()
    _, rep = solve_newton(w, weighted_marginals(x - y, w), 5.0, SolveOptions(max_iter=2))
    assert not rep.converged
    assert rep.iterations <= 2
    assert any("tol_residual" in m for m in rep.warnings)


def test_mass_mismatch_is_input_error():
    w = uniform_density(unit_grid(2, 4))
    bad = MarginalSet(w.grid, (np.ones(4), np.full(4, 1.0 + 1e-6)))
    with pytest.raises(InputError, match="marginal mass mismatch"):
        solve_newton(w, bad, 3.0)
    with pytest.raises(InputError, match="marginal mass mismatch"):
        solve_p2(w, bad)


def test_invalid_inputs():
    w = uniform_density(unit_grid(2, 4))
    g = weighted_marginals(1.0, w)
    with pytest.raises(ConfigurationError):
        solve_newton(w, g, 1.0)
    with pytest.raises(ConfigurationError):
        SolveOptions(init="random")
    with pytest.raises(ConfigurationError):
        SolveOptions(init="user")
    zero = w.with_values(np.where(np.eye(4) > 0, 1.0, 0.0))
    with pytest.raises(PositivityError):
        solve_newton(zero, weighted_marginals(1.0, zero), 2.0)


def test_truncated_domain_warns():
    g = build_grid([(-3, 3), (-3, 3)], 10, truncated=True)
    w = uniform_density(g)
    _, rep = solve_newton(w, weighted_marginals(np.cos(g.mesh()[0]), w), 3.0)
    assert rep.truncated == (True, True)
    assert any("truncated" in m for m in rep.warnings)


def test_report_serializes():
    w = uniform_density(unit_grid(2, 4))
    _, rep = solve_newton(w, weighted_marginals(sum(w.grid.mesh()), w), 3.0)
    d = rep.to_dict()
    assert "minimizer" not in d and d["converged"] is True
    assert d["bound_value"] == pytest.approx(integrate(np.abs(rep.minimizer.values) ** 3, w))
