"""Brute-force ground truth for the discretized minimization.

The oracle works on the primal problem

    minimize  sum_xi m(xi) w(xi) |h(xi)|^p   subject to   A h = g,

with ``A`` the explicit sparse matrix of weighted marginalizations, and never
touches the multiplier equations or their Newton Jacobian.

* ``p = 2``: one sparse KKT solve in h-space, with the ``n - 1`` redundant
  constraint rows (shared total mass) removed.
* general ``p``: quasi-Newton ascent (L-BFGS) on the Lagrange dual, followed by
  the exact metric projection of the dual's primal point onto ``{A h = g}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, InputError, PositivityError
from .grid import MarginalSet, ScalarField, comarginal_density, integrate, marginalize

__all__ = ["FeasibleSet", "OracleResult", "min_norm_direct", "null_space_element",
           "random_feasible", "mixed_difference_sup"]


@dataclass
class FeasibleSet:
    """Affine set ``{h : A h = g}`` of grid fields with prescribed weighted marginals."""

    w: ScalarField
    g: MarginalSet

    def __post_init__(self):
        if self.g.grid != self.w.grid:
            raise ConfigurationError("marginals and density live on different grids")

    @cached_property
    def A(self) -> sp.csr_matrix:
        grid = self.w.grid
        mw = (self.w.values * grid.measure).ravel()
        idx = np.indices(grid.shape).reshape(grid.ndim, -1)
        rows, vals, off = [], [], 0
        for i, ax in enumerate(grid.axes):
            rows.append(off + idx[i])
            vals.append(mw / ax.quad_weights[idx[i]])
            off += ax.node_count
        cols = np.tile(np.arange(grid.size), grid.ndim)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), cols)), shape=(off, grid.size))

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.concatenate(self.g.arrays)

    @cached_property
    def _metric(self) -> np.ndarray:
        return (self.w.values * self.w.grid.measure).ravel()

    @cached_property
    def _gram_pinv(self) -> np.ndarray:
        A = self.A
        G = (A.multiply(1.0 / self._metric) @ A.T).toarray()
        return scipy.linalg.pinvh(G)

    def residual(self, h) -> float:
        h = h.values if isinstance(h, ScalarField) else np.asarray(h)
        return float(np.max(np.abs(self.A @ h.ravel() - self.rhs)))

    def project(self, h: np.ndarray) -> np.ndarray:
        """Closest feasible field in the ``sum m w h^2`` metric."""
        h = np.asarray(h, dtype=float).ravel()
        lam = self._gram_pinv @ (self.A @ h - self.rhs)
        return h - (self.A.T @ lam) / self._metric

    def null_component(self, u: np.ndarray) -> np.ndarray:
        """Part of ``u`` lying in ``ker A`` (metric-orthogonal decomposition)."""
        u = np.asarray(u, dtype=float).ravel()
        lam = self._gram_pinv @ (self.A @ u)
        return u - (self.A.T @ lam) / self._metric


@dataclass
class OracleResult:
    h: ScalarField
    value: float
    marginal_residual: float
    stationarity: float
    method: str
    iterations: int


def _p2_kkt(fs: FeasibleSet) -> np.ndarray:
    grid = fs.w.grid
    keep = np.ones(fs.A.shape[0], dtype=bool)
    offs = np.cumsum(grid.shape)
    keep[offs[1:] - 1] = False
    A = fs.A[keep]
    b = fs.rhs[keep]
    M = sp.diags(2.0 * fs._metric)
    K = sp.bmat([[M, A.T], [A, None]], format="csc")
    # symmetric fill-reducing ordering: the default column ordering fills in badly here
    sol = spla.spsolve(K, np.concatenate([np.zeros(grid.size), b]), permc_spec="MMD_AT_PLUS_A")
    return sol[: grid.size]


def _dual_lbfgs(fs: FeasibleSet, p: float, tol: float, maxiter: int):
    grid = fs.w.grid
    q = p / (p - 1.0)
    mw = fs._metric
    idx = np.indices(grid.shape).reshape(grid.ndim, -1)
    offs = np.concatenate([[0], np.cumsum(grid.shape)])
    a = np.concatenate([ax.quad_weights for ax in grid.axes])
    # u(xi) = sum_i v_i(xi_i); lift as a sparse 0/1 matrix
    L = sp.csr_matrix((np.ones(grid.ndim * grid.size),
                       (np.tile(np.arange(grid.size), grid.ndim), np.concatenate([offs[i] + idx[i] for i in range(grid.ndim)]))),
                      shape=(grid.size, offs[-1]))
    ag = a * fs.rhs

    def negdual(v):
        u = L @ v
        au = np.abs(u)
        f = np.sum(mw * au ** q) / q - ag @ v
        grad = L.T @ (mw * np.sign(u) * au ** (q - 1.0)) - ag
        return f, grad

    v0 = np.concatenate([fs.g[i] / np.maximum(marginalize(fs.w.values, grid, i), 1e-300) for i in range(grid.ndim)])
    v0 = np.sign(v0) * np.abs(v0) ** (p - 1.0) / grid.ndim
    v, nit = v0, 0
    for _ in range(20):
        res = scipy.optimize.minimize(negdual, v, jac=True, method="L-BFGS-B",
                                      options={"maxiter": maxiter, "maxcor": 50, "ftol": 0.0,
                                               "gtol": tol * 1e-3, "maxfun": 4 * maxiter})
        nit += int(res.nit)
        v = res.x
        # restarts: L-BFGS stops on relative f-reduction well before the gradient is tiny
        if np.max(np.abs(res.jac)) <= tol * a.min() or res.nit <= 1:
            break
    u = L @ v
    return np.sign(u) * np.abs(u) ** (q - 1.0), nit


def min_norm_direct(w: ScalarField, g: MarginalSet, p: float, tol: float = 1e-10,
                    maxiter: int = 20000) -> OracleResult:
    """Minimum of ``||h||_p^p`` over grid fields with weighted marginals ``g``."""
    if not p > 1:
        raise ConfigurationError(f"p must be > 1, got {p}")
    if not np.all(w.values > 0):
        raise PositivityError("oracle needs a strictly positive density")
    if g.mass_mismatch() > 1e-8:
        raise InputError(f"marginal mass mismatch: {g.masses().tolist()}")
    fs = FeasibleSet(w, g)
    if p == 2:
        h, method, nit = _p2_kkt(fs), "kkt", 1
    else:
        h, nit = _dual_lbfgs(fs, p, tol, maxiter)
        method = "dual-lbfgs"
    h = fs.project(h)
    gradient = np.sign(h) * np.abs(h) ** (p - 1.0)
    field = ScalarField(w.grid, h)
    return OracleResult(
        h=field,
        value=integrate(np.abs(h) ** p, w),
        marginal_residual=fs.residual(h),
        stationarity=float(np.max(np.abs(fs.null_component(gradient)))),
        method=method,
        iterations=nit,
    )


def null_space_element(psi, w: ScalarField) -> ScalarField:
    """``psi - sum_i (w_i^c / w) int psi w dxi_i^c + (n - 1) int psi w``.

    All weighted marginals of the result vanish for any strictly positive
    ``w`` (exactly, up to rounding, since tensor quadrature obeys Fubini).
    """
    grid = w.grid
    if not np.all(w.values > 0):
        raise PositivityError("null_space_element needs a strictly positive density")
    v = psi.values if isinstance(psi, ScalarField) else np.asarray(psi, float).reshape(grid.shape)
    n = grid.ndim
    out = v + (n - 1) * integrate(v, w)
    pw = v * w.values
    for i in range(n):
        wc = np.expand_dims(comarginal_density(w, i).values, i)
        out = out - wc / w.values * grid.axis_view(marginalize(pw, grid, i), i)
    return ScalarField(grid, out)


def random_feasible(w: ScalarField, g: MarginalSet, seed: int, count: int,
                    base: ScalarField | None = None, scale: float = 1.0) -> list[ScalarField]:
    """``base`` plus seeded random null-space perturbations.

    ``base`` defaults to the ``p = 2`` oracle minimizer.  Each perturbation is
    ``c * null_space_element(psi)`` with Gaussian node values ``psi`` and a
    Gaussian coefficient ``c`` of standard deviation ``scale``.
    """
    if count <= 0:
        return []
    if base is None:
        base = min_norm_direct(w, g, 2.0).h
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        psi = rng.standard_normal(w.grid.shape)
        c = scale * rng.standard_normal()
        out.append(ScalarField(w.grid, base.values + c * null_space_element(psi, w).values))
    return out


def mixed_difference_sup(field) -> float:
    """Largest second mixed difference over all axis pairs (zero for additively separable fields)."""
    v = field.values if isinstance(field, ScalarField) else np.asarray(field)
    worst = 0.0
    for i in range(v.ndim):
        for j in range(i + 1, v.ndim):
            d = np.diff(np.diff(v, axis=i), axis=j)
            worst = max(worst, float(np.max(np.abs(d))) if d.size else 0.0)
    return worst
