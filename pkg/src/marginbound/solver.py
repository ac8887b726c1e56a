"""Multiplier equations for the marginal-constrained weighted p-norm problem.

Unknowns are one-variable functions ``Phi_i`` (one array per axis).  With
``Phibar = (1/n) sum_i Phi_i(xi_i)`` and ``psi(t) = sign(t) |t|^(1/(p-1))`` the
candidate minimizer is ``h = psi(Phibar)`` and the equations read

    F_i(xi_i) = int psi(Phibar) w dxi_i^c - g_i(xi_i) = 0,     i = 1..n,
    N_i       = int Phi_i w_i dxi_i              = 0,     i = 2..n.

Only ``Phibar`` enters ``F``, so the ``Phi_i`` are fixed up to constants summing
to zero; the ``N_i`` pin that gauge.  The ``F`` equations are the gradient of
the convex function

    E(Phi) = (n/q) int |Phibar|^q w - sum_i int Phi_i g_i,    q = p/(p-1),

(scaled by the axis weights), whose Hessian is symmetric positive
semidefinite with exactly the gauge directions as kernel on well-behaved
weights.  Newton steps solve the square bordered system

    [ H + mu D   C^T ] [ d      ]   [ -a F ]
    [ C          0   ] [ lambda ] = [ -C Phi ]

with ``C`` the normalization rows; ``mu`` is a Levenberg-style regularizer that
is switched on only when backtracking fails.  Step acceptance uses Armijo on
``E`` or a decrease of the residual sup norm.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError, InputError, PositivityError, ShapeError
from .grid import GridSpec, MarginalSet, ScalarField, marginal_density, marginalize, weighted_p_norm

__all__ = [
    "MultiplierSet",
    "SolveOptions",
    "SolveReport",
    "Residual",
    "signed_power",
    "reconstruct_minimizer",
    "residual",
    "residual_jacobian",
    "normalize_multipliers",
    "solve_newton",
    "solve_p2",
    "lower_bound",
    "MASS_TOL",
]

log = logging.getLogger(__name__)

MASS_TOL = 1e-8
SINGULAR_RATIO = 1e-10
STALL_WINDOW = 15
INITS = ("from_p2", "from_marginal_ratio", "zeros", "user")


def signed_power(t, a: float) -> np.ndarray:
    """``sign(t) |t|^a`` with ``sign(0) = 0``."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** a


def _psi(t: np.ndarray, p: float, s: float = 0.0) -> np.ndarray:
    """``t (t^2 + s^2)^((2-p)/(2(p-1)))``; equals ``sign(t)|t|^(1/(p-1))`` at ``s = 0``."""
    if s == 0:
        return signed_power(t, 1.0 / (p - 1.0))
    return t * (t * t + s * s) ** ((2.0 - p) / (2.0 * (p - 1.0)))


def _dpsi(t: np.ndarray, p: float, eps: float, s: float = 0.0) -> np.ndarray:
    """Derivative of ``_psi``.

    At ``s = 0`` the singular derivative ``|t|^((2-p)/(p-1))/(p-1)`` is smoothed
    as ``(t^2 + eps^2)^((2-p)/(2(p-1)))/(p-1)``.
    """
    a = (2.0 - p) / (2.0 * (p - 1.0))
    with np.errstate(divide="ignore"):
        if s == 0:
            return (t * t + eps * eps) ** a / (p - 1.0)
        r = t * t + s * s
        return r ** (a - 1.0) * (r + 2.0 * a * t * t)


@dataclass(frozen=True)
class MultiplierSet:
    """Per-axis multiplier arrays; ``normalized[i]`` refers to the gauge condition of axis ``i >= 1``."""

    grid: GridSpec
    arrays: tuple[np.ndarray, ...] = field(repr=False)
    p: float
    normalized: tuple[bool, ...] = ()

    def __post_init__(self):
        arrays = tuple(np.array(a, dtype=float).ravel() for a in self.arrays)
        if len(arrays) != self.grid.ndim or any(a.size != n for a, n in zip(arrays, self.grid.shape)):
            raise ShapeError("multiplier arrays do not match the grid axes")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ConfigurationError("multipliers must be finite")
        if not self.p > 1:
            raise ConfigurationError(f"p must be > 1, got {self.p}")
        for a in arrays:
            a.setflags(write=False)
        object.__setattr__(self, "arrays", arrays)
        if not self.normalized:
            object.__setattr__(self, "normalized", (False,) * len(arrays))

    def __getitem__(self, i: int) -> np.ndarray:
        return self.arrays[i]

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate(self.arrays)

    def phi_bar(self) -> np.ndarray:
        return _phi_bar(self.grid, self.arrays)

    @classmethod
    def from_stacked(cls, grid: GridSpec, x: np.ndarray, p: float, normalized=()) -> "MultiplierSet":
        return cls(grid, tuple(np.split(np.asarray(x, float), np.cumsum(grid.shape)[:-1])), p, normalized)

    @classmethod
    def zeros(cls, grid: GridSpec, p: float) -> "MultiplierSet":
        return cls(grid, tuple(np.zeros(n) for n in grid.shape), p)


def _phi_bar(grid: GridSpec, arrays) -> np.ndarray:
    out = np.zeros(grid.shape)
    for i, a in enumerate(arrays):
        out = out + grid.axis_view(a, i)
    return out / grid.ndim


@dataclass(frozen=True)
class SolveOptions:
    tol_residual: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    smoothing_eps: float = 1e-12
    init: str = "from_p2"
    user_init: MultiplierSet | None = None
    homotopy_steps: int | None = None

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ConfigurationError("tol_residual must be > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError("max_iter must be an integer >= 1")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if not self.smoothing_eps >= 0:
            raise ConfigurationError("smoothing_eps must be >= 0")
        if self.init not in INITS:
            raise ConfigurationError(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "user" and self.user_init is None:
            raise ConfigurationError("init='user' needs user_init")
        if self.homotopy_steps is not None and self.homotopy_steps < 0:
            raise ConfigurationError("homotopy_steps must be >= 0")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_inf: float
    bound_value: float
    marginal_residuals: tuple[float, ...]
    normalization_residuals: tuple[float, ...]
    p: float
    init: str = ""
    homotopy_path: tuple[float, ...] = ()
    truncated: tuple[bool, ...] = ()
    smoothing_eps: float = 0.0
    singular: bool = False
    singular_value_ratio: float | None = None
    null_vector: MultiplierSet | None = None
    warnings: list[str] = field(default_factory=list)
    minimizer: ScalarField | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("minimizer", "null_vector")}
        d["null_vector"] = None if self.null_vector is None else [a.tolist() for a in self.null_vector.arrays]
        return d


@dataclass(frozen=True)
class Residual:
    marginal: tuple[np.ndarray, ...]
    normalization: tuple[float, ...]

    @property
    def sup(self) -> float:
        vals = [float(np.max(np.abs(a))) for a in self.marginal] + [abs(x) for x in self.normalization]
        return max(vals)

    @property
    def marginal_sup(self) -> tuple[float, ...]:
        return tuple(float(np.max(np.abs(a))) for a in self.marginal)


class _System:
    """Precomputed geometry of one (w, g, p) instance."""

    def __init__(self, w: ScalarField, g: MarginalSet, p: float):
        self.grid = grid = w.grid
        if g.grid != grid:
            raise ShapeError("marginals and density live on different grids")
        self.w = w
        self.g = g
        self.p = float(p)
        self.n = grid.ndim
        self.sizes = grid.shape
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.wm = w.values * grid.measure
        self.a = [ax.quad_weights for ax in grid.axes]
        self.wmarg = [marginal_density(w, i) for i in range(self.n)]
        self.mass = [self.a[i] * self.wmarg[i] for i in range(self.n)]
        self.a_stack = np.concatenate(self.a)
        self.ag = np.concatenate([self.a[i] * g[i] for i in range(self.n)])
        m = self.offsets[-1]
        self.C = np.zeros((self.n - 1, m))
        for i in range(1, self.n):
            self.C[i - 1, self.offsets[i]:self.offsets[i + 1]] = self.mass[i]
        self.reg = np.concatenate(self.mass) / self.n

    def split(self, x):
        return [x[self.offsets[i]:self.offsets[i + 1]] for i in range(self.n)]

    def phibar(self, x):
        return _phi_bar(self.grid, self.split(x))

    def marginal_residual(self, x, p=None, s=0.0) -> list[np.ndarray]:
        p = self.p if p is None else p
        hw = _psi(self.phibar(x), p, s) * self.w.values
        return [marginalize(hw, self.grid, i) - self.g[i] for i in range(self.n)]

    def residual(self, x, p=None, s=0.0) -> Residual:
        F = self.marginal_residual(x, p, s)
        return Residual(tuple(F), tuple(float(v) for v in self.C @ x))

    def energy(self, x, p=None, s=0.0) -> float:
        p = self.p if p is None else p
        q = p / (p - 1.0)
        t = self.phibar(x)
        return float(self.n / q * np.sum(self.wm * (t * t + s * s) ** (q / 2)) - self.ag @ x)

    def hessian(self, x, p=None, eps=0.0, s=0.0) -> np.ndarray:
        """Symmetric block matrix ``a_i(k) dF_i(k)/dPhi_j(l)``."""
        p = self.p if p is None else p
        T = self.wm * _dpsi(self.phibar(x), p, eps, s) / self.n
        m = self.offsets[-1]
        H = np.zeros((m, m))
        for i in range(self.n):
            si = slice(self.offsets[i], self.offsets[i + 1])
            other = tuple(k for k in range(self.n) if k != i)
            H[si, si] = np.diag(np.sum(T, axis=other))
            for j in range(i + 1, self.n):
                sj = slice(self.offsets[j], self.offsets[j + 1])
                rest = tuple(k for k in range(self.n) if k not in (i, j))
                B = np.sum(T, axis=rest) if rest else T
                H[si, sj] = B
                H[sj, si] = B.T
        return H

    def kkt(self, H):
        k = self.n - 1
        return np.block([[H, self.C.T], [self.C, np.zeros((k, k))]])

    def normalize(self, x):
        """Gauge shift: zero w_i-mean for axes >= 1, compensated on axis 0."""
        x = np.array(x, dtype=float)
        parts = self.split(x)
        for i in range(1, self.n):
            c = (self.mass[i] @ parts[i]) / self.mass[i].sum()
            parts[i] -= c
            parts[0] += c
        return x


def _check_inputs(w: ScalarField, g: MarginalSet, p: float, allow_zero: bool = False) -> None:
    if not p > 1:
        raise ConfigurationError(f"p must be > 1, got {p}")
    if w.grid.ndim < 2:
        raise ConfigurationError("problems need n >= 2 axes")
    if allow_zero:
        if np.any(w.values < 0):
            raise PositivityError("density has negative nodes")
    elif not np.all(w.values > 0):
        raise PositivityError("the density must be strictly positive at every node")
    mism = g.mass_mismatch()
    if mism > MASS_TOL:
        raise InputError(f"marginal mass mismatch: axis masses {g.masses().tolist()} "
                         f"differ by {mism:.3e} > {MASS_TOL:g}")


def normalize_multipliers(phi: MultiplierSet, w: ScalarField) -> MultiplierSet:
    """Shift ``Phi_i`` (i >= 1) to zero ``w_i``-mean, compensating on ``Phi_0``; ``Phibar`` is unchanged."""
    g0 = MarginalSet(w.grid, tuple(np.zeros(n) for n in w.grid.shape))
    sys_ = _System(w, g0, phi.p)
    x = sys_.normalize(phi.stacked)
    return MultiplierSet.from_stacked(w.grid, x, phi.p, (False,) + (True,) * (w.grid.ndim - 1))


def reconstruct_minimizer(phi: MultiplierSet, grid: GridSpec | None = None) -> ScalarField:
    """``sign(Phibar) |Phibar|^(1/(p-1))`` on the grid."""
    grid = phi.grid if grid is None else grid
    if grid != phi.grid:
        raise ShapeError("multipliers belong to a different grid")
    return ScalarField(grid, signed_power(phi.phi_bar(), 1.0 / (phi.p - 1.0)))


def residual(phi: MultiplierSet, w: ScalarField, g: MarginalSet) -> Residual:
    if phi.grid != w.grid:
        raise ShapeError("multipliers and density live on different grids")
    return _System(w, g, phi.p).residual(phi.stacked)


def residual_jacobian(phi: MultiplierSet, w: ScalarField, smoothing_eps: float = 0.0) -> np.ndarray:
    """Dense Jacobian ``dF_i(k) / dPhi_j(l)`` of the marginal residuals (rows/cols stacked by axis)."""
    g0 = MarginalSet(w.grid, tuple(np.zeros(n) for n in w.grid.shape))
    sys_ = _System(w, g0, phi.p)
    H = sys_.hessian(phi.stacked, eps=smoothing_eps)
    return H / sys_.a_stack[:, None]


def lower_bound(phi: MultiplierSet, w: ScalarField) -> float:
    """``int |Phibar|^(p/(p-1)) w``, cross-checked against ``||h_*||_p^p``."""
    q = phi.p / (phi.p - 1.0)
    value = float(np.sum(np.abs(phi.phi_bar()) ** q * w.values * w.grid.measure))
    check = weighted_p_norm(reconstruct_minimizer(phi, w.grid), w, phi.p) ** phi.p
    if abs(value - check) > 1e-12 * max(abs(value), abs(check)) + 1e-300:
        raise RuntimeError(f"bound cross-check failed: {value!r} vs {check!r}")
    return value


def _newton(sys_: _System, x: np.ndarray, p: float, opts: SolveOptions, tol: float, max_iter: int,
            s: float = 0.0, stall: int | None = None):
    """Damped, regularized Newton at fixed ``p`` and smoothing ``s``.

    Returns ``(x, iterations, converged, notes)``.  With ``stall`` set, gives up
    once the residual has not halved over that many iterations.
    """
    notes: list[str] = []
    x = sys_.normalize(x)
    res = sys_.residual(x, p, s)
    r = res.sup
    history = [r]
    mu = 0.0
    it = 0
    while r > tol and it < max_iter:
        it += 1
        Fs = np.concatenate(res.marginal) * sys_.a_stack
        H = sys_.hessian(x, p, opts.smoothing_eps, s)
        E0 = sys_.energy(x, p, s)
        accepted = False
        while not accepted:
            K = sys_.kkt(H + mu * np.diag(sys_.reg))
            rhs = np.concatenate([-Fs, -(sys_.C @ x)])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            d = sol[: x.size]
            slope = float(Fs @ d)
            t = opts.damping
            for _ in range(60):
                xt = x + t * d
                with np.errstate(over="ignore", invalid="ignore"):
                    Et = sys_.energy(xt, p, s)
                    rt = sys_.residual(xt, p, s)
                armijo = slope < 0 and Et <= E0 + 1e-4 * t * slope
                if np.isfinite(Et) and np.isfinite(rt.sup) and (armijo or rt.sup < (1 - 1e-4 * t) * r):
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                if t >= opts.damping and mu > 0:
                    mu = mu / 10 if mu > 1e-10 else 0.0
                break
            mu = max(10 * mu, 1e-8)
            if mu > 1e12:
                notes.append(f"line search failed at iteration {it}")
                return x, it, False, notes
        x = sys_.normalize(xt)
        res = sys_.residual(x, p, s)
        r = res.sup
        history.append(r)
        log.debug("p=%g s=%g it=%d t=%g mu=%g residual=%.3e", p, s, it, t, mu, r)
        if stall and len(history) > stall and r > 0.5 * min(history[:-stall]):
            notes.append(f"stalled at p={p:g} after {it} iterations (residual {r:.2e})")
            break
    return x, it, r <= tol, notes


def _continuation(sys_: _System, x: np.ndarray, p: float, opts: SolveOptions, budget: int):
    """Solve with ``psi`` smoothed at level ``s``, shrinking ``s`` to zero.

    Used when plain Newton stalls near ``Phibar = 0`` (typically ``p > 2``, where
    the dual energy is not twice differentiable there).
    """
    scale = max(float(np.max(np.abs(sys_.phibar(x)))), 1e-300)
    total, notes = 0, ["continuation in smoothing level engaged"]
    levels = [scale * 10.0 ** -k for k in range(1, 15)] + [0.0]
    for s in levels:
        last = s == 0.0
        tol = opts.tol_residual if last else max(opts.tol_residual, 1e-3 * s)
        x, it, ok, nt = _newton(sys_, x, p, opts, tol, budget - total, s=s)
        total += it
        notes += nt
        if total >= budget:
            break
    return x, total, ok and last, notes


def _homotopy_path(p: float, steps: int | None) -> list[float]:
    if steps is None:
        steps = 3 if abs(p - 2) > 1 else 0
    return [float(v) for v in np.linspace(2.0, p, steps + 2)[1:]]


def _report(sys_: _System, x, iterations, converged, opts, notes, **kw) -> tuple[MultiplierSet, SolveReport]:
    p = sys_.p
    x = sys_.normalize(x)
    n = sys_.n
    phi = MultiplierSet.from_stacked(sys_.grid, x, p, (False,) + (True,) * (n - 1))
    res = sys_.residual(x)
    if not converged:
        notes.append("did not reach tol_residual")
    rep = SolveReport(
        converged=bool(converged and res.sup <= opts.tol_residual),
        iterations=int(iterations),
        final_residual_inf=res.sup,
        bound_value=lower_bound(phi, sys_.w),
        marginal_residuals=res.marginal_sup,
        normalization_residuals=tuple(abs(v) for v in res.normalization),
        p=p,
        init=opts.init,
        truncated=sys_.grid.truncated,
        smoothing_eps=opts.smoothing_eps,
        warnings=notes,
        minimizer=reconstruct_minimizer(phi, sys_.grid),
        **kw,
    )
    if any(rep.truncated):
        rep.warnings.append("domain truncated: results approximate an unbounded interval")
    return phi, rep


def solve_p2(w: ScalarField, g: MarginalSet) -> tuple[MultiplierSet, SolveReport]:
    """Direct solve of the (linear) ``p = 2`` system.

    The bordered matrix is checked through its singular values; if the ratio
    smallest/largest drops below ``1e-10`` the system is declared singular,
    the minimum-norm solution is returned and the right singular vector is
    attached as a non-uniqueness witness.  Zero density nodes are accepted
    only for densities built in study mode.
    """
    _check_inputs(w, g, 2.0, allow_zero=bool(w.meta.get("study_mode", False)))
    sys_ = _System(w, g, 2.0)
    m = sys_.offsets[-1]
    x0 = np.zeros(m)
    K = sys_.kkt(sys_.hessian(x0, 2.0))
    rhs = np.concatenate([sys_.ag, np.zeros(sys_.n - 1)])
    s = np.linalg.svd(K, compute_uv=False)
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    extra: dict[str, Any] = {"singular_value_ratio": ratio}
    notes = []
    if ratio < SINGULAR_RATIO:
        _, _, vt = np.linalg.svd(K)
        v = vt[-1, :m]
        v = v / np.max(np.abs(v))
        extra["singular"] = True
        extra["null_vector"] = MultiplierSet.from_stacked(w.grid, v, 2.0)
        notes.append(f"singular system (sigma_min/sigma_max = {ratio:.2e}): multipliers not unique")
        x = np.linalg.lstsq(K, rhs, rcond=None)[0][:m]
    else:
        x = np.linalg.solve(K, rhs)[:m]
    opts = SolveOptions(init="from_p2")
    return _report(sys_, x, 1, True, opts, notes, **extra)


def _initial(sys_: _System, opts: SolveOptions, p: float):
    w, g = sys_.w, sys_.g
    if opts.init == "zeros":
        return np.zeros(sys_.offsets[-1])
    if opts.init == "user":
        u = opts.user_init
        if u.grid != w.grid:
            raise ShapeError("user_init lives on a different grid")
        return u.stacked.copy()
    if opts.init == "from_marginal_ratio":
        return np.concatenate([signed_power(g[i] / sys_.wmarg[i], p - 1.0) for i in range(sys_.n)])
    phi2, _ = solve_p2(w, g)
    return phi2.stacked.copy()


def solve_newton(w: ScalarField, g: MarginalSet, p: float,
                 opts: SolveOptions | None = None) -> tuple[MultiplierSet, SolveReport]:
    """Solve the multiplier system for general ``p > 1``.

    Non-convergence is reported (``converged = False``), never raised.  With
    ``init='from_p2'`` and ``|p - 2| > 1`` the solve continues in ``p`` through
    intermediate exponents (``homotopy_steps``, default 3).
    """
    opts = opts or SolveOptions()
    _check_inputs(w, g, p)
    sys_ = _System(w, g, p)
    x = _initial(sys_, opts, p)
    path = _homotopy_path(p, opts.homotopy_steps) if opts.init == "from_p2" else [float(p)]
    total = 0
    notes: list[str] = []
    ok = False
    for k, pk in enumerate(path):
        last = k == len(path) - 1
        tol = opts.tol_residual if last else max(opts.tol_residual, 1e-8)
        x, it, ok, nt = _newton(sys_, x, pk, opts, tol, opts.max_iter - total, stall=STALL_WINDOW)
        total += it
        notes += nt
        if not ok and total < opts.max_iter:
            x, it, ok, nt = _continuation(sys_, x, pk, opts, opts.max_iter - total)
            total += it
            notes += nt
        if not ok:
            if not last:
                notes.append(f"homotopy stopped at p={pk:g}")
            break
    return _report(sys_, x, total, ok and path[-1] == p, opts, notes,
                   homotopy_path=tuple(path))
