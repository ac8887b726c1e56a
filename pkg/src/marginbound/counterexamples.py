"""Finite-truncation certificates for the block-diagonal counterexamples.

Two constructions on the density

    w(x, y) = alpha w0(x, y) + (1 - alpha) sum_k theta_k 1_[k,k+1)(x) 1_[k,k+1)(y):

* a Smirnov-property violation: piecewise-constant ``f(x)``, ``g(y) = -f(y)`` with
  ``sum |f_k| theta_k < inf`` but ``sum |f_k|^q theta_k = inf``, so ``f + g`` lies in
  ``L^q(w)`` while ``f`` and ``g`` do not;
* non-uniqueness of the ``p = 2`` multiplier system at ``alpha = 0``: the pair
  ``(f, -f)`` solves the homogeneous equations once ``f_1`` is chosen to make
  ``int g w_Y = 0``.

Divergence is only ever certified as a growth trend of partial sums along a
ladder of truncation lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .densities import DiagonalCounterexampleSpec, ProductMixtureSpec, assemble_diagonal, power_law_theta
from .errors import ConfigurationError, DomainError
from .grid import GridSpec, MarginalSet, ScalarField, build_grid, integrate, marginal_density, marginalize
from .solver import MultiplierSet, residual, solve_p2

__all__ = [
    "WitnessSequences",
    "DivergenceCertificate",
    "SmirnovViolation",
    "NonUniquenessWitness",
    "build_witness",
    "default_exponents",
    "certify_divergence",
    "smirnov_violation_report",
    "nonuniqueness_witness",
    "block_grid",
    "default_ladder",
]

GROWTH_FACTOR = 1.2
SHRINK_FACTOR = 0.9


@dataclass(frozen=True)
class WitnessSequences:
    q: float
    theta: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    family: str = "user"

    def __post_init__(self):
        theta, f, g = (np.asarray(a, dtype=float).ravel() for a in (self.theta, self.f, self.g))
        if not self.q > 1:
            raise DomainError(f"q must be > 1, got {self.q}")
        if not (theta.size == f.size == g.size):
            raise ConfigurationError("theta, f and g need the same length")
        if np.any(~(theta > 0)) or abs(theta.sum() - 1) > 1e-12:
            raise ConfigurationError("theta must be strictly positive and sum to 1")
        for a in (theta, f, g):
            a.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @property
    def K(self) -> int:
        return int(self.theta.size)

    @property
    def l1_sum(self) -> float:
        """Truncated ``sum |f_k| theta_k``."""
        return float(np.sum(np.abs(self.f) * self.theta))

    @property
    def sum_pair(self) -> float:
        """Truncated ``sum |f_k + g_k|^q theta_k`` (zero when ``g = -f``)."""
        return float(np.sum(np.abs(self.f + self.g) ** self.q * self.theta))

    def to_dict(self) -> dict:
        return {"q": self.q, "K": self.K, "family": self.family, "l1_sum": self.l1_sum,
                "sum_pair": self.sum_pair}


def default_exponents(q: float) -> tuple[float, float]:
    """``(gamma, beta)`` for ``theta_k ~ k^-gamma`` and ``f_k = k^beta``.

    Both sums are pinned to fixed power laws: ``|f_k|^q theta_k = k^-1/2`` (so
    ``S_K ~ K^(1/2)``, growth ``sqrt(2)`` per doubling) and
    ``|f_k| theta_k ~ k^-5/4`` (tail increments shrink by ``2^(-1/4)`` per
    doubling).  That needs ``gamma = (1.25 q - 0.5) / (q - 1)``; for ``q >= 2`` it
    would fall below 2, and ``gamma = 2`` with ``beta = 1.5/q`` is used instead,
    which only makes the first sum converge faster.
    """
    gamma = 2.0 if q >= 2 else (1.25 * q - 0.5) / (q - 1.0)
    return gamma, (gamma - 0.5) / q


def build_witness(q: float, K: int, family: str = "power_law", beta: float | None = None,
                  theta_exponent: float | None = None, theta: Sequence[float] | None = None,
                  f: Sequence[float] | None = None, g: Sequence[float] | None = None) -> WitnessSequences:
    """Sequences ``(theta, f, g)`` for the Smirnov counterexample.

    ``power_law`` uses ``theta_k ~ k^-gamma`` and ``f_k = k^beta`` with defaults
    from :func:`default_exponents` (``q = 2``: ``theta ~ k^-2``, ``f_k = k^0.75``).
    Explicit exponents are accepted only if ``beta - gamma < -1`` (summable
    ``|f| theta``) and ``q beta - gamma >= -1`` (non-summable ``|f|^q theta``).
    ``family='user'`` takes ``theta`` and ``f`` as given.  ``g`` defaults to ``-f``.
    """
    if not q > 1:
        raise DomainError(f"q must be > 1, got {q}")
    if int(K) != K or K < 2:
        raise ConfigurationError(f"K must be an integer >= 2, got {K}")
    k = np.arange(1, K + 1, dtype=float)
    if family == "power_law":
        gamma, beta0 = default_exponents(q)
        gamma = gamma if theta_exponent is None else float(theta_exponent)
        beta = beta0 if beta is None else float(beta)
        if not (beta - gamma < -1 and q * beta - gamma >= -1):
            raise ConfigurationError(
                f"beta={beta:g}, theta exponent {gamma:g}: need beta - gamma < -1 (summable |f| theta) "
                f"and q beta - gamma >= -1 (divergent |f|^q theta)")
        th = power_law_theta(K, gamma)
        ff = k ** beta
    elif family == "user":
        if theta is None or f is None:
            raise ConfigurationError("family='user' needs theta and f")
        th = np.asarray(theta, dtype=float)
        ff = np.asarray(f, dtype=float)
        if th.size != K or ff.size != K:
            raise ConfigurationError("theta and f must have length K")
    else:
        raise ConfigurationError(f"unknown witness family {family!r}")
    if not np.any(ff != 0):
        raise ConfigurationError("f is identically zero: |f|^q theta cannot diverge")
    gg = -ff if g is None else np.asarray(g, dtype=float)
    return WitnessSequences(float(q), th, ff, gg, family)


def default_ladder(K: int, start: int = 64) -> list[int]:
    ladder, k = [], start
    while k <= K:
        ladder.append(k)
        k *= 2
    return ladder


@dataclass
class DivergenceCertificate:
    """Growth trend of ``S_K = sum_{k<=K} |f_k|^q theta_k`` against a summable ``L_K = sum |f_k| theta_k``."""

    ladder: list[int]
    power_sums: list[float]
    l1_sums: list[float]
    growth_ratios: list[float]
    increment_ratios: list[float]
    growth_exponent: float
    monotone: bool
    sum_pair: float
    holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def certify_divergence(ws: WitnessSequences, ladder: Sequence[int] | None = None) -> DivergenceCertificate:
    """Check growth ``S_{K'}/S_K >= 1.2`` and Cauchy increments (ratio <= 0.9) along the ladder.

    A negative result (``holds = False``) is returned, not raised.
    """
    ladder = default_ladder(ws.K) if ladder is None else [int(k) for k in ladder]
    if len(ladder) < 3:
        raise ConfigurationError("ladder needs at least three truncation lengths")
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1 or ladder[-1] > ws.K:
        raise ConfigurationError(f"ladder must increase within [1, {ws.K}]")
    S_all = np.cumsum(np.abs(ws.f) ** ws.q * ws.theta)
    L_all = np.cumsum(np.abs(ws.f) * ws.theta)
    S = [float(S_all[k - 1]) for k in ladder]
    L = [float(L_all[k - 1]) for k in ladder]
    growth = [b / a if a > 0 else float("inf") for a, b in zip(S, S[1:])]
    inc = [b - a for a, b in zip(L, L[1:])]
    inc_ratio = [b / a if a > 0 else float("inf") for a, b in zip(inc, inc[1:])]
    monotone = all(b >= a for a, b in zip(S, S[1:]))
    expo = float(np.polyfit(np.log(ladder), np.log(S), 1)[0]) if min(S) > 0 else float("nan")
    holds = monotone and all(r >= GROWTH_FACTOR for r in growth) and all(r <= SHRINK_FACTOR for r in inc_ratio)
    return DivergenceCertificate(ladder, S, L, growth, inc_ratio, expo, monotone, ws.sum_pair, bool(holds))


def block_grid(K: int, nodes_per_unit: int = 1) -> GridSpec:
    """Midpoint grid on ``[1, K+1)^2`` aligned with the unit blocks."""
    return build_grid([(1.0, K + 1.0)] * 2, K * nodes_per_unit)


def _block_values(grid_axis_nodes: np.ndarray, seq: np.ndarray) -> np.ndarray:
    b = np.floor(grid_axis_nodes).astype(int)
    out = np.zeros(b.shape)
    inside = (b >= 1) & (b <= seq.size)
    out[inside] = seq[b[inside] - 1]
    return out


@dataclass
class SmirnovViolation:
    witness: WitnessSequences
    alpha: float
    integral_pair: float
    background_part: float
    diagonal_part: float
    ladder: list[int]
    partial_f: list[float]
    partial_g: list[float]
    certificate: DivergenceCertificate
    study_mode: bool

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("witness", "certificate")}
        d["witness"] = self.witness.to_dict()
        d["certificate"] = self.certificate.to_dict()
        return d


def smirnov_violation_report(ws: WitnessSequences, alpha: float,
                             w0: ProductMixtureSpec | ScalarField | None = None,
                             grid: GridSpec | None = None, ladder: Sequence[int] | None = None) -> SmirnovViolation:
    """Evaluate ``int |f(x)+g(y)|^q w`` and the growing ``int_{x<K+1} |f|^q w``.

    The pair integral splits as ``alpha int |f+g|^q w0 + (1-alpha) sum theta_k |f_k+g_k|^q``;
    ``alpha = 0`` is accepted and flagged as study mode.
    """
    grid = block_grid(ws.K) if grid is None else grid
    ladder = default_ladder(ws.K) if ladder is None else list(ladder)
    spec = DiagonalCounterexampleSpec(alpha, ws.theta, w0, study_mode=alpha == 0)
    w = assemble_diagonal(spec, grid)
    ax, ay = grid.axes
    fx = _block_values(ax.nodes, ws.f)
    gy = _block_values(ay.nodes, ws.g)
    pair = np.abs(fx[:, None] + gy[None, :]) ** ws.q
    total = integrate(pair, w)
    diag = (1 - alpha) * float(np.sum(ws.theta * np.abs(ws.f + ws.g) ** ws.q))
    bg = 0.0
    if alpha > 0:
        w0_field = assemble_diagonal(DiagonalCounterexampleSpec(1.0, ws.theta, w0), grid)
        bg = alpha * integrate(pair, w0_field)
    wx, wy = marginal_density(w, 0), marginal_density(w, 1)
    cf = np.cumsum(np.abs(fx) ** ws.q * wx * ax.quad_weights)
    cg = np.cumsum(np.abs(gy) ** ws.q * wy * ay.quad_weights)
    upto = [int(np.searchsorted(ax.nodes, k + 1.0)) for k in ladder]
    return SmirnovViolation(
        witness=ws, alpha=float(alpha), integral_pair=total, background_part=bg, diagonal_part=diag,
        ladder=ladder, partial_f=[float(cf[j - 1]) for j in upto], partial_g=[float(cg[j - 1]) for j in upto],
        certificate=certify_divergence(ws, ladder), study_mode=alpha == 0,
    )


@dataclass
class NonUniquenessWitness:
    witness: WitnessSequences
    density: ScalarField = field(repr=False)
    f_field: ScalarField = field(repr=False)
    g_field: ScalarField = field(repr=False)
    eq1_residual: float
    eq2_residual: float
    eq3_residual: float
    nonzero: bool
    sum_vanishes: bool
    ladder: list[int]
    norm_partial_sums: list[float]

    def as_multipliers(self) -> MultiplierSet:
        """The pair as multipliers ``(Phi_1, Phi_2) = (f, g)`` on the grid axes."""
        grid = self.density.grid
        return MultiplierSet(grid, (_block_values(grid.axes[0].nodes, self.witness.f),
                                    _block_values(grid.axes[1].nodes, self.witness.g)), 2.0)

    def p2_check(self) -> dict:
        """Run the direct ``p = 2`` solve with zero marginals and test the witness against it."""
        grid = self.density.grid
        zero = MarginalSet(grid, tuple(np.zeros(n) for n in grid.shape))
        _, rep = solve_p2(self.density, zero)
        res = residual(self.as_multipliers(), self.density, zero)
        return {"singular": rep.singular, "singular_value_ratio": rep.singular_value_ratio,
                "zero_solution_residual": rep.final_residual_inf, "witness_residual": res.sup,
                "null_vector_emitted": rep.null_vector is not None, "report": rep}

    def to_dict(self) -> dict:
        keys = ("eq1_residual", "eq2_residual", "eq3_residual", "nonzero", "sum_vanishes", "ladder",
                "norm_partial_sums")
        d = {k: getattr(self, k) for k in keys}
        d["witness"] = self.witness.to_dict()
        d["study_mode"] = True
        d["f_1"] = float(self.witness.f[0])
        return d


def nonuniqueness_witness(ws: WitnessSequences, grid: GridSpec | None = None, p: float = 2.0,
                          ladder: Sequence[int] | None = None) -> NonUniquenessWitness:
    """Non-trivial solution of the homogeneous ``p = 2`` system on the ``alpha = 0`` density.

    ``f_1`` is replaced by ``-sum_{k>=2} f_k theta_k / theta_1`` and ``g = -f``.
    """
    if p != 2:
        raise ConfigurationError("the non-uniqueness example is Hilbertian: only p = 2 is supported")
    f = np.array(ws.f, dtype=float)
    f[0] = -np.sum(f[1:] * ws.theta[1:]) / ws.theta[0]
    ws = WitnessSequences(ws.q, ws.theta, f, -f, ws.family)
    grid = block_grid(ws.K) if grid is None else grid
    w = assemble_diagonal(DiagonalCounterexampleSpec(0.0, ws.theta, study_mode=True), grid)
    ax, ay = grid.axes
    fx = _block_values(ax.nodes, ws.f)
    gy = _block_values(ay.nodes, ws.g)
    wx, wy = marginal_density(w, 0), marginal_density(w, 1)
    # f(x) w_X(x) + int g(y) w(x, y) dy  and the mirrored equation
    eq1 = fx * wx + marginalize(np.broadcast_to(gy[None, :], grid.shape) * w.values, grid, 0)
    eq2 = gy * wy + marginalize(np.broadcast_to(fx[:, None], grid.shape) * w.values, grid, 1)
    eq3 = float(np.sum(gy * wy * ay.quad_weights))
    ladder = default_ladder(ws.K) if ladder is None else list(ladder)
    sums = np.cumsum(ws.f ** 2 * ws.theta)
    shape = grid.shape
    return NonUniquenessWitness(
        witness=ws, density=w,
        f_field=ScalarField(grid, np.broadcast_to(fx[:, None], shape)),
        g_field=ScalarField(grid, np.broadcast_to(gy[None, :], shape)),
        eq1_residual=float(np.max(np.abs(eq1))), eq2_residual=float(np.max(np.abs(eq2))),
        eq3_residual=abs(eq3), nonzero=bool(np.any(ws.f != 0)),
        sum_vanishes=bool(np.all(ws.f + ws.g == 0)),
        ladder=ladder, norm_partial_sums=[float(sums[k - 1]) for k in ladder],
    )
