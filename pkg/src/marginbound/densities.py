"""Density families on grids and the weight conditions that imply uniqueness.

Three families are supported:

* finite mixtures of product densities, ``w = sum_j lam_j prod_i w_i^(j)(xi_i)``;
* the diagonal block density ``alpha w0 + (1 - alpha) sum_k theta_k 1_[k,k+1)(x) 1_[k,k+1)(y)``
  used to break uniqueness;
* tabulated densities (values or a callable sampled at the nodes).

Assembled densities are normalized in the quadrature sense and, unless a
study mode explicitly allows zeros, strictly positive.  Provenance is stored
in ``ScalarField.meta["family"]`` for :func:`classify_smirnov`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import AlignmentError, ConfigurationError, DomainError, PositivityError
from .grid import GridSpec, ScalarField, comarginal_density, marginal_density, weighted_p_norm

__all__ = [
    "ProductMixtureSpec",
    "DiagonalCounterexampleSpec",
    "WeightConditionReport",
    "GrowthTable",
    "SmirnovClass",
    "SmirnovVerdict",
    "POSITIVITY_FLOOR",
    "assemble_product_mixture",
    "assemble_diagonal",
    "uniform_density",
    "tabulated_density",
    "correlated_gaussian",
    "power_law_theta",
    "product_mixture_from_tabulated",
    "likelihood_ratio",
    "check_weight_conditions",
    "ratio_growth",
    "classify_smirnov",
]

POSITIVITY_FLOOR = 1e-300
Factor = Callable[[np.ndarray], np.ndarray] | np.ndarray | Sequence[float]


@dataclass(frozen=True)
class ProductMixtureSpec:
    """``weights[j]`` times the product over axes of ``factors[j][i]``.

    Factors are callables of one coordinate array or tables sampled on the
    axis nodes; each is normalized over its axis before mixing.
    """

    weights: tuple[float, ...]
    factors: tuple[tuple[Factor, ...], ...]

    def __post_init__(self):
        weights = tuple(float(x) for x in self.weights)
        factors = tuple(tuple(c) for c in self.factors)
        if len(weights) != len(factors) or not weights:
            raise ConfigurationError("need one mixture weight per component")
        if min(weights) < 0:
            raise ConfigurationError("mixture weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ConfigurationError(f"mixture weights sum to {sum(weights)!r}, not 1")
        if len({len(c) for c in factors}) != 1:
            raise ConfigurationError("every component needs one factor per axis")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def single(cls, *factors: Factor) -> "ProductMixtureSpec":
        return cls((1.0,), (tuple(factors),))

    @property
    def ndim(self) -> int:
        return len(self.factors[0])


def _sample(factor: Factor, nodes: np.ndarray) -> np.ndarray:
    vals = factor(nodes) if callable(factor) else factor
    vals = np.broadcast_to(np.asarray(vals, dtype=float), nodes.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("factor table has non-finite entries")
    if np.any(vals < 0):
        raise ConfigurationError("factor tables must be nonnegative")
    return vals


def _check_positive(values: np.ndarray, what: str) -> None:
    bad = ~(values > POSITIVITY_FLOOR)
    if np.any(bad):
        idx = tuple(int(k) for k in np.argwhere(bad)[0])
        raise PositivityError(f"{what}: {int(bad.sum())} node(s) at or below the floor "
                              f"{POSITIVITY_FLOOR:g}, first at index {idx}")


def assemble_product_mixture(spec: ProductMixtureSpec, grid: GridSpec) -> ScalarField:
    if spec.ndim != grid.ndim:
        raise ConfigurationError(f"spec has {spec.ndim} factors per component, grid has {grid.ndim} axes")
    total = np.zeros(grid.shape)
    for lam, factors in zip(spec.weights, spec.factors):
        if lam == 0:
            continue
        comp = np.ones(())
        for ax, fac in zip(grid.axes, factors):
            vals = _sample(fac, ax.nodes)
            mass = vals @ ax.quad_weights
            if not mass > 0:
                raise ConfigurationError("a factor table integrates to zero")
            comp = np.multiply.outer(comp, vals / mass)
        total += lam * comp
    total /= np.sum(total * grid.measure)
    _check_positive(total, "product mixture")
    return ScalarField(grid, total, {"family": "product_mixture", "components": len(spec.weights)})


def uniform_density(grid: GridSpec) -> ScalarField:
    return assemble_product_mixture(ProductMixtureSpec.single(*([lambda x: np.ones_like(x)] * grid.ndim)), grid)


def tabulated_density(grid: GridSpec, values, meta: Mapping[str, Any] | None = None,
                      normalize: bool = True) -> ScalarField:
    """Density from node values or from a callable of the coordinate arrays."""
    if callable(values):
        vals = np.broadcast_to(values(*grid.mesh()), grid.shape).astype(float)
    else:
        vals = np.asarray(values, dtype=float).reshape(grid.shape)
    _check_positive(vals, "tabulated density")
    if normalize:
        vals = vals / np.sum(vals * grid.measure)
    info = {"family": "tabulated"}
    info.update(meta or {})
    return ScalarField(grid, vals, info)


def correlated_gaussian(grid: GridSpec, rho: float) -> ScalarField:
    """Bivariate standard normal with correlation ``rho`` on a (truncated) box."""
    if grid.ndim != 2 or not -1 < rho < 1:
        raise ConfigurationError("correlated_gaussian needs a 2D grid and |rho| < 1")
    x, y = grid.mesh()
    logw = -(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho))
    return tabulated_density(grid, np.exp(logw), {"name": "correlated_gaussian", "rho": float(rho)})


def product_mixture_from_tabulated(w: ScalarField) -> ProductMixtureSpec:
    """Write a piecewise-constant density as a mixture of cell indicator products.

    One component per node: mixture weight is the cell mass ``w[k] a(k)``,
    factors are the normalized indicators of the cell along each axis.
    """
    grid = w.grid
    mass = w.values * grid.measure
    weights, factors = [], []
    for idx in np.ndindex(grid.shape):
        weights.append(float(mass[idx]))
        comp = []
        for ax, k in zip(grid.axes, idx):
            e = np.zeros(ax.node_count)
            e[k] = 1.0
            comp.append(e)
        factors.append(tuple(comp))
    s = sum(weights)
    return ProductMixtureSpec(tuple(x / s for x in weights), tuple(factors))


def power_law_theta(K: int, exponent: float = 2.0) -> np.ndarray:
    """``theta_k proportional to k^-exponent`` for ``k = 1..K``, summing to one."""
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    t = np.arange(1, K + 1, dtype=float) ** -exponent
    return t / t.sum()


@dataclass(frozen=True)
class DiagonalCounterexampleSpec:
    """Block-diagonal mixture ``alpha w0 + (1 - alpha) sum_k theta_k 1_{B_k}``.

    ``B_k = [k, k+1)^2`` for ``k = 1..K``.  ``background`` is a product-mixture
    spec, a density field on the target grid, or ``None`` for the uniform
    density on the grid.  ``alpha = 0`` requires ``study_mode``.
    """

    alpha: float
    theta: np.ndarray = field(repr=False)
    background: ProductMixtureSpec | ScalarField | None = None
    study_mode: bool = False

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        if theta.size < 1 or np.any(~(theta > 0)):
            raise ConfigurationError("theta entries must be strictly positive")
        if abs(theta.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"theta sums to {theta.sum()!r}, not 1")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.alpha == 0 and not self.study_mode:
            raise PositivityError("alpha = 0 gives a density vanishing off the diagonal; "
                                  "only allowed with study_mode=True")
        object.__setattr__(self, "theta", theta)

    @property
    def K(self) -> int:
        return int(self.theta.size)


def _block_index(grid: GridSpec, K: int) -> list[np.ndarray]:
    """Per-axis block number (1..K, 0 outside) of each node, after alignment checks."""
    if grid.ndim != 2:
        raise AlignmentError("block densities are two-dimensional")
    out = []
    for ax in grid.axes:
        if ax.scheme != "midpoint":
            raise AlignmentError("block densities need midpoint axes (nodes strictly inside cells)")
        per_unit = 1.0 / ax.spacing
        offset = (1.0 - ax.lower) / ax.spacing
        if (abs(per_unit - round(per_unit)) > 1e-9 * per_unit
                or abs(offset - round(offset)) > 1e-9 * max(1.0, abs(offset))):
            raise AlignmentError(f"axis [{ax.lower}, {ax.upper}] with {ax.node_count} nodes "
                                 "is not aligned with unit blocks")
        if ax.lower > 1 + 1e-12 or ax.upper < K + 1 - 1e-12:
            raise AlignmentError(f"axis [{ax.lower}, {ax.upper}] does not cover [1, {K + 1})")
        b = np.floor(ax.nodes).astype(int)
        b[(b < 1) | (b > K)] = 0
        out.append(b)
    return out


def assemble_diagonal(spec: DiagonalCounterexampleSpec, grid: GridSpec) -> ScalarField:
    bx, by = _block_index(grid, spec.K)
    if spec.alpha > 0:
        bg = spec.background
        if bg is None:
            w0 = uniform_density(grid).values
        elif isinstance(bg, ScalarField):
            if bg.grid != grid:
                raise AlignmentError("background density lives on a different grid")
            w0 = bg.values
        else:
            w0 = assemble_product_mixture(bg, grid).values
    else:
        w0 = np.zeros(grid.shape)
    theta = np.concatenate([[0.0], spec.theta])
    diag = np.where(bx[:, None] == by[None, :], theta[bx][:, None], 0.0)
    vals = spec.alpha * w0 + (1 - spec.alpha) * diag
    mass = float(np.sum(vals * grid.measure))
    if abs(mass - 1) > 1e-12:
        raise ConfigurationError(f"assembled block density has mass {mass!r}")
    if spec.alpha > 0:
        _check_positive(vals, "diagonal density")
    meta = {"family": "diagonal", "alpha": float(spec.alpha), "K": spec.K, "study_mode": bool(spec.study_mode)}
    return ScalarField(grid, vals, meta)


def likelihood_ratio(w: ScalarField, i: int, support_only: bool = False) -> ScalarField:
    """Node-wise ``w_i(xi_i) w_i^c(xi_i^c) / w(xi)``.

    With ``support_only`` the ratio is returned on ``{w > 0}`` and set to zero
    elsewhere; ``meta["off_support_nodes"]`` counts the excluded nodes.
    """
    grid = w.grid
    wi = grid.axis_view(marginal_density(w, i), i)
    wc = np.expand_dims(comarginal_density(w, i).values, i)
    num = wi * wc
    support = w.values > 0
    if not np.all(support):
        if not support_only:
            raise DomainError(f"density vanishes at {int((~support).sum())} node(s); "
                              "use support_only=True")
        ratio = np.divide(num, w.values, out=np.zeros(grid.shape), where=support)
        return ScalarField(grid, ratio, {"support_only": True, "off_support_nodes": int((~support).sum())})
    return ScalarField(grid, num / w.values, {"support_only": False, "off_support_nodes": 0})


@dataclass
class GrowthTable:
    """Sup / L^p(w) norms of the likelihood ratio along a family parameter."""

    parameter: str
    values: list[float]
    ratio_sup: list[float]
    ratio_lp: list[float]
    min_factor: float = 1.2

    @property
    def step_factors(self) -> list[float]:
        s = self.ratio_sup
        return [b / a for a, b in zip(s, s[1:])]

    @property
    def grows(self) -> bool:
        f = self.step_factors
        return bool(f) and all(x >= self.min_factor for x in f)

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "values": list(self.values), "ratio_sup": list(self.ratio_sup),
                "ratio_lp": list(self.ratio_lp), "step_factors": self.step_factors, "grows": self.grows}


@dataclass
class WeightConditionReport:
    p: float
    ratio_lp: tuple[float, ...]
    ratio_sup: tuple[float, ...]
    threshold: float
    product_mixture_form: bool
    bounded_ratio: bool
    condition_Lp_ok: bool
    stable_refinement: bool | None = None
    stable_enlargement: bool | None = None
    refined_ratio_sup: tuple[float, ...] | None = None
    enlarged_ratio_sup: tuple[float, ...] | None = None
    violation_witness: GrowthTable | None = None
    truncated: tuple[bool, ...] = ()
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "violation_witness"}
        d["violation_witness"] = None if self.violation_witness is None else self.violation_witness.to_dict()
        return d


def _ratio_norms(w: ScalarField, p: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    lps, sups = [], []
    for i in range(w.grid.ndim):
        r = likelihood_ratio(w, i)
        lps.append(weighted_p_norm(r, w, p))
        sups.append(float(r.values.max()))
    return tuple(lps), tuple(sups)


def _enlarged(grid: GridSpec) -> GridSpec:
    axes = []
    for ax in grid.axes:
        if ax.truncated:
            half = ax.length / 2
            ax = type(ax)(ax.lower - half, ax.upper + half, 2 * ax.node_count, ax.scheme, True)
        axes.append(ax)
    return GridSpec(tuple(axes))


def _stable(coarse: Sequence[float], fine: Sequence[float], rtol: float) -> bool:
    return all(abs(b - a) <= rtol * abs(a) for a, b in zip(coarse, fine))


def check_weight_conditions(w: ScalarField, p: float, density: Callable | None = None,
                            threshold: float = 1e6, stability_rtol: float = 0.1) -> WeightConditionReport:
    """Estimate the likelihood-ratio norms and flag the sufficient conditions.

    A finite grid cannot decide essential boundedness.  ``bounded_ratio`` is
    set only when the largest node ratio is below ``threshold`` and does not
    move by more than ``stability_rtol`` under one dyadic refinement (and,
    for truncated axes, under doubling the truncation box).  Both checks need
    ``density``, a callable of the coordinate arrays used to re-tabulate.
    """
    lp, sup = _ratio_norms(w, p)
    rep = WeightConditionReport(
        p=float(p), ratio_lp=lp, ratio_sup=sup, threshold=float(threshold),
        product_mixture_form=w.meta.get("family") == "product_mixture",
        bounded_ratio=False, condition_Lp_ok=False, truncated=w.grid.truncated,
    )
    if density is None:
        rep.notes.append("no density callable: stability under refinement not tested")
        return rep
    fine = tabulated_density(w.grid.refined(2), density)
    lp_f, sup_f = _ratio_norms(fine, p)
    rep.refined_ratio_sup = sup_f
    rep.stable_refinement = _stable(sup, sup_f, stability_rtol)
    stable_lp = _stable(lp, lp_f, stability_rtol)
    if any(w.grid.truncated):
        big = tabulated_density(_enlarged(w.grid), density)
        lp_b, sup_b = _ratio_norms(big, p)
        rep.enlarged_ratio_sup = sup_b
        rep.stable_enlargement = _stable(sup, sup_b, stability_rtol)
        stable_lp = stable_lp and _stable(lp, lp_b, stability_rtol)
        if not rep.stable_enlargement:
            rep.notes.append("likelihood ratio grows when the truncation box is enlarged")
    enlarge_ok = rep.stable_enlargement is not False
    rep.bounded_ratio = max(sup) < threshold and rep.stable_refinement and enlarge_ok
    rep.condition_Lp_ok = max(lp) < threshold and stable_lp and enlarge_ok
    return rep


def ratio_growth(family: Callable[[Any], ScalarField], values: Sequence[Any], p: float,
                 parameter: str = "K", min_factor: float = 1.2) -> GrowthTable:
    """Tabulate likelihood-ratio norms of ``family(v)`` along ``values``.

    Zeros of the density (study mode) are skipped, the ratio being taken on
    the support.
    """
    sups, lps = [], []
    for v in values:
        w = family(v)
        rs = [likelihood_ratio(w, i, support_only=True) for i in range(w.grid.ndim)]
        sups.append(max(float(r.values.max()) for r in rs))
        lps.append(max(weighted_p_norm(r, w, p) for r in rs))
    return GrowthTable(parameter, [float(v) for v in values], sups, lps, min_factor)


class SmirnovClass(enum.Enum):
    SUFFICIENT_PRODUCT_FORM = "SufficientProductForm"
    SUFFICIENT_BOUNDED_RATIO = "SufficientBoundedRatio"
    UNKNOWN = "Unknown"
    VIOLATION_WITNESS = "ViolationWitness"


@dataclass
class SmirnovVerdict:
    kind: SmirnovClass
    detail: Any = None

    def to_dict(self) -> dict:
        d = self.detail
        if hasattr(d, "to_dict"):
            d = d.to_dict()
        return {"kind": self.kind.value, "detail": d}


def classify_smirnov(w: ScalarField, provenance: Mapping[str, Any] | None = None, p: float = 2.0,
                     witness: Any = None, report: WeightConditionReport | None = None) -> SmirnovVerdict:
    """Classify a density against the known sufficient conditions.

    Order of evidence: product-mixture provenance, then an explicit
    counterexample witness, then a stable bounded-ratio report.  Grid data
    alone never yields a violation.  Note that every grid density is
    piecewise constant and hence of product-mixture form; the verdict refers
    to the continuum density the grid represents, which is why provenance
    rather than the tabulated values decides.
    """
    prov = dict(w.meta if provenance is None else provenance)
    if prov.get("family") == "product_mixture":
        return SmirnovVerdict(SmirnovClass.SUFFICIENT_PRODUCT_FORM, {"components": prov.get("components")})
    if witness is not None:
        return SmirnovVerdict(SmirnovClass.VIOLATION_WITNESS, witness)
    if report is None and np.all(w.values > 0):
        report = check_weight_conditions(w, p)
    if report is not None and report.bounded_ratio:
        return SmirnovVerdict(SmirnovClass.SUFFICIENT_BOUNDED_RATIO, {"ratio_sup": report.ratio_sup})
    return SmirnovVerdict(SmirnovClass.UNKNOWN)
