"""Tensor grids on rectangular boxes and the quadrature operators built on them.

Every function of ``n`` variables is stored as an ``n``-dimensional array in
row-major order (axis 0 slowest).  A grid node carries the measure
``a_0(k_0) * ... * a_{n-1}(k_{n-1})``, the product of the per-axis quadrature
weights, so that

    integral f w dxi  ~  sum_k f[k] w[k] a(k).

Marginalizing over all axes but ``i`` uses the weights of the remaining axes
only; the result is a function of the axis-``i`` coordinate that integrates
over that axis (with its own weights) to the full integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = [
    "Axis",
    "GridSpec",
    "ScalarField",
    "MarginalSet",
    "build_axis",
    "build_grid",
    "integrate",
    "marginalize",
    "marginal_density",
    "comarginal_density",
    "weighted_marginals",
    "weighted_p_norm",
]

SCHEMES = ("midpoint", "trapezoid")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Axis:
    """One coordinate interval with its quadrature nodes.

    ``truncated`` marks an axis standing in for an unbounded interval; it is
    bookkeeping only and is propagated into every report.
    """

    lower: float
    upper: float
    node_count: int
    scheme: str = "midpoint"
    truncated: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ConfigurationError("axis bounds must be finite (truncate unbounded intervals)")
        if not self.lower < self.upper:
            raise ConfigurationError(f"lower={self.lower} must be < upper={self.upper}")
        if int(self.node_count) != self.node_count or self.node_count < 2:
            raise ConfigurationError(f"node_count must be an integer >= 2, got {self.node_count}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown quadrature scheme {self.scheme!r}")
        object.__setattr__(self, "node_count", int(self.node_count))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @cached_property
    def spacing(self) -> float:
        if self.scheme == "midpoint":
            return self.length / self.node_count
        return self.length / (self.node_count - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        h = self.spacing
        if self.scheme == "midpoint":
            x = self.lower + (np.arange(self.node_count) + 0.5) * h
        else:
            x = np.linspace(self.lower, self.upper, self.node_count)
        return _frozen(x)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        wts = np.full(self.node_count, self.spacing)
        if self.scheme == "trapezoid":
            wts[0] *= 0.5
            wts[-1] *= 0.5
        return _frozen(wts)

    def refined(self, factor: int = 2) -> "Axis":
        """Same interval with ``factor`` times as many cells."""
        count = self.node_count * factor if self.scheme == "midpoint" else (self.node_count - 1) * factor + 1
        return Axis(self.lower, self.upper, count, self.scheme, self.truncated)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "node_count": self.node_count,
            "scheme": self.scheme,
            "truncated": self.truncated,
        }


def build_axis(lower: float, upper: float, node_count: int, scheme: str = "midpoint",
               truncated: bool = False) -> Axis:
    """Uniform axis on ``[lower, upper]``.

    The midpoint rule is the default: it never evaluates on the boundary and
    turns tabulated densities into exactly piecewise-constant ones.

    >>> build_axis(0, 1, 4).nodes
    array([0.125, 0.375, 0.625, 0.875])
    """
    return Axis(lower, upper, node_count, scheme, truncated)


@dataclass(frozen=True)
class GridSpec:
    """Tensor product of axes.

    Problem-level constructors (:func:`build_grid`) insist on ``n >= 2``; the
    residual grids produced by :func:`comarginal_density` may be
    one-dimensional.
    """

    axes: tuple[Axis, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) < 1 or not all(isinstance(a, Axis) for a in axes):
            raise ConfigurationError("a grid needs at least one Axis")
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.node_count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def truncated(self) -> tuple[bool, ...]:
        return tuple(a.truncated for a in self.axes)

    @cached_property
    def measure(self) -> np.ndarray:
        """Node measure: outer product of the per-axis quadrature weights."""
        m = self.axes[0].quad_weights
        for ax in self.axes[1:]:
            m = np.multiply.outer(m, ax.quad_weights)
        return _frozen(m)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcastable to :attr:`shape` (sparse meshgrid)."""
        return np.meshgrid(*(a.nodes for a in self.axes), indexing="ij", sparse=True)

    def axis_view(self, values: np.ndarray, i: int) -> np.ndarray:
        """Reshape a 1D array over axis ``i`` so it broadcasts over the grid."""
        shape = [1] * self.ndim
        shape[i] = self.shape[i]
        return np.asarray(values).reshape(shape)

    def without(self, i: int) -> "GridSpec":
        self._check_axis(i)
        return GridSpec(self.axes[:i] + self.axes[i + 1:])

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(a.refined(factor) for a in self.axes))

    def _check_axis(self, i: int) -> None:
        if not (0 <= i < self.ndim):
            raise ConfigurationError(f"axis index {i} out of range for a {self.ndim}-dimensional grid")

    def to_dict(self) -> dict:
        return {"axes": [a.to_dict() for a in self.axes], "order": "C"}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GridSpec":
        if d.get("order", "C") != "C":
            raise ConfigurationError("only row-major ('C') tensor order is supported")
        return cls(tuple(Axis(**a) for a in d["axes"]))


def build_grid(bounds: Sequence[tuple[float, float]], node_counts: int | Sequence[int],
               scheme: str = "midpoint", truncated: bool | Sequence[bool] = False) -> GridSpec:
    """Grid for a box ``prod_i [lower_i, upper_i]`` with ``n >= 2`` axes."""
    n = len(bounds)
    if n < 2:
        raise ConfigurationError("problems need n >= 2 axes; the one-dimensional case is degenerate")
    counts = [node_counts] * n if np.isscalar(node_counts) else list(node_counts)
    truncs = [truncated] * n if isinstance(truncated, bool) else list(truncated)
    if len(counts) != n or len(truncs) != n:
        raise ConfigurationError("node_counts/truncated must match the number of axes")
    return GridSpec(tuple(Axis(lo, hi, c, scheme, t) for (lo, hi), c, t in zip(bounds, counts, truncs)))


class ScalarField:
    """Values of a function of ``n`` variables on every node of a grid.

    Immutable; ``meta`` carries construction provenance (e.g. the density
    family) for downstream classifiers.
    """

    __slots__ = ("grid", "values", "meta")

    def __init__(self, grid: GridSpec, values, meta: Mapping[str, Any] | None = None):
        v = np.asarray(values, dtype=float)
        if v.size != grid.size:
            raise ShapeError(f"field has {v.size} values, grid has {grid.size} nodes")
        v = v.reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("field values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "meta", MappingProxyType(dict(meta or {})))

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    def __repr__(self) -> str:
        return f"ScalarField(shape={self.grid.shape}, meta={dict(self.meta)})"

    @classmethod
    def from_function(cls, grid: GridSpec, fn, meta=None) -> "ScalarField":
        vals = np.broadcast_to(fn(*grid.mesh()), grid.shape)
        return cls(grid, vals, meta)

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def with_values(self, values, meta=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.meta if meta is None else meta)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class MarginalSet:
    """Per-axis one-dimensional arrays ``g_i(xi_i)``."""

    grid: GridSpec
    arrays: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        arrays = tuple(_frozen(np.asarray(a, dtype=float).ravel()) for a in self.arrays)
        if len(arrays) != self.grid.ndim:
            raise ShapeError(f"expected {self.grid.ndim} marginal arrays, got {len(arrays)}")
        for i, (a, n) in enumerate(zip(arrays, self.grid.shape)):
            if a.size != n:
                raise ShapeError(f"marginal {i} has {a.size} entries, axis has {n} nodes")
            if not np.all(np.isfinite(a)):
                raise ConfigurationError(f"marginal {i} has non-finite entries")
        object.__setattr__(self, "arrays", arrays)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.arrays[i]

    def __len__(self) -> int:
        return len(self.arrays)

    def masses(self) -> np.ndarray:
        """Axis-wise quadrature of each marginal; all equal for consistent data."""
        return np.array([a @ ax.quad_weights for a, ax in zip(self.arrays, self.grid.axes)])

    def mass_mismatch(self) -> float:
        m = self.masses()
        return float(m.max() - m.min())


def _same_grid(*fields: ScalarField) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid is not grid and f.grid != grid:
            raise ShapeError("fields live on different grids")
    return grid


def _values(f, grid: GridSpec) -> np.ndarray:
    if isinstance(f, ScalarField):
        if f.grid is not grid and f.grid != grid:
            raise ShapeError("fields live on different grids")
        return f.values
    a = np.asarray(f, dtype=float)
    if a.ndim == 0:
        return a
    if a.ndim == grid.ndim and a.shape != grid.shape:
        try:
            return np.broadcast_to(a, grid.shape)
        except ValueError:
            raise ShapeError(f"array of shape {a.shape} does not broadcast to grid shape {grid.shape}") from None
    if a.size != grid.size:
        raise ShapeError(f"array of size {a.size} does not match grid of size {grid.size}")
    return a.reshape(grid.shape)


def integrate(f, w: ScalarField) -> float:
    """Tensor quadrature of ``f * w``.

    ``f`` may be a field on the same grid, an array of the grid's shape or a
    scalar.
    """
    grid = w.grid
    return float(np.sum(_values(f, grid) * w.values * grid.measure))


def marginalize(values: np.ndarray, grid: GridSpec, i: int) -> np.ndarray:
    """Quadrature over all axes except ``i``; returns an array over axis ``i``."""
    grid._check_axis(i)
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    w = grid.measure / grid.axis_view(grid.axes[i].quad_weights, i)
    other = tuple(j for j in range(grid.ndim) if j != i)
    return np.sum(v * w, axis=other)


def marginal_density(w: ScalarField, i: int) -> np.ndarray:
    """One-dimensional marginal ``w_i`` of a density field."""
    return marginalize(w.values, w.grid, i)


def comarginal_density(w: ScalarField, i: int) -> ScalarField:
    """Integrate out axis ``i`` only; result lives on the residual grid."""
    grid = w.grid
    grid._check_axis(i)
    vals = np.tensordot(w.values, grid.axes[i].quad_weights, axes=([i], [0]))
    return ScalarField(grid.without(i), vals)


def weighted_marginals(h, w: ScalarField) -> MarginalSet:
    """Marginals ``g_i = int h w dxi_i^c`` of a field ``h`` under density ``w``."""
    grid = w.grid
    hw = _values(h, grid) * w.values
    return MarginalSet(grid, tuple(marginalize(hw, grid, i) for i in range(grid.ndim)))


def weighted_p_norm(f, w: ScalarField, p: float) -> float:
    if not p > 1:
        raise ConfigurationError(f"p must be > 1, got {p}")
    return integrate(np.abs(_values(f, w.grid)) ** p, w) ** (1.0 / p)
