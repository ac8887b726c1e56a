import numpy as np
import pytest

from marginbound import (ProductMixtureSpec, assemble_product_mixture, build_grid, uniform_density,
                         weighted_marginals)

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the terminal summary and return the verdict."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def unit_grid(n: int, N: int, scheme: str = "midpoint"):
    return build_grid([(0.0, 1.0)] * n, N, scheme)


def mixture3(grid):
    """Smooth three-component product mixture on any box."""
    lo = np.array([ax.lower for ax in grid.axes])
    hi = np.array([ax.upper for ax in grid.axes])

    def scaled(i, f):
        return lambda t: f((t - lo[i]) / (hi[i] - lo[i]))

    shapes = [lambda u: 1.0 + u, lambda u: np.exp(-2.0 * u), lambda u: 0.2 + (u - 0.5) ** 2]
    comps = []
    for j in range(3):
        comps.append(tuple(scaled(i, shapes[(i + j) % 3]) for i in range(grid.ndim)))
    return assemble_product_mixture(ProductMixtureSpec((0.5, 0.3, 0.2), tuple(comps)), grid)


def smooth_field(grid, seed: int, scale: float = 1.0):
    """Seeded smooth function: random quadratic plus a random exponential bump."""
    rng = np.random.default_rng(seed)
    xs = grid.mesh()
    lo = [ax.lower for ax in grid.axes]
    span = [ax.length for ax in grid.axes]
    us = [(x - a) / s for x, a, s in zip(xs, lo, span)]
    out = rng.normal() * np.ones(grid.shape)
    for i, u in enumerate(us):
        out = out + rng.normal() * u + 0.5 * rng.normal() * u * u
        for j in range(i + 1, len(us)):
            out = out + rng.normal() * u * us[j]
    out = out + 0.5 * rng.normal() * np.exp(-sum((u - rng.uniform()) ** 2 for u in us))
    return scale * out


def smooth_marginals(w, seed: int):
    return weighted_marginals(smooth_field(w.grid, seed), w)


@pytest.fixture
def uniform2():
    return uniform_density(unit_grid(2, 16))
