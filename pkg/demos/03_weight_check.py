"""Which densities keep the likelihood ratios bounded?

A product mixture has ratios bounded by the mixture weights.  A correlated
Gaussian truncated to a box looks bounded, but the ratio sup grows as the
box is enlarged, so the check flags it as unstable.  The diagonal family
has ratios that blow up with the number of blocks.

    python demos/03_weight_check.py
"""
import numpy as np

from marginbound import (DiagonalCounterexampleSpec, ProductMixtureSpec, assemble_diagonal,
                         assemble_product_mixture, build_grid, check_weight_conditions, classify_smirnov,
                         correlated_gaussian, power_law_theta, ratio_growth)

grid = build_grid([(0.0, 1.0)] * 2, 16)
mix = assemble_product_mixture(ProductMixtureSpec((0.5, 0.5), ((lambda t: 1 + t, lambda t: 2 - t),
                                                               (lambda t: 2 - t, lambda t: 1 + t))), grid)
print("product mixture:", classify_smirnov(mix).kind.value)

rho = 0.6
box = build_grid([(-2.0, 2.0)] * 2, 24, truncated=True)


def gauss(x, y):
    return np.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)))


rep = check_weight_conditions(correlated_gaussian(box, rho), 2.0, density=gauss)
print(f"gaussian rho={rho}: ratio sup on box={max(rep.ratio_sup):.2f} "
      f"stable under enlargement={rep.stable_enlargement}")
print("  verdict:", classify_smirnov(correlated_gaussian(box, rho), report=rep).kind.value)


def diagonal(K):
    return assemble_diagonal(DiagonalCounterexampleSpec(0.5, power_law_theta(K)),
                             build_grid([(1.0, K + 1.0)] * 2, K))


table = ratio_growth(diagonal, [2, 4, 8, 16, 32, 64], 2.0)
print("diagonal family, alpha = 0.5:")
for K, r in zip(table.values, table.ratio_sup):
    print(f"  K={K:4g}  ratio sup={r:10.2f}")
print("  grows:", table.grows)
