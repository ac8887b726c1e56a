"""Newton multipliers against the brute-force minimizer for several p.

The oracle minimizes ||h||_p^p directly over all grid fields with the given
weighted marginals, so agreement checks the multiplier equations end to end.
Random feasible fields around the oracle minimizer never beat the bound.

    python demos/02_oracle_compare.py
"""
import numpy as np

from marginbound import (ProductMixtureSpec, assemble_product_mixture, build_grid, integrate, min_norm_direct,
                         random_feasible, solve_newton, weighted_marginals)

grid = build_grid([(0.0, 1.0), (0.0, 1.0)], 24)
spec = ProductMixtureSpec((0.6, 0.4), ((lambda t: 1 + t, lambda t: np.ones_like(t)),
                                       (lambda t: np.exp(-2 * t), lambda t: 0.5 + t * t)))
w = assemble_product_mixture(spec, grid)
x, y = grid.mesh()
g = weighted_marginals(np.sin(3 * x) + x * y - 0.3, w)

print(f"{'p':>4} {'newton bound':>20} {'oracle value':>20} {'rel diff':>9} {'iters':>5} {'min gap':>9}")
for p in (1.2, 1.5, 2.0, 3.0, 5.0):
    _, rep = solve_newton(w, g, p)
    orc = min_norm_direct(w, g, p)
    fields = random_feasible(w, g, seed=7, count=50, base=orc.h, scale=0.1)
    gap = min(integrate(np.abs(h.values) ** p, w) - rep.bound_value for h in fields)
    rel = abs(rep.bound_value - orc.value) / orc.value
    print(f"{p:4.1f} {rep.bound_value:20.14f} {orc.value:20.14f} {rel:9.1e} {rep.iterations:5d} {gap:9.2e}")
