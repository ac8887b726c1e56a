"""Unit square, uniform weight, p = 2: the computed bound against its closed form.

With h(x, y) = x + y the weighted marginals are g_i(t) = t + 1/2 and the
minimum of ||h||_2^2 is 7/6.  The midpoint rule underestimates it by h^2/6, so
the error drops by a factor of four per grid refinement.

    python demos/01_hypercube.py
"""
import numpy as np

from marginbound import SolveOptions, build_grid, solve_newton, solve_p2, uniform_density, weighted_marginals

print(f"{'N':>5} {'bound':>20} {'error':>11} {'ratio':>6}")
previous = None
for N in (16, 32, 64, 128, 256):
    grid = build_grid([(0.0, 1.0)] * 2, N)
    w = uniform_density(grid)
    x, y = grid.mesh()
    _, rep = solve_p2(w, weighted_marginals(x + y, w))
    err = abs(rep.bound_value - 7 / 6)
    ratio = "" if previous is None else f"{previous / err:6.2f}"
    print(f"{N:5d} {rep.bound_value:20.15f} {err:11.3e} {ratio}")
    previous = err

# from zero multipliers Newton reaches the same value in a single step at p = 2
grid = build_grid([(0.0, 1.0)] * 2, 64)
w = uniform_density(grid)
g = weighted_marginals(sum(grid.mesh()), w)
_, rep = solve_newton(w, g, 2.0, SolveOptions(init="zeros"))
print(f"newton p=2 on 64x64: bound={rep.bound_value:.15f} iterations={rep.iterations}")
print(f"minimizer is x + y up to {np.max(np.abs(rep.minimizer.values - sum(grid.mesh()))):.1e}")
