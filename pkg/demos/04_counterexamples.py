"""The two diagonal constructions.

1. Sequences with f + g = 0 but sum |f_k|^q theta_k diverging: the partial
   sums grow by about sqrt(2) per doubling of K while the L1 tail shrinks.
2. At p = 2 and alpha = 0 the multiplier system has a nonzero homogeneous
   solution, so the linear solve reports a singular matrix and emits it.

    python demos/04_counterexamples.py
"""
from marginbound import build_witness, certify_divergence, nonuniqueness_witness, smirnov_violation_report

for q in (1.5, 2.0, 3.0):
    ws = build_witness(q, 1024)
    cert = certify_divergence(ws, [64, 128, 256, 512, 1024])
    print(f"q={q}: partial power sums {[round(s, 2) for s in cert.power_sums]}")
    print(f"       growth ratios {[round(r, 3) for r in cert.growth_ratios]} holds={cert.holds}")

rep = smirnov_violation_report(build_witness(2.0, 256), alpha=0.5, ladder=[32, 64, 128, 256])
print(f"alpha=0.5, K=256: integral of |f+g|^q w = {rep.integral_pair:.3e} "
      f"(background {rep.background_part:.3e}, diagonal {rep.diagonal_part:.1e})")

nu = nonuniqueness_witness(build_witness(2.0, 512))
check = nu.p2_check()
print(f"K=512 homogeneous solution: residuals {nu.eq1_residual:.1e} {nu.eq2_residual:.1e} "
      f"{nu.eq3_residual:.1e}, nonzero={nu.nonzero}")
print(f"solve_p2 singular={check['singular']} (singular value ratio {check['singular_value_ratio']:.1e}), "
      f"null vector emitted={check['null_vector_emitted']}")
