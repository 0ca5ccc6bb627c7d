"""Nonlinear convergence study against a manufactured solution.

Case II fixes the exact regularized solution u = (x^4 + y^4)/2 and derives
the data f = 36 x^2 y^2 - 24 eps, g = u, psi = lap u exactly.  Solving on a
sequence of meshes at fixed eps = 0.05 shows second-order L2/H1 and
first-order broken-H2 convergence for quadratic elements — a scaled-down
version of what `maviscid convergence --case II` runs.

Run:  python3 demos/03_manufactured_convergence.py
"""

from maviscid import (
    FeSpace,
    NewtonConfig,
    build_structured_mesh,
    builtin_case,
    continuation_solve,
    error_norms,
    format_rate_table,
    rate_table,
)

spec = builtin_case("II")
EPS = 0.05

rows = []
for n in (4, 8, 16):
    space = FeSpace(build_structured_mesh(2, n), 2)
    u, report = continuation_solve(
        space, None, None, spec.sigma, EPS,
        NewtonConfig(abs_tol=1e-8),
        weight_mode=spec.weight_mode, data_factory=spec.data,
    )
    rows.append((1.0 / n, error_norms(spec.exact_solution, u)))
    print(f"n={n:2d}: {report.iterations} Newton steps over "
          f"{len(report.rungs)} continuation rungs, "
          f"final residual {report.residual_history[-1]:.2e}")

print()
print(format_rate_table(rate_table(rows), parameter_name="h"))
print()
print("orders approach 2 / 2 / 1 (L2 / H1 / broken-H2)")
