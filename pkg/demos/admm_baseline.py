"""The consensus ADMM baseline on a small farm, next to the multilevel solver.

Each wind direction gets its own copy of the layout; the copies are pulled
together by a proximal term and dual prices. Watch the residuals: they fall
slowly, which is why this scheme is only a baseline.
"""

from jointwind import AdmmConfig, admm_solve, solve_mlr
from jointwind.bench import build_problem

problem, start = build_problem(6, 4, seed=1)
report = admm_solve(problem, start, AdmmConfig(max_iter=30))
print("iter  primal residual (D)  dual residual (D)")
for row in report.trace[::3]:
    print(f"{row['iteration']:4d}  {row['primal_residual']:18.4f}  {row['dual_residual']:16.4f}")
print(f"\nADMM: {report.objective_gwh:.2f} GWh, converged={report.converged}, "
      f"{report.runtime_s:.1f} s")
mlr = solve_mlr(problem, start)
print(f"MLR:  {mlr.objective_gwh:.2f} GWh, converged={mlr.converged}, {mlr.runtime_s:.1f} s")
