"""Small Monte Carlo comparison of rotation methods.

Runs a handful of replications at a reduced design and prints the mean
interval coverage and scaled error per method, mirroring the full study
that the command line exposes via `folomin simulate`.
"""

import time

from folomin.sim import SimDesign, run_replications

design = SimDesign(n=250, q=200, r=2, lambda_signal=0.4, tau=0.5, seed=1)
methods = ("oracle", "folomin_mcp", "promax")
t0 = time.time()
summary = run_replications(design, methods=methods, n_reps=10, level=0.95)
print(f"{summary.n_reps} replications in {time.time() - t0:.1f} s "
      f"({summary.n_failed} failed)\n")

print(f"{'method':<16} {'coverage':>9} {'scaled MSE':>11}")
for m in methods:
    print(
        f"{m:<16} {summary.mean_coverage_A[m]:>9.4f} "
        f"{summary.mean_scaled_mse_A[m]:>11.3f}"
    )

print("\nthe folded rotation tracks the oracle; the oblique baseline's")
print("data-independent offset costs it both accuracy and coverage")
