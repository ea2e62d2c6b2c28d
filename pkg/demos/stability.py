"""Show the scheme is only conditionally stable.

A run inside the stability limit stays bounded; the same number of steps
at k/h = 4 sqrt(2 nu), forced past the CFL check, blows up.
"""
from lwelasto.scenarios import Problem, cmd_stability_demo, load_preset

cfg = load_preset("example2")
problem = Problem.build(cfg)
print(f"CFL check at k = {cfg.k:.4e}: {problem.cfl()}")

outcome = cmd_stability_demo(cfg)
print(f"compliant run: max ||w|| {outcome.compliant_max:.3e}, bounded = {outcome.compliant_bounded}")
print(f"violating run (k = {outcome.k_violating:.3f}): growth x{outcome.violating_growth:.3g}, "
      f"aborted = {outcome.violating_aborted}, unstable = {outcome.violating_unstable}")
