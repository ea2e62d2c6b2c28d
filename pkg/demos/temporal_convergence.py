"""Self-convergence in time on the Example 2 setup, comparing the two starts.

The Taylor start adds the acceleration term to the first step; the linear
start uses w1 = w0 + k v0 only and loses an order in the first step.
"""
from lwelasto.scenarios import cmd_convergence_time, load_preset

base = load_preset("example2")
ks = ["3^-3", "3^-4", "3^-5"]
for start in ("taylor2", "linear"):
    series = cmd_convergence_time(base.with_changes(start=start), ks, "3^-6")
    print(f"start = {start}")
    for k, ew, es, co in zip(ks, series.displacement_errors, series.stress_errors, series.orders()):
        co_text = "" if co is None else f"{co:.3f}"
        print(f"  k = {k:6s}  |w err| = {ew:.4e}  |stress err| = {es:.4e}  CO(k) = {co_text}")
