"""Run a small slope scenario and print how the displacement and stress evolve.

    python3 demos/quickstart.py [out_dir]
"""
import sys

from lwelasto.scenarios import cmd_run, load_preset

out_dir = sys.argv[1] if len(sys.argv) > 1 else "quickstart_out"
cfg = load_preset("dschang-slope", time={"T_f": "3^-1"})
print(f"{cfg.name}: degree {cfg.degree}, cells {cfg.domain.n}, k = {cfg.k:.3e}, T_f = {cfg.T_f:g}")

out = cmd_run(cfg, out_dir, vtk_steps="ends")
result = out["result"]
print(f"steps taken: {result.final.n}, stability limit on k: {out['spectral_step_limit']:.4e}")
print(f"max ||w|| over the run: {out['w_max']:.4e}")
for name, value in zip(("k11", "k22", "k33", "k12", "k13", "k23"), out["stress_maxima"]):
    print(f"  max ||{name}||: {value:.4e}")
print(f"artifacts written to {out_dir}/")
