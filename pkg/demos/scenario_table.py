"""Run the four landslide-site presets and print one summary row each."""
import sys
from pathlib import Path

from lwelasto.scenarios import REPORTED_SCENARIO_VALUES, SCENARIO_PRESETS, cmd_run, load_preset

root = Path(sys.argv[1] if len(sys.argv) > 1 else "scenario_out")
print(f"{'scenario':18s} {'max ||w||':>11s} {'published':>10s} {'max ||k22||':>12s}")
for name in SCENARIO_PRESETS:
    out = cmd_run(load_preset(name), root / name, vtk_steps="none", spectral=False)
    published = REPORTED_SCENARIO_VALUES[name][0]
    print(f"{name:18s} {out['w_max']:11.4e} {published:10.4f} {out['stress_maxima'][1]:12.6f}")
