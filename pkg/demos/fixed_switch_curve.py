# Objective as a function of the first switch time, second switch pinned at its optimum.
#
# Standard collocation dips below the true minimum time (7) for some grid
# values; the modified method stays at or above it. Takes about 20 seconds.

import numpy as np

from gausscol.bench.problems import OPTIMAL_SWITCH_TIMES
from gausscol.bench.study import sweep_fixed_switch

grid = np.round(np.linspace(-0.90, -0.52, 20), 4).tolist() + [OPTIMAL_SWITCH_TIMES[0]]
grid.sort()

curves = {m: {r["value"]: r for r in sweep_fixed_switch("T1", grid, method=m)} for m in ("lg", "mlg")}

print(f"{'T1':>9}  {'lg':>12}  {'mlg':>12}")
for value in grid:
    cells = []
    for m in ("lg", "mlg"):
        r = curves[m][value]
        cells.append(f"{r['objective']:12.6f}" if r["status"] == "solved" else f"{r['status']:>12}")
    flag = "  < 7" if curves["lg"][value]["status"] == "solved" and curves["lg"][value]["objective"] < 7 - 1e-6 else ""
    print(f"{value:9.4f}  {cells[0]}  {cells[1]}{flag}")
