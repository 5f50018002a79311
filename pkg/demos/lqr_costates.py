# Costates read off the NLP multipliers, checked against a Riccati solution.
#
# Scalar regulator x' = a x + b u with quadratic cost; the costate is P(t) x(t)
# where P solves the Riccati equation backward from P(tf) = s_f.

import numpy as np

from gausscol.bench.oracles import lqr_oracle
from gausscol.bench.study import RunConfig, run

out = run(RunConfig(problem="lqr", method="mlg", segments=2, nodes=12))
oracle = lqr_oracle()

print(f"status {out.result.status}, cost {out.result.f:.10f} (Riccati {oracle.cost():.10f})")
print(f"{'t':>8} {'lambda':>14} {'P(t) x(t)':>14} {'diff':>9}")
for k, iv in enumerate(out.solution.intervals):
    lam = out.costates.lambda_v[k][:, 0]
    ref = oracle.costate(iv.t)
    for j in range(0, len(iv.t), 3):
        print(f"{iv.t[j]:8.4f} {lam[j]:14.10f} {ref[j]:14.10f} {abs(lam[j] - ref[j]):9.1e}")

print("\ndiscrete optimality rows (infinity norms):")
for name, value in out.residuals.items():
    print(f"  {name:24s} {value:.2e}")
print(f"Hamiltonian spread over all nodes: {out.hamiltonian.spread:.2e}")
print(f"mesh-point costate gap: {np.max(out.costates.continuity_gaps()):.2e}")
