"""Watch the generative interval density approach its descriptive limit as m grows."""

import math

from intervalgen import UniformMixtureModel, convergence_diagnostic
from intervalgen.asymptotics import sup_gaps

grid = [(c - math.exp(t), c + math.exp(t)) for c in (-1.0, 0.0, 1.0) for t in (-0.5, 0.0, 0.5)]
rows = convergence_diagnostic(UniformMixtureModel(), grid, [2, 10, 100, 1000])

print(f"{'m':>6} {'lower':>7} {'upper':>7} {'finite m':>10} {'limit':>10}")
for r in rows:
    if r["m"] in (2, 1000):
        print(f"{r['m']:>6} {r['lower']:7.3f} {r['upper']:7.3f} {r['finite_m_density']:10.5f} {r['limit_density']:10.5f}")
for m, gap in sup_gaps(rows).items():
    print(f"sup gap at m = {m}: {gap:.2e}")
