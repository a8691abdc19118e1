"""
Queries near region boundaries
==============================

Three 2-D problems on a 50 x 50 grid: a query deep inside one region, one
next to a straight boundary, and one next to a junction of three regions.
Neighbours from the other side of a boundary behave like outliers, which is
where trimming pays off.  Absolute errors are averaged over 20 seeds.
"""

# %%
from collections import Counter

import numpy as np

from rlgp import EstimatorConfig, fit, predict, select_neighbors
from rlgp.synthbench import boundary_scenarios, neighbor_regions

for sc in boundary_scenarios(0):
    print(f"{sc.name:>17}: neighbour regions {dict(Counter(map(str, neighbor_regions(sc))))}")

# %%
levels = ("adaptive", "0", "0.1n", "0.15n", "0.2n", "0.3n")
errors = {}
for seed in range(20):
    for sc in boundary_scenarios(seed):
        nb = select_neighbors(sc.train, sc.query, sc.neighbors)
        for q in levels:
            err = abs(predict(fit(nb, EstimatorConfig.from_qspec(q))).mean - sc.truth)
            errors.setdefault(sc.name, {}).setdefault(q, []).append(err)

print(f"{'':>17}" + "".join(f"{q:>10}" for q in levels))
for name, row in errors.items():
    print(f"{name:>17}" + "".join(f"{np.mean(row[q]):>10.3f}" for q in levels))
