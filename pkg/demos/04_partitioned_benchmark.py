"""
Two-region partitioned GP benchmark
===================================

The response follows one GP on one side of a random hyperplane and a GP
with mean 11 on the other side, observed with variance-3 noise on a Latin
hypercube design of 10 d points.  We score the robust fit against q = 0 and
a global-median predictor, then time a single fit in 500 dimensions.
"""

# %%
import time

import numpy as np

from rlgp import Dataset, fit, predict, select_neighbors
from rlgp.synthbench import BenchConfig, run_benchmark

for d in (2, 10):
    cfg = BenchConfig(scenario="partitioned", d=d, n_test=100, seed=1)
    print(run_benchmark(cfg).to_table())

# %%
# One query in d = 500 with 100 neighbours.  The neighbour search and the
# pairwise distances are timed apart from the fit itself.

rng = np.random.default_rng(0)
ds = Dataset(rng.uniform(-0.5, 0.5, (1000, 500)), rng.normal(size=1000))
x = rng.uniform(-0.5, 0.5, 500)
t0 = time.perf_counter()
nb = select_neighbors(ds, x, 100)
t1 = time.perf_counter()
pred = predict(fit(nb))
t2 = time.perf_counter()
print(f"neighbours + distances {t1 - t0:.3f} s, fit + predict {t2 - t1:.3f} s")
