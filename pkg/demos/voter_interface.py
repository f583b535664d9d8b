"""The voter interface from a step: its mass relaxes toward 1.

Starting from 1(x < 0) the expected interface mass is known in closed form,
E[int w(1-w) dx](t) = 1 - erfcx(sqrt(t)/2), because a pair of coalescing
dual walkers must straddle the origin for a cell to be mixed.  This script
compares an ensemble average with that curve and shows how slowly (like
1/sqrt(t)) the limit 1 is reached.

    python demos/voter_interface.py [replicas]
"""

import math
import sys

import numpy as np
from scipy.special import erfcx

from frontlab import integrator as I
from frontlab import nonlinearity as nl
from frontlab.ensemble import run_ensemble

n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
p = I.original(1.0, t_max=40.0, window=200, log_every=250, drift=False)
res = run_ensemble(nl.zero(), p, seed=1, replicas=range(n), workers=1)
t = res[0].log["t"]
mass = np.array([r.log["mass"] for r in res])
print(f"{n} voter replicas, dx={p.dx}, dt={p.dt}")
print("    t   mean mass   stderr   1 - erfcx(sqrt(t)/2)")
for k in range(0, len(t), 4):
    if t[k] == 0:
        continue
    se = mass[:, k].std(ddof=1) / math.sqrt(n)
    print(f"{t[k]:5.0f}   {mass[:, k].mean():9.3f}   {se:6.3f}   {1 - erfcx(math.sqrt(t[k]) / 2):9.3f}")
