"""Reweighting voter paths into Fisher-KPP paths.

A voter run still records M^f and A^f, so exp(eps M^f - eps^2 A^f / 2) turns
voter averages into averages for the drifted equation.  Here the probability
that the right edge has passed r = 1 at t = 2 is computed both ways.

    python demos/girsanov_reweighting.py [replicas]
"""

import sys

from frontlab import integrator as I
from frontlab import nonlinearity as nl
from frontlab.girsanov import direct_estimate, importance_estimate, right_edge_exceeds

n = int(sys.argv[1]) if len(sys.argv) > 1 else 300
p = I.rescaled(0.1, t_max=2.0, window=60)
g = right_edge_exceeds(1.0)
est = importance_estimate(g, nl.fisher_kpp(), p, n, seed=5, workers=1)
d, d_se = direct_estimate(g, nl.fisher_kpp(), p, n, seed=5, first_replica=n, workers=1)
print(f"reweighted voter paths : {est.value:.4f} +- {est.stderr:.4f}  (ESS {est.ess:.0f} of {n})")
print(f"self-normalised variant: {est.self_normalized:.4f} +- {est.sn_stderr:.4f}")
print(f"direct simulation      : {d:.4f} +- {d_se:.4f}")
print(f"mean weight            : {est.mean_weight:.4f} +- {est.mean_weight_stderr:.4f}")
