"""sigma^2 V(sigma) for the noisy Fisher-KPP front, measured in the rescaled frame.

With eps = sigma^-4 the rescaled equation has unit noise and drift eps f.  The
front speed is measured by the drift compensator (mass injected by the drift
per unit time) and by a least-squares fit of the right edge; sigma^2 V is then
sigma^4 times the rescaled speed.  As sigma grows the product approaches the
stationary constant c_f = 1 of f = u(1-u).  Short runs; expect a few percent of
noise.

    python demos/speed_vs_noise.py [t_max]
"""

import sys

from frontlab import integrator as I
from frontlab import nonlinearity as nl
from frontlab.estimators import estimate_speed
from frontlab.scaling import FrameMap, map_observable

t_max = float(sys.argv[1]) if len(sys.argv) > 1 else 1000.0
print(" sigma      eps    sigma^2 V (compensator)   sigma^2 V (edge fit)")
for sigma in (1.0, 1.5, 2.0, 3.0):
    fm = FrameMap(sigma)
    p = I.rescaled(fm.epsilon, t_max=t_max, log_every=250)
    _, _, log = I.simulate(nl.fisher_kpp(), p, seed=3)
    est = estimate_speed(log, burn_frac=0.1, method="compensator")
    out = []
    for method in ("compensator", "ls_fit"):
        v, se = est.other(method)
        out.append((sigma ** 2 * map_observable(fm, "speed", v), sigma ** 2 * map_observable(fm, "speed", se)))
    print(f"{sigma:6.2f}  {fm.epsilon:7.4f}   {out[0][0]:8.3f} +- {out[0][1]:.3f}        "
          f"{out[1][0]:8.3f} +- {out[1][1]:.3f}")
