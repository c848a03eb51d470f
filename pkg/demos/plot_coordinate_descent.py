"""
Tuning range, DoF cap and cache diversity
=========================================

Coordinate descent over ``(mu, L, xi)`` for a weighted objective that mixes
the STP and the share of users with reliability above 0.9.
"""

from cen_meta import default_config
from cen_meta.analytic import stp_file
from cen_meta.meta import meta_total
from cen_meta.optimizer import OptimizationProblem, coordinate_descent

cfg = default_config()
tau = 1.0   # 0 dB

###########################################################################
# Larger ``eta`` weights the STP more; the optimum trades some reliability
# share for average success.

for eta in (0.0, 0.5, 1.0):
    res = coordinate_descent(OptimizationProblem("weighted", tau=tau, eta=eta), cfg)
    c = cfg.with_r_i(res.r_i_star).replace(L=res.l_star, xi=res.xi_star)
    print(f"eta {eta:.1f}: mu* {res.r_i_star:.2f}  L* {res.l_star}  xi* {res.xi_star:.2f}  "
          f"STP {c.hit_mass * stp_file(tau, c):.4f}  F(0.9) {float(meta_total(0.9, tau, c)):.4f}  "
          f"({res.rounds} rounds, {res.evaluations} evaluations)")
