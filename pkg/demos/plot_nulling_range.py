"""
Choosing the IN range
=====================

Sweeping the nulling range shows the trade-off between removing strong
interferers and spending the serving BS's antennas on other users' requests.
"""

import numpy as np

from cen_meta import default_config
from cen_meta.analytic import load_stats, stp_file
from cen_meta.meta import moments

cfg = default_config()

###########################################################################
# STP first rises with ``mu`` (more nearby interferers nulled) and then
# falls (too many requests, lost diversity and missed nulling).

for t_db in (-6, 5):
    t = 10 ** (t_db / 10)
    mus = np.arange(0.0, 2.01, 0.2)
    stp = [stp_file(t, cfg.with_r_i(m)) for m in mus]
    best = mus[int(np.argmax(stp))]
    print(f"tau = {t_db:3d} dB: best mu on the grid {best:.1f}")
    print("   ", " ".join(f"{v:.3f}" for v in stp))

###########################################################################
# The cap ``L`` on nulling DoF stops mattering once it exceeds the typical
# load, since the missing probability is then negligible.

for L in range(cfg.M):
    c = cfg.replace(L=L)
    print(f"L = {L}: eps = {load_stats(c).epsilon:.2e}, STP(5 dB) = {stp_file(10 ** 0.5, c):.5f}")

###########################################################################
# Variance of the conditional STP keeps falling with ``mu`` at high
# thresholds.

t = 100.0
print("V at 20 dB:", " ".join(f"{moments(t, cfg.with_r_i(m)).variance:.4f}" for m in (0.5, 1, 2, 5)))
