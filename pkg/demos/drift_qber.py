"""X-basis error rate against pairing interval for a few fiber drift levels.

Longer links pair clicks further apart in time, so the phase reference has
more time to wander.  The floor (1 - V2)/2 is set by the second-order
interference visibility.

Run: python3 demos/drift_qber.py
"""
import numpy as np

from amdiqkd.channel import qber_x_drift
from amdiqkd.config import NoiseConfig

intervals = np.array([10, 25, 50, 85, 120, 200, 400]) * 1e-6
sigmas = [1000, 2100, 5900, 12000]

print("interval(us) " + "".join(f"{f'sigma={s}':>13}" for s in sigmas))
for dt in intervals:
    row = [qber_x_drift(dt, NoiseConfig(sigma=s, delta_f=10, v2=0.46)) for s in sigmas]
    print(f"{dt * 1e6:12.0f} " + "".join(f"{e:13.4f}" for e in row))

print(f"\nfloor (1 - V2)/2 = {(1 - 0.46) / 2:.3f}; fully dephased limit = 0.5")
