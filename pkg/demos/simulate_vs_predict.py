"""Monte Carlo clicks, pairing and tallies set against the analytic predictor.

Uses the 201.86 km settings with 1e9 time bins (under ten seconds).

Run: python3 demos/simulate_vs_predict.py [seed]
"""
import math
import sys

from amdiqkd import published as ref
from amdiqkd.mcsim import simulate_tally
from amdiqkd.predict import expected_tallies, pairing_stats

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
n_bins = 10**9
cfg = ref.reference_config(201.86).replace(link={"N": float(n_bins)})

sim = simulate_tally(cfg, n_bins, seed)
exp = expected_tallies(cfg)

print(f"{'class':>12} {'simulated':>10} {'expected':>12} {'z':>6}")
for label in ("mu|mu", "mu|o", "nu|nu", "[mu,mu]", "[mu,nu]", "[nu,nu]", "[2nu,o]", "[2nu,2nu]"):
    s = sim.n_click.get(label, sim.n(label))
    e = exp.n_click.get(label, exp.n(label))
    print(f"{label:>12} {s:10.0f} {e:12.1f} {(s - e) / math.sqrt(e):6.2f}")

t = pairing_stats(cfg).t_mean
print(f"\nmean pairing interval: simulated {sim.t_mean_all * 1e6:.4f} us, closed form {t * 1e6:.4f} us")
print(f"X errors: {sim.m_x:.0f} of {sim.n('[2nu,2nu]'):.0f}, predicted rate {exp.m_x / exp.n('[2nu,2nu]'):.3f}")
