"""Suspension flow over a fair coin with roof r in {1, 2}.

Shows the lap-number law of large numbers, the bound terms for flow
deviations and a lap-number deviation experiment.
"""

import numpy as np

from teichld.ldlab import ExperimentConfig, deviate_flow, lap_deviation
from teichld.shift import Observable
from teichld.suspension import FlowObservable, Roof, batch_lap_numbers, sample_mu_r
from teichld.thermo import bernoulli, bernoulli_potential

psi = bernoulli_potential([0.5, 0.5])
r = Roof(Observable([1.0, 2.0]))

rng = np.random.default_rng(0)
T = 5000.0
smp = sample_mu_r(bernoulli([0.5, 0.5]), r, rng, 2000, int(T) + 10)
laps = batch_lap_numbers(smp.words, smp.heights, T, r)
print(f"mean laps/T at T={T:.0f}: {laps.mean() / T:.5f}  (1/mean roof = {1 / 1.5:.5f})")

# fiber-constant observable +1 over symbol 0, -1 over symbol 1
phi = FlowObservable.fiber_constant([1.0, -1.0])
rep = deviate_flow(ExperimentConfig(psi=psi, phi=phi, roof=r, eps=0.3, grid=(50, 100, 200, 400), samples=40_000, seed=2, mode="mc"))
print("flow deviation:", rep.verdict, rep.verdicts)
print(f"  slope {rep.slope.slope:.5f} +- {rep.slope.half_width:.5f}, upper {rep.bound_upper:.5f}, lower {rep.bound_lower:.5f}")
for name, value in rep.bound_terms.items():
    print(f"  {name:>16}: {value}")

lap = lap_deviation(ExperimentConfig(psi=psi, roof=r, zeta=0.1, grid=(1000, 2000, 4000), samples=10_000, seed=3, mode="mc"))
print(f"lap deviation slope {lap.slope.slope:.5f} +- {lap.slope.half_width:.5f}, bound {lap.bound_upper:.5f}, verdict {lap.verdict}")
