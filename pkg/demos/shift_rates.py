"""Deviation probabilities of a +-1 observable under a fair coin.

Compares exact finite-n probabilities, the Monte-Carlo estimate and the
variational exponent, then fits the exponential slope.
"""

import math

from teichld.ldlab import ExperimentConfig, deviate_shift
from teichld.shift import Observable
from teichld.thermo import bernoulli, bernoulli_potential, deviation_bound, exact_deviation_probability

psi = bernoulli_potential([0.5, 0.5])
phi = Observable([1.0, -1.0])
eps = 0.5

rate = deviation_bound(psi, phi, eps)
print(f"variational exponent at eps={eps}: {rate:.6f}")

mu = bernoulli([0.5, 0.5])
for n in (20, 50, 100, 200):
    p = exact_deviation_probability(mu, phi, n, eps)
    print(f"n={n:4d}  exact p={p:.4e}  (1/n) log p={math.log(p) / n:+.5f}")

rep = deviate_shift(ExperimentConfig(psi=psi, phi=phi, eps=eps, grid=(100, 200, 400, 800), samples=200_000, seed=1))
for pt in rep.points:
    print(f"n={pt.x:5.0f}  p_hat={pt.p_hat:.4e} +- {pt.std_error:.1e}  exact={pt.p_exact:.4e}  agrees={pt.agrees}")
lo, hi = rep.slope.ci
print(f"fitted slope {rep.slope.slope:.5f}  CI [{lo:.5f}, {hi:.5f}]  prefactor-corrected {rep.slope_corrected.slope:.5f}")
print(f"verdict: {rep.verdict}  {rep.verdicts}")
