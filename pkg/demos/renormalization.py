"""Renormalized Rauzy-Veech orbits on small Rauzy classes."""

import numpy as np

from teichld.ldlab import teich_demo
from teichld.rauzy import Permutation, rauzy_class
from teichld.zippered import random_zippered_rectangle, renormalized_step

pi = Permutation((4, 3, 2, 1))
cls = rauzy_class(pi)
print(f"class of {pi}: {len(cls)} members")

x = random_zippered_rectangle(pi, np.random.default_rng(0), unit_area=True)
for _ in range(8):
    st = renormalized_step(x)
    print(f"{st.branch} winner {st.winner}  elapsed {st.elapsed:.4f}  -> {st.x.pi}")
    x = st.x

for perm in (Permutation((2, 1)), pi):
    rep = teich_demo(perm, starts=50, steps=4000, lengths=(400, 4000), seed=1)
    print(f"\n{perm}: letters {rep.letter_counts}, restarts {rep.restarts}")
    print(f"  roof min {rep.roof['min']:.3g}, mean {rep.roof['mean']:.4f}")
    for d in rep.deviation:
        print(f"  length {d['length']}: mass beyond {rep.eps} = {d['mass_beyond_eps']:.3f}")
