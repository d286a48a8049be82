"""Acceptance gate: every criterion at its stated tolerance.

Each check prints ``criterion N: PASS|FAIL`` with the measured numbers and
runtime; the same lines are repeated in the pytest terminal summary.
"""

import itertools
import json
import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import quad_flow_integral, two_state_search
from teichld.errors import NonInducibleError
from teichld.ldlab import ExperimentConfig, deviate_flow, deviate_shift, lap_deviation, teich_demo
from teichld.rauzy import Permutation, integer_det, rauzy_class
from teichld.shift import Configuration, Observable, livsic_test, periodic_sums, periodic_words
from teichld.suspension import (
    FlowObservable,
    Roof,
    SuspensionPoint,
    batch_lap_numbers,
    flow_integral,
    sample_mu_r,
)
from teichld.thermo import (
    bernoulli,
    bernoulli_potential,
    deviation_bound,
    equilibrium_measure,
    exact_deviation_probability,
    gibbs_constant,
    integrate,
    pressure,
)
from teichld.zippered import area, cone_contains, flow, induce, random_zippered_rectangle, roof

HALF = bernoulli_potential([0.5, 0.5])
PM = Observable([1.0, -1.0])
RATE = -0.130812


@contextmanager
def criterion(n, title, limit=None):
    """Record PASS when the block completes (within ``limit`` seconds), FAIL otherwise."""
    info = {}
    t0 = time.perf_counter()
    ok, why = False, ""
    try:
        yield info
        elapsed = time.perf_counter() - t0
        ok = limit is None or elapsed < limit
        if not ok:
            why = f"runtime {elapsed:.1f}s exceeds {limit}s"
    except AssertionError as exc:
        why = str(exc).splitlines()[0] if str(exc) else "assertion failed"
        raise
    finally:
        elapsed = time.perf_counter() - t0
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        line = f"criterion {n:>4}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}{'; ' if detail else ''}{elapsed:.2f}s]"
        if why:
            line += f"  ({why})"
        print(line)
        ACCEPTANCE_LINES.append((f"{int(str(n).rstrip('ab')):02d}{n}", line))
    assert ok, why


def test_criterion_01_rauzy_class():
    with criterion("1", "Rauzy class of (3 2 1)", limit=1) as info:
        P = Permutation.parse
        cls = rauzy_class(P("3,2,1"))
        assert set(cls.members) == {P("3,2,1"), P("3,1,2"), P("2,3,1")}, "class members"
        edges = {(e.source, e.label): e.target for e in cls.edges}
        derived = {
            (P("3,2,1"), "a"): P("3,1,2"),
            (P("2,3,1"), "a"): P("2,3,1"),
            (P("3,2,1"), "b"): P("2,3,1"),
            (P("3,1,2"), "b"): P("3,1,2"),
        }
        assert all(edges[k] == v for k, v in derived.items()), f"edges {edges}"
        assert len(edges) == 6 and set(edges.values()) <= set(cls.members)
        dets = [integer_det(e.matrix) for e in cls.edges]
        assert all(isinstance(d, int) and abs(d) == 1 for d in dets)
        info.update(members=len(cls), edges=len(dets), dets=sorted(set(dets)))


def test_criterion_02_zippered_invariants():
    with criterion("2", "zippered invariants over 10^4 rectangles", limit=30) as info:
        rng = np.random.default_rng(20240602)
        pis = [pi for start in ("2,1", "3,2,1", "4,3,2,1") for pi in rauzy_class(Permutation.parse(start)).members]
        worst_area = worst_comm = 0.0
        induced = 0
        for i in range(10_000):
            x = random_zippered_rectangle(pis[i % len(pis)], rng)
            a0 = area(x)
            t = float(rng.uniform(-2, 2))
            y = flow(x, t)
            worst_area = max(worst_area, abs(area(y) - a0) / max(1.0, a0))
            assert np.all(y.lam > 0) and cone_contains(y.pi, y.delta)
            assert roof(x.lam, x.pi) > 0
            try:
                u = induce(x).x
            except NonInducibleError:
                continue
            induced += 1
            worst_area = max(worst_area, abs(area(u) - a0) / max(1.0, a0))
            assert np.all(u.lam > 0) and cone_contains(u.pi, u.delta)
            fu, uf = flow(u, t), induce(y).x
            assert fu.pi == uf.pi
            worst_comm = max(worst_comm, float(np.max(np.abs(fu.lam - uf.lam))), float(np.max(np.abs(fu.delta - uf.delta))))
        info.update(induced=induced, area_err=f"{worst_area:.2e}", commute_err=f"{worst_comm:.2e}")
        assert induced > 9_900
        assert worst_area <= 1e-12
        assert worst_comm <= 1e-10


def test_criterion_03_pressure_exactness():
    with criterion("3", "pressure of zero, normalized potentials, Gibbs constant", limit=5) as info:
        err0 = max(abs(pressure(Observable.constant(0.0, L)) - math.log(L)) for L in range(2, 7))
        rng = np.random.default_rng(3)
        errn, worst_k = 0.0, 0.0
        for L in range(2, 7):
            for _ in range(3):
                p = rng.dirichlet(np.ones(L))
                psi = bernoulli_potential(p)
                mu = equilibrium_measure(psi, n_check=8)
                errn = max(errn, abs(mu.pressure))
                worst_k = max(worst_k, mu.gibbs_constant, gibbs_constant(bernoulli(p), psi, 0.0, 8))
        info.update(log_L_err=f"{err0:.1e}", normalized_err=f"{errn:.1e}", max_K=f"{worst_k:.12f}")
        assert err0 <= 1e-12
        assert errn <= 1e-12
        assert worst_k <= 1 + 1e-6


def test_criterion_04_rate_oracle():
    with criterion("4", "deviation bound against KL closed form and 2-state search", limit=10) as info:
        val = deviation_bound(HALF, PM, 0.5)
        kl = -(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
        search = two_state_search([math.log(0.5)] * 2, [1.0, -1.0], 0.0, 0.5)
        info.update(bound=f"{val:.7f}", kl=f"{kl:.7f}", search=f"{search:.7f}")
        assert abs(val - RATE) <= 1e-4 and abs(val - kl) <= 1e-4
        assert abs(val - search) <= 1e-4


N20 = 20


def _exact20():
    return exact_deviation_probability(bernoulli([0.5, 0.5]), PM, N20, 0.5, rational=True)


def test_criterion_05a_exact_probability():
    with criterion("5a", "exact n=20 probability is 43400/1048576", limit=1) as info:
        p = _exact20()
        slope = math.log(p) / N20
        info.update(p=str(p), log_p_over_n=f"{slope:.7f}")
        assert p == Fraction(43400, 1048576)
        # 43400 = 2 * (C(20,0) + ... + C(20,5)), the two binomial tails
        assert p == Fraction(2 * sum(math.comb(20, k) for k in range(6)), 2**20)
        assert abs(slope - math.log(43400 / 1048576) / 20) < 1e-15


@pytest.mark.xfail(strict=True, reason="stated value -0.159265 differs from log(43400/1048576)/20 = -0.1592364")
def test_criterion_05b_stated_log_rate():
    with criterion("5b", "(1/20) log p = -0.159265 +- 1e-6 as stated", limit=1) as info:
        slope = math.log(_exact20()) / N20
        info.update(log_p_over_n=f"{slope:.7f}", stated=-0.159265)
        assert abs(slope - (-0.159265)) <= 1e-6, f"|{slope:.7f} - (-0.159265)| = {abs(slope + 0.159265):.2e} > 1e-6"


def shift_config(**kw):
    base = dict(psi=HALF, phi=PM, eps=0.5, grid=(100, 200, 400, 800), samples=1_000_000, seed=20240601, mode="both")
    base.update(kw)
    return ExperimentConfig(**base)


def test_criterion_06_empirical_rate():
    with criterion("6", "shift slope within 0.02 of -0.130812, verdict consistent", limit=300) as info:
        rep = deviate_shift(shift_config())
        info.update(slope=f"{rep.slope.slope:.5f}+-{rep.slope.half_width:.5f}", verdict=rep.verdict)
        assert abs(rep.slope.slope - RATE) < 0.02
        assert rep.verdict == "consistent"


def test_criterion_07_flow_decomposition():
    with criterion("7", "flow integral against quadrature on 10^3 cases", limit=30) as info:
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            L = int(rng.integers(2, 4))
            rd, pd = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            r = Roof(Observable(rng.uniform(0.5, 2.0, size=L**rd), L, rd))
            phi = FlowObservable(L, pd, [0.0, 0.4, 1.1, 2.5], rng.normal(size=(L**pd, 3, 3)))
            x = Configuration.from_window(rng.integers(0, L, size=81), L)
            z = SuspensionPoint(x, rng.uniform(0, r(x)), r)
            T = rng.uniform(0, 12)
            res = flow_integral(phi, z, T)
            worst = max(worst, abs(res.value - quad_flow_integral(phi, r, x, z.s, T)))
            assert abs(res.remainder) <= res.remainder_bound * (1 + 1e-12), "|I_T| bound violated"
        info.update(max_err=f"{worst:.2e}")
        assert worst < 1e-8


def test_criterion_08_lap_lln_and_ld():
    with criterion("8", "lap-number LLN at T=10^4 and negative lap slope", limit=180) as info:
        r = Roof(Observable([1.0, 2.0]))
        mu = bernoulli([0.5, 0.5])
        T = 10_000.0
        gaps = []
        for block in range(5):
            rng = np.random.default_rng([8, block])
            smp = sample_mu_r(mu, r, rng, 2000, int(T) + 10)
            gaps.append(batch_lap_numbers(smp.words, smp.heights, T, r) / T - 1 / 1.5)
        gap = abs(float(np.mean(np.concatenate(gaps))))
        rep = lap_deviation(
            ExperimentConfig(psi=HALF, roof=r, zeta=0.1, grid=(1000, 2500, 5000, 10_000), samples=10_000, seed=20240603, mode="mc")
        )
        hi = rep.slope.slope + rep.slope.half_width
        info.update(lln_gap=f"{gap:.2e}", slope=f"{rep.slope.slope:.5f}+-{rep.slope.half_width:.5f}", points=rep.slope.n_points)
        assert gap < 1e-2
        assert rep.slope.slope < 0 and hi < 0


def test_criterion_09_flow_matches_shift():
    with criterion("9", "unit-roof flow slope equals shift slope, verdict consistent", limit=300) as info:
        grid = (100, 200, 400, 800)
        fl = deviate_flow(
            ExperimentConfig(
                psi=HALF, phi=FlowObservable.fiber_constant([1.0, -1.0]), roof=Roof.constant(1.0, 2), eps=0.5, grid=grid, samples=100_000, seed=20240604, mode="mc"
            )
        )
        sh = deviate_shift(shift_config(grid=grid, samples=100_000, seed=20240604, mode="mc"))
        diff = abs(fl.slope.slope - sh.slope.slope)
        tol = fl.slope.half_width + sh.slope.half_width
        info.update(flow=f"{fl.slope.slope:.5f}", shift=f"{sh.slope.slope:.5f}", diff=f"{diff:.5f}", combined_hw=f"{tol:.5f}", upper=fl.verdicts["upper"])
        assert diff <= tol
        assert fl.verdicts["upper"] == "consistent"


def test_criterion_10_livsic_suite():
    with criterion("10", "planted coboundary to period 8 and a witness", limit=10) as info:
        rng = np.random.default_rng(10)
        chi = rng.normal(size=(2, 2))
        phi = Observable(chi[None, :, :] - chi[:, :, None])
        res = livsic_test(phi, 8)
        worst = max(float(np.max(np.abs(periodic_sums(phi, periodic_words(p, 2))))) for p in range(1, 9))
        wit = livsic_test(Observable([1.0, 0.0]) - 0.5, 8)
        info.update(max_periodic_sum=f"{worst:.1e}", witness_sum=wit.sum, witness_period=wit.period)
        assert res.is_coboundary and res.reached_period == 8
        assert worst < 1e-10
        assert wit.verdict == "witness" and abs(wit.sum) > 0.1


def demo():
    return teich_demo(Permutation((2, 1)), starts=100, steps=10_000, lengths=(1000, 10_000), eps=0.2, seed=20240605)


def test_criterion_11_teich_demo():
    with criterion("11", "renormalization demo on the 2-letter class", limit=120) as info:
        rep = demo()
        mass = {d["length"]: d["mass_beyond_eps"] for d in rep.deviation}
        info.update(steps=sum(rep.letter_counts.values()), letters=rep.letter_counts, nonfinite=rep.nonfinite, roof_min=f"{rep.roof['min']:.2e}", mass=mass)
        assert sum(rep.letter_counts.values()) >= 100_000
        assert rep.nonfinite == 0
        assert rep.letter_counts["a"] > 0 and rep.letter_counts["b"] > 0
        assert rep.roof["min"] > 0
        assert mass[10_000] < mass[1000]


def test_criterion_12_reproducible():
    with criterion("12", "same seed and workers give bitwise-identical reports", limit=None) as info:
        def dump(rep):
            return json.dumps(rep.canonical(), sort_keys=True)

        cfg = shift_config(mode="mc", samples=200_000, workers=2)
        shift_same = dump(deviate_shift(cfg)) == dump(deviate_shift(cfg))
        lap_cfg = ExperimentConfig(psi=HALF, roof=Roof(Observable([1.0, 2.0])), zeta=0.1, grid=(500, 1000, 2000), samples=5000, seed=12, mode="mc")
        lap_same = dump(lap_deviation(lap_cfg)) == dump(lap_deviation(lap_cfg))
        small = dict(starts=10, steps=1000, lengths=(100, 1000), seed=12)
        demo_same = json.dumps(teich_demo(Permutation((2, 1)), **small).canonical(), sort_keys=True) == json.dumps(
            teich_demo(Permutation((2, 1)), **small).canonical(), sort_keys=True
        )
        info.update(shift=shift_same, lap=lap_same, demo=demo_same)
        assert shift_same and lap_same and demo_same
