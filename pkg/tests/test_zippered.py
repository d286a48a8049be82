import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from teichld.errors import MetricUndefinedError, NonInducibleError, ValidationError
from teichld.rauzy import Permutation, matrix_a, matrix_b, rauzy_class
from teichld.zippered import (
    ZipperedRectangle,
    _act_inverse,
    a_vector,
    area,
    area_dual,
    cone_contains,
    distance,
    flow,
    heights,
    induce,
    random_zippered_rectangle,
    renormalized_step,
    roof,
    symbolic_itinerary,
)

P = Permutation.parse
PI21 = P("2,1")


def zr(lam, pi="2,1", delta=(-1.0, 1.0)):
    return ZipperedRectangle(np.array(lam, float), P(pi), np.array(delta, float))


def classes():
    return [m for m in (P("2,1"), P("3,2,1"), P("4,3,2,1"), P("2,4,1,3"))]


def samples(n, seed=0):
    rng = np.random.default_rng(seed)
    pis = []
    for start in classes():
        pis.extend(rauzy_class(start).members)
    for i in range(n):
        pi = pis[i % len(pis)]
        yield random_zippered_rectangle(pi, rng)


@pytest.mark.parametrize(
    "delta, expected", [((-1, 1), True), ((0, 0), True), ((1, -1), False)]
)
def test_cone_examples(delta, expected):
    assert cone_contains(PI21, delta) is expected


def test_cone_length_mismatch():
    with pytest.raises(ValidationError):
        cone_contains(PI21, [0.0, 0.0, 0.0])


def test_cone_tolerance():
    assert cone_contains(PI21, [1e-13, 0.0])
    assert not cone_contains(PI21, [1e-9, 0.0])


def test_heights_and_a():
    x = zr([0.5, 0.5])
    np.testing.assert_allclose(heights(x), [1.0, 1.0])
    np.testing.assert_allclose(a_vector(x), [0.0, 1.0])
    y = zr([0.5, 0.5], delta=(0.0, 0.0))
    np.testing.assert_array_equal(heights(y), [0.0, 0.0])
    np.testing.assert_array_equal(a_vector(y), [0.0, 0.0])


def test_heights_brute_force():
    rng = np.random.default_rng(3)
    for x in samples(200):
        m, pi, d = x.m, x.pi, x.delta
        h = [
            -sum(d[i - 1] for i in range(1, r))
            + sum(d[pi.inverse(l) - 1] for l in range(1, pi(r)))
            for r in range(1, m + 1)
        ]
        np.testing.assert_allclose(heights(x), h, atol=1e-14)
        assert np.all(heights(x) >= -1e-12)
        assert a_vector(x)[0] == 0.0


def test_area_examples():
    assert area(zr([0.5, 0.5])) == pytest.approx(1.0, abs=1e-15)
    assert area(zr([0.5, 0.5], delta=(0, 0))) == 0.0
    x = zr([0.3, 0.9], "2,1", (-0.4, 0.7))
    y = ZipperedRectangle(3.0 * x.lam, x.pi, x.delta)
    assert area(y) == pytest.approx(3.0 * area(x), rel=1e-14)


def test_area_two_forms_agree():
    for x in samples(2000, seed=1):
        assert abs(area(x) - area_dual(x)) <= 1e-12 * max(1.0, area(x))


def test_invalid_rectangles():
    with pytest.raises(ValidationError):
        zr([0.0, 1.0])
    with pytest.raises(ValidationError):
        zr([0.5, 0.5], delta=(1.0, -1.0))
    with pytest.raises(ValidationError):
        zr([0.5, 0.5, 0.1])


def test_flow_examples():
    x = next(samples(1))
    y = flow(x, 0.0)
    np.testing.assert_array_equal(y.lam, x.lam)
    np.testing.assert_array_equal(y.delta, x.delta)
    a = flow(flow(x, 0.4), -1.1)
    b = flow(x, -0.7)
    np.testing.assert_allclose(a.lam, b.lam, rtol=1e-12)
    np.testing.assert_allclose(a.delta, b.delta, rtol=1e-12)


def test_induce_examples():
    x = zr([0.6, 0.4])
    step = induce(x)
    assert (step.branch, step.winner) == ("a", 1)
    np.testing.assert_allclose(step.x.lam, [0.2, 0.4], atol=1e-15)
    assert induce(zr([0.4, 0.6])).branch == "b"
    with pytest.raises(NonInducibleError):
        induce(zr([0.5, 0.5]))


def test_act_inverse_is_matrix_inverse():
    rng = np.random.default_rng(5)
    for start in classes():
        for pi in rauzy_class(start).members:
            k = pi.inverse(pi.m)
            v = rng.normal(size=pi.m)
            for branch, mat in (("a", matrix_a), ("b", matrix_b)):
                expected = np.linalg.solve(mat(pi).astype(float), v)
                np.testing.assert_allclose(_act_inverse(branch, k, v), expected, atol=1e-12)


def test_induction_is_first_return_of_the_interval_exchange():
    # Follow points of [0, |lam| - loser) under the exchange until they return.
    rng = np.random.default_rng(11)
    for _ in range(200):
        pi = P("4,3,2,1") if rng.random() < 0.5 else P("2,4,1,3")
        lam = rng.exponential(size=pi.m)
        lam /= lam.sum()
        x = ZipperedRectangle(lam, pi, np.zeros(pi.m))
        step = induce(x)
        top = np.concatenate(([0.0], np.cumsum(lam)))
        inv = pi.inverse_image
        bottom_start = np.zeros(pi.m)
        acc = 0.0
        for pos in range(1, pi.m + 1):
            j = inv[pos - 1]
            bottom_start[j - 1] = acc
            acc += lam[j - 1]

        def T(p):
            j = int(np.searchsorted(top, p, side="right")) - 1
            return p - top[j] + bottom_start[j]

        J = lam.sum() - min(lam[pi.m - 1], lam[pi.inverse(pi.m) - 1])
        lam2 = step.x.lam
        top2 = np.concatenate(([0.0], np.cumsum(lam2)))
        inv2 = step.x.pi.inverse_image
        bottom2 = np.zeros(pi.m)
        acc = 0.0
        for pos in range(1, pi.m + 1):
            j = inv2[pos - 1]
            bottom2[j - 1] = acc
            acc += lam2[j - 1]
        for p in rng.uniform(0, J, size=20):
            q = T(p)
            while q >= J:
                q = T(q)
            j = int(np.searchsorted(top2, p, side="right")) - 1
            assert abs(q - (p - top2[j] + bottom2[j])) < 1e-12


def test_roof_examples():
    assert roof([0.5, 0.5], PI21) == pytest.approx(math.log(2), abs=1e-15)
    assert roof([0.6, 0.4], PI21) == pytest.approx(-math.log(0.6), abs=1e-15)
    assert roof([1.2, 0.8], PI21) == pytest.approx(roof([0.6, 0.4], PI21), abs=1e-15)
    with pytest.raises(ValidationError):
        roof([0.0, 1.0], PI21)


def test_renormalized_step_example():
    step = renormalized_step(zr([0.6, 0.4]))
    np.testing.assert_allclose(step.x.lam, [1 / 3, 2 / 3], atol=1e-15)
    assert step.elapsed == pytest.approx(0.510826, abs=1e-6)
    assert step.x.lam.sum() == pytest.approx(1.0, abs=1e-15)


def test_invariants_over_many_samples():
    n = 0
    for i, x in enumerate(samples(10_000, seed=2)):
        a0 = area(x)
        t = 0.3 * ((i % 7) - 3)
        assert abs(area(flow(x, t)) - a0) <= 1e-12 * max(1, a0)
        assert cone_contains(x.pi, flow(x, t).delta)
        try:
            step = induce(x)
        except NonInducibleError:
            continue
        y = step.x
        assert np.all(y.lam > 0)
        assert cone_contains(y.pi, y.delta)
        assert abs(area(y) - a0) <= 1e-12 * max(1, a0)
        assert np.all(heights(y) >= -1e-12)
        assert roof(x.lam, x.pi) > 0
        fi = induce(flow(x, t)).x
        if_ = flow(y, t)
        assert fi.pi == if_.pi
        np.testing.assert_allclose(fi.lam, if_.lam, rtol=0, atol=1e-10)
        np.testing.assert_allclose(fi.delta, if_.delta, rtol=0, atol=1e-10)
        s = renormalized_step(ZipperedRectangle(x.lam / x.lam.sum(), x.pi, x.delta))
        assert s.x.lam.sum() == pytest.approx(1.0, abs=1e-12)
        assert abs(area(s.x) - area(ZipperedRectangle(x.lam / x.lam.sum(), x.pi, x.delta))) <= 1e-12
        n += 1
    assert n > 9_900


def test_distance_examples():
    x = zr([0.3, 0.7], "2,1", (-0.4, 0.7))
    assert distance(x, x) == 0.0
    y = flow(x, 0.37)
    assert distance(x, y) == pytest.approx(2 * 0.37, abs=1e-12)
    rng = np.random.default_rng(4)
    z = random_zippered_rectangle(P("3,2,1"), rng)
    w = random_zippered_rectangle(P("3,1,2"), rng)
    assert distance(z, w) >= 2


def test_distance_undefined():
    x = zr([0.3, 0.7], "2,1", (-0.4, 0.7))
    y = zr([0.3, 0.7], "2,1", (0.0, 0.7))
    with pytest.raises(MetricUndefinedError):
        distance(x, y)


def test_metric_axioms():
    rng = np.random.default_rng(9)
    pi = P("4,3,2,1")
    pts = [random_zippered_rectangle(pi, rng) for _ in range(150)]
    for i in range(0, 150, 3):
        x, y, z = pts[i : i + 3]
        dxy, dyz, dxz = distance(x, y), distance(y, z), distance(x, z)
        assert dxy == pytest.approx(distance(y, x), abs=1e-12)
        assert distance(x, x) == 0.0
        assert dxz <= dxy + dyz + 1e-9


@given(st.floats(0.01, 0.99).filter(lambda v: abs(v - 0.5) > 1e-6))
def test_itinerary_m2(l1):
    x = zr([l1, 1 - l1])
    it = symbolic_itinerary(x, 5)
    assert all(lbl[0] in "ab" for lbl in it.labels)
    assert it.total_time == pytest.approx(sum(it.times), abs=1e-12)
    assert all(t > 0 for t in it.times)


def test_itinerary_examples():
    x = zr([0.6, 0.4])
    assert len(symbolic_itinerary(x, 0)) == 0
    it = symbolic_itinerary(x, 3)
    assert it.labels[0] == ("a", 1)
    it = symbolic_itinerary(zr([0.5, 0.5]), 10)
    assert len(it) == 0 and it.error is not None
    assert it.final.lam.tolist() == [0.5, 0.5]
