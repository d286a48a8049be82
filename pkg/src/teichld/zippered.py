"""Zippered rectangles, the Teichmueller flow and Rauzy-Veech induction.

A zippered rectangle is a triple ``(lam, pi, delta)`` with ``lam`` positive
and ``delta`` in the cone ``K(pi)``.  The flow scales ``lam`` by ``e^t`` and
``delta`` by ``e^-t``.

Induction convention
--------------------
Both ``lam`` and ``delta`` transform by the inverse matrix acting on column
vectors, ``lam' = A^-1 lam``.  With this action, positivity of ``lam'``
forces the branch choice

* ``lam[pi^-1 m] > lam[m]``: operation ``a``, winner ``pi^-1 m``;
* ``lam[m] > lam[pi^-1 m]``: operation ``b``, winner ``m``,

which is the first-return map of the interval exchange to
``[0, |lam| - min(lam[m], lam[pi^-1 m]))``.  Heights then transform by the
transpose, ``h' = A^T h``, so the area ``lam . h`` is invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError, NonInducibleError, ValidationError
from .rauzy import Permutation, matrix_a, matrix_b, rauzy_a, rauzy_b

__all__ = [
    "ZipperedRectangle",
    "Induction",
    "RenormalizedStep",
    "Itinerary",
    "CONE_TOL",
    "cone_contains",
    "heights",
    "a_vector",
    "area",
    "area_dual",
    "flow",
    "induce",
    "roof",
    "renormalized_step",
    "distance",
    "symbolic_itinerary",
    "random_zippered_rectangle",
    "random_lambda",
]

CONE_TOL = 1e-12


def _cone_tol(delta, tol):
    return tol * max(1.0, float(np.max(np.abs(delta))) if len(delta) else 1.0)


def cone_contains(pi: Permutation, delta, tol: float = CONE_TOL) -> bool:
    """Check the two families of partial-sum inequalities defining ``K(pi)``."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (pi.m,):
        raise ValidationError(f"delta has length {delta.size}, expected {pi.m}")
    eps = _cone_tol(delta, tol)
    upper = np.cumsum(delta)[:-1]
    inv = np.asarray(pi.inverse_image) - 1
    lower = np.cumsum(delta[inv])[:-1]
    return bool(np.all(upper <= eps) and np.all(lower >= -eps))


@dataclass(frozen=True, eq=False)
class ZipperedRectangle:
    lam: np.ndarray
    pi: Permutation
    delta: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        delta = np.array(self.delta, dtype=float)
        lam.flags.writeable = False
        delta.flags.writeable = False
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "delta", delta)
        if not self.validate:
            return
        m = self.pi.m
        if lam.shape != (m,) or delta.shape != (m,):
            raise ValidationError(f"lam and delta must have length {m}")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(delta)):
            raise ValidationError("non-finite zippered rectangle data")
        if np.any(lam <= 0):
            raise ValidationError("interval lengths must be positive")
        if not cone_contains(self.pi, delta):
            raise ValidationError("delta is not in the cone K(pi)")

    @property
    def m(self) -> int:
        return self.pi.m

    def __repr__(self):
        return f"ZipperedRectangle(lam={self.lam.tolist()}, pi={self.pi}, delta={self.delta.tolist()})"


def _heights(lam_unused, pi: Permutation, delta: np.ndarray) -> np.ndarray:
    before = np.concatenate(([0.0], np.cumsum(delta)))
    inv = np.asarray(pi.inverse_image) - 1
    below = np.concatenate(([0.0], np.cumsum(delta[inv])))
    image = np.asarray(pi.image)
    r = np.arange(pi.m)
    return -before[r] + below[image - 1]


def heights(x: ZipperedRectangle) -> np.ndarray:
    """``h_r = -sum_{i<r} delta_i + sum_{l<pi(r)} delta_{pi^-1 l}``."""
    return _heights(x.lam, x.pi, x.delta)


def a_vector(x: ZipperedRectangle) -> np.ndarray:
    """``a_i = -(delta_1 + ... + delta_{i-1})``; ``a_1 = 0``."""
    return -np.concatenate(([0.0], np.cumsum(x.delta)[:-1]))


def area(x: ZipperedRectangle) -> float:
    return float(x.lam @ heights(x))


def area_dual(x: ZipperedRectangle) -> float:
    """Area written as a linear form in ``delta`` rather than in ``lam``."""
    lam = x.lam
    after = np.concatenate((np.cumsum(lam[::-1])[::-1][1:], [0.0]))
    inv = np.asarray(x.pi.inverse_image) - 1
    lam_by_image = lam[inv]
    tail = np.concatenate((np.cumsum(lam_by_image[::-1])[::-1][1:], [0.0]))
    image = np.asarray(x.pi.image)
    coeff = -after + tail[image - 1]
    return float(x.delta @ coeff)


def flow(x: ZipperedRectangle, t: float) -> ZipperedRectangle:
    return ZipperedRectangle(math.exp(t) * x.lam, x.pi, math.exp(-t) * x.delta, validate=False)


def _act_inverse(branch: str, k: int, v: np.ndarray) -> np.ndarray:
    # Closed form of A(pi, branch)^{-1} v (column action); k = pi^-1(m), 1-indexed.
    m = v.size
    out = v.copy()
    if branch == "a":
        out[k - 1] = v[k - 1] - v[m - 1]
        out[k] = v[m - 1]
        out[k + 1 :] = v[k : m - 1]
    else:
        out[m - 1] = v[m - 1] - v[k - 1]
    return out


@dataclass(frozen=True)
class Induction:
    x: ZipperedRectangle
    branch: str
    winner: int
    matrix: np.ndarray


def _branch(lam, pi: Permutation) -> tuple[str, int, int]:
    m = pi.m
    k = pi.inverse(m)
    top, bottom = lam[m - 1], lam[k - 1]
    if bottom > top:
        return "a", k, k
    if top > bottom:
        return "b", m, k
    raise NonInducibleError(f"lam[pi^-1 m] == lam[m] == {top!r}; induction undefined")


def induce(x: ZipperedRectangle) -> Induction:
    """One step of Rauzy-Veech induction (the map U)."""
    branch, winner, k = _branch(x.lam, x.pi)
    if branch == "a":
        pi2, A = rauzy_a(x.pi), matrix_a(x.pi)
    else:
        pi2, A = rauzy_b(x.pi), matrix_b(x.pi)
    lam2 = _act_inverse(branch, k, np.array(x.lam))
    delta2 = _act_inverse(branch, k, np.array(x.delta))
    return Induction(ZipperedRectangle(lam2, pi2, delta2, validate=False), branch, winner, A)


def roof(lam, pi: Permutation) -> float:
    """Renormalization time ``-log((|lam| - min(lam_m, lam_{pi^-1 m})) / |lam|)``.

    Positive and invariant under rescaling of ``lam``.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (pi.m,) or np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("roof needs a finite positive length vector")
    total = float(lam.sum())
    loser = min(lam[pi.m - 1], lam[pi.inverse(pi.m) - 1])
    return -math.log1p(-loser / total)


@dataclass(frozen=True)
class RenormalizedStep:
    x: ZipperedRectangle
    elapsed: float
    branch: str
    winner: int


def renormalized_step(x: ZipperedRectangle) -> RenormalizedStep:
    """Induce, then flow for the roof time so that ``|lam| = 1`` again."""
    t = roof(x.lam, x.pi)
    step = induce(x)
    return RenormalizedStep(flow(step.x, t), t, step.branch, step.winner)


def _structural_zeros(pi: Permutation) -> np.ndarray:
    # a_1 and h_r - a_r with pi(r) = 1 are empty sums for every delta.
    m = pi.m
    z = np.zeros(4 * m, dtype=bool)
    z[2 * m] = True
    z[3 * m + pi.inverse(1) - 1] = True
    return z


def distance(x: ZipperedRectangle, y: ZipperedRectangle) -> float:
    """Hilbert-type distance built from the ratios of lam, h, |a| and |h - a|.

    Coordinates that vanish identically for either permutation (``a_1`` and
    ``h_r - a_r`` where ``pi(r) = 1``) are left out; any other zero raises
    MetricUndefinedError.
    """
    if x.m != y.m:
        raise ValidationError("zippered rectangles have different sizes")
    hx, hy = heights(x), heights(y)
    ax, ay = a_vector(x), a_vector(y)
    num = np.concatenate((x.lam, np.abs(hx), np.abs(ax), np.abs(hx - ax)))
    den = np.concatenate((y.lam, np.abs(hy), np.abs(ay), np.abs(hy - ay)))
    keep = ~(_structural_zeros(x.pi) | _structural_zeros(y.pi))
    num, den = num[keep], den[keep]
    if np.any(num == 0) or np.any(den == 0):
        raise MetricUndefinedError("metric undefined at this pair (zero coordinate)")
    ratios = num / den
    d = float(math.log(ratios.max() / ratios.min())) if ratios.size else 0.0
    am_x, am_y = ax[-1], ay[-1]
    if x.pi == y.pi and am_x * am_y > 0:
        return d
    return 2.0 + d


@dataclass
class Itinerary:
    labels: list = field(default_factory=list)
    times: list = field(default_factory=list)
    final: ZipperedRectangle | None = None
    error: str | None = None

    @property
    def total_time(self) -> float:
        return math.fsum(self.times)

    def __len__(self):
        return len(self.labels)


def symbolic_itinerary(x: ZipperedRectangle, n: int) -> Itinerary:
    """Labels ``(branch, winner)`` and roof times along ``n`` renormalized steps.

    Stops early, with ``error`` set, if a non-inducible point is reached.
    """
    if abs(float(x.lam.sum()) - 1.0) > 1e-9:
        raise ValidationError("symbolic_itinerary expects |lam| = 1")
    out = Itinerary(final=x)
    for _ in range(int(n)):
        try:
            step = renormalized_step(out.final)
        except NonInducibleError as exc:
            out.error = str(exc)
            break
        out.labels.append((step.branch, step.winner))
        out.times.append(step.elapsed)
        out.final = step.x
    return out


def random_lambda(m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform point of the open simplex ``{|lam| = 1, lam > 0}``."""
    e = rng.exponential(size=m)
    return e / e.sum()


def random_zippered_rectangle(
    pi: Permutation,
    rng: np.random.Generator,
    *,
    unit_area: bool = False,
    max_tries: int = 100_000,
) -> ZipperedRectangle:
    """Sample ``lam`` uniformly on the simplex and ``delta`` in ``K(pi)``.

    ``delta`` comes from rejection sampling in the box ``[-1, 1]^m``; with
    ``unit_area`` it is rescaled so the area equals one.
    """
    m = pi.m
    lam = random_lambda(m, rng)
    for _ in range(max_tries):
        delta = rng.uniform(-1.0, 1.0, size=m)
        if not cone_contains(pi, delta, tol=0.0):
            continue
        h = _heights(lam, pi, delta)
        a = float(lam @ h)
        if a <= 1e-9:
            continue
        if unit_area:
            delta = delta / a
        return ZipperedRectangle(lam, pi, delta)
    raise ValidationError(f"could not sample delta in K({pi}) in {max_tries} tries")
