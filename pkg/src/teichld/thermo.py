"""Thermodynamic formalism for locally constant potentials on a full shift.

A depth-``d`` potential acts on a de Bruijn graph whose states are words of
length ``s = max(d - 1, 1)``.  The edge ``u -> v`` appends one symbol ``c``
(``v = u[1:] + c``) and carries weight ``exp(psi(last d symbols of u.c))``.
Edges are stored as ``(S, L)`` arrays indexed by ``(state, appended symbol)``.

Equilibrium states are Markov measures of order ``s`` built from the left
and right Perron vectors.  Cylinder masses use one-sided words
``[w_0 .. w_{k-1}]``; with the two-sided convention the Gibbs ratio is not
bounded uniformly in ``k``, so the one-sided form is the meaningful one on a
finite alphabet.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BudgetError, ConvergenceError, ValidationError
from .shift import Observable, all_words, livsic_test

__all__ = [
    "MarkovMeasure",
    "GibbsMeasure",
    "PressureCurve",
    "ZeroVarianceWarning",
    "bernoulli",
    "bernoulli_potential",
    "random_markov_measure",
    "edge_values",
    "transfer_matrix",
    "perron",
    "pressure",
    "equilibrium_measure",
    "gibbs_constant",
    "entropy",
    "integrate",
    "pressure_curve",
    "rate_function",
    "cycle_mean_range",
    "constrained_sup",
    "deviation_bound",
    "exact_deviation_probability",
    "PERRON_RTOL",
    "DEFAULT_DP_BUDGET",
]

PERRON_RTOL = 1e-12
PERRON_MAX_ITER = 100_000
DEFAULT_DP_BUDGET = 4_000_000
GIBBS_SCAN_BUDGET = 1 << 20  # words scanned by default when building a measure
GIBBS_SCAN_LIMIT = 1 << 23  # hard cap for an explicit scan


class ZeroVarianceWarning(UserWarning):
    """The observable is cohomologous to a constant; deviations have no exponential rate."""


def _order_for(depth: int) -> int:
    return max(depth - 1, 1)


def edge_values(obs: Observable, order: int) -> np.ndarray:
    """Values of ``obs`` on the word ``u.c`` (its last ``depth`` symbols), shape ``(L**order, L)``."""
    if obs.depth > order + 1:
        raise ValidationError(f"depth-{obs.depth} observable needs states of length >= {obs.depth - 1}")
    L = obs.L
    code = np.arange(L ** (order + 1))
    return obs.flat[code % (L**obs.depth)].reshape(L**order, L)


def _successors(L: int, order: int) -> np.ndarray:
    S = L**order
    return (np.arange(S)[:, None] * L + np.arange(L)[None, :]) % S


def _dense(edges: np.ndarray, L: int, order: int) -> np.ndarray:
    S = L**order
    M = np.zeros((S, S))
    succ = _successors(L, order)
    np.add.at(M, (np.repeat(np.arange(S), L), succ.ravel()), edges.ravel())
    return M


def transfer_matrix(psi: Observable, order: int | None = None) -> np.ndarray:
    """Dense transfer matrix over de Bruijn states of length ``order``."""
    order = _order_for(psi.depth) if order is None else order
    return _dense(np.exp(edge_values(psi, order)), psi.L, order)


@dataclass(frozen=True)
class PerronData:
    value: float
    right: np.ndarray
    left: np.ndarray
    iterations: int
    bracket: tuple


def _power(M: np.ndarray, v0: np.ndarray, rtol: float, max_iter: int):
    v = np.maximum(v0, 1e-300)
    v = v / v.sum()
    lo = hi = float("nan")
    for it in range(max_iter):
        w = M @ v
        ratios = w / v
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi), w / w.sum(), it + 1, (lo, hi)
        v = w / w.sum()
    raise ConvergenceError(
        f"power iteration did not reach rtol {rtol} in {max_iter} steps",
        residual=(hi - lo) / hi if hi else float("inf"),
    )


def perron(M: np.ndarray, rtol: float = PERRON_RTOL, max_iter: int = PERRON_MAX_ITER) -> PerronData:
    """Perron eigenvalue and positive eigenvectors of a primitive nonnegative matrix.

    A LAPACK eigenvector seeds power iteration, which then runs until the
    Collatz-Wielandt bounds ``min (Mv)_i/v_i <= lambda <= max (Mv)_i/v_i``
    agree to ``rtol``.  The seed makes convergence fast; the bracket is the
    certificate.
    """
    M = np.asarray(M, dtype=float)
    out = []
    for A in (M, M.T):
        w, V = np.linalg.eig(A)
        i = int(np.argmax(w.real))
        seed = np.abs(V[:, i].real)
        out.append(_power(A, seed, rtol, max_iter))
    (lam, right, it1, br), (_, left, it2, _) = out
    return PerronData(lam, right, left, it1 + it2, br)


def _log_perron(edges_log: np.ndarray, L: int, order: int):
    shift = float(edges_log.max())
    E = np.exp(edges_log - shift)
    data = perron(_dense(E, L, order))
    return math.log(data.value) + shift, data, E


def pressure(psi: Observable) -> float:
    """``log`` of the Perron eigenvalue of the transfer matrix."""
    order = _order_for(psi.depth)
    return _log_perron(edge_values(psi, order), psi.L, order)[0]


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Shift-invariant Markov measure of a given order.

    ``kernel[u, c]`` is the probability of appending symbol ``c`` after the
    state word ``u`` (length ``order``); ``stationary`` is the law of the
    first ``order`` symbols.
    """

    L: int
    order: int
    kernel: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        S = self.L**self.order
        kernel = np.asarray(self.kernel, dtype=float)
        stationary = np.asarray(self.stationary, dtype=float)
        if kernel.shape != (S, self.L) or stationary.shape != (S,):
            raise ValidationError("kernel/stationary shapes do not match the state space")
        if np.any(kernel < 0) or np.any(stationary < 0):
            raise ValidationError("negative probabilities")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stationary", stationary)

    @property
    def n_states(self) -> int:
        return self.L**self.order

    @property
    def transition(self) -> np.ndarray:
        """Row-stochastic matrix over de Bruijn states."""
        return _dense(self.kernel, self.L, self.order)

    @property
    def is_iid(self) -> bool:
        return bool(np.allclose(self.kernel, self.kernel[0], atol=0, rtol=1e-15))

    def stationarity_error(self) -> float:
        return float(np.max(np.abs(self.stationary @ self.transition - self.stationary)))

    def word_masses(self, n: int) -> np.ndarray:
        """Masses of all length-``n`` cylinders, in code order."""
        s = self.order
        if n <= s:
            return self.stationary.reshape(self.L**n, -1).sum(axis=1)
        masses = self.stationary
        for _ in range(n - s):
            state = np.arange(masses.size) % self.n_states
            masses = (masses[:, None] * self.kernel[state]).reshape(-1)
        return masses

    def log_kernel(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.kernel)

    def log_prob(self, words: np.ndarray) -> np.ndarray:
        """``log mu[w]`` for each row of ``words`` (length >= order)."""
        words = np.asarray(words, dtype=np.int64)
        s = self.order
        code = np.zeros(words.shape[:-1], dtype=np.int64)
        for j in range(s):
            code = code * self.L + words[..., j]
        with np.errstate(divide="ignore"):
            out = np.log(self.stationary[code])
        out = out + self.path_log_ratio_increments(words, self.log_kernel()).sum(axis=-1)
        return out

    def path_log_ratio_increments(self, words: np.ndarray, logk: np.ndarray) -> np.ndarray:
        """``logk[state_i, w_{i+s}]`` along each row, shape ``(..., N - s)``."""
        words = np.asarray(words, dtype=np.int64)
        s, L = self.order, self.L
        N = words.shape[-1]
        if N <= s:
            return np.zeros(words.shape[:-1] + (0,))
        state = np.zeros(words.shape[:-1] + (N - s,), dtype=np.int64)
        for j in range(s):
            state = state * L + words[..., j : j + N - s]
        return logk[state, words[..., s:]]

    def sample(self, size: int, length: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` independent words of the given length, shape ``(size, length)``."""
        s, L = self.order, self.L
        if self.is_iid:
            cum = np.cumsum(self.kernel[0])[:-1]
            return np.searchsorted(cum, rng.random((size, length)), side="right").astype(np.int64)
        head = min(s, length)
        first = rng.choice(self.n_states, size=size, p=self.stationary / self.stationary.sum())
        digits = np.empty((size, s), dtype=np.int64)
        tmp = first.copy()
        for j in range(s - 1, -1, -1):
            digits[:, j] = tmp % L
            tmp //= L
        return self.extend(digits[:, :head] if head < s else digits, length, rng)

    def extend(self, words: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
        """Continue each row of ``words`` (at least ``order`` symbols) to ``length`` symbols."""
        words = np.asarray(words, dtype=np.int64)
        size, k = words.shape
        s, L, S = self.order, self.L, self.n_states
        out = np.empty((size, max(length, k)), dtype=np.int64)
        out[:, :k] = words
        if length <= k:
            return out[:, :length]
        if self.is_iid:
            cum = np.cumsum(self.kernel[0])[:-1]
            out[:, k:] = np.searchsorted(cum, rng.random((size, length - k)), side="right")
            return out
        if k < s:
            raise ValidationError("need at least `order` symbols to continue a Markov word")
        state = np.zeros(size, dtype=np.int64)
        for j in range(k - s, k):
            state = state * L + words[:, j]
        cum = np.cumsum(self.kernel, axis=1)
        cum[:, -1] = 1.0
        u = rng.random((size, length - k))
        for i in range(length - k):
            c = (u[:, i : i + 1] >= cum[state]).sum(axis=1)
            out[:, k + i] = c
            state = (state * L + c) % S
        return out

    def prefix_log_probs(self, words: np.ndarray) -> np.ndarray:
        """``out[:, j] = log mu[w_0 .. w_j]`` for every prefix of every row."""
        words = np.asarray(words, dtype=np.int64)
        B, N = words.shape
        s, L = self.order, self.L
        out = np.empty((B, N))
        code = np.zeros(B, dtype=np.int64)
        with np.errstate(divide="ignore"):
            for j in range(min(s, N)):
                code = code * L + words[:, j]
                out[:, j] = np.log(self.word_masses(j + 1))[code]
            if N > s:
                inc = self.path_log_ratio_increments(words, self.log_kernel())
                out[:, s:] = out[:, s - 1 : s] + np.cumsum(inc, axis=1)
        return out


@dataclass(frozen=True, eq=False)
class GibbsMeasure(MarkovMeasure):
    """Equilibrium state of a locally constant potential."""

    pressure: float = 0.0
    potential: Observable | None = field(default=None, repr=False)
    gibbs_constant: float = float("nan")
    gibbs_depth: int = 0

    @property
    def psi_hat(self) -> Observable:
        """``P - psi``."""
        return self.pressure - self.potential


def bernoulli(p: Sequence[float]) -> MarkovMeasure:
    """Product measure with symbol probabilities ``p``."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError("bernoulli weights must be a probability vector")
    return MarkovMeasure(p.size, 1, np.tile(p, (p.size, 1)), p.copy())


def bernoulli_potential(p: Sequence[float]) -> Observable:
    """Depth-1 potential ``log p[x_0]``; pressure zero, equilibrium state Bernoulli(p)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError("bernoulli weights must be positive and sum to one")
    return Observable(np.log(p))


def random_markov_measure(L: int, order: int, rng: np.random.Generator, concentration: float = 1.0) -> MarkovMeasure:
    """Markov measure with Dirichlet-distributed rows and its stationary law."""
    kernel = rng.dirichlet(np.full(L, concentration), size=L**order)
    kernel = np.maximum(kernel, 1e-12)
    kernel /= kernel.sum(axis=1, keepdims=True)
    T = _dense(kernel, L, order)
    w, V = np.linalg.eig(T.T)
    pi = np.abs(V[:, int(np.argmax(w.real))].real)
    pi /= pi.sum()
    for _ in range(50):
        pi = pi @ T
    return MarkovMeasure(L, order, kernel, pi / pi.sum())


def _measure_from_perron(E: np.ndarray, data: PerronData, L: int, order: int):
    r, l = data.right, data.left
    succ = _successors(L, order)
    kernel = E * r[succ] / (data.value * r[:, None])
    kernel /= kernel.sum(axis=1, keepdims=True)
    stat = l * r
    return kernel, stat / stat.sum()


def gibbs_constant(mu: MarkovMeasure, psi: Observable, P: float, n_check: int) -> float:
    """Smallest ``K`` with ``1/K <= mu[w]/exp(-P k + S_k psi(x)) <= K`` for ``x in [w]``, ``k <= n_check``."""
    K = 1.0
    L, d = psi.L, psi.depth
    if n_check < 1:
        return K
    if L ** (n_check + d - 1) > GIBBS_SCAN_LIMIT:
        raise BudgetError(f"Gibbs scan at length {n_check} needs {L ** (n_check + d - 1)} words")
    # S[c] = S_k psi on the word with code c (length k + d - 1), extended one symbol at a time
    S = psi.flat.astype(float)
    tail = L**d
    for k in range(1, n_check + 1):
        if k > 1:
            codes = np.arange(S.size * L, dtype=np.int64)
            S = np.repeat(S, L) + psi.flat[codes % tail]
        prefix_mass = mu.word_masses(k)[np.arange(S.size) // L ** (d - 1)]
        with np.errstate(divide="ignore"):
            log_ratio = np.log(prefix_mass) + P * k - S
        K = max(K, float(np.exp(np.max(np.abs(log_ratio)))))
    return K


def default_gibbs_depth(L: int, d: int) -> int:
    n = 8
    while n > 1 and L ** (n + d - 1) > GIBBS_SCAN_BUDGET:
        n -= 1
    return n


def equilibrium_measure(psi: Observable, n_check: int | None = None) -> GibbsMeasure:
    """Markov equilibrium state of ``psi`` with its pressure and Gibbs constant."""
    order = _order_for(psi.depth)
    P, data, E = _log_perron(edge_values(psi, order), psi.L, order)
    kernel, stat = _measure_from_perron(E, data, psi.L, order)
    n_check = default_gibbs_depth(psi.L, psi.depth) if n_check is None else n_check
    base = MarkovMeasure(psi.L, order, kernel, stat)
    K = gibbs_constant(base, psi, P, n_check) if n_check > 0 else float("nan")
    return GibbsMeasure(psi.L, order, kernel, stat, P, psi, K, n_check)


def entropy(nu: MarkovMeasure) -> float:
    """Entropy rate ``-sum_u pi_u sum_c K[u,c] log K[u,c]``."""
    k = nu.kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(k > 0, k * np.log(k), 0.0)
    return float(-(nu.stationary @ terms.sum(axis=1)))


def integrate(nu: MarkovMeasure, phi: Observable) -> float:
    """Exact ``nu(phi)`` from the masses of length-``depth`` cylinders."""
    if phi.L != nu.L:
        raise ValidationError("measure and observable use different alphabets")
    return math.fsum(nu.word_masses(phi.depth) * phi.flat)


def cycle_mean_range(phi: Observable, order: int | None = None) -> tuple[float, float]:
    """Minimum and maximum cycle means of ``phi`` on the de Bruijn graph (Karp).

    These bound ``nu(phi)`` over all invariant measures and are attained on
    periodic orbits.
    """
    order = _order_for(phi.depth) if order is None else order
    w = edge_values(phi, order)
    L = phi.L
    S = L**order
    v = np.arange(S)
    pred = np.stack([(v // L) + j * L ** (order - 1) for j in range(L)])
    sym = v % L
    res = []
    for sign in (1.0, -1.0):
        ww = sign * w
        D = np.empty((S + 1, S))
        D[0] = 0.0
        for k in range(S):
            D[k + 1] = np.min(D[k][pred] + ww[pred, sym], axis=0)
        ks = np.arange(S)[:, None]
        ratio = (D[S][None, :] - D[:S]) / (S - ks)
        res.append(sign * float(np.min(np.max(ratio, axis=0))))
    return res[0], res[1]


class PressureCurve:
    """``Q(t) = P(psi + t phi) - P(psi)`` with exact derivative and Legendre dual."""

    T_CAP = 1e4

    def __init__(self, psi: Observable, phi: Observable):
        if psi.L != phi.L:
            raise ValidationError("potential and observable use different alphabets")
        d = max(psi.depth, phi.depth)
        self.L = psi.L
        self.order = _order_for(d)
        self.psi = psi
        self.phi = phi
        self._epsi = edge_values(psi, self.order)
        self._ephi = edge_values(phi, self.order)
        self.P0 = self._pressure_and_slope(0.0)[0]
        self.mean = self._pressure_and_slope(0.0)[1]
        self.lo, self.hi = cycle_mean_range(phi, self.order)
        self._cache = {}

    def _pressure_and_slope(self, t: float):
        logw = self._epsi + t * self._ephi
        P, data, E = _log_perron(logw, self.L, self.order)
        succ = _successors(self.L, self.order)
        l, r = data.left, data.right
        flux = l[:, None] * E * r[succ]
        slope = float((flux * self._ephi).sum() / flux.sum())
        return P, slope

    def _eval(self, t: float):
        t = float(t)
        if t not in self._cache:
            self._cache[t] = self._pressure_and_slope(t)
        return self._cache[t]

    def Q(self, t: float) -> float:
        return self._eval(t)[0] - self.P0

    def dQ(self, t: float) -> float:
        return self._eval(t)[1]

    @property
    def degenerate(self) -> bool:
        return self.hi - self.lo <= 1e-12 * max(1.0, abs(self.hi))

    def tilt(self, s: float) -> float:
        """The ``t`` with ``Q'(t) = s``; ``+-inf`` at or beyond the range ends."""
        if self.degenerate or s >= self.hi or s <= self.lo:
            if self.degenerate and abs(s - self.mean) <= 1e-12:
                return 0.0
            return math.inf if s >= self.hi else -math.inf
        if s == self.mean:
            return 0.0
        sign = 1.0 if s > self.mean else -1.0
        step = 1.0 / max(self.hi - self.lo, 1e-300)
        a, b = 0.0, sign * step
        while sign * (self.dQ(b) - s) < 0:
            a, b = b, 2 * b
            if abs(b) > self.T_CAP:
                raise ConvergenceError(f"could not bracket the tilt for s={s}", residual=self.dQ(b) - s)
        lo, hi = (a, b) if a < b else (b, a)
        return brentq(lambda t: self.dQ(t) - s, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)

    def rate(self, s: float) -> float:
        """``I(s) = sup_t (t s - Q(t))``; ``inf`` outside the achievable range."""
        s = float(s)
        tol = 1e-12 * max(1.0, abs(self.hi), abs(self.lo))
        if s > self.hi + tol or s < self.lo - tol:
            return math.inf
        if self.degenerate:
            return 0.0
        if abs(s - self.hi) <= tol or abs(s - self.lo) <= tol:
            # Boundary: limit of t s - Q(t) as |t| grows.
            sign = 1.0 if abs(s - self.hi) <= tol else -1.0
            t = sign * 40.0 / (self.hi - self.lo)
            return max(0.0, t * s - self.Q(t))
        t = self.tilt(s)
        return max(0.0, t * s - self.Q(t))


def pressure_curve(psi: Observable, phi: Observable, ts) -> np.ndarray:
    curve = PressureCurve(psi, phi)
    return np.array([curve.Q(t) for t in np.atleast_1d(ts)])


def rate_function(psi: Observable, phi: Observable, s) -> float | np.ndarray:
    curve = PressureCurve(psi, phi)
    if np.ndim(s) == 0:
        return curve.rate(float(s))
    return np.array([curve.rate(v) for v in np.asarray(s, dtype=float)])


def _centered(psi: Observable, phi: Observable):
    curve = PressureCurve(psi, phi)
    return curve, phi - curve.mean


def constrained_sup(psi: Observable, phi: Observable, level: float, strict: bool = False) -> float:
    """``sup{h_nu + nu(psi) - P : |nu(phi) - mu(phi)| >= level}`` (``>`` when ``strict``).

    Equals ``-min(I(mu + level), I(mu - level))``; ``-inf`` for an empty set.
    """
    curve = PressureCurve(psi, phi)
    return _constrained(curve, level, strict)


def _constrained(curve: PressureCurve, level: float, strict: bool) -> float:
    if level <= 0:
        return 0.0
    best = math.inf
    for s in (curve.mean + level, curve.mean - level):
        inside = curve.lo < s < curve.hi
        if inside:
            best = min(best, curve.rate(s))
        elif not strict:
            best = min(best, curve.rate(s))
    return -best


def deviation_bound(psi: Observable, phi: Observable, eps: float, strict: bool = False, p_max: int = 8) -> float:
    """Variational exponent for ``|S_n phi - n mu(phi)| >= n eps``.

    ``phi`` is centered at its equilibrium mean first.  If the centered
    observable has only vanishing periodic sums up to ``p_max`` it is
    cohomologous to zero; a ZeroVarianceWarning is issued and 0 returned.
    """
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    if eps == 0:
        return 0.0
    curve = PressureCurve(psi, phi)
    centered = phi - curve.mean
    if curve.degenerate or livsic_test(centered, p_max).is_coboundary:
        warnings.warn("observable is cohomologous to a constant; bound set to 0", ZeroVarianceWarning)
        return 0.0
    return _constrained(curve, eps, strict)


def _as_fraction(v, max_denominator):
    f = Fraction(v)
    return f.limit_denominator(max_denominator) if max_denominator else f


def exact_deviation_probability(
    mu: MarkovMeasure,
    phi: Observable,
    n: int,
    eps: float,
    *,
    strict: bool = False,
    center: float = 0.0,
    rational: bool = False,
    max_denominator: int | None = None,
    budget: int = DEFAULT_DP_BUDGET,
):
    """``mu{ |S_n phi - n center| >= n eps }`` (``>`` when ``strict``), computed exactly.

    Dynamic programming over (last symbols, partial sum) replaces the
    ``L**n`` word enumeration; the result is the same sum of cylinder masses.
    With ``rational`` all arithmetic is in Fractions (floats converted
    exactly, or rounded to ``max_denominator``).
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    if phi.L != mu.L:
        raise ValidationError("measure and observable use different alphabets")
    L, d, s = mu.L, phi.depth, mu.order
    q = max(s, d - 1, 1)
    N = n + d - 1

    if rational:
        conv = lambda v: _as_fraction(v, max_denominator)
        zero, one = Fraction(0), Fraction(1)
        key = lambda v: v
    else:
        conv = float
        zero, one = 0.0, 1.0
        key = lambda v: round(v, 9)
    vals = [conv(v) for v in phi.flat]
    thr = conv(n) * conv(eps)
    c = conv(center)

    def hit(total):
        dev = abs(total - n * c)
        if rational:
            return dev > thr if strict else dev >= thr
        tol = 1e-9 * max(1.0, abs(thr))
        return dev > thr + tol if strict else dev >= thr - tol

    head = min(q, N)
    masses = mu.word_masses(head)
    words = all_words(L, head)
    Ld = L**d
    layer: dict = {}
    for code, w in enumerate(words):
        m = masses[code]
        if m == 0:
            continue
        total = zero
        for i in range(0, head - d + 1):
            if i < n:
                idx = 0
                for j in range(d):
                    idx = idx * L + int(w[i + j])
                total = total + vals[idx]
        bucket = layer.setdefault(code, {})
        k = key(total)
        bucket[k] = bucket.get(k, zero) + conv(m)
    kernel = [[conv(v) for v in row] for row in mu.kernel]
    Lq, Ls = L**q, L**s
    for pos in range(head, N):
        nxt: dict = {}
        for code, bucket in layer.items():
            state = code % Ls
            for sym in range(L):
                pk = kernel[state][sym]
                if pk == 0:
                    continue
                ext = code * L + sym
                inc = vals[ext % Ld]
                new_code = ext % Lq
                target = nxt.setdefault(new_code, {})
                for total, mass in bucket.items():
                    k = key(total + inc)
                    target[k] = target.get(k, zero) + mass * pk
        entries = sum(len(b) for b in nxt.values())
        if entries > budget:
            raise BudgetError(f"dynamic programme exceeds {budget} entries; use Monte Carlo")
        layer = nxt
    result = zero
    for bucket in layer.values():
        for total, mass in bucket.items():
            if hit(total):
                result = result + mass
    if not rational:
        return float(min(max(result, 0.0), 1.0))
    return result
