"""Finite-alphabet full shift: configurations, observables, regularity checks.

Observables are locally constant: a depth-``d`` observable is a table over
``alphabet^d`` read on coordinates ``x_0 .. x_{d-1}``.  Words are encoded
big-endian, so the table entry for ``(w_0, .., w_{d-1})`` sits at flat index
``sum_j w_j L^(d-1-j)``.

Cylinders are two-sided, ``[x]_k = {y : y_i = x_i for |i| < k}``.  For a
one-sided observable only the coordinates ``0 .. k-1`` matter, so
``var_0`` is the full spread of the table and ``var_k = 0`` for ``k >= d``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import BudgetError, ValidationError

__all__ = [
    "Configuration",
    "Observable",
    "FunctionObservable",
    "encode",
    "all_words",
    "cylinder_contains",
    "birkhoff_sum",
    "variation",
    "sampled_variation",
    "same_coordinate_bound",
    "SameCoordinateBound",
    "periodic_words",
    "periodic_points",
    "periodic_sums",
    "livsic_test",
    "LivsicResult",
    "holder_fit",
    "log_holder_fit",
    "holder_from_log_holder",
    "RegularityFit",
    "PERIODIC_TOL",
    "DEFAULT_ENUM_BUDGET",
]

PERIODIC_TOL = 1e-10
DEFAULT_ENUM_BUDGET = 2_000_000


class Configuration:
    """A bi-infinite sequence stored as one period of a periodic extension.

    ``x[i] == symbols[(origin + i) % len(symbols)]`` for every integer ``i``.
    """

    __slots__ = ("L", "symbols", "origin")

    def __init__(self, symbols, L: int, origin: int = 0):
        symbols = np.asarray(symbols, dtype=np.int64).ravel()
        if symbols.size == 0:
            raise ValidationError("a configuration needs at least one symbol")
        if L < 1 or symbols.min() < 0 or symbols.max() >= L:
            raise ValidationError(f"symbols must lie in 0..{L - 1}")
        symbols.flags.writeable = False
        self.L = int(L)
        self.symbols = symbols
        self.origin = int(origin) % symbols.size

    @classmethod
    def periodic(cls, word, L: int) -> "Configuration":
        return cls(word, L, 0)

    @classmethod
    def from_window(cls, window, L: int) -> "Configuration":
        """Window over indices ``-W .. W`` (odd length), extended periodically."""
        window = np.asarray(window)
        if window.size % 2 != 1:
            raise ValidationError("a window over [-W, W] has odd length")
        return cls(window, L, window.size // 2)

    @property
    def period(self) -> int:
        return self.symbols.size

    def __getitem__(self, i: int) -> int:
        return int(self.symbols[(self.origin + i) % self.symbols.size])

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Coordinates ``x_lo .. x_{hi-1}``."""
        idx = (self.origin + np.arange(lo, hi)) % self.symbols.size
        return self.symbols[idx]

    def shift(self, k: int = 1) -> "Configuration":
        return Configuration(self.symbols, self.L, self.origin + k)

    def __repr__(self):
        return f"Configuration(period={self.symbols.tolist()}, origin={self.origin}, L={self.L})"


def encode(words: np.ndarray, L: int) -> np.ndarray:
    """Big-endian integer code of each row of ``words``."""
    words = np.asarray(words, dtype=np.int64)
    code = np.zeros(words.shape[:-1], dtype=np.int64)
    for j in range(words.shape[-1]):
        code = code * L + words[..., j]
    return code


def all_words(L: int, n: int) -> np.ndarray:
    """All ``L**n`` words of length ``n`` in code order, shape ``(L**n, n)``."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((L,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


class Observable:
    """Locally constant function on the full shift over ``L`` symbols."""

    def __init__(self, table, L: int | None = None, depth: int | None = None):
        arr = np.asarray(table, dtype=float)
        if L is not None and depth is not None:
            if arr.size != L**depth:
                raise ValidationError(
                    f"table has {arr.size} entries, expected L^d = {L}^{depth} = {L**depth}"
                )
            arr = arr.reshape((L,) * depth) if depth else arr.reshape(())
        elif arr.ndim == 0:
            raise ValidationError("give L and depth for a scalar table")
        else:
            if len(set(arr.shape)) != 1:
                raise ValidationError(f"table shape {arr.shape} is not (L,)*d")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("observable table has non-finite entries")
        self.table = arr
        self.L = int(arr.shape[0]) if arr.ndim else int(L)
        self.depth = int(arr.ndim)
        self.flat = arr.reshape(-1)

    @classmethod
    def constant(cls, c: float, L: int) -> "Observable":
        return cls(np.full(L, float(c)))

    @classmethod
    def from_function(cls, f: Callable, L: int, depth: int) -> "Observable":
        words = all_words(L, depth)
        return cls(np.array([f(tuple(w)) for w in words], dtype=float), L, depth)

    @classmethod
    def symbol_function(cls, values) -> "Observable":
        """Depth-1 observable ``x -> values[x_0]``."""
        return cls(np.asarray(values, dtype=float))

    def lift(self, depth: int) -> "Observable":
        """Same function read as a table over ``alphabet^depth`` (``depth >= self.depth``)."""
        if depth < self.depth:
            raise ValidationError("cannot lift to a smaller depth")
        extra = depth - self.depth
        tab = self.table.reshape(self.table.shape + (1,) * extra)
        return Observable(np.broadcast_to(tab, (self.L,) * depth).copy())

    def _binary(self, other, op):
        if isinstance(other, Observable):
            if other.L != self.L:
                raise ValidationError("observables over different alphabets")
            d = max(self.depth, other.depth)
            return Observable(op(self.lift(d).table, other.lift(d).table))
        return Observable(op(self.table, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        return Observable(self.table * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return Observable(-self.table)

    def __call__(self, x: Configuration) -> float:
        return float(self.table[tuple(x.window(0, self.depth))])

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.flat)))

    def values(self, words: np.ndarray) -> np.ndarray:
        """Values along each row: ``out[..., i] = phi(sigma^i w)``.

        Rows of length ``N`` give ``N - depth + 1`` values.
        """
        words = np.asarray(words, dtype=np.int64)
        N = words.shape[-1]
        n = N - self.depth + 1
        if n < 0:
            raise ValidationError("words shorter than the observable depth")
        code = np.zeros(words.shape[:-1] + (n,), dtype=np.int64)
        for j in range(self.depth):
            code = code * self.L + words[..., j : j + n]
        return self.flat[code]

    def __repr__(self):
        return f"Observable(L={self.L}, depth={self.depth})"


class FunctionObservable:
    """Opaque observable evaluated on configurations.

    ``radius`` is the half-width of the window the function actually reads;
    it bounds how far sampled variation estimates need to randomize.
    """

    def __init__(self, func: Callable[[Configuration], float], L: int, radius: int):
        self.func = func
        self.L = int(L)
        self.radius = int(radius)

    def __call__(self, x: Configuration) -> float:
        return float(self.func(x))


def cylinder_contains(x: Configuration, y: Configuration, n: int) -> bool:
    """True iff ``y_i == x_i`` for all ``|i| < n``."""
    if x.L != y.L:
        raise ValidationError("configurations over different alphabets")
    if n <= 0:
        return True
    return bool(np.array_equal(x.window(-(n - 1), n), y.window(-(n - 1), n)))


def birkhoff_sum(phi: Observable, x: Configuration, n: int) -> float:
    """``S_n phi(x) = sum_{i<n} phi(sigma^i x)``."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    if n == 0:
        return 0.0
    return math.fsum(phi.values(x.window(0, n + phi.depth - 1)))


def variation(phi: Observable, k: int) -> float:
    """Exact ``var_k``: largest spread of the table over a cylinder ``[x]_k``."""
    if k < 0:
        raise ValidationError("k must be nonnegative")
    if k >= phi.depth:
        return 0.0
    groups = phi.flat.reshape(phi.L**k, -1)
    return float(np.max(groups.max(axis=1) - groups.min(axis=1)))


def sampled_variation(
    f, k: int, rng: np.random.Generator, n_samples: int = 2000
) -> float:
    """Monte Carlo estimate of ``var_k`` for an opaque observable.

    Draws pairs agreeing on ``|i| < k`` and independent elsewhere inside the
    read window; the result is a lower estimate of the supremum.
    """
    if isinstance(f, Observable):
        return variation(f, k)
    R = f.radius
    width = 2 * R + 1
    best = 0.0
    for _ in range(n_samples):
        wx = rng.integers(0, f.L, size=width)
        wy = rng.integers(0, f.L, size=width)
        lo, hi = max(R - (k - 1), 0), min(R + k, width)
        if k > 0:
            wy[lo:hi] = wx[lo:hi]
        x = Configuration.from_window(wx, f.L)
        y = Configuration.from_window(wy, f.L)
        best = max(best, abs(f(x) - f(y)))
    return best


@dataclass(frozen=True)
class SameCoordinateBound:
    partial: float
    total: float


def same_coordinate_bound(phi: Observable, n: int) -> SameCoordinateBound:
    """Return ``sum_{k<n} var_k`` and ``A_0 = sum_{k>=1} var_k``.

    For one-sided observables a change in one coordinate moves ``S_n phi`` by
    at most ``partial``; ``var_0`` is needed there, so ``A_0`` alone is not a
    bound when the changed coordinate lies inside the summation window.
    """
    partial = math.fsum(variation(phi, k) for k in range(max(n, 0)))
    total = math.fsum(variation(phi, k) for k in range(1, phi.depth))
    return SameCoordinateBound(partial, total)


def periodic_words(p: int, L: int, budget: int = DEFAULT_ENUM_BUDGET) -> np.ndarray:
    if p < 1:
        raise ValidationError("period must be positive")
    if L**p > budget:
        raise BudgetError(f"{L}^{p} periodic words exceed budget {budget}")
    return all_words(L, p)


def periodic_points(p: int, L: int, budget: int = DEFAULT_ENUM_BUDGET) -> Iterator[Configuration]:
    """All ``L**p`` points of period dividing ``p``, one per period word."""
    for w in periodic_words(p, L, budget):
        yield Configuration.periodic(w, L)


def periodic_sums(phi: Observable, words: np.ndarray) -> np.ndarray:
    """``S_p phi(z)`` for the periodic points with the given period words."""
    words = np.asarray(words, dtype=np.int64)
    p = words.shape[1]
    reps = -(-(p + phi.depth - 1) // p)
    ext = np.tile(words, (1, reps))[:, : p + phi.depth - 1]
    return phi.values(ext).sum(axis=1)


@dataclass(frozen=True)
class LivsicResult:
    verdict: str
    reached_period: int
    period: int | None = None
    word: tuple | None = None
    sum: float | None = None

    @property
    def is_coboundary(self) -> bool:
        return self.verdict == "coboundary"

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "reached_period": self.reached_period,
            "period": self.period,
            "word": list(self.word) if self.word is not None else None,
            "sum": self.sum,
        }


def livsic_test(
    phi: Observable,
    p_max: int,
    tol: float = PERIODIC_TOL,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> LivsicResult:
    """Search periodic orbits up to period ``p_max`` for a nonzero Birkhoff sum.

    Returns the witness of smallest period (largest positive sum preferred,
    otherwise the most negative); ``verdict`` is ``"coboundary"`` when every
    sum vanishes to ``tol``, and ``"partial"`` when the enumeration budget
    ran out first.
    """
    used = 0
    for p in range(1, p_max + 1):
        used += phi.L**p
        if used > budget:
            return LivsicResult("partial", p - 1)
        words = periodic_words(p, phi.L, budget)
        sums = periodic_sums(phi, words)
        bad = np.abs(sums) > tol
        if bad.any():
            i = int(np.argmax(sums)) if sums.max() > tol else int(np.argmin(sums))
            return LivsicResult("witness", p, p, tuple(int(v) for v in words[i]), float(sums[i]))
    return LivsicResult("coboundary", p_max)


@dataclass(frozen=True)
class RegularityFit:
    """Fit of ``log v_k = log A - rate * k``; the bound reads ``v_k <= A e^{-rate k}``."""

    A: float
    rate: float
    residual: float
    status: str
    ks: tuple
    values: tuple
    exact: bool

    @property
    def base(self) -> float:
        return math.exp(-self.rate)


def _fit_exponential(ks, vals, exact) -> RegularityFit:
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(vals, dtype=float)
    pos = vals > 0
    if pos.sum() < 2:
        A = float(vals.max()) if vals.size else 0.0
        return RegularityFit(A, math.inf, 0.0, "degenerate", tuple(ks), tuple(vals), exact)
    slope, intercept = np.polyfit(ks[pos], np.log(vals[pos]), 1)
    resid = np.log(vals[pos]) - (slope * ks[pos] + intercept)
    rate = -float(slope)
    status = "fit" if rate > 0 else "no exponential fit"
    # Inflate A so the fitted line bounds every observed point.
    A = float(math.exp(intercept + max(0.0, float(resid.max()))))
    return RegularityFit(A, rate, float(np.sqrt(np.mean(resid**2))), status, tuple(ks), tuple(vals), exact)


def holder_fit(phi, ks=None, *, rng=None, n_samples: int = 2000) -> RegularityFit:
    """Least-squares fit of ``var_k <= A e^{-rate k}`` over ``ks``.

    Table observables are handled exactly; opaque ones by sampling, which
    needs ``rng``.  Locally constant tables with fewer than two positive
    variations give a ``"degenerate"`` (exact) result.
    """
    if isinstance(phi, Observable):
        ks = list(range(1, max(phi.depth, 2))) if ks is None else list(ks)
        vals = [variation(phi, k) for k in ks]
        return _fit_exponential(ks, vals, exact=True)
    if rng is None:
        raise ValidationError("sampled variation needs an rng")
    ks = list(range(1, phi.radius + 1)) if ks is None else list(ks)
    vals = [sampled_variation(phi, k, rng, n_samples) for k in ks]
    return _fit_exponential(ks, vals, exact=False)


def log_holder_variation(phi: Observable, k: int) -> float:
    """``sup |phi(y)/phi(x) - 1|`` over pairs in a common cylinder ``[x]_k``."""
    if np.any(phi.flat <= 0):
        raise ValidationError("log-Hoelder ratios need a positive observable")
    if k >= phi.depth:
        return 0.0
    groups = phi.flat.reshape(phi.L**k, -1)
    return float(np.max(groups.max(axis=1) / groups.min(axis=1) - 1.0))


def log_holder_fit(phi: Observable, ks=None) -> RegularityFit:
    """Fit ``1 - C e^{-rate k} <= phi(y)/phi(x) <= 1 + C e^{-rate k}``; ``A`` holds ``C``."""
    ks = list(range(1, max(phi.depth, 2))) if ks is None else list(ks)
    vals = [log_holder_variation(phi, k) for k in ks]
    return _fit_exponential(ks, vals, exact=True)


def holder_from_log_holder(fit: RegularityFit, sup_norm: float) -> tuple[float, float]:
    """Hoelder constants implied by a bounded log-Hoelder function.

    ``|phi(x) - phi(y)| <= C e^{-rate k} |phi(x)| <= (C sup|phi|) e^{-rate k}``.
    """
    if not math.isfinite(sup_norm):
        raise ValidationError("unbounded observables are not Hoelder in general")
    return fit.A * sup_norm, fit.rate


def iter_products(L: int, n: int):
    return itertools.product(range(L), repeat=n)
