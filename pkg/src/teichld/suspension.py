"""Suspension flows over the full shift with a positive locally constant roof.

A point of the suspension is ``(x, s)`` with ``0 <= s < r(x)``; the flow
moves ``s`` at unit speed and jumps to ``(sigma x, 0)`` at the roof.  Flow
observables are given per base pattern as piecewise polynomials in the
fiber time, so fiber integrals have closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate as sp_integrate

from .errors import ConvergenceError, ValidationError
from .shift import Configuration, Observable, all_words, encode
from .thermo import MarkovMeasure, integrate

__all__ = [
    "Roof",
    "FlowObservable",
    "SuspensionPoint",
    "FlowIntegral",
    "RhoResult",
    "SuspensionSample",
    "TailEstimate",
    "lap_number",
    "flow_point",
    "phi_r",
    "flow_integral",
    "batch_lap_numbers",
    "batch_flow_integrals",
    "rho",
    "sample_mu_r",
    "tail_estimate",
]


class Roof:
    """Positive locally constant roof with declared lower bound ``r0``."""

    def __init__(self, obs: Observable, r0: float | None = None):
        if not isinstance(obs, Observable):
            obs = Observable(np.asarray(obs, dtype=float))
        if np.any(obs.flat <= 0):
            raise ValidationError("roof values must be positive")
        self.obs = obs
        self.r0 = float(obs.flat.min()) if r0 is None else float(r0)
        if self.r0 <= 0 or np.any(obs.flat < self.r0):
            raise ValidationError(f"roof takes values below the declared r0 = {self.r0}")

    @classmethod
    def constant(cls, c: float, L: int) -> "Roof":
        return cls(Observable.constant(c, L))

    @property
    def L(self) -> int:
        return self.obs.L

    @property
    def depth(self) -> int:
        return self.obs.depth

    @property
    def r_max(self) -> float:
        return float(self.obs.flat.max())

    def __call__(self, x: Configuration) -> float:
        return self.obs(x)

    def value_at(self, x: Configuration, i: int) -> float:
        return self.obs(x.shift(i))

    def values(self, words: np.ndarray) -> np.ndarray:
        return self.obs.values(words)

    def mean(self, mu: MarkovMeasure) -> float:
        return integrate(mu, self.obs)


class FlowObservable:
    """``phi(x, t)`` piecewise polynomial in ``t`` with coefficients per base pattern.

    ``breaks`` is increasing, starts at 0 and may end with ``inf``;
    ``coeffs[p, j]`` holds the ascending polynomial coefficients used for
    pattern code ``p`` on ``[breaks[j], breaks[j+1])``.  ``phi`` vanishes
    beyond the last break, so a finite last break is the fiber support
    bound ``r_1``.  Alternatively ``func(pattern, t)`` gives an opaque
    observable integrated by quadrature.
    """

    def __init__(self, L: int, depth: int, breaks=None, coeffs=None, func: Callable | None = None, support=None):
        self.L = int(L)
        self.depth = int(depth)
        self.func = func
        if func is not None:
            self.breaks = np.array([0.0, math.inf if support is None else float(support)])
            self.coeffs = None
            self._support = None if support is None else float(support)
            return
        breaks = np.asarray(breaks, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        if breaks.ndim != 1 or breaks.size < 2 or breaks[0] != 0 or np.any(np.diff(breaks) <= 0):
            raise ValidationError("breaks must be increasing and start at 0")
        if coeffs.ndim == 2:
            coeffs = coeffs[:, None, :]
        if coeffs.shape[:2] != (self.L**self.depth, breaks.size - 1):
            raise ValidationError(
                f"coefficients shape {coeffs.shape} does not match {self.L**self.depth} patterns x {breaks.size - 1} pieces"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError("non-finite flow observable coefficients")
        if math.isinf(breaks[-1]) and coeffs.shape[2] > 1 and np.any(coeffs[:, -1, 1:] != 0):
            raise ValidationError("the unbounded last piece must be constant")
        self.breaks = breaks
        self.coeffs = coeffs
        self._support = float(breaks[-1]) if math.isfinite(breaks[-1]) else None

    @classmethod
    def fiber_constant(cls, table, L: int | None = None, depth: int | None = None) -> "FlowObservable":
        obs = table if isinstance(table, Observable) else Observable(table, L, depth)
        return cls(obs.L, obs.depth, [0.0, math.inf], obs.flat[:, None, None])

    @classmethod
    def polynomial(cls, coeffs, L: int, depth: int, support: float) -> "FlowObservable":
        """One polynomial in ``t`` per pattern on ``[0, support)``; ``coeffs`` is ``(L**depth, deg+1)`` or shared."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = np.tile(coeffs, (L**depth, 1))
        return cls(L, depth, [0.0, float(support)], coeffs[:, None, :])

    @property
    def support(self) -> float | None:
        return self._support

    @property
    def is_closed_form(self) -> bool:
        return self.func is None

    def _pattern_codes(self, words: np.ndarray, offset) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        offset = np.asarray(offset, dtype=np.int64)
        code = np.zeros(np.broadcast(words[..., 0], offset).shape, dtype=np.int64)
        for j in range(self.depth):
            code = code * self.L + np.take_along_axis(words, (offset + j)[..., None], axis=-1)[..., 0]
        return code

    def evaluate(self, codes, t) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        t = np.asarray(t, dtype=float)
        if self.func is not None:
            words = all_words(self.L, self.depth)
            out = np.array([self.func(tuple(words[c]), tt) for c, tt in zip(np.ravel(codes), np.ravel(np.broadcast_to(t, codes.shape)))])
            if self._support is not None:
                out = np.where(np.ravel(np.broadcast_to(t, codes.shape)) < self._support, out, 0.0)
            return out.reshape(np.broadcast(codes, t).shape)
        codes, t = np.broadcast_arrays(codes, t)
        piece = np.searchsorted(self.breaks, t, side="right") - 1
        inside = (piece >= 0) & (piece < self.breaks.size - 1)
        piece = np.clip(piece, 0, self.breaks.size - 2)
        c = self.coeffs[codes, piece]
        val = np.zeros(t.shape)
        for k in range(c.shape[-1] - 1, -1, -1):
            val = val * t + c[..., k]
        return np.where(inside, val, 0.0)

    def evaluate_at(self, x: Configuration, i: int, t: float) -> float:
        code = encode(x.window(i, i + self.depth)[None, :], self.L)[0]
        return float(self.evaluate(code, t))

    def antiderivative(self, codes, u) -> np.ndarray:
        """``int_0^u phi(pattern, t) dt`` for arrays of pattern codes and upper limits."""
        codes = np.asarray(codes, dtype=np.int64)
        u = np.asarray(u, dtype=float)
        codes, u = np.broadcast_arrays(codes, u)
        if self.func is not None:
            out = np.empty(u.shape)
            words = all_words(self.L, self.depth)
            for idx in np.ndindex(u.shape):
                out[idx] = self._quad(tuple(words[codes[idx]]), u[idx])
            return out
        total = np.zeros(u.shape)
        for j in range(self.breaks.size - 1):
            a, b = self.breaks[j], self.breaks[j + 1]
            hi = np.minimum(u, b)
            mask = hi > a
            if not np.any(mask):
                continue
            c = self.coeffs[codes[mask], j]
            integ = c / np.arange(1, c.shape[-1] + 1)
            val_hi = np.zeros(mask.sum())
            val_lo = np.zeros(mask.sum())
            h = hi[mask]
            for k in range(integ.shape[-1] - 1, -1, -1):
                val_hi = (val_hi + integ[:, k]) * h
                val_lo = (val_lo + integ[:, k]) * a
            total[mask] += val_hi - val_lo
        return total

    def _quad(self, pattern, u):
        upper = u if self._support is None else min(u, self._support)
        if upper <= 0:
            return 0.0
        val, err = sp_integrate.quad(lambda t: self.func(pattern, t), 0.0, upper, epsabs=1e-12, epsrel=1e-12, limit=200)
        if not err <= 1e-10:
            raise ConvergenceError("fiber quadrature did not reach 1e-10", residual=err)
        return val

    def sup_norm(self, t_max: float) -> float:
        """``sup |phi(x, t)|`` over ``0 <= t <= t_max``."""
        if self.func is not None:
            ts = np.linspace(0.0, t_max, 2001)
            codes = np.arange(self.L**self.depth)
            return float(np.max(np.abs(self.evaluate(codes[:, None], ts[None, :]))))
        best = 0.0
        for j in range(self.breaks.size - 1):
            a, b = self.breaks[j], min(self.breaks[j + 1], t_max)
            if a > t_max:
                break
            for c in self.coeffs[:, j]:
                pts = [a, b]
                if c.size > 2:
                    d = npoly.polyder(c)
                    pts += [r.real for r in npoly.polyroots(d) if abs(r.imag) < 1e-12 and a < r.real < b]
                best = max(best, float(np.max(np.abs(npoly.polyval(np.array(pts), c)))))
        return best


@dataclass(frozen=True)
class SuspensionPoint:
    base: Configuration
    s: float
    roof: Roof = field(repr=False)

    def __post_init__(self):
        if not (0.0 <= self.s < self.roof(self.base)):
            raise ValidationError(f"height {self.s} outside [0, r(x)) = [0, {self.roof(self.base)})")


def lap_number(x: Configuration, s: float, T: float, r: Roof) -> int:
    """The ``n`` with ``S_n r(x) <= s + T < S_{n+1} r(x)``."""
    if T < 0:
        raise ValidationError("T must be nonnegative")
    target = s + T
    n, acc = 0, 0.0
    while True:
        nxt = acc + r.value_at(x, n)
        if nxt > target:
            return n
        acc = nxt
        n += 1


def _partial(r: Roof, x: Configuration, n: int) -> float:
    return math.fsum(r.value_at(x, i) for i in range(n))


def flow_point(z: SuspensionPoint, T: float, r: Roof | None = None) -> SuspensionPoint:
    r = z.roof if r is None else r
    n = lap_number(z.base, z.s, T, r)
    h = z.s + T - _partial(r, z.base, n)
    top = r.value_at(z.base, n)
    h = min(max(h, 0.0), math.nextafter(top, 0.0))
    return SuspensionPoint(z.base.shift(n), h, r)


def phi_r(phi: FlowObservable, r: Roof) -> Observable:
    """``phi_r(x) = int_0^{r(x)} phi(x, t) dt`` as a locally constant observable."""
    if phi.L != r.L:
        raise ValidationError("flow observable and roof use different alphabets")
    D = max(phi.depth, r.depth)
    words = all_words(r.L, D)
    cp = encode(words[:, : phi.depth], r.L)
    rv = r.obs.flat[encode(words[:, : r.depth], r.L)]
    return Observable(phi.antiderivative(cp, rv), r.L, D)


@dataclass(frozen=True)
class FlowIntegral:
    value: float
    birkhoff_part: float
    remainder: float
    remainder_bound: float
    laps: int


def flow_integral(phi: FlowObservable, z: SuspensionPoint, T: float, r: Roof | None = None) -> FlowIntegral:
    """``int_0^T phi(f_t z) dt = S_n phi_r(x) + I_T(x, s)`` with ``n`` the lap number."""
    r = z.roof if r is None else r
    x, s = z.base, z.s
    n = lap_number(x, s, T, r)
    pr = phi_r(phi, r)
    S = math.fsum(pr(x.shift(i)) for i in range(n))
    code0 = encode(x.window(0, phi.depth)[None, :], phi.L)[0]
    coden = encode(x.window(n, n + phi.depth)[None, :], phi.L)[0]
    tail = T + s - _partial(r, x, n)
    I = float(phi.antiderivative(coden, tail) - phi.antiderivative(code0, s))
    bound = (s + r.value_at(x, n)) * phi.sup_norm(r.r_max)
    if abs(I) > bound * (1 + 1e-12) + 1e-12:
        raise ArithmeticError(f"remainder {I} exceeds its bound {bound}")
    return FlowIntegral(S + I, S, I, bound, n)


def _check_window(cums, target, what="word"):
    if np.any(cums[:, -1] <= target):
        raise ValidationError(f"{what} too short to cover the flow time; increase its length")


def batch_lap_numbers(words: np.ndarray, s: np.ndarray, T: float, r: Roof) -> np.ndarray:
    """Vectorized lap numbers for rows of ``words`` with heights ``s``."""
    cums = np.cumsum(r.values(words), axis=1)
    target = np.asarray(s, dtype=float) + T
    _check_window(cums, target)
    return (cums <= target[:, None]).sum(axis=1)


def batch_flow_integrals(phi: FlowObservable, words: np.ndarray, s: np.ndarray, T: float, r: Roof, pr: Observable | None = None):
    """Vectorized ``int_0^T phi(f_t(x, s)) dt``; returns ``(values, laps)``."""
    words = np.asarray(words, dtype=np.int64)
    s = np.asarray(s, dtype=float)
    pr = phi_r(phi, r) if pr is None else pr
    rv = r.values(words)
    cums = np.cumsum(rv, axis=1)
    target = s + T
    _check_window(cums, target)
    n = (cums <= target[:, None]).sum(axis=1)
    pv = pr.values(words)
    pc = np.concatenate((np.zeros((words.shape[0], 1)), np.cumsum(pv, axis=1)), axis=1)
    rc = np.concatenate((np.zeros((words.shape[0], 1)), cums), axis=1)
    Sn = np.take_along_axis(pc, n[:, None], axis=1)[:, 0]
    Srn = np.take_along_axis(rc, n[:, None], axis=1)[:, 0]
    code0 = phi._pattern_codes(words, np.zeros_like(n))
    coden = phi._pattern_codes(words, n)
    I = phi.antiderivative(coden, target - Srn) - phi.antiderivative(code0, s)
    return Sn + I, n


@dataclass(frozen=True)
class RhoResult:
    rho: FlowObservable
    norm: float
    norm_bound: float
    C1: float
    rho_r: Observable
    phi_r: Observable


def rho(phi: FlowObservable, r: Roof) -> RhoResult:
    """``rho(x, s) = phi(x, s) - phi_r(x)`` with its sup norm and ``C_1 = 2 r_1 ||rho||``.

    ``rho_r(x) = phi_r(x) (1 - r(x))`` is reported as computed; it vanishes
    identically only when ``r == 1``.
    """
    if not phi.is_closed_form:
        raise ValidationError("rho needs a closed-form flow observable")
    if phi.support is None:
        raise ValidationError("rho needs a declared compact fiber support r_1")
    if np.any(~np.isfinite(phi.coeffs)):
        raise ValidationError("unbounded flow observable")
    r1 = max(phi.support, r.r0)
    pr = phi_r(phi, r)
    D = pr.depth
    words = all_words(r.L, D)
    cp = encode(words[:, : phi.depth], r.L)
    breaks = np.append(phi.breaks, math.inf) if math.isfinite(phi.breaks[-1]) else phi.breaks
    n_pieces = breaks.size - 1
    deg = phi.coeffs.shape[2]
    coeffs = np.zeros((words.shape[0], n_pieces, deg))
    coeffs[:, : phi.coeffs.shape[1], :] = phi.coeffs[cp]
    coeffs[:, :, 0] -= pr.flat[:, None]
    rho_obs = FlowObservable(r.L, D, breaks, coeffs)
    rv = r.obs.flat[encode(words[:, : r.depth], r.L)]
    norm = 0.0
    for code in range(words.shape[0]):
        single = FlowObservable(r.L, 0, breaks, coeffs[code : code + 1])
        norm = max(norm, single.sup_norm(float(rv[code])))
    bound = (1.0 + r1) * phi.sup_norm(r.r_max)
    rho_r = Observable(rho_obs.antiderivative(np.arange(words.shape[0]), rv), r.L, D)
    return RhoResult(rho_obs, norm, bound, 2.0 * r1 * norm, rho_r, pr)


@dataclass(frozen=True)
class SuspensionSample:
    words: np.ndarray
    heights: np.ndarray
    method: str
    ess: float
    batch: int


def _initial_len(mu: MarkovMeasure, r: Roof) -> int:
    return max(mu.order, r.depth)


def sample_mu_r(
    mu: MarkovMeasure,
    r: Roof,
    rng: np.random.Generator,
    size: int,
    length: int,
    method: str = "exact",
    oversample: int = 8,
) -> SuspensionSample:
    """Draw points of the suspension distributed as ``mu_r``.

    ``exact``: the first ``max(order, depth r)`` symbols come from ``mu``
    reweighted by ``r``, the rest continue the Markov chain; this is the
    exact law.  ``resample``: importance resampling of a ``mu``-batch
    ``oversample`` times larger, with its effective sample size reported.
    Heights are uniform on ``[0, r(x))``.
    """
    if r.L != mu.L:
        raise ValidationError("measure and roof use different alphabets")
    q = _initial_len(mu, r)
    if length < q:
        raise ValidationError(f"length must be at least {q}")
    if method == "exact":
        heads = all_words(mu.L, q)
        w = mu.word_masses(q) * r.values(heads)[:, 0]
        idx = rng.choice(heads.shape[0], size=size, p=w / w.sum())
        words = mu.extend(heads[idx], length, rng)
        ess, batch = float(size), size
    elif method == "resample":
        batch = size * oversample
        pool = mu.sample(batch, length, rng)
        w = r.values(pool[:, : r.depth])[:, 0]
        ess = float(w.sum() ** 2 / (w**2).sum())
        idx = rng.choice(batch, size=size, p=w / w.sum())
        words = pool[idx]
    else:
        raise ValidationError(f"unknown sampling method {method!r}")
    heights = rng.random(size) * r.values(words[:, : r.depth])[:, 0]
    return SuspensionSample(words, heights, method, ess, batch)


@dataclass(frozen=True)
class TailEstimate:
    levels: np.ndarray
    tail: np.ndarray
    eps0: float
    C0: float
    mgf: float
    bounded: bool
    fit_levels: np.ndarray

    def to_dict(self):
        return {
            "levels": self.levels.tolist(),
            "tail": self.tail.tolist(),
            "eps0": self.eps0,
            "C0": self.C0,
            "mgf": self.mgf,
            "bounded": self.bounded,
            "fit_levels": self.fit_levels.tolist(),
        }


def roof_mgf(mu: MarkovMeasure, r: Roof, eps0: float) -> float:
    """``int e^{eps0 r} dmu``."""
    return math.fsum(mu.word_masses(r.depth) * np.exp(eps0 * r.obs.flat))


def tail_estimate(mu: MarkovMeasure, r: Roof, levels=None) -> TailEstimate:
    """Exact ``mu{r > L}`` on a grid with a fitted bound ``C_0 e^{-eps0 L}``.

    On a finite alphabet the tail is exactly zero beyond ``max r``, so the
    fit uses only levels with positive mass.  ``C_0`` is the smallest
    constant making the bound hold at every grid level.
    """
    masses = mu.word_masses(r.depth)
    vals = r.obs.flat
    if levels is None:
        levels = np.unique(np.concatenate(([0.0], vals)))
    levels = np.asarray(levels, dtype=float)
    tail = np.array([masses[vals > L].sum() for L in levels])
    if np.any(np.diff(tail) > 1e-15) and np.all(np.diff(levels) > 0):
        raise ArithmeticError("tail masses must be nonincreasing")
    pos = tail > 0
    if pos.sum() >= 2:
        slope = np.polyfit(levels[pos], np.log(tail[pos]), 1)[0]
        eps0 = max(float(-slope), 0.0)
    else:
        eps0 = 1.0
    C0 = float(np.max(tail[pos] * np.exp(eps0 * levels[pos]))) if pos.any() else 0.0
    return TailEstimate(levels, tail, eps0, C0, roof_mgf(mu, r, eps0), True, levels[pos])
