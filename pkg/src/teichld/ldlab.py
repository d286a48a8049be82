"""Large-deviation experiments for the shift, its suspension flows and the
Rauzy-Veech renormalization.

Deviation probabilities are estimated by importance sampling.  Proposals are
equilibrium states of tilted potentials, one aimed at each side of the
deviation set, mixed 50/50 with stratified allocation and weighted by the
balance heuristic ``mu / mean(q_k)``.  Weights are accumulated in log space,
so probabilities far below ``1e-300`` still give finite log estimates.
Setting ``estimator="plain"`` samples ``mu`` directly and reports Wilson
intervals from the integer hit counts.

For suspension flows the likelihood ratio is taken on the prefix
``x_0 .. x_{n + D - 1}``, where ``n`` is the lap number and ``D`` the depth
of ``phi_r`` and ``r``.  That prefix length is a stopping time for the
sampled path, so the weighted estimator remains unbiased.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import __version__
from .errors import BudgetError, ValidationError
from .rauzy import Permutation, rauzy_a, rauzy_b, rauzy_class
from .rng import FLOW, LAP, SHIFT, TEICH, block_generator, block_sizes, check_seed, run_blocks
from .shift import Observable, _fit_exponential, livsic_test
from .suspension import FlowObservable, Roof, batch_flow_integrals, batch_lap_numbers, phi_r, sample_mu_r, tail_estimate
from .thermo import (
    MarkovMeasure,
    PressureCurve,
    ZeroVarianceWarning,
    constrained_sup,
    deviation_bound,
    equilibrium_measure,
    exact_deviation_probability,
    integrate,
)
from .zippered import _act_inverse

__all__ = [
    "ExperimentConfig",
    "GridPoint",
    "SlopeFit",
    "DeviationReport",
    "TeichDemoReport",
    "wilson_interval",
    "slope_fit",
    "deviate_shift",
    "deviate_flow",
    "lap_deviation",
    "flow_bound_terms",
    "lap_bound_terms",
    "linear_lambda_observable",
    "teich_demo",
    "REPORT_SCHEMA",
]

REPORT_SCHEMA = "teichld.report/1"
MIN_HITS = 10
BLOCK_ELEMENTS = 2_000_000
PROPOSAL_MARGIN = 0.02
HIT_RTOL = 1e-9


def _hit_masks(dev: np.ndarray, thr: float):
    tol = HIT_RTOL * max(1.0, abs(thr))
    return dev >= thr - tol, dev > thr + tol


# --------------------------------------------------------------------------
# configuration and report types


@dataclass
class ExperimentConfig:
    """Settings shared by the deviation experiments.

    ``grid`` holds lengths ``n`` for the shift and flow times ``T`` for the
    flow and lap experiments.  ``xi``, ``a``, ``zeta``, ``xi_lap`` and
    ``omega`` are the splitting parameters of the flow bounds; ``zeta``
    defaults to ``a / ((1 + a) rbar)``.
    """

    psi: Observable
    phi: Observable | FlowObservable | None = None
    roof: Roof | None = None
    eps: float = 0.5
    grid: Sequence[float] = (100, 200, 400, 800)
    samples: int = 100_000
    seed: int = 0
    mode: str = "both"
    xi: float = 0.1
    a: float = 0.05
    zeta: float | None = None
    xi_lap: float = 0.0
    omega: float = 0.01
    estimator: str = "is"
    block_size: int = 20_000
    workers: int | None = None
    min_ess: float = 100.0
    confidence: float = 0.95
    exact_budget: int = 4_000_000

    def __post_init__(self):
        self.grid = tuple(float(g) for g in self.grid)
        self.seed = check_seed(self.seed)
        if not (isinstance(self.eps, (int, float)) and self.eps > 0 and math.isfinite(self.eps)):
            raise ValidationError("eps must be a positive finite number")
        if any(g <= 0 for g in self.grid) or any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be positive and strictly increasing")
        if self.mode not in ("exact", "mc", "both"):
            raise ValidationError(f"mode must be exact, mc or both, got {self.mode!r}")
        if self.estimator not in ("is", "plain"):
            raise ValidationError(f"estimator must be 'is' or 'plain', got {self.estimator!r}")
        if self.mode != "exact" and self.samples < 1000:
            raise ValidationError("Monte Carlo needs at least 1000 samples per grid point")
        if not 0 < self.xi < 1 or not 0 < self.a < 1 or not 0 <= self.xi_lap < 1 or self.omega < 0:
            raise ValidationError("splitting parameters out of range")
        if self.zeta is not None and self.zeta <= 0:
            raise ValidationError("zeta must be positive")
        if not 0 < self.confidence < 1:
            raise ValidationError("confidence must lie in (0, 1)")
        if self.block_size < 1:
            raise ValidationError("block_size must be positive")

    def describe(self) -> dict:
        """Plain-data echo of every setting, defaults included."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Observable):
                v = {"alphabet": v.L, "depth": v.depth, "table": v.flat.tolist()}
            elif isinstance(v, Roof):
                v = {"alphabet": v.L, "depth": v.depth, "table": v.obs.flat.tolist(), "r0": v.r0}
            elif isinstance(v, FlowObservable):
                v = {
                    "alphabet": v.L,
                    "depth": v.depth,
                    "breaks": np.asarray(v.breaks).tolist(),
                    "coefficients": np.asarray(v.coeffs).tolist() if v.is_closed_form else None,
                }
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


@dataclass
class GridPoint:
    x: float
    samples: int = 0
    hits: int = 0
    hits_strict: int = 0
    p_hat: float = 0.0
    p_hat_strict: float = 0.0
    log_p: float = -math.inf
    log_p_strict: float = -math.inf
    std_error: float = 0.0
    std_error_strict: float = 0.0
    ci_low: float = 0.0
    ci_high: float = 0.0
    ess: float = 0.0
    p_exact: float | None = None
    p_exact_strict: float | None = None
    agrees: bool | None = None
    source: str = "mc"
    flag: str | None = None

    @property
    def usable(self) -> bool:
        return self.flag is None and math.isfinite(self.log_p)

    @property
    def log_se(self) -> float:
        """Standard error of ``log p_hat`` by the delta method."""
        if self.source == "exact" or self.p_hat == 0:
            return 0.0
        return self.std_error / self.p_hat


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    half_width: float
    n_points: int
    dof: int
    residual_scale: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.slope - self.half_width, self.slope + self.half_width


@dataclass
class DeviationReport:
    kind: str
    points: list[GridPoint]
    slope: SlopeFit | None
    slope_strict: SlopeFit | None
    bound_upper: float | None
    bound_lower: float | None
    bound_roof: float | None
    bound_terms: dict
    verdict: str
    verdicts: dict
    notes: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    slope_exact: SlopeFit | None = None
    slope_corrected: SlopeFit | None = None

    def canonical(self) -> dict:
        """Everything except run metadata (wall-clock); bitwise reproducible."""
        d = self.to_dict()
        d.pop("meta")
        return d

    def to_dict(self) -> dict:
        def fit(f):
            return None if f is None else asdict(f)

        return {
            "schema": REPORT_SCHEMA,
            "kind": self.kind,
            "points": [asdict(p) for p in self.points],
            "slope": fit(self.slope),
            "slope_strict": fit(self.slope_strict),
            "slope_exact": fit(self.slope_exact),
            "slope_corrected": fit(self.slope_corrected),
            "bound_upper": self.bound_upper,
            "bound_lower": self.bound_lower,
            "bound_roof": self.bound_roof,
            "bound_terms": dict(self.bound_terms),
            "verdict": self.verdict,
            "verdicts": dict(self.verdicts),
            "notes": list(self.notes),
            "config": self.config,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviationReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValidationError(f"unknown report schema {d.get('schema')!r}")

        def fit(v):
            return None if v is None else SlopeFit(**v)

        return cls(
            kind=d["kind"],
            points=[GridPoint(**p) for p in d["points"]],
            slope=fit(d["slope"]),
            slope_strict=fit(d["slope_strict"]),
            slope_exact=fit(d.get("slope_exact")),
            slope_corrected=fit(d.get("slope_corrected")),
            bound_upper=d["bound_upper"],
            bound_lower=d["bound_lower"],
            bound_roof=d["bound_roof"],
            bound_terms=d["bound_terms"],
            verdict=d["verdict"],
            verdicts=d["verdicts"],
            notes=d["notes"],
            config=d["config"],
            meta=d["meta"],
        )

    def __eq__(self, other):
        if not isinstance(other, DeviationReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# --------------------------------------------------------------------------
# statistics


def wilson_interval(hits: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValidationError("need at least one trial")
    if not 0 <= hits <= n:
        raise ValidationError("hits must lie in [0, n]")
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if hits == 0 else max(0.0, mid - half)
    hi = 1.0 if hits == n else min(1.0, mid + half)
    return lo, hi


def slope_fit(x, y, weights=None, confidence: float = 0.95) -> SlopeFit:
    """Weighted least squares line through ``(x, y)``.

    The slope interval uses the residual variance and a t quantile with
    ``k - 2`` degrees of freedom.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.shape != y.shape or x.shape != w.shape or x.ndim != 1:
        raise ValidationError("x, y and weights must be 1-d arrays of equal length")
    if x.size < 3:
        raise ValidationError(f"slope fit needs at least 3 points, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(w <= 0) or np.any(~np.isfinite(w)):
        raise ValidationError("slope fit needs finite data and positive weights")
    W = w.sum()
    xm, ym = (w @ x) / W, (w @ y) / W
    sxx = w @ (x - xm) ** 2
    if sxx <= 0:
        raise ValidationError("slope fit needs at least two distinct x values")
    slope = float(w @ ((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    s2 = float(w @ resid**2) / dof
    half = float(stats.t.ppf(0.5 + confidence / 2, dof)) * math.sqrt(s2 / sxx)
    return SlopeFit(slope, intercept, half, int(x.size), dof, math.sqrt(s2))


def _fit_points(points: list[GridPoint], confidence: float, strict: bool = False, exact: bool = False, prefactor: bool = False):
    # prefactor: fit log p + log(x)/2, removing the x^(-1/2) factor of local limit theory
    use = []
    for p in points:
        if exact:
            v = p.p_exact_strict if strict else p.p_exact
            if v is not None and v > 0:
                use.append((p.x, math.log(v), 1.0))
            continue
        if not p.usable:
            continue
        hits = p.hits_strict if strict else p.hits
        lp = p.log_p_strict if strict else p.log_p
        if hits < MIN_HITS or not math.isfinite(lp):
            continue
        if p.source == "exact":
            w = 1.0
        else:
            se = (p.std_error_strict if strict else p.std_error) / math.exp(lp)
            w = 1.0 / max(se, 1e-12) ** 2
        use.append((p.x, lp, w))
    if len(use) < 3:
        return None
    x, y, w = map(np.array, zip(*use))
    if prefactor:
        y = y + 0.5 * np.log(x)
    return slope_fit(x, y, w / w.max(), confidence)


# --------------------------------------------------------------------------
# block estimators


@dataclass(frozen=True)
class _Job:
    kind: str
    mu: MarkovMeasure
    proposals: tuple
    x: float
    eps: float
    center: float
    seed: int
    grid_index: int
    counts_only: bool = False
    phi: Observable | FlowObservable | None = None
    pr: Observable | None = None
    roof: Roof | None = None
    length: int = 0
    log_rbar: tuple = ()


def _strata(size: int, K: int) -> list[int]:
    base, extra = divmod(size, K)
    return [base + (1 if k < extra else 0) for k in range(K)]


def _accumulate(log_f: np.ndarray, ge: np.ndarray, gt: np.ndarray) -> list:
    with np.errstate(divide="ignore"):
        out = [int(ge.sum()), int(gt.sum())]
        for mask in (ge, gt):
            lf = log_f[mask]
            out.append(float(logsumexp(lf)) if lf.size else -math.inf)
            out.append(float(logsumexp(2 * lf)) if lf.size else -math.inf)
    return out


def _log_weights(log_target: np.ndarray, log_props: list[np.ndarray]) -> np.ndarray:
    K = len(log_props)
    if K == 1 and log_props[0] is None:
        return np.zeros_like(log_target)
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_target - (logsumexp(np.stack(log_props), axis=0) - math.log(K))


def _shift_stratum(job: _Job, q: MarkovMeasure, size: int, rng: np.random.Generator):
    n = int(job.x)
    mu, phi = job.mu, job.phi
    plain = job.proposals == (None,)
    if job.counts_only:
        counts = rng.multinomial(n, q.kernel[0], size=size)
        S = counts @ phi.flat
        with np.errstate(divide="ignore"):
            lt = counts @ np.log(mu.kernel[0]) if not plain else None
            lps = [counts @ np.log(p.kernel[0]) for p in job.proposals] if not plain else [None]
    else:
        words = q.sample(size, n + phi.depth - 1, rng)
        S = phi.values(words).sum(axis=1)
        lt = mu.log_prob(words) if not plain else None
        lps = [p.log_prob(words) for p in job.proposals] if not plain else [None]
    log_f = np.zeros(size) if plain else _log_weights(lt, lps)
    ge, gt = _hit_masks(np.abs(S - n * job.center), n * job.eps)
    return _accumulate(log_f, ge, gt)


def _suspension_stratum(job: _Job, q: MarkovMeasure, size: int, rng: np.random.Generator):
    T = float(job.x)
    plain = job.proposals == (None,)
    smp = sample_mu_r(q, job.roof, rng, size, job.length)
    words, s = smp.words, smp.heights
    if job.kind == "flow":
        vals, laps = batch_flow_integrals(job.phi, words, s, T, job.roof, job.pr)
        D = max(job.pr.depth, job.roof.depth)
        ge, gt = _hit_masks(np.abs(vals - job.center * T), job.eps * T)
    else:
        laps = batch_lap_numbers(words, s, T, job.roof)
        D = job.roof.depth
        ge, gt = _hit_masks(np.abs(laps / T - job.center), job.eps)
    if plain:
        return _accumulate(np.zeros(size), ge, gt)
    idx = np.minimum(laps + D - 1, words.shape[1] - 1)
    rows = np.arange(size)
    lt = job.mu.prefix_log_probs(words)[rows, idx] - job.log_rbar[0]
    lps = [p.prefix_log_probs(words)[rows, idx] - job.log_rbar[1 + k] for k, p in enumerate(job.proposals)]
    return _accumulate(_log_weights(lt, lps), ge, gt)


_PURPOSE = {"shift": SHIFT, "flow": FLOW, "lap": LAP}


def _run_block(task) -> list:
    job, block, size = task
    rng = block_generator(job.seed, _PURPOSE[job.kind], job.grid_index, block)
    sampling = [job.mu] if job.proposals == (None,) else list(job.proposals)
    out = []
    for k, (q, m) in enumerate(zip(sampling, _strata(size, len(sampling)))):
        if m == 0:
            out.append([0, 0, 0, -math.inf, -math.inf, -math.inf, -math.inf])
            continue
        if job.kind == "shift":
            acc = _shift_stratum(job, q, m, rng)
        else:
            acc = _suspension_stratum(job, q, m, rng)
        out.append([m] + acc)
    return out


def _reduce(job: _Job, results: list, point: GridPoint, confidence: float, plain: bool):
    K = len(results[0])
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    tot = np.zeros((K, 3), dtype=np.int64)
    logs = np.full((K, 4), -math.inf)
    for block in results:
        for k, row in enumerate(block):
            tot[k] += np.array(row[:3], dtype=np.int64)
            logs[k] = np.logaddexp(logs[k], np.array(row[3:], dtype=float))
    N = tot[:, 0]
    point.samples = int(N.sum())
    point.hits = int(tot[:, 1].sum())
    point.hits_strict = int(tot[:, 2].sum())
    for strict in (False, True):
        l1, l2 = logs[:, 2 if strict else 0], logs[:, 3 if strict else 1]
        hits = point.hits_strict if strict else point.hits
        with np.errstate(divide="ignore", invalid="ignore"):
            lm = l1 - np.log(N)
            log_p = float(logsumexp(lm) - math.log(K)) if np.any(np.isfinite(lm)) else -math.inf
            if math.isfinite(log_p):
                rel = np.where(np.isfinite(lm), np.expm1(np.clip(l2 - np.log(N) - 2 * lm, 0, 700)), 0.0)
                lv = np.where(rel > 0, 2 * lm + np.log(rel) - np.log(N), -math.inf)
                log_var = float(logsumexp(lv) - 2 * math.log(K)) if np.any(np.isfinite(lv)) else -math.inf
                se = math.exp(0.5 * log_var) if math.isfinite(log_var) else 0.0
            else:
                se = 0.0
        p = math.exp(log_p) if math.isfinite(log_p) else 0.0
        if plain:
            p = hits / point.samples
            log_p = math.log(p) if hits else -math.inf
            se = math.sqrt(p * (1 - p) / point.samples)
        if strict:
            point.p_hat_strict, point.log_p_strict, point.std_error_strict = p, log_p, se
        else:
            point.p_hat, point.log_p, point.std_error = p, log_p, se
            if plain:
                point.ci_low, point.ci_high = wilson_interval(hits, point.samples, confidence)
            else:
                point.ci_low, point.ci_high = max(0.0, p - z * se), p + z * se
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = logsumexp(logs[:, 0])
        s2 = logsumexp(logs[:, 1])
    point.ess = float(math.exp(2 * s1 - s2)) if math.isfinite(s1) else 0.0
    if plain:
        point.ess = float(point.hits)


def _estimate(job: _Job, cfg: ExperimentConfig, block: int) -> GridPoint:
    point = GridPoint(x=job.x, source="mc")
    tasks = [(job, b, m) for b, m in enumerate(block_sizes(cfg.samples, block))]
    results = run_blocks(_run_block, tasks, cfg.workers)
    _reduce(job, results, point, cfg.confidence, job.proposals == (None,))
    if point.hits == 0:
        point.flag = "zero hits; dropped"
    elif point.hits < MIN_HITS:
        point.flag = f"fewer than {MIN_HITS} hits"
    elif point.ess < cfg.min_ess:
        point.flag = "effective sample size below threshold"
    return point


def _clipped_tilt(curve: PressureCurve, s: float) -> float | None:
    if curve.degenerate:
        return None
    w = curve.hi - curve.lo
    s = min(max(s, curve.lo + PROPOSAL_MARGIN * w), curve.hi - PROPOSAL_MARGIN * w)
    return curve.tilt(s)


def _tilted(psi: Observable, obs: Observable, t: float) -> MarkovMeasure:
    g = equilibrium_measure(psi + t * obs, n_check=0)
    return MarkovMeasure(g.L, g.order, g.kernel, g.stationary)


def _plain_measure(mu) -> MarkovMeasure:
    return MarkovMeasure(mu.L, mu.order, mu.kernel, mu.stationary)


def _meta(cfg: ExperimentConfig, started: float) -> dict:
    return {"version": __version__, "seed": cfg.seed, "wall_clock_seconds": time.perf_counter() - started, "workers": cfg.workers}


def _verdict(points, fit, bound_upper, empty: bool, notes) -> str:
    if empty and all(p.hits == 0 and (p.p_exact in (None, 0.0)) for p in points):
        return "empty deviation set"
    if fit is None:
        notes.append(f"fewer than 3 grid points with at least {MIN_HITS} hits and adequate effective sample size")
        return "inconclusive"
    if bound_upper is None:
        return "inconclusive"
    return "consistent" if fit.slope <= bound_upper + fit.half_width else "inconsistent"


def _quiet_bound(*args, **kwargs):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroVarianceWarning)
        value = deviation_bound(*args, **kwargs)
    return value, any(issubclass(w.category, ZeroVarianceWarning) for w in caught)


# --------------------------------------------------------------------------
# base shift


def deviate_shift(cfg: ExperimentConfig) -> DeviationReport:
    """``mu{|S_n phi - n mu(phi)| >= n eps}`` on ``cfg.grid`` for the equilibrium state of ``psi``."""
    started = time.perf_counter()
    psi, phi = cfg.psi, cfg.phi
    if not isinstance(phi, Observable):
        raise ValidationError("deviate_shift needs a locally constant base observable")
    if phi.L != psi.L:
        raise ValidationError("potential and observable use different alphabets")
    notes = []
    mu = equilibrium_measure(psi, n_check=0)
    curve = PressureCurve(psi, phi)
    center = curve.mean
    ns = [int(round(g)) for g in cfg.grid]
    if any(abs(n - g) > 0 for n, g in zip(ns, cfg.grid)):
        raise ValidationError("shift grid must contain integers")
    livsic = livsic_test(phi - center, 8)
    if livsic.is_coboundary:
        notes.append("centered observable has vanishing periodic sums up to period 8")
    bound_upper, zero_var = _quiet_bound(psi, phi, cfg.eps)
    bound_strict, _ = _quiet_bound(psi, phi, cfg.eps, strict=True)
    if zero_var:
        notes.append("observable cohomologous to a constant; bounds set to 0")
    empty = cfg.eps > max(curve.hi - center, center - curve.lo) + 1e-12

    plain = cfg.estimator == "plain" or curve.degenerate
    if plain:
        proposals = (None,)
    else:
        proposals = tuple(_tilted(psi, phi, t) for t in (_clipped_tilt(curve, center + cfg.eps), _clipped_tilt(curve, center - cfg.eps)))
    base = _plain_measure(mu)
    counts_only = phi.depth == 1 and base.is_iid and all(p is None or (p.order == 1 and p.is_iid) for p in proposals)

    points = []
    for gi, n in enumerate(ns):
        exact = exact_strict = None
        if cfg.mode in ("exact", "both"):
            try:
                exact = exact_deviation_probability(base, phi, n, cfg.eps, center=center, budget=cfg.exact_budget)
                exact_strict = exact_deviation_probability(base, phi, n, cfg.eps, center=center, strict=True, budget=cfg.exact_budget)
            except BudgetError:
                notes.append(f"exact enumeration over budget at n={n}")
        if cfg.mode == "exact":
            if exact is None:
                point = GridPoint(x=float(n), source="exact", flag="exact budget exceeded")
            else:
                point = GridPoint(
                    x=float(n),
                    p_hat=exact,
                    p_hat_strict=exact_strict,
                    log_p=math.log(exact) if exact > 0 else -math.inf,
                    log_p_strict=math.log(exact_strict) if exact_strict > 0 else -math.inf,
                    ci_low=exact,
                    ci_high=exact,
                    p_exact=exact,
                    p_exact_strict=exact_strict,
                    source="exact",
                    flag=None if exact > 0 else "zero probability",
                )
                point.hits = MIN_HITS if exact > 0 else 0
                point.hits_strict = MIN_HITS if exact_strict > 0 else 0
            points.append(point)
            continue
        job = _Job("shift", base, proposals, float(n), cfg.eps, center, cfg.seed, gi, counts_only, phi=phi)
        block = cfg.block_size if counts_only else max(16, min(cfg.block_size, BLOCK_ELEMENTS // (n + phi.depth)))
        point = _estimate(job, cfg, block)
        if exact is not None:
            point.p_exact, point.p_exact_strict = exact, exact_strict
            se = point.std_error if point.std_error > 0 else 1.0 / point.samples
            point.agrees = bool(abs(point.p_hat - exact) <= 3 * se) if point.hits else exact < 3.0 / point.samples
        points.append(point)

    fit = _fit_points(points, cfg.confidence)
    fit_strict = _fit_points(points, cfg.confidence, strict=True)
    fit_exact = _fit_points(points, cfg.confidence, exact=True) if cfg.mode == "both" else None
    verdict = _verdict(points, fit, bound_upper, empty, notes)
    corrected = _fit_points(points, cfg.confidence, prefactor=True)
    verdicts = {"upper": verdict}
    for name, f in (("sandwich", fit), ("sandwich_corrected", corrected)):
        if f is not None:
            verdicts[name] = bool(bound_strict - f.half_width <= f.slope <= bound_upper + f.half_width)
    agreements = [p.agrees for p in points if p.agrees is not None]
    if agreements:
        verdicts["exact_mc_agreement"] = all(agreements)
    return DeviationReport(
        kind="shift",
        points=points,
        slope=fit,
        slope_strict=fit_strict,
        slope_exact=fit_exact,
        slope_corrected=corrected,
        bound_upper=bound_upper,
        bound_lower=bound_strict,
        bound_roof=None,
        bound_terms={"ge": bound_upper, "gt": bound_strict, "center": center},
        verdict=verdict,
        verdicts=verdicts,
        notes=notes,
        config=cfg.describe(),
        meta=_meta(cfg, started),
    )


# --------------------------------------------------------------------------
# suspension flow


def _centered_flow_sup(phi: FlowObservable, c: float, t_max: float) -> float:
    if not phi.is_closed_form:
        return phi.sup_norm(t_max) + abs(c)
    breaks = np.asarray(phi.breaks, dtype=float)
    coeffs = np.array(phi.coeffs, dtype=float)
    if math.isfinite(breaks[-1]):
        breaks = np.append(breaks, math.inf)
        pad = np.zeros(coeffs.shape[:1] + (1,) + coeffs.shape[2:])
        coeffs = np.concatenate((coeffs, pad), axis=1)
    coeffs[:, :, 0] -= c
    return FlowObservable(phi.L, phi.depth, breaks, coeffs).sup_norm(t_max)


def _lap_rates(psi: Observable, r: Roof, v_fast: float, v_slow: float) -> tuple[float, float]:
    """Exponents for ``n/T >= 1/v_fast`` and ``n/T <= 1/v_slow`` via the rate function of ``r``."""
    curve = PressureCurve(psi, r.obs)
    fast = -curve.rate(v_fast) / v_fast if v_fast > 0 else -math.inf
    slow = -curve.rate(v_slow) / v_slow if v_slow > 0 and math.isfinite(v_slow) else -math.inf
    return fast, slow


def flow_bound_terms(psi: Observable, g: Observable, r: Roof, eps: float, *, xi: float, a: float, zeta: float, omega: float, phi_norm: float, eps0: float) -> dict:
    """Itemized upper and lower exponents for flow deviations.

    ``g = phi_r - mu_r(phi) r`` is the centered base observable.  The five
    ``literal_*`` terms are the general bound; ``upper`` keeps the terms that
    remain finite for a bounded roof (the remainder and roof-tail events are
    eventually empty) and uses exact lap-number rates.
    """
    mu = equilibrium_measure(psi, n_check=0)
    rbar = integrate(mu, r.obs)
    r0 = r.r0
    beta = constrained_sup(psi, g, eps * (1 - xi) * (1 - a) * rbar)
    theta = rbar * (1 - 1 / ((1 - xi) * (1 + zeta * rbar)))
    gamma = constrained_sup(psi, r.obs, theta) if theta > 0 else 0.0
    terms = {
        "rbar": rbar,
        "r0": r0,
        "eps0": eps0,
        "phi_norm": phi_norm,
        "beta": beta,
        "gamma": gamma,
        "literal_beta": beta / ((1 + a) * rbar),
        "literal_gamma": gamma / rbar * (2 + a) / (1 + a),
        "literal_lap_tail": -eps0 / 2 * (1 - rbar / (r0 * (1 - zeta * rbar))),
        "literal_remainder": -eps0 * eps * xi / (2 * phi_norm) if phi_norm > 0 else -math.inf,
        "literal_omega": -eps0 * omega / (2 * phi_norm) if phi_norm > 0 else -math.inf,
    }
    terms["literal_max"] = max(terms[k] for k in terms if k.startswith("literal_"))
    fast, slow = _lap_rates(psi, r, (1 - a) * rbar, (1 + a) * rbar)
    terms["lap_fast"] = fast
    terms["lap_slow"] = slow
    terms["upper"] = max(terms["literal_beta"], fast, slow)
    terms["lower"] = constrained_sup(psi, g, eps * rbar / r0, strict=True) / r0
    return terms


def _flow_center(mu, phi: FlowObservable, r: Roof):
    pr = phi_r(phi, r)
    rbar = integrate(mu, r.obs)
    return pr, integrate(mu, pr) / rbar, rbar


def _word_length(T: float, r: Roof, D: int) -> int:
    return int(math.ceil((T + r.r_max) / r.r0)) + D + 2


def _suspension_jobs(kind, cfg, mu, proposals, center, eps, phi=None, pr=None):
    r = cfg.roof
    base = _plain_measure(mu)
    log_rbar = (math.log(integrate(base, r.obs)),)
    if proposals != (None,):
        log_rbar += tuple(math.log(integrate(p, r.obs)) for p in proposals)
    D = max(pr.depth if pr is not None else 1, r.depth)
    jobs = []
    for gi, T in enumerate(cfg.grid):
        length = _word_length(T, r, D)
        jobs.append(_Job(kind, base, proposals, T, eps, center, cfg.seed, gi, False, phi, pr, r, length, log_rbar))
    return jobs


def _run_suspension(cfg, jobs):
    points = []
    for job in jobs:
        block = max(16, min(cfg.block_size, BLOCK_ELEMENTS // job.length))
        points.append(_estimate(job, cfg, block))
    return points


def deviate_flow(cfg: ExperimentConfig) -> DeviationReport:
    """``mu_r{|int_0^T phi(f_t z) dt - T mu_r(phi)| >= eps T}`` on ``cfg.grid``."""
    started = time.perf_counter()
    psi, phi, r = cfg.psi, cfg.phi, cfg.roof
    if not isinstance(phi, FlowObservable) or r is None:
        raise ValidationError("deviate_flow needs a flow observable and a roof")
    if cfg.mode == "exact":
        raise ValidationError("exact mode is only available for the base shift")
    if not (phi.L == r.L == psi.L):
        raise ValidationError("potential, roof and observable use different alphabets")
    notes = []
    mu = equilibrium_measure(psi, n_check=0)
    pr, center, rbar = _flow_center(mu, phi, r)
    g = pr - center * r.obs
    zeta = cfg.zeta if cfg.zeta is not None else cfg.a / ((1 + cfg.a) * rbar)
    if zeta * rbar >= 1:
        raise ValidationError("zeta must be smaller than 1/rbar")
    livsic = livsic_test(g, 8)
    if livsic.is_coboundary:
        notes.append("centered phi_r has vanishing periodic sums up to period 8; the periodic-orbit condition fails")
    else:
        notes.append(f"periodic-orbit witness: period {livsic.period}, sum {livsic.sum:.6g}")
    phi_norm = _centered_flow_sup(phi, center, r.r_max)
    eps0 = tail_estimate(mu, r).eps0
    terms = flow_bound_terms(psi, g, r, cfg.eps, xi=cfg.xi, a=cfg.a, zeta=zeta, omega=cfg.omega, phi_norm=phi_norm, eps0=eps0)

    sides = []
    for s in (center + cfg.eps, center - cfg.eps):
        curve = PressureCurve(psi, pr - s * r.obs)
        sides.append(curve)
    empty = sides[0].hi < -1e-12 and sides[1].lo > 1e-12
    tilts = [] if cfg.estimator == "plain" else [_clipped_tilt(c, 0.0) for c in sides]
    if not tilts or any(t is None for t in tilts):
        proposals = (None,)
    else:
        proposals = tuple(_tilted(psi, c.phi, t) for c, t in zip(sides, tilts))
    jobs = _suspension_jobs("flow", cfg, mu, proposals, center, cfg.eps, phi, pr)
    points = _run_suspension(cfg, jobs)

    fit = _fit_points(points, cfg.confidence)
    fit_strict = _fit_points(points, cfg.confidence, strict=True)
    corrected = _fit_points(points, cfg.confidence, prefactor=True)
    bound_upper = terms["upper"]
    verdict = _verdict(points, fit, bound_upper, empty, notes)
    verdicts = {"upper": verdict, "upper_literal": None, "lower": None}
    if fit is not None:
        verdicts["upper_literal"] = "consistent" if fit.slope <= terms["literal_max"] + fit.half_width else "inconsistent"
    corrected_strict = _fit_points(points, cfg.confidence, strict=True, prefactor=True)
    for name, f in (("lower", fit_strict), ("lower_corrected", corrected_strict)):
        if f is not None:
            verdicts[name] = "consistent" if f.slope >= terms["lower"] - f.half_width else "inconsistent"
    terms["center"] = center
    terms["zeta"] = zeta
    return DeviationReport(
        kind="flow",
        points=points,
        slope=fit,
        slope_corrected=corrected,
        slope_strict=fit_strict,
        bound_upper=bound_upper,
        bound_lower=terms["lower"],
        bound_roof=terms["literal_gamma"],
        bound_terms=terms,
        verdict=verdict,
        verdicts=verdicts,
        notes=notes,
        config=cfg.describe(),
        meta=_meta(cfg, started),
    )


def lap_bound_terms(psi: Observable, r: Roof, zeta: float, xi_lap: float, eps0: float) -> dict:
    """Exponents for ``|n/T - 1/rbar| >= zeta``: the general two-term bound and exact lap rates."""
    mu = equilibrium_measure(psi, n_check=0)
    rbar = integrate(mu, r.obs)
    r0 = r.r0
    theta = rbar * (1 - 1 / ((1 - xi_lap) * (1 + zeta * rbar)))
    gamma = constrained_sup(psi, r.obs, theta) if theta > 0 else 0.0
    v_fast = 1 / (1 / rbar + zeta)
    v_slow = 1 / (1 / rbar - zeta) if zeta < 1 / rbar else math.inf
    fast, slow = _lap_rates(psi, r, v_fast, v_slow)
    terms = {
        "rbar": rbar,
        "r0": r0,
        "eps0": eps0,
        "gamma": gamma,
        "literal_gamma": gamma * (1 + zeta * rbar) / rbar,
        "literal_tail": -eps0 / 2 * (1 - rbar / (r0 * (1 - zeta * rbar))) if zeta * rbar < 1 else math.inf,
        "lap_fast": fast,
        "lap_slow": slow,
    }
    terms["literal_max"] = max(terms["literal_gamma"], terms["literal_tail"])
    terms["upper"] = max(fast, slow)
    return terms


def lap_deviation(cfg: ExperimentConfig) -> DeviationReport:
    """``mu_r{|n(x, s, T)/T - 1/rbar| >= zeta}`` on ``cfg.grid``."""
    started = time.perf_counter()
    psi, r = cfg.psi, cfg.roof
    if r is None:
        raise ValidationError("lap_deviation needs a roof")
    if cfg.mode == "exact":
        raise ValidationError("exact mode is only available for the base shift")
    if r.L != psi.L:
        raise ValidationError("potential and roof use different alphabets")
    notes = []
    mu = equilibrium_measure(psi, n_check=0)
    rbar = integrate(mu, r.obs)
    zeta = cfg.zeta if cfg.zeta is not None else cfg.a / ((1 + cfg.a) * rbar)
    eps0 = tail_estimate(mu, r).eps0
    terms = lap_bound_terms(psi, r, zeta, cfg.xi_lap, eps0)
    curve = PressureCurve(psi, r.obs)
    v_fast = 1 / (1 / rbar + zeta)
    v_slow = 1 / (1 / rbar - zeta) if zeta < 1 / rbar else math.inf
    empty = v_fast <= curve.lo + 1e-12 and v_slow >= curve.hi - 1e-12
    if zeta >= 1 / r.r0:
        notes.append("zeta >= 1/r0: n/T cannot deviate that far")
    props = []
    if cfg.estimator == "is" and not curve.degenerate:
        for v in (v_fast, v_slow):
            t = _clipped_tilt(curve, min(v, curve.hi))
            if t is not None:
                props.append(_tilted(psi, r.obs, t))
    proposals = tuple(props) if props else (None,)
    jobs = _suspension_jobs("lap", cfg, mu, proposals, 1 / rbar, zeta)
    points = _run_suspension(cfg, jobs)
    fit = _fit_points(points, cfg.confidence)
    fit_strict = _fit_points(points, cfg.confidence, strict=True)
    corrected = _fit_points(points, cfg.confidence, prefactor=True)
    verdict = _verdict(points, fit, terms["upper"], empty, notes)
    verdicts = {"upper": verdict, "negative": None, "upper_literal": None}
    if fit is not None:
        verdicts["negative"] = bool(fit.slope + fit.half_width < 0)
        verdicts["upper_literal"] = "consistent" if fit.slope <= terms["literal_max"] + fit.half_width else "inconsistent"
    terms["zeta"] = zeta
    return DeviationReport(
        kind="lap",
        points=points,
        slope=fit,
        slope_corrected=corrected,
        slope_strict=fit_strict,
        bound_upper=terms["upper"],
        bound_lower=None,
        bound_roof=terms["literal_gamma"],
        bound_terms=terms,
        verdict=verdict,
        verdicts=verdicts,
        notes=notes,
        config=cfg.describe(),
        meta=_meta(cfg, started),
    )


# --------------------------------------------------------------------------
# Rauzy-Veech renormalization demo


def linear_lambda_observable(coeffs: Sequence[float]) -> Callable:
    """``f(lam, pi) = c_0 + sum_i c_i lam_i``, Lipschitz in ``lam``."""
    c = np.asarray(coeffs, dtype=float)

    def f(lam: np.ndarray, pidx: np.ndarray) -> np.ndarray:
        if lam.shape[-1] != c.size - 1:
            raise ValidationError(f"observable has {c.size - 1} length coefficients, lam has {lam.shape[-1]}")
        return c[0] + lam @ c[1:]

    f.coefficients = c.tolist()
    return f


@dataclass
class TeichDemoReport:
    permutation: list
    class_size: int
    starts: int
    steps: int
    seed: int
    restarts: int
    nonfinite: int
    letter_counts: dict
    label_counts: dict
    roof: dict
    roof_tail: dict
    roof_log_holder: dict
    pooled_mean: float
    eps: float
    deviation: list
    notes: list
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = REPORT_SCHEMA
        d["kind"] = "teich-demo"
        return d

    def canonical(self) -> dict:
        d = self.to_dict()
        d.pop("meta")
        return d


def _inverse_tables(members: Sequence[Permutation]):
    index = {p: i for i, p in enumerate(members)}
    m = members[0].m
    M = len(members)
    nxt = np.empty((M, 2), dtype=np.int64)
    inv = np.empty((M, 2, m, m))
    kpos = np.empty(M, dtype=np.int64)
    eye = np.eye(m)
    for i, p in enumerate(members):
        k = p.inverse(m)
        kpos[i] = k - 1
        for b, (label, op) in enumerate((("a", rauzy_a), ("b", rauzy_b))):
            nxt[i, b] = index[op(p)]
            inv[i, b] = np.stack([_act_inverse(label, k, eye[:, j].copy()) for j in range(m)], axis=1)
    return nxt, inv, kpos


def _holder_of_roof(tau: np.ndarray, branch: np.ndarray, pidx: np.ndarray, depths) -> dict:
    steps, S = tau.shape
    vals = []
    used = []
    for N in depths:
        if N >= steps:
            break
        T = steps - N
        code = pidx[:T].astype(np.int64)
        for j in range(N):
            code = code * 2 + branch[j : j + T]
        key = code.ravel()
        t = tau[:T].ravel()
        _, inv = np.unique(key, return_inverse=True)
        G = inv.max() + 1
        lo = np.full(G, np.inf)
        hi = np.zeros(G)
        np.minimum.at(lo, inv, t)
        np.maximum.at(hi, inv, t)
        cnt = np.bincount(inv, minlength=G)
        multi = cnt >= 2
        vals.append(float(np.max(1 - lo[multi] / hi[multi])) if multi.any() else 0.0)
        used.append(int(N))
    fit = _fit_exponential(np.array(used), np.array(vals), exact=False) if len(used) >= 2 else None
    return {
        "depths": used,
        "variation": vals,
        "A": None if fit is None else fit.A,
        "rate": None if fit is None else fit.rate,
        "status": "too few depths" if fit is None else fit.status,
    }


def teich_demo(
    pi: Permutation,
    *,
    starts: int = 100,
    steps: int = 10_000,
    observable: Callable | None = None,
    lengths: Sequence[int] = (1000, 10_000),
    eps: float = 0.2,
    seed: int = 0,
    bins: int = 40,
    holder_depths: Sequence[int] = tuple(range(1, 11)),
    tail_levels: Sequence[float] | None = None,
) -> TeichDemoReport:
    """Run renormalized Rauzy-Veech orbits from random unit-length ``lam``.

    Only the length data are evolved (the observable is a function of
    ``(lam, pi)``).  Orbits start from the uniform law on the simplex; a
    non-inducible or non-finite state restarts the orbit from a fresh
    sample and is counted.  Birkhoff averages are flow-time weighted,
    ``sum f tau / sum tau`` over windows of the given step lengths, and
    centered by the pooled average.  Demonstrational only: the starting law
    is not an invariant measure of the flow.
    """
    seed = check_seed(seed)
    if starts < 1 or steps < 1:
        raise ValidationError("starts and steps must be positive")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    started = time.perf_counter()
    cls = rauzy_class(pi)
    members = list(cls.members)
    start_idx = members.index(pi)
    m = pi.m
    nxt, inv, kpos = _inverse_tables(members)
    f = observable if observable is not None else linear_lambda_observable([0.0, 1.0] + [0.0] * (m - 1))
    rng = block_generator(seed, TEICH, 0, 0)

    def fresh(k):
        e = rng.exponential(size=(k, m))
        return e / e.sum(axis=1, keepdims=True)

    lam = fresh(starts)
    pidx = np.full(starts, start_idx, dtype=np.int64)
    rows = np.arange(starts)
    tau = np.empty((steps, starts))
    fv = np.empty((steps, starts))
    branch = np.empty((steps, starts), dtype=np.int64)
    pid_hist = np.empty((steps, starts), dtype=np.int64)
    winners = np.empty((steps, starts), dtype=np.int64)
    restarts = nonfinite = 0
    for t in range(steps):
        while True:
            bottom = lam[rows, kpos[pidx]]
            top = lam[:, m - 1]
            bad = (bottom == top) | ~np.all(np.isfinite(lam), axis=1) | np.any(lam <= 0, axis=1)
            if not bad.any():
                break
            nonfinite += int((~np.all(np.isfinite(lam), axis=1)).sum())
            restarts += int(bad.sum())
            lam[bad] = fresh(int(bad.sum()))
            pidx[bad] = start_idx
        b = (top > bottom).astype(np.int64)
        loser = np.minimum(bottom, top)
        tau[t] = -np.log1p(-loser / lam.sum(axis=1))
        fv[t] = f(lam, pidx)
        branch[t] = b
        pid_hist[t] = pidx
        winners[t] = np.where(b == 0, kpos[pidx] + 1, m)
        new = np.einsum("sij,sj->si", inv[pidx, b], lam)
        lam = new / new.sum(axis=1, keepdims=True)
        pidx = nxt[pidx, b]
    nonfinite += int((~np.isfinite(tau)).sum() + (~np.isfinite(fv)).sum())

    letters = {"a": int((branch == 0).sum()), "b": int((branch == 1).sum())}
    labels = {}
    for bval, name in ((0, "a"), (1, "b")):
        w = winners[branch == bval]
        for k, c in zip(*np.unique(w, return_counts=True)):
            labels[f"{name}{int(k)}"] = int(c)
    q = np.quantile(tau, [0.01, 0.5, 0.99])
    roof_stats = {
        "min": float(tau.min()),
        "mean": float(tau.mean()),
        "max": float(tau.max()),
        "q01": float(q[0]),
        "median": float(q[1]),
        "q99": float(q[2]),
    }
    levels = np.asarray(tail_levels if tail_levels is not None else np.linspace(0, float(tau.max()), 11), dtype=float)
    roof_tail = {"levels": levels.tolist(), "fraction_above": [float(np.mean(tau > L)) for L in levels]}
    holder = _holder_of_roof(tau, branch, pid_hist, holder_depths)

    pooled = float(np.sum(fv * tau) / np.sum(tau))
    dev_rows = []
    edges = np.linspace(-1.0, 1.0, bins + 1)
    for ell in lengths:
        ell = int(ell)
        W = steps // ell
        if W == 0:
            dev_rows.append({"length": ell, "windows": 0, "mass_beyond_eps": None, "edges": edges.tolist(), "counts": [0] * bins})
            continue
        ft = (fv[: W * ell] * tau[: W * ell]).reshape(W, ell, starts).sum(axis=1)
        tt = tau[: W * ell].reshape(W, ell, starts).sum(axis=1)
        dev = (ft / tt - pooled).ravel()
        counts, _ = np.histogram(np.clip(dev, edges[0], edges[-1]), bins=edges)
        dev_rows.append(
            {
                "length": ell,
                "windows": int(dev.size),
                "mass_beyond_eps": float(np.mean(np.abs(dev) > eps)),
                "max_abs_deviation": float(np.max(np.abs(dev))),
                "edges": edges.tolist(),
                "counts": counts.tolist(),
            }
        )
    notes = ["demonstrational: starts are uniform on the length simplex; no claim about the invariant measure of the flow"]
    obs_desc = getattr(f, "coefficients", None)
    return TeichDemoReport(
        permutation=list(pi.image),
        class_size=len(members),
        starts=int(starts),
        steps=int(steps),
        seed=seed,
        restarts=restarts,
        nonfinite=nonfinite,
        letter_counts=letters,
        label_counts=labels,
        roof=roof_stats,
        roof_tail=roof_tail,
        roof_log_holder=holder,
        pooled_mean=pooled,
        eps=float(eps),
        deviation=dev_rows,
        notes=notes + ([f"observable: linear in lam with coefficients {obs_desc}"] if obs_desc else []),
        meta={"version": __version__, "wall_clock_seconds": time.perf_counter() - started},
    )
