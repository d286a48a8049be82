"""Command-line front end.

    teichld <command> [-c FILE] [--set section.key=value ...] [--seed N]
                      [--workers N] [--out PREFIX]

Without ``--out`` the JSON report goes to stdout.  With ``--out PREFIX`` the
report is written to ``PREFIX.json`` and the table to ``PREFIX.csv`` (plus
``PREFIX.dat`` for gnuplot), and a short summary is printed.  Exit codes: 0
success, 2 invalid input, 3 convergence failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import (
    build_experiment,
    build_flow_observable,
    build_observable,
    build_permutation,
    build_potential,
    parse_config,
    require_seed,
    section,
)
from .emit import deviation_table, dumps, envelope, write_csv, write_dat, write_json
from .errors import NonInducibleError, TeichLDError, ValidationError
from .ldlab import deviate_flow, deviate_shift, lap_deviation, linear_lambda_observable, teich_demo
from .rauzy import integer_det, rauzy_class
from .rng import SAMPLING, block_generator
from .shift import livsic_test
from .thermo import PressureCurve, ZeroVarianceWarning, deviation_bound, entropy, equilibrium_measure
from .zippered import ZipperedRectangle, area, random_zippered_rectangle, renormalized_step

__all__ = ["main", "build_parser", "COMMANDS"]


def _rauzy_class(cfg, args):
    pi = build_permutation(cfg)
    cap = section(cfg, "rauzy")["cap"]
    cls = rauzy_class(pi, cap=int(cap))
    result = cls.to_dict()
    header = ["source", "label", "target", "det"]
    rows = [[" ".join(map(str, e["source"])), e["label"], " ".join(map(str, e["target"])), e["det"]] for e in result["edges"]]
    summary = [f"class of {pi}: {len(cls)} members", *(f"  {r[0]} --{r[1]}--> {r[2]}  det {r[3]}" for r in rows)]
    return None, result, header, rows, summary


def _zr_orbit(cfg, args):
    pi = build_permutation(cfg)
    body = section(cfg, "orbit", required=False) or parse_config(None, ["orbit.steps=10"])["orbit"]
    steps = int(body["steps"])
    seed = None
    if body.get("lam") is None:
        seed = require_seed(body, "orbit", args.seed)
        x = random_zippered_rectangle(pi, block_generator(seed, SAMPLING, 0, 0), unit_area=True)
    else:
        if body.get("delta") is None:
            raise ValidationError("orbit.delta is required when orbit.lam is given")
        lam = np.asarray(body["lam"], dtype=float)
        x = ZipperedRectangle(lam / lam.sum(), pi, np.asarray(body["delta"], dtype=float) * lam.sum())
    header = ["step", "branch", "winner", "elapsed", "area", "permutation"] + [f"lam_{i + 1}" for i in range(pi.m)]
    rows = [[0, "", "", 0.0, area(x), str(x.pi)] + x.lam.tolist()]
    error = None
    for k in range(1, steps + 1):
        try:
            st = renormalized_step(x)
        except NonInducibleError as exc:
            error = str(exc)
            break
        x = st.x
        rows.append([k, st.branch, st.winner, st.elapsed, area(x), str(x.pi)] + x.lam.tolist())
    result = {"steps": len(rows) - 1, "error": error, "rows": rows}
    summary = [f"{len(rows) - 1} renormalized steps from {pi}" + (f"; stopped: {error}" if error else "")]
    return seed, result, header, rows, summary


def _livsic(cfg, args):
    body = section(cfg, "observable")
    L = body.get("alphabet")
    phi = build_observable(cfg, L if L is not None else round(len(body["table"]) ** (1 / body["depth"])))
    lv = section(cfg, "livsic", required=False) or parse_config(None, ["livsic.p_max=8"])["livsic"]
    res = livsic_test(phi, int(lv["p_max"]), tol=float(lv["tol"]), budget=int(lv["budget"]))
    result = res.to_dict()
    header = list(result)
    rows = [[" ".join(map(str, v)) if isinstance(v, list) else v for v in result.values()]]
    summary = [f"verdict: {res.verdict} (reached period {res.reached_period})"]
    if res.word is not None:
        summary.append(f"witness: period {res.period}, word {res.word}, sum {res.sum:.6g}")
    return None, result, header, rows, summary


def _pressure(cfg, args):
    psi = build_potential(cfg)
    mu = equilibrium_measure(psi)
    result = {
        "pressure": mu.pressure,
        "entropy": entropy(mu),
        "gibbs_constant": mu.gibbs_constant,
        "gibbs_depth": mu.gibbs_depth,
    }
    header, rows = ["t", "Q", "dQ"], []
    if "observable" in cfg:
        phi = build_observable(cfg, psi.L)
        curve = PressureCurve(psi, phi)
        ts = section(cfg, "pressure", required=False) or {"t": [0.0]}
        for t in ts["t"]:
            rows.append([float(t), curve.Q(float(t)), curve.dQ(float(t))])
        result["mean"] = curve.mean
        result["range"] = [curve.lo, curve.hi]
    result["curve"] = rows
    summary = [f"P = {mu.pressure:.15g}, h = {result['entropy']:.15g}, K = {mu.gibbs_constant:.6g}"]
    return None, result, header, rows, summary


def _rate_bound(cfg, args):
    psi = build_potential(cfg)
    phi = build_observable(cfg, psi.L)
    body = section(cfg, "rate")
    eps = body.get("epsilon")
    if eps is None:
        raise ValidationError("missing key rate.epsilon")
    eps_list = eps if isinstance(eps, list) else [eps]
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroVarianceWarning)
        for e in eps_list:
            rows.append([float(e), deviation_bound(psi, phi, float(e), strict=bool(body["strict"]))])
    result = {"rows": rows, "zero_variance": bool(caught)}
    summary = [f"eps = {r[0]:g}: bound {r[1]:.12g}" for r in rows]
    return None, result, ["epsilon", "bound"], rows, summary


def _experiment(kind, func):
    def run(cfg, args):
        exp = build_experiment(cfg, kind, args.seed, args.workers)
        report = func(exp)
        header, rows = deviation_table(report)
        summary = [f"verdict: {report.verdict}"]
        if report.slope is not None:
            summary.append(f"slope {report.slope.slope:.6g} +- {report.slope.half_width:.3g}; bound_upper {report.bound_upper:.6g}")
        summary.extend(report.notes)
        return exp.seed, report.to_dict(), header, rows, summary

    return run


def _teich_demo(cfg, args):
    pi = build_permutation(cfg)
    body = section(cfg, "demo", required=False) or parse_config(None, ["demo.starts=100"])["demo"]
    seed = require_seed(body, "demo", args.seed)
    obs = body.get("observable")
    f = None if obs is None else linear_lambda_observable(obs)
    rep = teich_demo(
        pi,
        starts=int(body["starts"]),
        steps=int(body["steps"]),
        observable=f,
        lengths=[int(v) for v in body["lengths"]],
        eps=float(body["epsilon"]),
        seed=seed,
        bins=int(body["bins"]),
    )
    header = ["length", "windows", "mass_beyond_eps", "max_abs_deviation"]
    rows = [[d["length"], d["windows"], d["mass_beyond_eps"], d.get("max_abs_deviation")] for d in rep.deviation]
    summary = [
        f"letters {rep.letter_counts}, restarts {rep.restarts}, non-finite {rep.nonfinite}",
        f"roof min {rep.roof['min']:.3g}, mean {rep.roof['mean']:.6g}",
        *(f"length {r[0]}: mass beyond {rep.eps} = {r[2]}" for r in rows),
        rep.notes[0],
    ]
    return seed, rep.to_dict(), header, rows, summary


COMMANDS = {
    "rauzy-class": (_rauzy_class, "Rauzy class of a permutation with edge matrices"),
    "zr-orbit": (_zr_orbit, "renormalized Rauzy-Veech orbit of a zippered rectangle"),
    "livsic": (_livsic, "periodic-orbit coboundary test"),
    "pressure": (_pressure, "pressure, entropy and Gibbs constant of a potential"),
    "rate-bound": (_rate_bound, "variational deviation exponent"),
    "ld-shift": (_experiment("shift", deviate_shift), "deviation experiment on the base shift"),
    "ld-flow": (_experiment("flow", deviate_flow), "deviation experiment on a suspension flow"),
    "lap-dev": (_experiment("lap", lap_deviation), "lap-number deviation experiment"),
    "teich-demo": (_teich_demo, "Rauzy-Veech renormalization demonstration"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teichld", description="Large deviations for symbolic Teichmueller flow models.")
    parser.add_argument("--version", action="version", version=f"teichld {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="TOML experiment file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--seed", type=int, help="64-bit unsigned seed (overrides the file)")
        p.add_argument("--workers", type=int, help="worker processes (default: $TEICHLD_WORKERS or 1)")
        p.add_argument("--out", help="write PREFIX.json, PREFIX.csv and PREFIX.dat")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.command][0]
    started = time.perf_counter()
    try:
        cfg = parse_config(args.config, args.overrides)
        seed, result, header, rows, summary = func(cfg, args)
        doc = envelope(args.command, seed, cfg, result, time.perf_counter() - started)
        if args.out:
            write_json(doc, f"{args.out}.json")
            write_csv(header, rows, f"{args.out}.csv")
            write_dat(header, rows, f"{args.out}.dat")
            print("\n".join(summary))
        else:
            print(dumps(doc))
    except TeichLDError as exc:
        print(f"teichld: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"teichld: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
