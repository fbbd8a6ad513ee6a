"""Command-line interface: threshold, estimate, predict, simulate, compare.

Settings come from flags, then from the matching section of ``--config``
(an INI-style key = value file), then from built-in defaults.  Every run
writes the resolved settings next to its outputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleParams, Kind
from .evolution import (
    ExtrapolationError,
    IndeterminateDE,
    PlateauConfig,
    ScalingParams,
    UnusableEstimate,
    build_scaling_params,
    de_threshold,
)
from .montecarlo import (
    ExperimentSpec,
    compare,
    read_stats_csv,
    run_experiment,
    write_manifest,
    write_stats_csv,
)
from .scaling import PREDICT_COLUMNS, bler_sign_report, predict, prediction_row
from .window import FULL_BP, Accounting, WindowConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNUSABLE = 3
EXIT_RESOURCE = 4

log = logging.getLogger("scldpc")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return "" if x is None else str(x)


def parse_grid(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive); must be strictly increasing."""
    text = str(text).strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(f"bad range grid {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(n)]
    else:
        vals = [float(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise ConfigError("empty grid")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"grid {text!r} is not strictly increasing")
    return vals


def parse_ints(text: str) -> list[int]:
    return [int(p) for p in str(text).split(",") if p.strip()]


# ---------------------------------------------------------------------------
# settings resolution

DEFAULTS = {
    "threshold": dict(dv=5, dc=10, L=50, tol=1e-4),
    "estimate": dict(dv=5, dc=10, L="50", eps_grid="0.44:0.48:0.01", N=10_000, trials=100,
                     nu_theta_eps=None, nu_theta_trials=200, plateau_tol=0.02,
                     eps_star=None, output="scaling_params.txt"),
    "predict": dict(params=None, grid=None, eps=None, N=1000, L=50, W="full",
                    models="refined", latency=None, output="predictions.csv"),
    "simulate": dict(dv=5, dc=10, L=50, N=1000, kind="terminated", eps_grid="0.46",
                     decoder="full", W=10, delay=0, accounting="end", max_frames=100_000,
                     target_errors=200, expurgate=True, max_seconds=None,
                     output="simulation.csv"),
    "compare": dict(sim=None, pred=None, model="refined",
                    output="report.csv"),
}

TYPES = dict(dv=int, dc=int, N=int, trials=int, nu_theta_trials=int, max_frames=int,
             delay=int, tol=float, plateau_tol=float, nu_theta_eps=float, eps_star=float,
             max_seconds=float, target_errors=int, latency=float)


def _coerce(key, value):
    if value is None or value == "":
        return None
    if key == "expurgate":
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if key == "L" and not isinstance(value, str):
        return value
    typ = TYPES.get(key)
    try:
        return typ(value) if typ else value
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def resolve(cmd: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(args.config):
            raise ConfigError(f"cannot read config {args.config}")
        for section in ("common", cmd):
            if parser.has_section(section):
                for k, v in parser.items(section):
                    if k in ("seed", "threads"):
                        if getattr(args, k) is None:
                            setattr(args, k, int(v))
                        continue
                    if k not in cfg:
                        raise ConfigError(f"unknown key {k!r} in section [{section}]")
                    cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    args.seed = 0 if args.seed is None else args.seed
    args.threads = 1 if args.threads is None else args.threads
    return {k: _coerce(k, v) for k, v in cfg.items()}


def write_resolved(out: Path, cmd: str, cfg: dict, args) -> Path:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["common"] = dict(seed=fmt(args.seed), threads=fmt(args.threads), version=__version__)
    cp[cmd] = {k: fmt(v) for k, v in cfg.items()}
    path = out / f"{cmd}.resolved.ini"
    with open(path, "w") as fh:
        cp.write(fh)
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_threshold(cfg, args, out: Path) -> int:
    eps = de_threshold(cfg["dv"], cfg["dc"], int(cfg["L"]), cfg["tol"])
    print(fmt(eps))
    (out / "threshold.txt").write_text(
        f"dv={cfg['dv']} dc={cfg['dc']} L={cfg['L']} tol={fmt(cfg['tol'])} eps_star={fmt(eps)}\n")
    return EXIT_OK


def cmd_estimate(cfg, args, out: Path) -> int:
    grid = parse_grid(cfg["eps_grid"])
    lengths = parse_ints(cfg["L"])
    plateau = PlateauConfig(tol=cfg["plateau_tol"])

    def progress(L, eps):
        log.info("estimated L=%d eps=%g", L, eps)

    table = build_scaling_params(
        cfg["dv"], cfg["dc"], grid, lengths, N=cfg["N"], n_trials=cfg["trials"],
        seed=args.seed, eps_star=cfg["eps_star"], nu_theta_epsilon=cfg["nu_theta_eps"],
        nu_theta_trials=cfg["nu_theta_trials"], plateau=plateau, progress=progress,
    )
    path = out / cfg["output"]
    table.save(path)
    print(f"eps_star {fmt(table.eps_star)}")
    print(f"nu {fmt(table.nu)}")
    print(f"theta {fmt(table.theta)}")
    print("L epsilon gamma_term/gamma_trunc check")
    for r in table.rows:
        ratio = r.gamma_term / r.gamma_trunc
        if math.isnan(ratio):
            verdict = "n/a (one ensemble unusable)"
        else:
            verdict = "ok" if 1.8 <= ratio <= 2.2 else "OUTSIDE[1.8,2.2]"
        print(f"{r.L} {fmt(r.epsilon)} {fmt(ratio)} {verdict}")
    sens = out / "plateau_sensitivity.csv"
    with open(sens, "w") as fh:
        fh.write("kind,L,epsilon,tol_factor,alpha,beta\n")
        for d in table.diagnostics:
            for key in ("tol_x0.5", "tol_x1", "tol_x2"):
                a, b = d[key]
                fh.write(f"{d['kind']},{d['L']},{fmt(d['epsilon'])},{key[5:]},{fmt(a)},{fmt(b)}\n")
    print(f"wrote {path} and {sens}")
    if "skipped" in table.meta:
        print(f"unusable grid points: {table.meta['skipped']}", file=sys.stderr)
        return EXIT_UNUSABLE
    return EXIT_OK


def _grid_rows(cfg) -> list[dict]:
    rows = []
    if cfg["grid"]:
        with open(cfg["grid"]) as fh:
            for rec in csv.DictReader(fh):
                rows.append(dict(epsilon=float(rec["epsilon"]), N=int(rec["N"]),
                                 L=int(rec["L"]), W=rec.get("W", "full") or "full"))
        return rows
    if cfg["eps"] is None:
        raise ConfigError("predict needs --grid or --eps")
    Ws = [w.strip() for w in str(cfg["W"]).split(",")]
    for eps in parse_grid(cfg["eps"]):
        for W in Ws:
            N = int(cfg["N"])
            if cfg["latency"] and W != "full":
                N = latency_N(cfg["latency"], int(W), cfg.get("dv", 5))
            rows.append(dict(epsilon=eps, N=N, L=int(cfg["L"]), W=W))
    return rows


def latency_N(latency: float, W: int, dv: int) -> int:
    """Component length N with N (W + dv - 1) closest to ``latency``."""
    return max(1, int(round(latency / (W + dv - 1))))


def _input(cfg, key: str, out: Path, default: str) -> Path:
    """Explicit input path, or the default file name inside the output directory."""
    return Path(cfg[key]) if cfg[key] else out / default


def cmd_predict(cfg, args, out: Path) -> int:
    table = ScalingParams.load(_input(cfg, "params", out, "scaling_params.txt"))
    cfg["dv"] = table.dv
    models = [m.strip() for m in cfg["models"].split(",")]
    rows_out = []
    sign_reports = []
    for g in _grid_rows(cfg):
        N = g["N"]
        step = table.dc // math.gcd(table.dv, table.dc)
        if N % step:
            N = max(step, step * round(N / step))
            log.warning("N rounded to %d so that dv*N/dc is an integer", N)
        W = None if str(g["W"]) == "full" else int(g["W"])
        # a finite window only has the window law; full BP takes the listed models
        for model in (["window"] if W is not None else [m for m in models if m != "window"]):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                pred = predict(table, g["epsilon"], N, g["L"], W, model)
            rows_out.append(prediction_row(g["epsilon"], N, g["L"], W, pred))
            if model == "refined" and pred.beta > pred.alpha:
                sign_reports.append(bler_sign_report(pred.alpha, pred.beta, pred.mu0, pred.s,
                                                     g["L"]))
    path = out / cfg["output"]
    with open(path, "w") as fh:
        fh.write(",".join(PREDICT_COLUMNS) + "\n")
        for r in rows_out:
            fh.write(",".join(fmt(r[c]) for c in PREDICT_COLUMNS) + "\n")
    if sign_reports:
        rep = out / "bler_sign_check.csv"
        keys = list(sign_reports[0])
        with open(rep, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in sign_reports:
                fh.write(",".join(fmt(r[k]) for k in keys) + "\n")
        ok = max(r["rel_gap_shipped"] for r in sign_reports)
        worst = max(r["rel_gap_alt_sign"] for r in sign_reports)
        print(f"block-rate sign check: shipped vs quadrature {ok:.3g}, "
              f"sign-flipped vs quadrature {worst:.3g} (max relative gap)")
    for r in rows_out:
        print(",".join(fmt(r[c]) for c in PREDICT_COLUMNS))
    return EXIT_OK


def cmd_simulate(cfg, args, out: Path) -> int:
    params = EnsembleParams(cfg["dv"], cfg["dc"], int(cfg["L"]), cfg["N"],
                            Kind.parse(cfg["kind"]))
    if cfg["decoder"] == "full":
        decoder = FULL_BP
    elif cfg["decoder"] == "window":
        decoder = WindowConfig(int(cfg["W"]), cfg["delay"], Accounting(cfg["accounting"]))
    else:
        raise ConfigError(f"unknown decoder {cfg['decoder']!r}")
    spec = ExperimentSpec(params, tuple(parse_grid(cfg["eps_grid"])), decoder,
                          max_frames=cfg["max_frames"], target_errors=cfg["target_errors"],
                          master_seed=args.seed, expurgate=cfg["expurgate"],
                          max_seconds=cfg["max_seconds"])

    def progress(eps, frames, errors):
        log.info("eps=%g frames=%d errors=%d", eps, frames, errors)

    stats = run_experiment(spec, threads=args.threads, progress=progress)
    path = out / cfg["output"]
    write_stats_csv(stats, path)
    write_manifest(stats, path.with_suffix(".manifest"))
    for p in stats:
        print(f"{fmt(p.epsilon)} frames={p.frames} fer={fmt(p.fer)} ber={fmt(p.ber)} "
              f"bler={fmt(p.bler)} stopped_by={p.stopped_by}")
    if stats.partial:
        print("run aborted by resource limit; partial results written", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


def cmd_compare(cfg, args, out: Path) -> int:
    sims = read_stats_csv(_input(cfg, "sim", out, "simulation.csv"))
    with open(_input(cfg, "pred", out, "predictions.csv")) as fh:
        preds = [r for r in csv.DictReader(fh) if r["model"] == cfg["model"]]
    metrics = [m for m in ("fer", "ber", "bler")
               if all(not math.isnan(float(p[m])) for p in preds)]
    report = compare(sims, preds, metrics=metrics)
    path = out / cfg["output"]
    report.write_csv(path)
    for r in report.rows:
        print(f"{fmt(r.epsilon)} {r.metric} sim={fmt(r.simulated)} pred={fmt(r.predicted)} "
              f"ratio={fmt(r.ratio)}{' FLAG' if r.flagged else ''}")
    print(report.summary())
    return EXIT_OK


COMMANDS = dict(threshold=cmd_threshold, estimate=cmd_estimate, predict=cmd_predict,
                simulate=cmd_simulate, compare=cmd_compare)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default 1)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", help="INI file with [common] and per-command sections")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="scldpc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("threshold", parents=[common], help="BP threshold by density evolution")
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("estimate", parents=[common], help="estimate the scaling-parameter table")
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--L", help="chain length(s), comma separated")
    p.add_argument("--eps-grid", dest="eps_grid", help="a,b,c or start:stop:step")
    p.add_argument("--N", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--nu-theta-eps", dest="nu_theta_eps", type=float)
    p.add_argument("--nu-theta-trials", dest="nu_theta_trials", type=int)
    p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
    p.add_argument("--eps-star", dest="eps_star", type=float)
    p.add_argument("--output")

    p = sub.add_parser("predict", parents=[common], help="evaluate the scaling laws")
    p.add_argument("--params", help="scaling-parameter table (default: OUT/scaling_params.txt)")
    p.add_argument("--grid", help="CSV with columns epsilon,N,L,W (W empty or 'full')")
    p.add_argument("--eps", help="epsilon grid when --grid is not given")
    p.add_argument("--N", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--W", help="window sizes, comma separated; 'full' for full BP")
    p.add_argument("--models", help="comma list of refined, baseline, window")
    p.add_argument("--latency", type=float,
                   help="pick N per window so that N (W + dv - 1) matches this value")
    p.add_argument("--output")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo error rates")
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--kind", choices=["terminated", "truncated"])
    p.add_argument("--eps-grid", dest="eps_grid")
    p.add_argument("--decoder", choices=["full", "window"])
    p.add_argument("--W", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--accounting", choices=["end", "finalization"])
    p.add_argument("--max-frames", dest="max_frames", type=int)
    p.add_argument("--target-errors", dest="target_errors", type=int)
    p.add_argument("--no-expurgate", dest="expurgate", action="store_false", default=None)
    p.add_argument("--max-seconds", dest="max_seconds", type=float)
    p.add_argument("--output")

    p = sub.add_parser("compare", parents=[common], help="simulation vs prediction report")
    p.add_argument("--sim", help="simulation CSV (default: OUT/simulation.csv)")
    p.add_argument("--pred", help="predictions CSV (default: OUT/predictions.csv)")
    p.add_argument("--model")
    p.add_argument("--output")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = resolve(args.cmd, args)
        write_resolved(out, args.cmd, cfg, args)
        return COMMANDS[args.cmd](cfg, args, out)
    except (ConfigError, ExtrapolationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnusableEstimate, IndeterminateDE) as exc:
        print(f"unusable estimate: {exc}", file=sys.stderr)
        return EXIT_UNUSABLE
    except MemoryError:
        print("resource abort: out of memory", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
