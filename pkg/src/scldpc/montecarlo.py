"""Monte-Carlo harness: error statistics with Wilson intervals and model comparison."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ._seeding import derive_seed
from .ensemble import EnsembleParams, sample_erasures, sample_graph
from .window import FULL_BP, FullBP, WindowConfig, WindowOutcome, run_frame, window_decode
from .peeling import Outcome, peel

Z95 = float(norm.ppf(0.975))


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class ExperimentSpec:
    params: EnsembleParams
    epsilons: tuple
    decoder: WindowConfig | FullBP = FULL_BP
    max_frames: int = 100_000
    target_errors: int | None = 200  # stop a point once this many frame errors are seen
    master_seed: int = 0
    expurgate: bool = True
    fixed_graph: bool = False  # debugging only: one graph per grid point
    max_seconds: float | None = None  # wall-clock budget for the whole run

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if not self.epsilons:
            raise ValueError("epsilon grid is empty")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if self.target_errors is not None and self.target_errors < 1:
            raise ValueError("target_errors must be >= 1")
        if isinstance(self.decoder, WindowConfig):
            self.decoder.validate(self.params)

    def describe(self) -> dict:
        p = self.params
        dec = "full" if isinstance(self.decoder, FullBP) else (
            f"window W={self.decoder.W} delay={self.decoder.delay} "
            f"accounting={self.decoder.accounting.value}")
        return dict(dv=p.dv, dc=p.dc, L=p.L, N=p.N, kind=p.kind.value,
                    epsilons=",".join(repr(e) for e in self.epsilons), decoder=dec,
                    max_frames=self.max_frames, target_errors=self.target_errors,
                    master_seed=self.master_seed, expurgate=self.expurgate,
                    fixed_graph=self.fixed_graph, max_seconds=self.max_seconds)


@dataclass
class PointStats:
    epsilon: float
    frames: int
    frame_errors: int
    bit_errors: int
    block_errors: int
    expurgated: int
    L: int
    N: int
    stopped_by: str = "frames"  # 'target', 'frames' or 'time'

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else math.nan

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.L * self.N) if self.frames else math.nan

    @property
    def bler(self) -> float:
        return self.block_errors / (self.frames * self.L) if self.frames else math.nan

    def interval(self, metric: str) -> tuple[float, float]:
        k, n = {
            "fer": (self.frame_errors, self.frames),
            "ber": (self.bit_errors, self.frames * self.L * self.N),
            "bler": (self.block_errors, self.frames * self.L),
        }[metric]
        return wilson_interval(k, n)


@dataclass
class ErrorStats:
    points: list[PointStats]
    spec: ExperimentSpec
    elapsed: float = 0.0
    partial: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _frame(spec: ExperimentSpec, eps: float, seed: int, graph=None) -> WindowOutcome:
    if graph is None:
        return run_frame(spec.params, eps, spec.decoder, seed)
    er = sample_erasures(graph.n_vns, eps, derive_seed(seed, 1))
    if isinstance(spec.decoder, FullBP):
        tr = peel(graph, er, derive_seed(seed, 2))
        return WindowOutcome.from_errors(graph, tr.residual,
                                         tr.outcome is Outcome.EXPURGATED_FAILURE)
    return window_decode(graph, er, spec.decoder, derive_seed(seed, 2))


def _chunk(spec, eps, point, start, stop, graph):
    out = np.zeros((stop - start, 4), dtype=np.int64)
    for j, t in enumerate(range(start, stop)):
        o = _frame(spec, eps, derive_seed(spec.master_seed, point, t), graph)
        if o.frame_error and o.expurgated and spec.expurgate:
            out[j] = (0, 0, 0, 1)
        else:
            out[j] = (int(o.frame_error), o.bit_errors, o.block_errors, int(o.expurgated))
    return out


def run_experiment(spec: ExperimentSpec, threads: int = 1, chunk: int = 64,
                   progress=None) -> ErrorStats:
    """Run every grid point until the frame cap or the error target is reached.

    Trials are merged in index order and the stopping rule is applied per
    trial, so results do not depend on ``threads``.
    """
    t0 = time.monotonic()
    points = []
    partial = False
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for pi, eps in enumerate(spec.epsilons):
            graph = (sample_graph(spec.params, derive_seed(spec.master_seed, pi, 0xC0DE))
                     if spec.fixed_graph else None)
            acc = np.zeros(4, dtype=np.int64)
            frames = 0
            stopped = "frames"
            while frames < spec.max_frames:
                if spec.max_seconds is not None and time.monotonic() - t0 > spec.max_seconds:
                    stopped, partial = "time", True
                    break
                width = chunk * max(threads, 1)
                stop = min(frames + width, spec.max_frames)
                bounds = [(s, min(s + chunk, stop)) for s in range(frames, stop, chunk)]
                if pool is None:
                    parts = [_chunk(spec, eps, pi, a, b, graph) for a, b in bounds]
                else:
                    parts = list(pool.map(lambda ab: _chunk(spec, eps, pi, ab[0], ab[1], graph),
                                          bounds))
                rows = np.concatenate(parts)
                if spec.target_errors is not None:
                    cum = acc[0] + np.cumsum(rows[:, 0])
                    hit = np.flatnonzero(cum >= spec.target_errors)
                    if hit.size:
                        rows = rows[: hit[0] + 1]
                        stopped = "target"
                acc += rows.sum(axis=0)
                frames += rows.shape[0]
                if progress:
                    progress(eps, frames, int(acc[0]))
                if stopped == "target":
                    break
            p = spec.params
            points.append(PointStats(eps, frames, int(acc[0]), int(acc[1]), int(acc[2]),
                                     int(acc[3]), p.L, p.N, stopped))
            if partial:
                break
    except KeyboardInterrupt:
        partial = True
    finally:
        if pool is not None:
            pool.shutdown()
    return ErrorStats(points, spec, time.monotonic() - t0, partial)


STATS_COLUMNS = ["epsilon", "frames", "fer", "fer_lo", "fer_hi", "ber", "ber_lo", "ber_hi",
                 "bler", "bler_lo", "bler_hi", "expurgated"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def write_stats_csv(stats: ErrorStats, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(STATS_COLUMNS) + "\n")
        for p in stats:
            vals = [p.epsilon, p.frames]
            for m in ("fer", "ber", "bler"):
                vals += [getattr(p, m), *p.interval(m)]
            vals.append(p.expurgated)
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def read_stats_csv(path: str | Path) -> list[dict]:
    import csv

    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_manifest(stats: ErrorStats, path: str | Path, extra: dict | None = None) -> None:
    from . import __version__

    info = dict(stats.spec.describe())
    info.update(version=__version__, elapsed_seconds=f"{stats.elapsed:.3f}",
                partial=stats.partial)
    info.update(extra or {})
    for p in stats:
        info[f"point.{p.epsilon!r}"] = (f"frames={p.frames} frame_errors={p.frame_errors} "
                                        f"stopped_by={p.stopped_by}")
    with open(path, "w") as fh:
        for k, v in info.items():
            fh.write(f"{k} = {v}\n")


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ReportRow:
    epsilon: float
    metric: str
    simulated: float
    lo: float
    hi: float
    predicted: float
    ratio: float  # predicted / simulated
    flagged: bool  # prediction outside [sim/2, 2 sim]


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def flagged(self) -> list[ReportRow]:
        return [r for r in self.rows if r.flagged]

    def summary(self) -> str:
        n = sum(not math.isnan(r.ratio) for r in self.rows)
        text = f"{n - len(self.flagged)}/{n} within a factor of 2; {len(self.flagged)} flagged"
        skipped = len(self.rows) - n
        return text + (f"; {skipped} without prediction" if skipped else "")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("epsilon,metric,simulated,lo,hi,predicted,ratio,flagged\n")
            for r in self.rows:
                fh.write(",".join([_fmt(r.epsilon), r.metric, _fmt(r.simulated), _fmt(r.lo),
                                   _fmt(r.hi), _fmt(r.predicted), _fmt(r.ratio),
                                   str(int(r.flagged))]) + "\n")


def compare(stats: Sequence[PointStats] | Sequence[dict], predictions: Sequence,
            metrics: Sequence[str] = ("fer", "ber", "bler"), tol: float = 1e-12) -> Report:
    """Pair simulated and predicted rates by epsilon.

    ``stats`` holds :class:`PointStats` or CSV rows; ``predictions`` holds
    ``(epsilon, RatePrediction)`` pairs or dicts with ``epsilon`` and metric keys.
    """
    def sim_items():
        for s in stats:
            if isinstance(s, PointStats):
                yield s.epsilon, {m: (getattr(s, m), *s.interval(m)) for m in metrics}
            else:
                yield s["epsilon"], {m: (s[m], s[f"{m}_lo"], s[f"{m}_hi"]) for m in metrics}

    preds = []
    for p in predictions:
        if isinstance(p, dict):
            preds.append((float(p["epsilon"]), {m: float(p[m]) for m in metrics}))
        else:
            eps, rp = p
            preds.append((float(eps), {m: getattr(rp, m) for m in metrics}))
    report = Report()
    for eps, sim in sim_items():
        match = [v for e, v in preds if abs(e - eps) <= tol]
        if not match:
            continue
        for m in metrics:
            value, lo, hi = sim[m]
            pred = match[0][m]
            if value > 0:
                ratio = pred / value
                flagged = not (value / 2 <= pred <= 2 * value)
            else:
                ratio = math.inf if pred > 0 else 1.0
                flagged = pred > 0
            if math.isnan(pred):
                ratio, flagged = math.nan, False
            report.rows.append(ReportRow(eps, m, value, lo, hi, pred, ratio, flagged))
    return report
