"""Scaling-parameter estimation.

* ``eps_star`` from density evolution of the terminated chain;
* ``alpha``, ``beta``, ``gamma`` and the wave speed ``s`` from Monte-Carlo mean
  trajectories of the degree-one process;
* ``nu`` and ``theta`` from its steady-state variance and autocovariance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.ndimage import uniform_filter1d

from ._kernels import de_sc_kernel, peel_kernel
from ._seeding import derive_seed, make_rng, split_seed
from .ensemble import EnsembleParams, Kind, sample_erasures, sample_graph

log = logging.getLogger(__name__)

TABLE_VERSION = 1


class UnusableEstimate(RuntimeError):
    """Raised when a Monte-Carlo estimate cannot be formed at the requested point."""


class IndeterminateDE(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# density evolution


def de_converges(epsilon, dv, dc, L, max_iter=5_000_000, tol_zero=1e-12, tol_fix=1e-15):
    """True if DE of the terminated chain drives all erasure messages to zero.

    Returns None when the iteration cap is hit before either outcome.
    """
    status, _, _ = de_sc_kernel(float(epsilon), dv, dc, L, max_iter, tol_zero, tol_fix)
    return None if status < 0 else bool(status)


def de_threshold(dv: int, dc: int, L: int, tol: float = 1e-4, max_iter: int = 5_000_000) -> float:
    """BP threshold of the terminated (dv, dc, L) chain by bisection."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    EnsembleParams(dv, dc, L, dc)  # validates degrees
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok = de_converges(mid, dv, dc, L, max_iter)
        if ok is None:
            raise IndeterminateDE(f"DE did not settle within {max_iter} iterations at eps={mid}")
        if ok:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def uncoupled_threshold(dv: int, dc: int, tol: float = 1e-7) -> float:
    """BP threshold of the uncoupled (dv, dc)-regular ensemble."""

    def decodes(eps):
        x = eps
        for _ in range(200_000):
            nxt = eps * (1.0 - (1.0 - x) ** (dc - 1)) ** (dv - 1)
            if nxt < 1e-12:
                return True
            if abs(nxt - x) < 1e-15:
                return False
            x = nxt
        return False

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if decodes(mid) else (lo, mid)
    return 0.5 * (lo + hi)


def alpha_lb_fraction(dv: int, dc: int, epsilon: float, n_iter: int = 1_000_000) -> float:
    """Fraction of bits an uncoupled (dv, dc) peeling decoder recovers at ``epsilon``.

    Times L this lower-bounds the start of the steady state of the coupled
    chain at its threshold.
    """
    x = epsilon
    for _ in range(n_iter):
        nxt = epsilon * (1.0 - (1.0 - x) ** (dc - 1)) ** (dv - 1)
        if abs(nxt - x) < 1e-16:
            break
        x = nxt
    y = 1.0 - (1.0 - x) ** (dc - 1)
    return epsilon * (1.0 - y**dv)


# ---------------------------------------------------------------------------
# Monte-Carlo trajectories


@dataclass
class TrialRecord:
    r1: np.ndarray  # degree-one counts on the grid, up to the halt
    iterations: int
    success: bool
    vn_counts: np.ndarray | None


def simulate_trials(
    params: EnsembleParams,
    epsilon: float,
    n_trials: int,
    seed: int = 0,
    stride: int | None = None,
    record_vn_counts: bool = False,
) -> Iterable[TrialRecord]:
    """Yield one peeling record per trial (fresh graph and erasures each time)."""
    stride = stride or max(1, params.N // 100)
    for t in range(n_trials):
        g_seed, e_seed, d_seed = split_seed(derive_seed(seed, t), 3)
        graph = sample_graph(params, g_seed)
        er = sample_erasures(graph.n_vns, epsilon, e_seed)
        uniforms = make_rng(d_seed).random(max(er.n_erased, 1))
        r1, it, _, _, vc = peel_kernel(
            graph.vn_cns, er.erased, graph.n_cns, params.M, params.N,
            params.n_cn_positions, uniforms, stride, False, record_vn_counts,
        )
        n_grid = it // stride + 1  # samples sitting on the stride grid
        yield TrialRecord(
            r1[:n_grid],
            int(it),
            it == er.n_erased,
            vc[:n_grid] if record_vn_counts else None,
        )


@dataclass
class MeanTrajectory:
    params: EnsembleParams
    epsilon: float
    tau_grid: np.ndarray
    r1_bar: np.ndarray
    v_bar: np.ndarray  # (L, grid) mean unresolved VNs per position, divided by N
    decoded_blocks: np.ndarray  # mean number of positions without unresolved VNs
    n_alive: np.ndarray
    n_trials: int
    N_used: int
    n_success: int

    @property
    def dtau(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0])

    def index(self, tau: float) -> int:
        return int(np.clip(round(tau / self.dtau), 0, len(self.tau_grid) - 1))


def estimate_mean_trajectory(
    params: EnsembleParams,
    epsilon: float,
    N: int | None = None,
    n_trials: int = 100,
    seed: int = 0,
    stride: int | None = None,
    min_alive_fraction: float = 0.5,
) -> MeanTrajectory:
    """Average ``r1`` and per-position VN counts over trials on a common grid.

    Trials that stall drop out after their halt; decoded trials keep
    contributing zeros.  Fails with :class:`UnusableEstimate` if fewer than
    ``min_alive_fraction`` of the trials are still running at ``tau = eps*L/2``.
    """
    if N is not None:
        params = params.with_(N=N)
    N = params.N
    stride = stride or max(1, N // 100)
    n_max = params.n_vns // stride + 2
    L = params.L
    r1_sum = np.zeros(n_max)
    v_sum = np.zeros((n_max, L))
    blocks_sum = np.zeros(n_max)
    alive = np.zeros(n_max, dtype=np.int64)
    longest = 0
    n_success = 0
    for rec in simulate_trials(params, epsilon, n_trials, seed, stride, record_vn_counts=True):
        n = len(rec.r1)
        end = n_max if rec.success else n
        r1_sum[:n] += rec.r1
        v_sum[:n] += rec.vn_counts
        blocks_sum[:n] += np.count_nonzero(rec.vn_counts == 0, axis=1)
        if rec.success:
            blocks_sum[n:] += L
            n_success += 1
        alive[:end] += 1
        longest = max(longest, n)
    n_grid = longest + 1  # one extra point holds the terminal zero
    alive = alive[:n_grid]
    denom = np.maximum(alive, 1)
    r1_bar = r1_sum[:n_grid] / denom / N
    r1_bar[-1] = 0.0
    v_bar = (v_sum[:n_grid] / denom[:, None] / N).T
    blocks = blocks_sum[:n_grid] / denom
    tau = np.arange(n_grid) * stride / N
    traj = MeanTrajectory(
        params, float(epsilon), tau, r1_bar, v_bar, blocks, alive, n_trials, N, n_success
    )
    mid = traj.index(epsilon * L / 2)
    if alive[mid] < min_alive_fraction * n_trials:
        raise UnusableEstimate(
            f"only {alive[mid]}/{n_trials} trials reach tau={epsilon * L / 2:.3g} "
            f"({params.kind.value}, eps={epsilon})"
        )
    return traj


# ---------------------------------------------------------------------------
# plateau extraction


@dataclass(frozen=True)
class PlateauConfig:
    tol: float = 0.02  # relative half-width of the steady-state band
    smooth_tau: float = 1.0  # moving-average width applied before banding
    max_gap_tau: float = 1.5  # excursions shorter than this do not split the plateau
    min_length_tau: float = 0.5


def steady_state(traj: MeanTrajectory, cfg: PlateauConfig = PlateauConfig()):
    """Return (alpha, beta, plateau) of a mean trajectory."""
    eL = traj.epsilon * traj.params.L
    tau = traj.tau_grid
    central = (tau >= eL / 3) & (tau <= 2 * eL / 3)
    if not central.any():
        raise UnusableEstimate("trajectory does not cover the central third of [0, eps*L]")
    plateau = float(np.median(traj.r1_bar[central]))
    if plateau <= 0:
        raise UnusableEstimate("non-positive plateau")
    width = max(1, int(round(cfg.smooth_tau / traj.dtau)))
    smooth = uniform_filter1d(traj.r1_bar, width, mode="nearest")
    inside = np.abs(smooth - plateau) <= cfg.tol * plateau
    inside = _fill_gaps(inside, int(round(cfg.max_gap_tau / traj.dtau)))
    start, stop = _longest_run(inside)
    if stop - start < 1 or tau[stop - 1] - tau[start] < cfg.min_length_tau:
        raise UnusableEstimate(
            f"no steady state of length >= {cfg.min_length_tau} "
            f"({traj.params.kind.value}, L={traj.params.L}, eps={traj.epsilon})"
        )
    return float(tau[start]), float(tau[stop - 1]), plateau


def _fill_gaps(mask: np.ndarray, max_gap: int) -> np.ndarray:
    if max_gap <= 0:
        return mask
    out = mask.copy()
    idx = np.flatnonzero(mask)
    if idx.size < 2:
        return out
    gaps = np.diff(idx)
    for i in np.flatnonzero((gaps > 1) & (gaps <= max_gap + 1)):
        out[idx[i] : idx[i + 1]] = True
    return out


def _longest_run(mask: np.ndarray) -> tuple[int, int]:
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    if edges.size == 0:
        return 0, 0
    starts, stops = edges[0::2], edges[1::2]
    k = int(np.argmax(stops - starts))
    return int(starts[k]), int(stops[k])


def extract_alpha_beta_gamma(
    traj: MeanTrajectory,
    epsilon: float,
    eps_star: float,
    plateau_tol: float = 0.02,
    cfg: PlateauConfig | None = None,
) -> tuple[float, float, float]:
    cfg = replace(cfg or PlateauConfig(), tol=plateau_tol)
    alpha, beta, plateau = steady_state(traj, cfg)
    if eps_star <= epsilon:
        raise ValueError("epsilon must lie below eps_star")
    return alpha, beta, plateau / (eps_star - epsilon)


def estimate_speed(traj: MeanTrajectory, alpha: float, beta: float, N: int | None = None) -> float:
    """Blocks cleared per N iterations: N over the mean VN count mid-chain, mid-steady-state."""
    if not beta > alpha:
        raise UnusableEstimate("empty steady state")
    v = traj.v_bar[traj.params.L // 2, traj.index(0.5 * (alpha + beta))]
    if v < 1e-3:
        raise UnusableEstimate("mid-chain position already decoded at the probe time")
    return float(1.0 / v)


def wavefront_speed(traj: MeanTrajectory, alpha: float, beta: float) -> float:
    """Slope of the mean number of fully decoded positions over [alpha, beta]."""
    sel = (traj.tau_grid >= alpha) & (traj.tau_grid <= beta)
    slope, _ = np.polyfit(traj.tau_grid[sel], traj.decoded_blocks[sel], 1)
    return float(slope)


# ---------------------------------------------------------------------------
# first-hit times


def first_hit_times(
    params: EnsembleParams,
    epsilon: float,
    n_failures: int,
    seed: int = 0,
    max_trials: int | None = None,
) -> np.ndarray:
    """Normalized stall times ``tau0`` of failed decodings, in trial order."""
    max_trials = max_trials or 100 * n_failures
    out = []
    for rec in simulate_trials(params, epsilon, max_trials, seed, stride=params.N):
        if not rec.success:
            out.append(rec.iterations / params.N)
            if len(out) == n_failures:
                break
    return np.asarray(out)


@dataclass
class ExponentialFit:
    mean: float
    ks_statistic: float
    p_value: float
    n: int


def _truncated_exp_rate(y: np.ndarray, width: float) -> float:
    m = y.mean()
    if m >= width / 2:
        return 1e-12 / width  # flat or increasing density: the rate goes to zero
    def score(lam):
        return 1 / lam - width / np.expm1(min(lam * width, 700.0)) - m
    return optimize.brentq(score, 1e-12 / width, 1e4 / width)


def _truncated_exp_ks(y: np.ndarray, width: float) -> tuple[float, float]:
    lam = _truncated_exp_rate(y, width)
    norm = -np.expm1(-lam * width)
    d = stats.kstest(y, lambda q: -np.expm1(-lam * q) / norm).statistic
    return float(d), lam


def exponential_fit_test(samples, start: float, stop: float, n_boot: int = 200,
                         seed: int = 0) -> ExponentialFit:
    """Kolmogorov-Smirnov test of a shifted exponential law on ``[start, stop]``.

    Samples are restricted to the window and shifted by ``start``; the rate is
    fitted by maximum likelihood for the window-truncated law and the p-value
    comes from a parametric bootstrap, which accounts for the fitted rate.
    """
    x = np.asarray(samples, dtype=float)
    y = x[(x >= start) & (x <= stop)] - start
    width = stop - start
    if y.size < 20:
        raise ValueError(f"only {y.size} samples inside [{start}, {stop}]")
    d, lam = _truncated_exp_ks(y, width)
    rng = make_rng(seed)
    norm = -np.expm1(-lam * width)
    exceed = 0
    for _ in range(n_boot):
        z = -np.log1p(-rng.random(y.size) * norm) / lam
        exceed += _truncated_exp_ks(z, width)[0] >= d
    return ExponentialFit(1 / lam, d, (exceed + 1) / (n_boot + 1), int(y.size))


# ---------------------------------------------------------------------------
# variance and correlation-decay constants


@dataclass
class NuTheta:
    nu: float
    theta: float
    lags: np.ndarray = field(repr=False)
    autocov: np.ndarray = field(repr=False)  # N * Cov(r1(tau), r1(tau+lag)), averaged over tau
    n_fit: int = 0
    n_trials_used: int = 0
    steady_state: tuple[float, float] = (0.0, 0.0)


def estimate_nu_theta(
    params: EnsembleParams,
    epsilon: float,
    N: int = 10_000,
    n_trials: int = 200,
    seed: int = 0,
    lag_fraction: float = math.exp(-1),
    central_fraction: float = 0.5,
    max_lag_tau: float = 3.0,
    plateau: PlateauConfig = PlateauConfig(),
) -> NuTheta:
    """Steady-state variance and correlation decay of r1 on a truncated chain.

    ``nu = N * Var(r1)`` pooled over the central part of the steady state.
    ``theta`` is minus the slope of a least-squares line through the log
    autocovariance over lags where it stays above ``lag_fraction`` of its
    lag-0 value.
    """
    params = params.with_(N=N)
    if params.kind is not Kind.TRUNCATED:
        raise ValueError("nu and theta are estimated on the truncated ensemble")
    stride = max(1, N // 100)
    rows = [rec.r1 for rec in simulate_trials(params, epsilon, n_trials, seed, stride)]
    traj = _trajectory_from_rows(params, epsilon, rows, stride)
    alpha, beta, _ = steady_state(traj, plateau)
    dtau = stride / N
    half = 0.5 * (1.0 - central_fraction) * (beta - alpha)
    a = int(round((alpha + half) / dtau))
    b = int(round((beta - half) / dtau))
    # Lags stop at a quarter of the steady state so every product stays inside it.
    max_lag = int(round(min(max_lag_tau, 0.25 * (beta - alpha)) / dtau))
    need = b + max_lag
    X = np.array([r[:need] for r in rows if len(r) >= need], dtype=float) / N
    if X.shape[0] < 10:
        raise UnusableEstimate(f"only {X.shape[0]} trials cover the steady state")
    D = X - X.mean(axis=0)
    K = X.shape[0]
    idx = np.arange(a, b)
    cov = np.array([np.mean(np.einsum("ki,ki->i", D[:, idx], D[:, idx + d]) / (K - 1))
                    for d in range(max_lag)])
    if cov[0] <= 0 or cov[1] <= 0:
        raise UnusableEstimate(f"non-positive autocovariance at small lags: {cov[:2]}")
    below = np.flatnonzero(cov < lag_fraction * cov[0])
    n_fit = int(below[0]) if below.size else max_lag
    if n_fit < 3:
        raise UnusableEstimate("autocovariance decays within two lags; refine the grid")
    lags = np.arange(max_lag) * dtau
    slope, _ = np.polyfit(lags[:n_fit], np.log(cov[:n_fit]), 1)
    return NuTheta(
        nu=float(N * cov[0]),
        theta=float(-slope),
        lags=lags,
        autocov=N * cov,
        n_fit=n_fit,
        n_trials_used=K,
        steady_state=(alpha, beta),
    )


def _trajectory_from_rows(params, epsilon, rows, stride) -> MeanTrajectory:
    n = max(len(r) for r in rows) + 1
    s = np.zeros(n)
    alive = np.zeros(n, dtype=np.int64)
    for r in rows:
        s[: len(r)] += r
        alive[: len(r)] += 1
    r1_bar = s / np.maximum(alive, 1) / params.N
    r1_bar[-1] = 0.0
    tau = np.arange(n) * stride / params.N
    empty = np.zeros((params.L, n))
    return MeanTrajectory(params, float(epsilon), tau, r1_bar, empty, np.zeros(n), alive,
                          len(rows), params.N, 0)


# ---------------------------------------------------------------------------
# parameter table


@dataclass(frozen=True)
class ScalingRow:
    L: int
    epsilon: float
    alpha_term: float
    beta_term: float
    gamma_term: float
    alpha_trunc: float
    beta_trunc: float
    gamma_trunc: float
    speed: float


COLUMNS = [f for f in ScalingRow.__dataclass_fields__]
VALUE_COLUMNS = COLUMNS[2:]


class ExtrapolationError(ValueError):
    pass


@dataclass
class ScalingParams:
    dv: int
    dc: int
    eps_star: float
    nu: float
    theta: float
    rows: list[ScalingRow]
    meta: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list, repr=False, compare=False)
    _warned: set = field(default_factory=set, repr=False, compare=False)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.L, r.epsilon))
        if not 0 < self.eps_star < 1:
            raise ValueError("eps_star must lie in (0, 1)")
        if self.nu <= 0 or self.theta <= 0:
            raise ValueError("nu and theta must be positive")
        for L in self.chain_lengths:
            eps = [r.epsilon for r in self.rows if r.L == L]
            if np.any(np.diff(eps) <= 0):
                raise ValueError(f"epsilon grid for L={L} is not strictly increasing")
        for r in self.rows:
            for a, b in ((r.alpha_term, r.beta_term), (r.alpha_trunc, r.beta_trunc)):
                if np.isfinite(a) and np.isfinite(b) and not a < b:
                    raise ValueError(f"alpha >= beta in row L={r.L} eps={r.epsilon}")

    @property
    def chain_lengths(self) -> list[int]:
        return sorted({r.L for r in self.rows})

    def epsilons(self, L: int) -> list[float]:
        return [r.epsilon for r in self.rows if r.L == L]

    def nearest_length(self, L: int) -> int:
        lengths = self.chain_lengths
        if not lengths:
            raise ValueError("empty parameter table")
        best = min(lengths, key=lambda x: (abs(x - L), -x))
        if best != L and L not in self._warned:
            self._warned.add(L)
            log.warning("no parameters for chain length %d; using L=%d", L, best)
        return best

    def _interpolate(self, epsilon: float, L: int) -> ScalingRow:
        rows = [r for r in self.rows if r.L == L]
        grid = np.array([r.epsilon for r in rows])
        tol = 1e-12
        if epsilon < grid[0] - tol or epsilon > grid[-1] + tol:
            raise ExtrapolationError(
                f"epsilon={epsilon} outside the estimated grid [{grid[0]}, {grid[-1]}] for L={L}"
            )
        j = min(int(np.searchsorted(grid, epsilon - tol)), len(rows) - 1)
        if abs(grid[j] - epsilon) <= tol:
            return rows[j]
        lo, hi = rows[j - 1], rows[j]
        w = (epsilon - lo.epsilon) / (hi.epsilon - lo.epsilon)
        vals = {c: (1 - w) * getattr(lo, c) + w * getattr(hi, c) for c in VALUE_COLUMNS}
        return ScalingRow(L=L, epsilon=float(epsilon), **vals)

    def lookup(self, epsilon: float, L: int | None = None) -> ScalingRow:
        """Row at ``epsilon`` for chain length ``L``, linearly interpolated.

        Entries that could not be estimated at this chain length are taken
        from the nearest chain length that has them.
        """
        L = self.chain_lengths[-1] if L is None else self.nearest_length(L)
        row = self._interpolate(epsilon, L)
        missing = [c for c in VALUE_COLUMNS if not np.isfinite(getattr(row, c))]
        if not missing:
            return row
        fill = {}
        for other in sorted(self.chain_lengths, key=lambda x: (abs(x - L), -x)):
            if other == L:
                continue
            try:
                alt = self._interpolate(epsilon, other)
            except ExtrapolationError:
                continue
            for c in missing:
                if c not in fill and np.isfinite(getattr(alt, c)):
                    fill[c] = getattr(alt, c)
            if len(fill) == len(missing):
                break
        key = (L, tuple(sorted(fill)))
        if fill and key not in self._warned:
            self._warned.add(key)
            log.warning("L=%d: %s taken from other chain lengths", L, ",".join(sorted(fill)))
        return replace(row, **fill)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(
                f"#scaling-params v{TABLE_VERSION} dv={self.dv} dc={self.dc} "
                f"columns={','.join(COLUMNS)}\n"
            )
            for r in self.rows:
                vals = asdict(r)
                fh.write(" ".join(str(vals["L"]) if c == "L" else repr(float(vals[c]))
                                  for c in COLUMNS) + "\n")
            extra = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
            fh.write(f"#footer nu={self.nu!r} theta={self.theta!r} eps_star={self.eps_star!r}"
                     + (f" {extra}" if extra else "") + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScalingParams":
        lines = Path(path).read_text().splitlines()
        head = _kv(lines[0])
        if not lines[0].startswith("#scaling-params") or head.get("version") != f"v{TABLE_VERSION}":
            raise ValueError(f"{path}: not a v{TABLE_VERSION} scaling-parameter table")
        cols = head["columns"].split(",")
        foot = _kv(lines[-1])
        rows = []
        for line in lines[1:-1]:
            if not line.strip():
                continue
            vals = dict(zip(cols, line.split()))
            rows.append(ScalingRow(**{c: int(vals[c]) if c == "L" else float(vals[c])
                                      for c in COLUMNS}))
        meta = {k: v for k, v in foot.items() if k not in ("nu", "theta", "eps_star", "version")}
        return cls(int(head["dv"]), int(head["dc"]), float(foot["eps_star"]),
                   float(foot["nu"]), float(foot["theta"]), rows, meta)


def _kv(line: str) -> dict:
    tokens = line.split()
    out = {"version": tokens[1]} if len(tokens) > 1 and tokens[1].startswith("v") else {}
    for t in tokens:
        if "=" in t:
            k, v = t.split("=", 1)
            out[k] = v
    return out


def estimate_row(
    dv: int,
    dc: int,
    L: int,
    epsilon: float,
    eps_star: float,
    N: int = 10_000,
    n_trials: int = 100,
    seed: int = 0,
    plateau: PlateauConfig = PlateauConfig(),
    diagnostics: list | None = None,
) -> ScalingRow:
    """Estimate one table row from terminated and truncated mean trajectories.

    Entries of an ensemble without a detectable steady state are NaN; the row
    is rejected only if neither ensemble has one.  When ``diagnostics`` is
    given, steady-state boundaries at half and double the band tolerance are
    appended to it.
    """
    gap = eps_star - epsilon
    nan = math.nan
    out = {}
    errors = []
    for kind, tag in ((Kind.TERMINATED, "term"), (Kind.TRUNCATED, "trunc")):
        try:
            traj = estimate_mean_trajectory(EnsembleParams(dv, dc, L, N, kind), epsilon,
                                            n_trials=n_trials,
                                            seed=derive_seed(seed, 1 if tag == "term" else 2))
            a, b, p = steady_state(traj, plateau)
            out[tag] = (a, b, p / gap)
            if tag == "term":
                out["speed"] = estimate_speed(traj, a, b)
            if diagnostics is not None:
                diagnostics.append(_sensitivity(traj, plateau, tag))
        except UnusableEstimate as exc:
            errors.append(str(exc))
            out[tag] = (nan, nan, nan)
            out.setdefault("speed", nan)
    if len(errors) == 2:
        raise UnusableEstimate("; ".join(errors))
    for e in errors:
        log.warning("L=%d eps=%g: %s", L, epsilon, e)
    return ScalingRow(L, float(epsilon), *out["term"], *out["trunc"], out["speed"])


def _sensitivity(traj: MeanTrajectory, plateau: PlateauConfig, tag: str) -> dict:
    res = dict(kind=tag, L=traj.params.L, epsilon=traj.epsilon)
    for f in (0.5, 1.0, 2.0):
        try:
            a, b, _ = steady_state(traj, replace(plateau, tol=plateau.tol * f))
        except UnusableEstimate:
            a = b = math.nan
        res[f"tol_x{f:g}"] = (a, b)
    return res


def build_scaling_params(
    dv: int,
    dc: int,
    eps_grid: Sequence[float],
    chain_lengths: Sequence[int] = (50,),
    N: int = 10_000,
    n_trials: int = 100,
    seed: int = 0,
    eps_star: float | None = None,
    nu_theta_epsilon: float | None = None,
    nu_theta_trials: int = 200,
    nu_theta: tuple[float, float] | None = None,
    plateau: PlateauConfig = PlateauConfig(),
    progress=None,
) -> ScalingParams:
    """Run every estimator and assemble the parameter table.

    Rows whose steady state cannot be detected are skipped with a warning.
    ``nu`` and ``theta`` are treated as independent of epsilon and estimated
    once, on the longest truncated chain.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ValueError("empty epsilon grid")
    if np.any(np.diff(eps_grid) <= 0):
        raise ValueError("epsilon grid must be strictly increasing")
    if eps_star is None:
        eps_star = de_threshold(dv, dc, max(chain_lengths))
    if eps_grid[-1] >= eps_star:
        raise ValueError(f"epsilon grid must stay below eps_star={eps_star}")
    rows = []
    skipped = []
    diagnostics = []
    for L in chain_lengths:
        for i, eps in enumerate(eps_grid):
            try:
                rows.append(estimate_row(dv, dc, L, eps, eps_star, N, n_trials,
                                         derive_seed(seed, L, i), plateau, diagnostics))
            except UnusableEstimate as exc:
                log.warning("skipping L=%d eps=%g: %s", L, eps, exc)
                skipped.append(f"{L}:{eps}")
            if progress:
                progress(L, eps)
    if not rows:
        raise UnusableEstimate("no grid point produced a usable steady state")
    if nu_theta is None:
        nt_eps = nu_theta_epsilon if nu_theta_epsilon is not None else eps_grid[-1]
        est = estimate_nu_theta(EnsembleParams(dv, dc, max(chain_lengths), N, Kind.TRUNCATED),
                                nt_eps, N=N, n_trials=nu_theta_trials, seed=derive_seed(seed, 99))
        nu_theta = (est.nu, est.theta)
    else:
        nt_eps = nu_theta_epsilon
    meta = dict(N=N, trials=n_trials, nu_theta_epsilon=nt_eps, seed=seed)
    if skipped:
        meta["skipped"] = ";".join(skipped)
    table = ScalingParams(dv, dc, eps_star, nu_theta[0], nu_theta[1], rows, meta)
    table.diagnostics = diagnostics
    return table
