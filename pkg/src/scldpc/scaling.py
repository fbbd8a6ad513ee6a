"""Finite-length scaling laws for FER, BER and BLER.

The first hit time of the degree-one process is modelled as a shifted
exponential (one decoding wave) or a shifted Erlang-2 (two waves).  With
``u = (x - alpha) / mu0`` and ``xi = (beta - alpha) / mu0`` every law reduces
to regularized lower incomplete gamma functions ``P(k, xi)``, which are
evaluated without cancellation.  Each closed form has a quadrature
counterpart (``*_by_quadrature``) used as its oracle.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammainc, log_ndtr, ndtr

from .evolution import ScalingParams, alpha_lb_fraction

log = logging.getLogger(__name__)

_LOG_MAX = math.log(np.finfo(float).max)


class Mu0Saturated(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# mean first hit time


def _log_survival_integral(Z: float) -> float:
    """log of int_0^Z Phi(z) exp(z^2/2) dz."""
    if Z <= 0:
        return -math.inf
    if Z < 5:
        val, _ = integrate.quad(lambda z: ndtr(z) * math.exp(0.5 * z * z), 0.0, Z,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return math.log(val)
    # Factor out exp(Z^2/2); substitute u = Z - z so the integrand peaks at u = 0.
    def g(u):
        return math.exp(log_ndtr(Z - u) - 0.5 * u * (2.0 * Z - u))

    # Beyond u_max the integrand is below exp(-745).
    disc = Z * Z - 1490.0
    u_max = Z if disc <= 0 else Z - math.sqrt(disc)
    pts = [p for p in (1.0 / Z, 5.0 / Z, 20.0 / Z) if p < u_max]
    val, _ = integrate.quad(g, 0.0, u_max, points=pts or None, epsabs=0.0, epsrel=1e-13,
                            limit=400)
    return 0.5 * Z * Z + math.log(val)


def log_mu0(gamma, nu, theta, N, eps_star, epsilon) -> float:
    """Natural log of :func:`mu0`; finite even where mu0 itself overflows."""
    if gamma <= 0 or nu <= 0 or theta <= 0 or N <= 0:
        raise ValueError("gamma, nu, theta and N must be positive")
    if epsilon > eps_star:
        raise ValueError("epsilon must not exceed eps_star")
    Z = gamma * math.sqrt(N / nu) * (eps_star - epsilon)
    return 0.5 * math.log(2 * math.pi) - math.log(theta) + _log_survival_integral(Z)


def mu0(gamma, nu, theta, N, eps_star, epsilon) -> float:
    """Mean of the exponential first-hit-time law of the steady-state process.

    ``sqrt(2 pi)/theta * int_0^Z Phi(z) exp(z^2/2) dz`` with
    ``Z = gamma sqrt(N/nu) (eps_star - epsilon)``.  Values beyond the float
    range saturate to the largest float with a :class:`Mu0Saturated` warning.
    """
    lm = log_mu0(gamma, nu, theta, N, eps_star, epsilon)
    if lm > _LOG_MAX:
        warnings.warn(f"mu0 overflows (log mu0 = {lm:.6g}); saturated", Mu0Saturated,
                      stacklevel=2)
        return float(np.finfo(float).max)
    return math.exp(lm)


def _ratio(num, mu):
    """num/mu with the conventions 0/0 = 0 and x/0 = inf."""
    num = np.asarray(num, dtype=float)
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0, 0.0, num / mu)
    return r


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _check_order(alpha, beta):
    if np.any(np.asarray(beta) < np.asarray(alpha)):
        raise ValueError("beta < alpha")


# ---------------------------------------------------------------------------
# terminated chain: two waves, Erlang-2 first hit time


def fer_terminated(alpha, beta, mu):
    """Erlang-2 mass on [alpha, beta]: ``1 - (1 + xi) exp(-xi)``."""
    _check_order(alpha, beta)
    return _out(gammainc(2, _ratio(np.subtract(beta, alpha), mu)))


def ber_terminated(alpha, beta, mu, epsilon, L):
    """Mean of ``epsilon - x/L`` over the Erlang-2 law restricted to [alpha, beta]."""
    _check_order(alpha, beta)
    xi = _ratio(np.subtract(beta, alpha), mu)
    mu = np.asarray(mu, dtype=float)
    tail = np.where(xi == 0, 0.0, 2.0 * np.where(np.isinf(mu), 0.0, mu) * gammainc(3, xi))
    return _out(((epsilon * L - np.asarray(alpha)) * gammainc(2, xi) - tail) / L)


def _erlang2_first_moment(alpha, beta, mu):
    """int_alpha^beta (x - alpha) f2(x) dx = 2 mu P(3, xi)."""
    xi = _ratio(np.subtract(beta, alpha), mu)
    mu = np.asarray(mu, dtype=float)
    return np.where(xi == 0, 0.0, 2.0 * np.where(np.isinf(mu), 0.0, mu) * gammainc(3, xi))


def bler_terminated(alpha, beta, mu, s, L):
    """``P_f - (s/L) int_alpha^beta (x - alpha) f2(x) dx``."""
    _check_order(alpha, beta)
    if s is None:
        raise ValueError("wave speed s is required for the block error rate")
    return _out(gammainc(2, _ratio(np.subtract(beta, alpha), mu))
                - np.asarray(s) / L * _erlang2_first_moment(alpha, beta, mu))


def bler_terminated_alt_sign(alpha, beta, mu, s, L):
    """Variant whose bracket reads ``exp(-xi)(xi^2 + 2 xi + 2) + 2``.

    Kept only to quantify how far it is from the integral; not a predictor.
    """
    xi = _ratio(np.subtract(beta, alpha), mu)
    bracket = np.exp(-xi) * (xi**2 + 2 * xi + 2) + 2
    return _out(gammainc(2, xi) - np.asarray(s) * np.asarray(mu) / L * bracket)


def bler_sign_report(alpha, beta, mu, s, L) -> dict:
    """Compare the shipped BLER, its quadrature and the sign-flipped variant."""
    shipped = bler_terminated(alpha, beta, mu, s, L)
    quad = bler_by_quadrature(alpha, beta, mu, s, L, shape=2)
    alt = bler_terminated_alt_sign(alpha, beta, mu, s, L)
    xi = (beta - alpha) / mu
    return dict(
        alpha=alpha, beta=beta, mu0=mu, s=s, L=L, xi=xi,
        moment_closed=float(_erlang2_first_moment(alpha, beta, mu)),
        moment_quadrature=float(_moment_by_quadrature(alpha, beta, mu)),
        bler_shipped=shipped, bler_quadrature=quad, bler_alt_sign=alt,
        rel_gap_shipped=abs(shipped - quad) / max(abs(quad), 1e-300),
        rel_gap_alt_sign=abs(alt - quad) / max(abs(quad), 1e-300),
    )


def fer_baseline_terminated(alpha_lb, mu, epsilon, L):
    """Single-exponential law over [alpha_lb, epsilon*L] (comparison baseline)."""
    return fer_unterminated(alpha_lb, mu, epsilon, L)


# ---------------------------------------------------------------------------
# unterminated chain over L' positions: one wave, exponential first hit time


def fer_unterminated(alpha, mu, epsilon, Lp):
    omega = epsilon * np.asarray(Lp) - np.asarray(alpha)
    _check_order(alpha, epsilon * np.asarray(Lp))
    return _out(-np.expm1(-_ratio(omega, mu)))


def ber_unterminated(alpha, mu, epsilon, Lp):
    """``[omega P(1, xi) - mu P(2, xi)] / L'`` with ``omega = eps L' - alpha``."""
    Lp = np.asarray(Lp, dtype=float)
    omega = epsilon * Lp - np.asarray(alpha)
    _check_order(alpha, epsilon * Lp)
    xi = _ratio(omega, mu)
    mu = np.asarray(mu, dtype=float)
    tail = np.where(xi == 0, 0.0, np.where(np.isinf(mu), 0.0, mu) * gammainc(2, xi))
    return _out((omega * -np.expm1(-xi) - tail) / Lp)


def _floor_moment(omega, mu, s):
    """int_0^omega floor(y s) exp(-y/mu)/mu dy = sum_{i=1}^{K} (e^{-i a} - e^{-omega/mu})."""
    if omega <= 0 or s <= 0:
        return 0.0
    K = math.floor(omega * s)
    if K == 0:
        return 0.0
    if math.isinf(mu):
        return 0.0
    a = 1.0 / (s * mu)
    # sum_{i=1}^K e^{-ia} = e^{-a} (1 - e^{-Ka}) / (1 - e^{-a})
    geo = math.exp(-a) * math.expm1(-K * a) / math.expm1(-a)
    return geo - K * math.exp(-omega / mu)


def bler_unterminated(alpha, mu, s, epsilon, Lp):
    """Block error rate with whole blocks only: ``P_f - E[floor((x-alpha) s)] / L'``."""
    omega = epsilon * Lp - alpha
    _check_order(alpha, epsilon * Lp)
    if s is None:
        raise ValueError("wave speed s is required for the block error rate")
    return fer_unterminated(alpha, mu, epsilon, Lp) - _floor_moment(omega, mu, s) / Lp


def bler_unterminated_continuous(alpha, mu, s, epsilon, Lp):
    """Same without the floor: ``P_f - (s/L') int (x - alpha) f1(x) dx``."""
    omega = epsilon * Lp - alpha
    xi = 0.0 if omega == 0 else omega / mu
    moment = 0.0 if xi == 0 or math.isinf(mu) else mu * gammainc(2, xi)
    return fer_unterminated(alpha, mu, epsilon, Lp) - s * moment / Lp


# ---------------------------------------------------------------------------
# window decoding: phase 1 over L - W positions (one wave), phase 2 over W


def fer_window(pf_u_phase1, pf_t_window):
    return pf_u_phase1 + pf_t_window - pf_u_phase1 * pf_t_window


def mix_window(r_u_phase1, pf_u_phase1, r_t_window, r_u_window, W, L):
    """Bit or block rate of the two-phase model (weights ``1 - W/L`` and ``W/L``)."""
    w = W / L
    phase2 = r_t_window * (1.0 - pf_u_phase1) + r_u_window * pf_u_phase1
    return r_u_phase1 * (1.0 - w) + phase2 * w


ber_window = mix_window
bler_window = mix_window


# ---------------------------------------------------------------------------
# quadrature oracles


def _density(shape, alpha, mu):
    if shape == 1:
        return lambda x: math.exp(-(x - alpha) / mu) / mu
    return lambda x: (x - alpha) / mu**2 * math.exp(-(x - alpha) / mu)


def _quad(f, a, b):
    if b <= a:
        return 0.0
    val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=500)
    return val


def fer_by_quadrature(alpha, beta, mu, shape=2):
    return _quad(_density(shape, alpha, mu), alpha, beta)


def ber_by_quadrature(alpha, beta, mu, epsilon, L, shape=2):
    f = _density(shape, alpha, mu)
    return _quad(lambda x: (epsilon - x / L) * f(x), alpha, beta)


def _moment_by_quadrature(alpha, beta, mu, shape=2):
    f = _density(shape, alpha, mu)
    return _quad(lambda x: (x - alpha) * f(x), alpha, beta)


def bler_by_quadrature(alpha, beta, mu, s, L, shape=2, whole_blocks=False):
    """Quadrature of the BLER law; ``whole_blocks`` floors the cleared-block count."""
    f = _density(shape, alpha, mu)
    pf = _quad(f, alpha, beta)
    if not whole_blocks:
        return pf - s / L * _moment_by_quadrature(alpha, beta, mu, shape)
    # Integrate piecewise between the jumps of floor((x - alpha) s).
    K = math.floor((beta - alpha) * s)
    total = 0.0
    for i in range(1, K + 1):
        a = alpha + i / s
        b = min(alpha + (i + 1) / s, beta)
        total += i * _quad(f, a, b)
    return pf - total / L


# ---------------------------------------------------------------------------
# predictions from a parameter table


@dataclass(frozen=True)
class BaselineConstants:
    """Epsilon-independent constants of the single-exponential baseline law."""

    alpha_lb_per_L: float
    gamma: float
    nu: float
    theta: float


# Constants used for the (5, 10) baseline comparison.
BASELINE_5_10 = BaselineConstants(alpha_lb_per_L=0.0053, gamma=4.19, nu=2 * 0.424, theta=0.63)

# Margin below eps_star at which the baseline's gamma is read off.
BASELINE_MARGIN = 0.04


def derived_baseline(table: ScalingParams, L: int | None = None,
                     theta: float | None = None) -> BaselineConstants:
    """Baseline constants for an ensemble without published ones.

    ``alpha_lb`` is the fraction recovered by the uncoupled decoder at
    eps_star; ``gamma`` is the terminated value at ``eps_star - 0.04``
    (clipped to the table grid); ``nu`` is twice the truncated value and
    ``theta`` defaults to the truncated value, since a sum of two independent
    processes with a common decay rate decays at that rate.
    """
    L = table.chain_lengths[-1] if L is None else L
    grid = table.epsilons(table.nearest_length(L))
    eps_ref = float(np.clip(table.eps_star - BASELINE_MARGIN, grid[0], grid[-1]))
    return BaselineConstants(
        alpha_lb_per_L=alpha_lb_fraction(table.dv, table.dc, table.eps_star),
        gamma=table.lookup(eps_ref, L).gamma_term,
        nu=2.0 * table.nu,
        theta=table.theta if theta is None else theta,
    )


def baseline_for(table: ScalingParams) -> BaselineConstants:
    if (table.dv, table.dc) == (5, 10):
        return BASELINE_5_10
    return derived_baseline(table)


@dataclass
class RatePrediction:
    fer: float
    ber: float
    bler: float
    mu0: float
    alpha: float
    beta: float
    gamma: float
    s: float
    model: str
    extras: dict = field(default_factory=dict)


def _terminated_parts(table: ScalingParams, epsilon, N, L):
    row = table.lookup(epsilon, L)
    beta = min(row.beta_term, epsilon * L)
    alpha = row.alpha_term
    if beta < alpha:
        log.warning("empty steady state for L=%d at eps=%g (alpha=%g, beta=%g)",
                    L, epsilon, alpha, beta)
        beta = alpha
    m = mu0(row.gamma_trunc, table.nu, table.theta, N, table.eps_star, epsilon)
    return alpha, beta, m, row


def predict_terminated(table: ScalingParams, epsilon: float, N: int, L: int) -> RatePrediction:
    alpha, beta, m, row = _terminated_parts(table, epsilon, N, L)
    return RatePrediction(
        fer=fer_terminated(alpha, beta, m),
        ber=ber_terminated(alpha, beta, m, epsilon, L),
        bler=bler_terminated(alpha, beta, m, row.speed, L),
        mu0=m, alpha=alpha, beta=beta, gamma=row.gamma_trunc, s=row.speed, model="refined",
    )


def _unterminated_parts(table: ScalingParams, epsilon, N, Lp):
    row = table.lookup(epsilon, Lp)
    alpha = min(row.alpha_trunc, epsilon * Lp)
    m = mu0(row.gamma_trunc, table.nu, table.theta, N, table.eps_star, epsilon)
    return alpha, m, row


def predict_unterminated(table: ScalingParams, epsilon: float, N: int, Lp: int) -> RatePrediction:
    if Lp == 0:
        return RatePrediction(0.0, 0.0, 0.0, math.nan, math.nan, 0.0, math.nan, math.nan,
                              "unterminated")
    alpha, m, row = _unterminated_parts(table, epsilon, N, Lp)
    return RatePrediction(
        fer=fer_unterminated(alpha, m, epsilon, Lp),
        ber=ber_unterminated(alpha, m, epsilon, Lp),
        bler=bler_unterminated(alpha, m, row.speed, epsilon, Lp),
        mu0=m, alpha=alpha, beta=epsilon * Lp, gamma=row.gamma_trunc, s=row.speed,
        model="unterminated",
    )


def predict_window(table: ScalingParams, epsilon: float, N: int, L: int, W: int) -> RatePrediction:
    if not 1 <= W <= L:
        raise ValueError(f"window size {W} outside [1, {L}]")
    if W < 10:
        warnings.warn(f"W={W} may be too short for a decoding wave to form", RuntimeWarning,
                      stacklevel=2)
    ph1 = predict_unterminated(table, epsilon, N, L - W)
    term = predict_terminated(table, epsilon, N, W)
    untW = predict_unterminated(table, epsilon, N, W)
    return RatePrediction(
        fer=fer_window(ph1.fer, term.fer),
        ber=ber_window(ph1.ber, ph1.fer, term.ber, untW.ber, W, L),
        bler=bler_window(ph1.bler, ph1.fer, term.bler, untW.bler, W, L),
        mu0=term.mu0, alpha=term.alpha, beta=term.beta, gamma=term.gamma, s=term.s,
        model="window",
        extras=dict(phase1=ph1, terminated_W=term, unterminated_W=untW),
    )


def predict_baseline(table: ScalingParams, epsilon: float, N: int, L: int,
                     constants: BaselineConstants | None = None) -> RatePrediction:
    """Single-exponential law with epsilon-independent constants; BLER is not defined."""
    constants = constants or baseline_for(table)
    alpha = constants.alpha_lb_per_L * L
    m = mu0(constants.gamma, constants.nu, constants.theta, N, table.eps_star, epsilon)
    return RatePrediction(
        fer=fer_baseline_terminated(alpha, m, epsilon, L),
        ber=ber_unterminated(alpha, m, epsilon, L),
        bler=math.nan,
        mu0=m, alpha=alpha, beta=epsilon * L, gamma=constants.gamma, s=math.nan, model="baseline",
    )


def predict(table: ScalingParams, epsilon: float, N: int, L: int, W: int | None = None,
            model: str = "refined", baseline: BaselineConstants | None = None) -> RatePrediction:
    """Dispatch on ``model``; ``W`` selects window decoding for ``model='window'``."""
    if model == "refined":
        return predict_terminated(table, epsilon, N, L)
    if model == "window":
        if W is None:
            raise ValueError("window model needs W")
        return predict_window(table, epsilon, N, L, W)
    if model == "baseline":
        return predict_baseline(table, epsilon, N, L, baseline or baseline_for(table))
    raise ValueError(f"unknown model {model!r}")


PREDICT_COLUMNS = ["epsilon", "N", "L", "W", "fer", "ber", "bler", "mu0", "alpha", "beta",
                   "gamma", "s", "model"]


def prediction_row(epsilon, N, L, W, pred: RatePrediction) -> dict:
    return dict(epsilon=epsilon, N=N, L=L, W="" if W is None else W, fer=pred.fer, ber=pred.ber,
                bler=pred.bler, mu0=pred.mu0, alpha=pred.alpha, beta=pred.beta,
                gamma=pred.gamma, s=pred.s, model=pred.model)
