"""Privacy accounting for composed, Poisson-subsampled Gaussian mechanisms.

Routes to the privacy profile:

* RDP, either from the closed-form bound ``rho(alpha) = I * 2 q^2 alpha / sigma^2``
  ("rdp") or from the exact moments of the subsampled Gaussian ("rdp-exact"),
  followed by the optimal RDP-to-(eps, delta) conversion;
* privacy-loss distribution (PLD): the dominating pair is discretised on an
  evenly spaced loss grid ("connect the dots", which keeps the estimate
  pessimistic) and raised to the ``I``-th power with one FFT over a window
  sized by Chernoff tail bounds;
* the exact Gaussian formula when there is no subsampling.

Trade-off curves and the membership-inference advantage are derived from the
profile.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import fft, signal, special

from . import kernels
from .errors import DomainError, PrecisionError

ADJACENCIES = ("add", "remove", "both-max")
BACKENDS = ("rdp", "rdp-exact", "pld", "gaussian-exact")


def _default_orders() -> np.ndarray:
    frac = 1.0 + np.arange(1, 100) / 10.0
    ints = np.arange(2, 257, dtype=np.float64)
    return np.unique(np.concatenate([frac, ints, [512.0, 1024.0]]))


DEFAULT_ORDERS = _default_orders()


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class SubsampledGaussian:
    """``steps``-fold composition of a Poisson-subsampled Gaussian mechanism.

    ``noise_multiplier`` is the noise standard deviation; ``sensitivity`` the
    l2 sensitivity it is measured against. Only the ratio of the two enters
    the privacy analysis.
    """

    sample_rate: float
    noise_multiplier: float
    steps: int = 1
    sensitivity: float = 1.0

    def __post_init__(self):
        q, s = self.sample_rate, self.noise_multiplier
        if not (math.isfinite(q) and 0.0 <= q <= 1.0):
            raise DomainError(f"sample_rate must lie in [0, 1], got {q!r}")
        if not (math.isfinite(s) and s > 0.0):
            raise DomainError(f"noise_multiplier must be positive and finite, got {s!r}")
        if not (math.isfinite(self.sensitivity) and self.sensitivity > 0.0):
            raise DomainError(f"sensitivity must be positive and finite, got {self.sensitivity!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def effective_noise(self) -> float:
        """Noise standard deviation per unit sensitivity."""
        return self.noise_multiplier / self.sensitivity


@dataclass(frozen=True, eq=False)
class RdpCurve:
    orders: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        orders = np.asarray(self.orders, dtype=np.float64)
        rho = np.asarray(self.rho, dtype=np.float64)
        if orders.shape != rho.shape or orders.ndim != 1:
            raise DomainError("orders and rho must be 1-d arrays of equal length")
        if orders.size and (np.any(orders <= 1.0) or np.any(np.diff(orders) <= 0)):
            raise DomainError("orders must be strictly increasing and > 1")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise DomainError("rho must be finite and non-negative")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True, eq=False)
class PrivacyProfile:
    """Sampled privacy profile ``eps -> delta(eps)``."""

    eps_grid: np.ndarray
    delta: np.ndarray
    adjacency: str = "both-max"

    def __post_init__(self):
        eps = np.asarray(self.eps_grid, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=np.float64)
        if eps.ndim != 1 or eps.shape != delta.shape or eps.size == 0:
            raise DomainError("eps_grid and delta must be non-empty 1-d arrays of equal length")
        if np.any(eps < 0) or np.any(np.diff(eps) < 0):
            raise DomainError("eps_grid must be non-negative and non-decreasing")
        if np.any(delta < 0) or np.any(delta > 1) or not np.all(np.isfinite(delta)):
            raise DomainError("delta values must lie in [0, 1]")
        if self.adjacency not in ADJACENCIES:
            raise DomainError(f"adjacency must be one of {ADJACENCIES}")
        object.__setattr__(self, "eps_grid", eps)
        object.__setattr__(self, "delta", delta)

    def delta_at(self, eps: float) -> float:
        """Delta at a grid point; raises if ``eps`` is not on the grid."""
        hit = np.flatnonzero(np.isclose(self.eps_grid, eps, rtol=0.0, atol=1e-12))
        if hit.size == 0:
            raise DomainError(f"eps={eps} is not on the profile grid; re-evaluate the profile there")
        return float(self.delta[hit[0]])


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """Sampled trade-off function ``alpha (FPR) -> f(alpha) (min FNR)``."""

    alpha_grid: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha_grid, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        if a.ndim != 1 or a.shape != f.shape or a.size < 2:
            raise DomainError("alpha_grid and f must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] > 1:
            raise DomainError("alpha_grid must be increasing within [0, 1]")
        if np.any(f < -1e-12) or np.any(f > 1 + 1e-12) or not np.all(np.isfinite(f)):
            raise DomainError("f values must lie in [0, 1]")
        object.__setattr__(self, "alpha_grid", a)
        object.__setattr__(self, "f", np.clip(f, 0.0, 1.0))

    def __call__(self, alpha):
        """Linear interpolation, extended by 0 beyond alpha = 1."""
        alpha = np.asarray(alpha, dtype=np.float64)
        out = np.interp(alpha, self.alpha_grid, self.f)
        return np.where(alpha >= 1.0, 0.0, out)

    def advantage(self) -> float:
        """max over the grid of ``1 - alpha - f(alpha)``."""
        return float(np.max(1.0 - self.alpha_grid - self.f))


class RdpConversion(NamedTuple):
    delta: float
    order: float


# --------------------------------------------------------------------------
# closed forms


def gaussian_delta(sensitivity: float, sigma: float, eps: float) -> float:
    """Exact delta(eps) of the Gaussian mechanism.

    ``Phi(D/(2 s) - eps s / D) - e^eps Phi(-D/(2 s) - eps s / D)``, evaluated
    as ``Phi(a) * (1 - exp(eps + log Phi(b) - log Phi(a)))`` so tiny deltas
    keep their relative precision.
    """
    for name, v in (("sensitivity", sensitivity), ("sigma", sigma)):
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v!r}")
    if not (eps >= 0 and math.isfinite(eps)):
        raise DomainError(f"eps must be finite and non-negative, got {eps!r}")
    a = sensitivity / (2.0 * sigma) - eps * sigma / sensitivity
    b = -sensitivity / (2.0 * sigma) - eps * sigma / sensitivity
    log_pa = special.log_ndtr(a)
    log_pb = special.log_ndtr(b)
    delta = math.exp(log_pa) * -math.expm1(eps + log_pb - log_pa)
    return min(max(delta, 0.0), 1.0)


def gaussian_tradeoff(mu: float, alpha):
    """Trade-off function of the mu-Gaussian pair N(0,1) vs N(mu,1)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return special.ndtr(special.ndtri(1.0 - alpha) - mu)


# --------------------------------------------------------------------------
# RDP route


def rdp_subsampled(mech: SubsampledGaussian, orders: Sequence[float] | None = None) -> RdpCurve:
    """RDP curve from the bound ``rho(alpha) = I * 2 q^2 alpha / sigma^2``."""
    orders = DEFAULT_ORDERS if orders is None else np.asarray(orders, dtype=np.float64)
    if np.any(orders <= 1.0):
        raise DomainError("RDP orders must be > 1")
    s = mech.effective_noise
    rho = mech.steps * 2.0 * mech.sample_rate**2 * orders / s**2
    return RdpCurve(orders, rho)


@functools.lru_cache(maxsize=8)
def _log_factorials(n: int) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n + 1)))])


def _log_moment_int(q: float, s: float, orders: np.ndarray) -> np.ndarray:
    """log E_Q[(dP/dQ)^a] for integer orders via the binomial expansion."""
    out = np.empty(orders.size)
    table = _log_factorials(int(orders.max()))
    # small orders share one matrix, the few large ones go alone
    small = orders <= 256
    for sel in ([np.flatnonzero(small)] + [[n] for n in np.flatnonzero(~small)]):
        if len(sel) == 0:
            continue
        ai = orders[sel].astype(np.int64)[:, None]
        k = np.arange(int(ai.max()) + 1)[None, :]
        gap = np.clip(ai - k, 0, None)
        terms = (table[ai] - table[k] - table[gap]
                 + k * math.log(q) + gap * math.log1p(-q) + k * (k - 1) / (2.0 * s * s))
        out[sel] = special.logsumexp(np.where(k <= ai, terms, -np.inf), axis=1)
    return out


def _log_moment_frac(q: float, s: float, orders: np.ndarray) -> np.ndarray:
    """Same moment for fractional orders: the integral split at the point where
    both mixture terms are equal, each half expanded as a convergent series.

    Orders near 1 need long series, so each order gets its own length.
    """
    z0 = s * s * math.log(1.0 / q - 1.0) + 0.5
    log_q, log_keep = math.log(q), math.log1p(-q)
    out = np.empty(orders.size)
    todo = np.arange(orders.size)
    width = 32
    while todo.size:
        a = orders[todo][:, None]
        i = np.arange(width)[None, :]
        coef = special.binom(a, i)
        with np.errstate(divide="ignore"):
            log_coef = np.log(np.abs(coef))
        j = a - i
        log_s0 = (log_coef + i * log_q + j * log_keep
                  + (i * i - i) / (2 * s * s) + special.log_ndtr((z0 - i) / s))
        log_s1 = (log_coef + j * log_q + i * log_keep
                  + (j * j - j) / (2 * s * s) + special.log_ndtr((j - z0) / s))
        # the moment is >= 1, so an absolute cutoff on the last term suffices
        done = (np.maximum(log_s0[:, -1], log_s1[:, -1]) < -36.0) | (width >= 8192)
        sign = np.sign(coef[done])
        m0 = np.max(log_s0[done], axis=1, keepdims=True)
        m1 = np.max(log_s1[done], axis=1, keepdims=True)
        a0 = np.sum(sign * np.exp(log_s0[done] - m0), axis=1)
        a1 = np.sum(sign * np.exp(log_s1[done] - m1), axis=1)
        out[todo[done]] = np.logaddexp(m0[:, 0] + np.log(np.maximum(a0, 1e-300)),
                                       m1[:, 0] + np.log(np.maximum(a1, 1e-300)))
        todo = todo[~done]
        width *= 2
    return out


@functools.lru_cache(maxsize=4096)
def _exact_rdp_per_step(q: float, s: float, orders: tuple) -> np.ndarray:
    orders = np.asarray(orders)
    if q == 1.0:
        return orders / (2.0 * s * s)
    is_int = orders == np.round(orders)
    out = np.empty(orders.size)
    if np.any(is_int):
        out[is_int] = _log_moment_int(q, s, orders[is_int])
    if np.any(~is_int):
        out[~is_int] = _log_moment_frac(q, s, orders[~is_int])
    return np.maximum(out, 0.0) / (orders - 1.0)


def rdp_subsampled_exact(mech: SubsampledGaussian, orders: Sequence[float] | None = None) -> RdpCurve:
    """Tight RDP of the composed Poisson-subsampled Gaussian (remove direction)."""
    orders = DEFAULT_ORDERS if orders is None else np.asarray(orders, dtype=np.float64)
    if np.any(orders <= 1.0):
        raise DomainError("RDP orders must be > 1")
    if mech.sample_rate == 0.0:
        return RdpCurve(orders, np.zeros(orders.size))
    rho = _exact_rdp_per_step(mech.sample_rate, mech.effective_noise, tuple(orders.tolist()))
    return RdpCurve(orders, np.minimum(mech.steps * rho, 1e300))


def _log_conversion_constant(orders: np.ndarray) -> np.ndarray:
    # log[(1 - 1/a)^a / (a - 1)]
    return orders * np.log1p(-1.0 / orders) - np.log(orders - 1.0)


def rdp_to_delta(curve: RdpCurve, eps: float) -> RdpConversion:
    """Optimal conversion ``min_a exp((a-1)(rho(a)-eps)) (1-1/a)^a / (a-1)``."""
    if curve.orders.size == 0:
        raise DomainError("empty RDP order grid")
    a = curve.orders
    log_delta = (a - 1.0) * (curve.rho - eps) + _log_conversion_constant(a)
    i = int(np.argmin(log_delta))
    delta = math.exp(min(float(log_delta[i]), 0.0))
    return RdpConversion(min(max(delta, 0.0), 1.0), float(a[i]))


# --------------------------------------------------------------------------
# PLD route


@dataclass(frozen=True)
class PldConfig:
    """Discretisation of the privacy-loss distribution.

    ``spacing`` is the loss-grid step, ``tail_mass`` the probability mass that
    may be truncated from each tail (truncated upper mass is moved to an atom
    at +inf, lower mass rounded up, so the result stays an upper bound).
    """

    spacing: float = 1e-3
    tail_mass: float = 1e-18
    adjacency: str = "both-max"
    max_bins: int = 4_000_000

    def __post_init__(self):
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise DomainError("PLD grid spacing must be positive")
        if not (0 < self.tail_mass < 1e-6):
            raise DomainError("tail_mass must lie in (0, 1e-6)")
        if self.adjacency not in ADJACENCIES:
            raise DomainError(f"adjacency must be one of {ADJACENCIES}")


DEFAULT_PLD = PldConfig()


@dataclass(frozen=True, eq=False)
class PrivacyLossDistribution:
    """Discrete PLD on the grid ``(offset + k) * spacing`` plus an atom at +inf."""

    offset: int
    pmf: np.ndarray
    inf_mass: float
    spacing: float
    tail_mass: float = field(default=DEFAULT_PLD.tail_mass)

    @property
    def losses(self) -> np.ndarray:
        return (self.offset + np.arange(self.pmf.size)) * self.spacing

    def delta(self, eps) -> np.ndarray:
        """Hockey-stick divergence ``E[(1 - e^(eps - L))_+]`` at each eps."""
        eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
        out = kernels.hockey_stick(self.losses, self.pmf, self.inf_mass, eps)
        return np.clip(out, 0.0, 1.0)

    def compose(self, other: "PrivacyLossDistribution") -> "PrivacyLossDistribution":
        if not math.isclose(self.spacing, other.spacing, rel_tol=1e-12):
            raise DomainError("cannot compose PLDs on different grids")
        pmf = signal.fftconvolve(self.pmf, other.pmf)
        inf_mass = 1.0 - (1.0 - self.inf_mass) * (1.0 - other.inf_mass)
        return _truncated(self.offset + other.offset, pmf, inf_mass, self.spacing, self.tail_mass)

    def self_compose(self, times: int) -> "PrivacyLossDistribution":
        """``times``-fold composition with itself.

        One FFT is raised to the ``times``-th power on a cyclic window whose
        ends are Chernoff bounds on the composed loss; the bounded upper-tail
        mass moves to the +inf atom so the result stays pessimistic.
        """
        if times < 1:
            raise DomainError("composition count must be >= 1")
        if times == 1:
            return self
        h = self.spacing
        total = float(self.pmf.sum())
        lo, hi, upper_tail = _chernoff_window(self.losses, self.pmf, times, self.tail_mass)
        k_lo = max(math.floor(lo / h), times * self.offset)
        k_hi = min(math.ceil(hi / h), times * (self.offset + self.pmf.size - 1))
        n = fft.next_fast_len(k_hi - k_lo + 1, real=True)
        wrapped = np.bincount(np.arange(self.pmf.size) % n, weights=self.pmf, minlength=n)
        spectrum = fft.rfft(wrapped)
        # rescale before the power so the spectrum does not underflow
        res = fft.irfft((spectrum / total) ** times, n) * total ** times
        res = np.roll(res, -((k_lo - times * self.offset) % n))[: k_hi - k_lo + 1]
        inf_mass = 1.0 - (1.0 - self.inf_mass) ** times + upper_tail
        return _truncated(k_lo, res, inf_mass, h, self.tail_mass)


def _chernoff_window(losses, pmf, times, tail_mass):
    """Loss interval holding all but ``tail_mass`` per tail of the composed PLD.

    Any exponent gives a valid bound, so a coarse grid of exponents is enough.
    Returns (lo, hi, bound on the mass above hi).
    """
    lams = np.geomspace(1e-2, 1e2, 40)
    log_tau = math.log(tail_mass)
    keep = pmf > 0
    x, w = losses[keep], pmf[keep]
    x_hi, x_lo = x.max(), x.min()
    with np.errstate(divide="ignore"):
        up = times * (lams * x_hi + np.log(np.exp(np.outer(lams, x - x_hi)) @ w))
        down = times * (-lams * x_lo + np.log(np.exp(np.outer(-lams, x - x_lo)) @ w))
    hi = float(np.min((up - log_tau) / lams))
    lo = float(np.max((log_tau - down) / lams))
    return lo, hi, tail_mass


def _truncated(offset, pmf, inf_mass, spacing, tail_mass):
    pmf = np.where(pmf > 0.0, pmf, 0.0)
    upper = np.cumsum(pmf[::-1])[::-1]
    # keep bins whose upper tail (inclusive) still carries more than tail_mass
    keep_hi = int(np.searchsorted(-upper, -tail_mass, side="left"))
    if keep_hi < pmf.size:
        inf_mass = inf_mass + float(upper[keep_hi])
    pmf = pmf[:keep_hi]
    lower = np.cumsum(pmf)
    drop_lo = int(np.searchsorted(lower, tail_mass, side="right"))
    drop_lo = min(drop_lo, max(pmf.size - 1, 0))
    if drop_lo > 0:
        moved = float(lower[drop_lo - 1])
        pmf = pmf[drop_lo:].copy()
        pmf[0] += moved
        offset += drop_lo
    if pmf.size == 0:
        pmf = np.zeros(1)
    return PrivacyLossDistribution(int(offset), pmf, min(inf_mass, 1.0), spacing, tail_mass)


def _log_gauss_mass(lo, hi):
    """log P(lo < Z <= hi) for standard normal Z, elementwise and stable."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64))
    out = np.full(lo.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = hi <= 0
        right = lo >= 0
        mid = ~(left | right)
        lh, ll = special.log_ndtr(hi[left]), special.log_ndtr(lo[left])
        out[left] = lh + np.log1p(-np.exp(ll - lh))
        rl, rh = special.log_ndtr(-lo[right]), special.log_ndtr(-hi[right])
        out[right] = rl + np.log1p(-np.exp(rh - rl))
        out[mid] = np.log1p(-(special.ndtr(lo[mid]) + special.ndtr(-hi[mid])))
    out[~(hi > lo)] = -np.inf
    return out


def _log_mixture_mass(lo, hi, comps, s):
    """log of sum_w w * P(lo < Y <= hi), Y ~ N(mean, s^2), for (w, mean) in comps."""
    acc = None
    for w, mean in comps:
        if w <= 0:
            continue
        term = math.log(w) + _log_gauss_mass((lo - mean) / s, (hi - mean) / s)
        acc = term if acc is None else np.logaddexp(acc, term)
    return acc


def _loss_of_y(y, q, s):
    """Privacy loss log dP/dQ at output y, P = (1-q)N(0,s^2) + qN(1,s^2), Q = N(0,s^2)."""
    log_keep = math.log1p(-q) if q < 1 else -np.inf
    return np.logaddexp(log_keep, math.log(q) + (2.0 * np.asarray(y) - 1.0) / (2.0 * s * s))


def _y_of_loss(loss, q, s):
    """Inverse of :func:`_loss_of_y`; -inf where the loss is unattainable from below."""
    loss = np.asarray(loss, dtype=np.float64)
    out = np.full(loss.shape, -np.inf)
    floor = math.log1p(-q) if q < 1 else -np.inf
    ok = loss > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = loss[ok] + np.log1p(-(1.0 - q) * np.exp(-loss[ok])) - math.log(q)
    out[ok] = s * s * inner + 0.5
    return out


def _single_step_pld(q: float, s: float, direction: str, config: PldConfig) -> PrivacyLossDistribution:
    h, tau = config.spacing, config.tail_mass
    z_tau = float(special.ndtri(tau))  # negative
    mix_p = ((1.0 - q, 0.0), (q, 1.0))
    mix_q = ((1.0, 0.0),)
    if direction == "remove":
        lo_loss = float(_loss_of_y(s * z_tau, q, s))
        hi_loss = float(_loss_of_y(1.0 - s * z_tau, q, s))
        num, den = mix_p, mix_q
    else:
        lo_loss = -float(_loss_of_y(-s * z_tau, q, s))
        hi_loss = -float(_loss_of_y(s * z_tau, q, s))
        num, den = mix_q, mix_p
    k0 = math.floor(lo_loss / h)
    k1 = max(math.ceil(hi_loss / h), k0 + 1)
    if k1 - k0 + 1 > config.max_bins:
        raise PrecisionError(
            f"single-step loss range [{lo_loss:.3g}, {hi_loss:.3g}] needs {k1 - k0 + 1} bins "
            f"at spacing {h}; increase spacing or max_bins"
        )
    grid = np.arange(k0, k1 + 1) * h
    # y-interval of each loss interval (grid[i], grid[i+1]], plus the two open tails
    if direction == "remove":
        y = _y_of_loss(grid, q, s)
        lo_y, hi_y = y[:-1], y[1:]
        below = (-np.inf, y[0])
        above = (y[-1], np.inf)
    else:
        y = _y_of_loss(-grid, q, s)
        lo_y, hi_y = y[1:], y[:-1]
        below = (y[0], np.inf)
        above = (-np.inf, y[-1])
    log_n = _log_mixture_mass(lo_y, hi_y, num, s)
    log_d = _log_mixture_mass(lo_y, hi_y, den, s)

    # connect-the-dots split of each interval's mass between its endpoints
    r = math.exp(h)
    with np.errstate(invalid="ignore", over="ignore"):
        t = np.exp(grid[:-1] + log_d - log_n)
    t = np.clip(np.nan_to_num(t, nan=1.0), 1.0 / r, 1.0)
    n_mass = np.exp(log_n)
    right = n_mass * r * (1.0 - t) / (r - 1.0)
    left = n_mass - right
    pmf = np.zeros(grid.size)
    pmf[:-1] += left
    pmf[1:] += right

    log_below = _log_mixture_mass(np.array([below[0]]), np.array([below[1]]), num, s)[0]
    pmf[0] += math.exp(log_below)
    log_above_n = _log_mixture_mass(np.array([above[0]]), np.array([above[1]]), num, s)[0]
    log_above_d = _log_mixture_mass(np.array([above[0]]), np.array([above[1]]), den, s)[0]
    above_n = math.exp(log_above_n)
    kept = min(above_n, math.exp(grid[-1] + log_above_d)) if above_n > 0 else 0.0
    pmf[-1] += kept
    inf_mass = max(above_n - kept, 0.0)
    return PrivacyLossDistribution(int(k0), pmf, inf_mass, h, tau)


@functools.lru_cache(maxsize=128)
def _composed_pld(q: float, s: float, steps: int, direction: str, config: PldConfig):
    single = _single_step_pld(q, s, direction, config)
    return single.self_compose(steps)


def composed_pld(mech: SubsampledGaussian, direction: str = "remove",
                 config: PldConfig = DEFAULT_PLD) -> PrivacyLossDistribution | None:
    """PLD of the composed mechanism for one adjacency direction (None if q = 0)."""
    if direction not in ("add", "remove"):
        raise DomainError("direction must be 'add' or 'remove'")
    if mech.sample_rate == 0.0:
        return None
    return _composed_pld(mech.sample_rate, mech.effective_noise, mech.steps, direction, config)


def _directions(adjacency: str, q: float):
    if adjacency == "both-max":
        # for q = 1 the pair is symmetric and both directions coincide
        return ("remove",) if q == 1.0 else ("remove", "add")
    return (adjacency,)


def pld_delta(mech: SubsampledGaussian, eps, config: PldConfig = DEFAULT_PLD) -> np.ndarray:
    """delta(eps) from the PLD route for the configured adjacency."""
    eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
    if mech.sample_rate == 0.0:
        return np.zeros(eps.shape)
    out = np.zeros(eps.shape)
    for direction in _directions(config.adjacency, mech.sample_rate):
        out = np.maximum(out, composed_pld(mech, direction, config).delta(eps))
    return out


def certified_floor(mech: SubsampledGaussian, config: PldConfig = DEFAULT_PLD) -> float:
    """Smallest delta the PLD route can certify (mass parked at +inf by truncation)."""
    if mech.sample_rate == 0.0:
        return 0.0
    return max(composed_pld(mech, d, config).inf_mass
               for d in _directions(config.adjacency, mech.sample_rate))


def pld_profile(mech: SubsampledGaussian, eps_grid, config: PldConfig = DEFAULT_PLD,
                delta_floor: float | None = None) -> PrivacyProfile:
    """Privacy profile of ``mech`` on ``eps_grid`` via PLD composition.

    If ``delta_floor`` is given and the truncation mass exceeds it, a
    :class:`PrecisionError` names the achievable floor.
    """
    eps = np.asarray(eps_grid, dtype=np.float64)
    if eps.ndim != 1 or eps.size == 0:
        raise DomainError("eps_grid must be a non-empty 1-d sequence")
    if delta_floor is not None:
        floor = certified_floor(mech, config)
        if floor > delta_floor:
            raise PrecisionError(
                f"configuration can only certify delta >= {floor:.3e}, requested {delta_floor:.3e}",
                floor=floor,
            )
    delta = pld_delta(mech, eps, config)
    # enforce monotonicity by raising earlier values (stays an upper bound)
    order = np.argsort(eps, kind="stable")
    sorted_delta = np.maximum.accumulate(delta[order][::-1])[::-1]
    delta[order] = sorted_delta
    return PrivacyProfile(eps, np.clip(delta, 0.0, 1.0), config.adjacency)


# --------------------------------------------------------------------------
# trade-off curves and advantage


DEFAULT_ALPHA = np.linspace(0.0, 1.0, 1001)


def profile_to_tradeoff(profile: PrivacyProfile, alpha_grid=None) -> TradeoffCurve:
    """Tightest trade-off curve implied by the sampled profile.

    ``f(a) = sup_eps max(0, 1 - delta(eps) - e^eps a, e^-eps (1 - delta(eps) - a))``.
    """
    alpha = DEFAULT_ALPHA if alpha_grid is None else np.asarray(alpha_grid, dtype=np.float64)
    f = kernels.tradeoff_envelope(profile.eps_grid, profile.delta, alpha)
    return TradeoffCurve(alpha, np.minimum(f, 1.0 - alpha))


def advantage(profile: PrivacyProfile) -> float:
    """Membership-inference advantage, equal to delta(0)."""
    if not np.any(profile.eps_grid == 0.0):
        raise DomainError("profile has no eps = 0 point; re-evaluate the profile at eps = 0")
    return float(profile.delta[np.flatnonzero(profile.eps_grid == 0.0)[0]])


def mechanism_advantage(mech: SubsampledGaussian, config: PldConfig = DEFAULT_PLD) -> float:
    """Advantage of ``mech`` via the PLD route."""
    return float(pld_delta(mech, [0.0], config)[0])


def default_eps_grid(upper: float = 40.0, fine: float = 0.02) -> np.ndarray:
    """Profile grid used for trade-off curves: fine near zero, geometric beyond."""
    head = np.arange(0.0, min(upper, 10.0) + 1e-12, fine)
    if upper <= 10.0:
        return head
    tail = np.geomspace(10.0, upper, 60)[1:]
    return np.concatenate([head, tail])


def mechanism_tradeoff(mech: SubsampledGaussian, alpha_grid=None, eps_grid=None,
                       config: PldConfig = DEFAULT_PLD) -> TradeoffCurve:
    eps = default_eps_grid() if eps_grid is None else eps_grid
    return profile_to_tradeoff(pld_profile(mech, eps, config), alpha_grid)


# --------------------------------------------------------------------------
# backend dispatch used by calibration


def delta_for(mech: SubsampledGaussian, eps: float, backend: str = "rdp-exact",
              orders=None, config: PldConfig = DEFAULT_PLD) -> float:
    """delta(eps) of ``mech`` under the named accountant backend.

    Every backend is capped by the probability that the target is sampled at
    least once, ``1 - (1 - q)^I``. Outputs only differ on that event, so the
    cap holds for any eps and makes tiny sample rates certifiable at any noise.
    """
    if backend not in BACKENDS:
        raise DomainError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if mech.sample_rate == 0.0:
        return 0.0
    if backend == "gaussian-exact" and mech.sample_rate != 1.0:
        raise DomainError("gaussian-exact backend requires sample_rate 1 (no subsampling)")
    ever_sampled = -math.expm1(mech.steps * math.log1p(-mech.sample_rate)) \
        if mech.sample_rate < 1.0 else 1.0
    if backend == "rdp":
        delta = rdp_to_delta(rdp_subsampled(mech, orders), eps).delta
    elif backend == "rdp-exact":
        delta = rdp_to_delta(rdp_subsampled_exact(mech, orders), eps).delta
    elif backend == "pld":
        try:
            delta = float(pld_delta(mech, [eps], config)[0])
        except PrecisionError:
            # too little noise to discretise; 1 is still a valid upper bound
            delta = 1.0
    else:
        delta = gaussian_delta(mech.sensitivity, mech.noise_multiplier / math.sqrt(mech.steps), eps)
    return min(delta, ever_sampled)
