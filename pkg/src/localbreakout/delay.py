"""Per-path success probabilities and the core-network delay model.

Core-network delay is a mixture: with weight ``alpha`` a Gaussian router
processing delay, otherwise that Gaussian plus an exponential traffic
delay (an exponentially modified Gaussian, EMG).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import binom

from .params import InvalidParams, SystemParams, check_state

# below this negative-time mass the t >= 0 renormalisation is skipped
NEGATIVE_MASS_CUTOFF = 1e-9


@dataclass(frozen=True)
class DelayModel:
    alpha: float = 0.5
    exp_rate_per_ms: float = 0.05
    gauss_mean_ms: float = 30.0
    gauss_std_ms: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParams(f"alpha={self.alpha} not in [0, 1]")
        if not self.exp_rate_per_ms > 0:
            raise InvalidParams("exp_rate_per_ms must be positive")
        if not self.gauss_mean_ms > 0:
            raise InvalidParams("gauss_mean_ms must be positive")
        if not self.gauss_std_ms > 0:
            raise InvalidParams("gauss_std_ms must be positive")

    @property
    def mean_ms(self) -> float:
        """Mean of the untruncated mixture."""
        return self.gauss_mean_ms + (1.0 - self.alpha) / self.exp_rate_per_ms

    @property
    def negative_mass_corrected(self) -> bool:
        return ndtr(-self.gauss_mean_ms / self.gauss_std_ms) > NEGATIVE_MASS_CUTOFF

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DelayModel":
        return cls(**data)


@dataclass(frozen=True)
class PathReward:
    r_bac: float
    r_cn: float


def p_bac(params: SystemParams, q_len: int) -> float:
    """Probability that a breakout packet meets its deadline.

    The packet needs ``q_len + 1`` service completions (the queue ahead of
    it plus itself) within ``deadline_slots`` slots.
    """
    q_len = check_state(params, q_len)
    return p_bac_curve(params)[q_len]


def p_bac_curve(params: SystemParams) -> np.ndarray:
    """:func:`p_bac` for every queue length 0..buffer_size."""
    k = np.arange(params.n_states)
    return np.clip(binom.sf(k, params.deadline_slots, params.q), 0.0, 1.0)


def _mixture_cdf(model: DelayModel, t: np.ndarray) -> np.ndarray:
    mu, sigma, lam = model.gauss_mean_ms, model.gauss_std_ms, model.exp_rate_per_ms
    z = (t - mu) / sigma
    gauss = ndtr(z)
    # exp(lam^2 sigma^2 / 2 - lam (t - mu)) * Phi(z - lam sigma), in log space
    log_tail = 0.5 * (lam * sigma) ** 2 - lam * (t - mu) + log_ndtr(z - lam * sigma)
    emg = gauss - np.exp(log_tail)
    return model.alpha * gauss + (1.0 - model.alpha) * emg


def cn_delay_cdf(model: DelayModel, t_ms):
    """CDF of the core-network delay; accepts a scalar or an array."""
    t = np.asarray(t_ms, dtype=float)
    out = _mixture_cdf(model, t)
    if model.negative_mass_corrected:
        below = _mixture_cdf(model, np.asarray(0.0))
        out = (out - below) / (1.0 - below)
        out = np.where(t < 0, 0.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def cn_delay_pdf(model: DelayModel, t_ms):
    """Density matching :func:`cn_delay_cdf` (closed form)."""
    t = np.asarray(t_ms, dtype=float)
    mu, sigma, lam = model.gauss_mean_ms, model.gauss_std_ms, model.exp_rate_per_ms
    z = (t - mu) / sigma
    gauss = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
    emg = lam * np.exp(0.5 * (lam * sigma) ** 2 - lam * (t - mu) + log_ndtr(z - lam * sigma))
    out = model.alpha * gauss + (1.0 - model.alpha) * emg
    if model.negative_mass_corrected:
        below = _mixture_cdf(model, np.asarray(0.0))
        out = np.where(t < 0, 0.0, out / (1.0 - below))
    return float(out) if out.ndim == 0 else out


@numba.njit(cache=True)
def draw_delay(rng, alpha, rate, mu, sigma):
    while True:
        t = rng.normal(mu, sigma)
        if rng.random() >= alpha:
            t += rng.exponential(1.0 / rate)
        if t >= 0.0:
            return t


@numba.njit(cache=True)
def _draw_delays(rng, alpha, rate, mu, sigma, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = draw_delay(rng, alpha, rate, mu, sigma)
    return out


def cn_delay_sample(model: DelayModel, rng: np.random.Generator) -> float:
    """One core-network delay draw in ms; negative draws are redrawn."""
    return draw_delay(rng, model.alpha, model.exp_rate_per_ms,
                      model.gauss_mean_ms, model.gauss_std_ms)


def cn_delay_samples(model: DelayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    return _draw_delays(rng, model.alpha, model.exp_rate_per_ms,
                        model.gauss_mean_ms, model.gauss_std_ms, size)


def rewards(params: SystemParams, model: DelayModel, q_len: int) -> PathReward:
    r_cn = cn_delay_cdf(model, params.deadline_ms) * params.reward_unit
    return PathReward(r_bac=p_bac(params, q_len) * params.reward_unit, r_cn=r_cn)


def reward_vectors(params: SystemParams, model: DelayModel) -> tuple[np.ndarray, float]:
    """Breakout reward per state and the (state-independent) core reward."""
    r_bac = p_bac_curve(params) * params.reward_unit
    r_cn = cn_delay_cdf(model, params.deadline_ms) * params.reward_unit
    return r_bac, r_cn
