"""Packet-epoch transition kernel of the backhaul queue.

The state is the backhaul queue length seen by an arriving packet.  After
the routing decision the queue holds ``level = q_len + action`` packets;
the next packet arrives ``n ~ Geometric(p)`` slots later and in each of
those slots the queue loses one packet with probability ``q`` while it is
nonempty.  The next state therefore only depends on ``level``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import binom

from .params import Action, InvalidAction, SystemParams, check_state


def series_horizon(p: float, tail_mass: float) -> int:
    """Smallest N with (1-p)**N < tail_mass."""
    n = math.ceil(math.log(tail_mass) / math.log1p(-p))
    while (1.0 - p) ** n >= tail_mass:
        n += 1
    return max(n, 1)


def departure_pmf(p: float, q: float, max_count: int, tail_mass: float) -> np.ndarray:
    """Probability of exactly ``d`` service completions between two arrivals.

    Sums ``p (1-p)^(n-1) C(n, d) q^d (1-q)^(n-d)`` over inter-arrival
    lengths ``n`` until the remaining geometric mass drops below
    ``tail_mass``.  The departures are uncapped here; the queue-length cap
    is applied by :func:`level_kernel`.
    """
    horizon = series_horizon(p, tail_mass)
    n = np.arange(1, horizon + 1, dtype=float)
    geom = p * np.exp((n - 1) * math.log1p(-p))
    d = np.arange(max_count + 1)
    terms = binom.pmf(d[None, :], n[:, None], q)
    return geom @ terms


def level_kernel(params: SystemParams) -> np.ndarray:
    """Matrix ``K[level, next]`` for every post-decision level 0..buffer_size.

    Row ``level`` puts ``D(level - t)`` on target ``t >= 1`` and the rest of
    the mass on 0, where ``D`` is :func:`departure_pmf`.
    """
    size = params.n_states
    dep = departure_pmf(params.p, params.q, params.buffer_size, params.tail_mass)
    kern = np.zeros((size, size))
    for level in range(size):
        # targets level, level-1, ..., 1 need 0, 1, ..., level-1 departures
        kern[level, 1 : level + 1] = dep[:level][::-1]
        kern[level, 0] = max(0.0, 1.0 - kern[level, 1 : level + 1].sum())
    return kern


def post_decision_level(params: SystemParams, q_len: int, action: Action) -> int:
    q_len = check_state(params, q_len)
    action = Action(action)
    if action is Action.BREAKOUT and q_len >= params.buffer_size:
        raise InvalidAction(f"breakout infeasible at full queue ({q_len} packets)")
    return q_len + int(action)


def transition_row(params: SystemParams, q_len: int, action: Action) -> np.ndarray:
    """Distribution of the queue length at the next arrival epoch."""
    level = post_decision_level(params, q_len, action)
    dep = departure_pmf(params.p, params.q, level, params.tail_mass)
    row = np.zeros(params.n_states)
    row[1 : level + 1] = dep[:level][::-1]
    row[0] = max(0.0, 1.0 - row[1 : level + 1].sum())
    return row


def sample_epoch(params: SystemParams, q_len: int, action: Action,
                 rng: np.random.Generator) -> int:
    """Draw the queue length at the next arrival epoch."""
    level = post_decision_level(params, q_len, action)
    gap = rng.geometric(params.p)
    served = rng.binomial(gap, params.q)
    return max(level - served, 0)


def sample_epochs(params: SystemParams, q_len: int, action: Action,
                  rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised :func:`sample_epoch` for ``size`` independent epochs."""
    level = post_decision_level(params, q_len, action)
    gaps = rng.geometric(params.p, size=size)
    served = rng.binomial(gaps, params.q)
    return np.maximum(level - served, 0)
