"""Slot-level Monte-Carlo simulation of the breakout scheduler.

Time is slotted.  In every slot a packet arrives with probability ``p``
and the backhaul server completes the head-of-line packet with probability
``q`` when the queue is nonempty; a completion in a slot is processed
before an arrival in the same slot.  Both are independent Bernoulli
streams, so the loop jumps between the slots where something happens
(geometric gaps) instead of visiting empty slots; the sample path is the
same as stepping every slot.

Random numbers come from ``numpy.random.Generator(PCG64)`` seeded with
``SeedSequence(seed, spawn_key=(stream,))``: replication ``r`` of a run
uses ``stream=r``, so results do not depend on how runs are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .delay import DelayModel, draw_delay
from .params import InvalidParams, SystemParams

PRNG_ALGORITHM = "numpy.PCG64 via SeedSequence(seed, spawn_key=(stream,))"
Z_95 = 1.959963984540054
N_BATCHES = 50


@dataclass(frozen=True)
class SimConfig:
    n_packets: int = 1_000_000
    seed: int = 0
    warmup_packets: int | None = None
    stream: int = 0

    def __post_init__(self):
        if self.n_packets < 1:
            raise InvalidParams("n_packets must be at least 1")
        if self.warmup_packets is None:
            object.__setattr__(self, "warmup_packets", self.n_packets // 10)
        if not 0 <= self.warmup_packets < self.n_packets:
            raise InvalidParams("warmup_packets must be in [0, n_packets)")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(**data)


@dataclass(frozen=True)
class SimulationReport:
    success_rate: float
    ci_halfwidth_95: float
    n_measured: int
    breakout_packets: int
    breakout_successes: int
    core_packets: int
    core_successes: int
    mean_queue_length: float
    max_queue_length: int
    seed: int
    stream: int
    prng: str = PRNG_ALGORITHM

    def to_dict(self) -> dict:
        return asdict(self)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(seq))


@numba.njit(cache=True)
def _simulate(rng, table, p, q, deadline_slots, deadline_ms,
              alpha, rate, mu, sigma, n_packets, warmup, n_batches):
    capacity = table.shape[0]
    ring_deadline = np.zeros(capacity, dtype=np.int64)
    ring_batch = np.full(capacity, -1, dtype=np.int64)
    head = 0
    qlen = 0

    n_measured = n_packets - warmup
    batch_success = np.zeros(n_batches, dtype=np.int64)
    batch_count = np.zeros(n_batches, dtype=np.int64)
    # bk packets, bk successes, core packets, core successes, sum queue, max queue
    stats = np.zeros(6, dtype=np.int64)

    slot = 0
    next_service = rng.geometric(q)
    for i in range(n_packets):
        slot += rng.geometric(p)
        while next_service <= slot:
            if qlen > 0:
                b = ring_batch[head]
                if b >= 0 and next_service <= ring_deadline[head]:
                    batch_success[b] += 1
                    stats[1] += 1
                head = (head + 1) % capacity
                qlen -= 1
            next_service += rng.geometric(q)

        batch = -1
        if i >= warmup:
            batch = (i - warmup) * n_batches // n_measured
            batch_count[batch] += 1
            stats[4] += qlen
            if qlen > stats[5]:
                stats[5] = qlen

        if table[qlen] == 1:
            tail = (head + qlen) % capacity
            ring_deadline[tail] = slot + deadline_slots
            ring_batch[tail] = batch
            qlen += 1
            if batch >= 0:
                stats[0] += 1
        else:
            delay = draw_delay(rng, alpha, rate, mu, sigma)
            if batch >= 0:
                stats[2] += 1
                if delay <= deadline_ms:
                    batch_success[batch] += 1
                    stats[3] += 1

    # drain: later completions only matter for packets already queued
    while qlen > 0:
        b = ring_batch[head]
        if b >= 0 and next_service <= ring_deadline[head]:
            batch_success[b] += 1
            stats[1] += 1
        head = (head + 1) % capacity
        qlen -= 1
        next_service += rng.geometric(q)
    return batch_success, batch_count, stats


def batch_means_halfwidth(successes: np.ndarray, counts: np.ndarray) -> float:
    """95% normal-approximation half-width from batch means.

    Falls back to the binomial formula when there are too few packets for
    every batch to hold at least two.
    """
    total = counts.sum()
    rate = successes.sum() / total
    used = counts > 0
    if used.sum() < 2 or counts[used].min() < 2:
        return Z_95 * math.sqrt(rate * (1.0 - rate) / total)
    means = successes[used] / counts[used]
    weights = counts[used] / total
    # variance of the weighted mean of independent batch means
    k = used.sum()
    var = np.sum(weights**2 * (means - rate) ** 2) * k / (k - 1)
    return Z_95 * math.sqrt(var)


def run(params: SystemParams, model: DelayModel, table, cfg: SimConfig) -> SimulationReport:
    """Simulate ``cfg.n_packets`` arrivals under the given action table."""
    table = np.ascontiguousarray(table, dtype=np.int8)
    if table.shape != (params.n_states,):
        raise InvalidParams(f"policy table must have {params.n_states} entries")
    if table[-1] != 0:
        raise InvalidParams("policy table routes to breakout at a full queue")
    rng = make_rng(cfg.seed, cfg.stream)
    n_measured = cfg.n_packets - cfg.warmup_packets
    n_batches = min(N_BATCHES, n_measured)
    succ, counts, stats = _simulate(
        rng, table, params.p, params.q, params.deadline_slots, params.deadline_ms,
        model.alpha, model.exp_rate_per_ms, model.gauss_mean_ms, model.gauss_std_ms,
        cfg.n_packets, cfg.warmup_packets, n_batches)
    successes = int(succ.sum())
    return SimulationReport(
        success_rate=successes / n_measured,
        ci_halfwidth_95=batch_means_halfwidth(succ, counts),
        n_measured=n_measured,
        breakout_packets=int(stats[0]),
        breakout_successes=int(stats[1]),
        core_packets=int(stats[2]),
        core_successes=int(stats[3]),
        mean_queue_length=float(stats[4]) / n_measured,
        max_queue_length=int(stats[5]),
        seed=cfg.seed,
        stream=cfg.stream,
    )
