"""Routing policies materialised as per-state action tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay import DelayModel, reward_vectors
from .params import Action, InvalidParams, SystemParams
from .solver import SolveResult, solve

KINDS = ("mdp", "myopic", "always_breakout", "always_core", "fixed_threshold")


class PolicyBindingError(RuntimeError):
    """The MDP solve behind an ``mdp`` policy did not converge."""


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "fixed_threshold":
            if self.k is None or int(self.k) != self.k or self.k < 0:
                raise InvalidParams("fixed_threshold needs a nonnegative integer k")
        elif self.k is not None:
            raise InvalidParams(f"policy kind {self.kind!r} takes no k")

    @property
    def name(self) -> str:
        return f"threshold_{self.k}" if self.kind == "fixed_threshold" else self.kind

    @classmethod
    def parse(cls, value) -> "PolicySpec":
        """Accept ``"myopic"``, ``"threshold_12"`` or ``{"kind": ..., "k": ...}``."""
        if isinstance(value, PolicySpec):
            return value
        if isinstance(value, dict):
            return cls(kind=value["kind"], k=value.get("k"))
        if isinstance(value, str) and value.startswith("threshold_"):
            return cls(kind="fixed_threshold", k=int(value.split("_", 1)[1]))
        return cls(kind=value)

    def to_json(self):
        return {"kind": self.kind, "k": self.k} if self.kind == "fixed_threshold" else self.kind


@dataclass(frozen=True)
class BoundPolicy:
    spec: PolicySpec
    table: np.ndarray
    solve_result: SolveResult | None = None

    def decide(self, q_len: int) -> Action:
        return decide(self.table, q_len)


def _frozen(table: np.ndarray) -> np.ndarray:
    table = np.asarray(table, dtype=np.int8).copy()
    table[-1] = Action.CORE
    table.setflags(write=False)
    return table


def bind(spec: PolicySpec, params: SystemParams, delay: DelayModel,
         solved: SolveResult | None = None) -> BoundPolicy:
    """Materialise ``spec`` into a lookup table over queue lengths 0..B.

    ``solved`` lets callers reuse an existing solve for the ``mdp`` kind.
    Every table routes a full queue to the core network.
    """
    spec = PolicySpec.parse(spec)
    n = params.n_states
    states = np.arange(n)
    if spec.kind == "mdp":
        result = solved if solved is not None else solve(params, delay)
        if not result.converged:
            raise PolicyBindingError(
                f"value iteration did not converge in {result.iterations} iterations "
                f"(p={params.p}, q={params.q})")
        return BoundPolicy(spec, _frozen(result.policy), result)
    if spec.kind == "myopic":
        r_bac, r_cn = reward_vectors(params, delay)
        table = r_bac >= r_cn
    elif spec.kind == "always_breakout":
        table = np.ones(n)
    elif spec.kind == "always_core":
        table = np.zeros(n)
    else:
        table = states < spec.k
    return BoundPolicy(spec, _frozen(table))


def decide(table, q_len: int) -> Action:
    if not 0 <= q_len < len(table):
        raise InvalidParams(f"queue length {q_len} outside the policy table")
    return Action(int(table[q_len]))
