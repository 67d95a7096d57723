"""Average-reward routing MDP solved by relative value iteration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delay import DelayModel, reward_vectors
from .kernel import level_kernel
from .params import Action, SystemParams

# guards the per-state relative stopping rule at the anchor, where V == 0
DIVISION_FLOOR = 1e-12
# changes this many ulps of the reward/value scale are treated as round-off
ROUNDOFF_ULPS = 16


@dataclass
class ThresholdReport:
    """Threshold structure of a per-state action table.

    ``threshold`` is the first state routed to the core network (``None``
    if breakout is chosen everywhere).  ``violations`` lists states at or
    beyond the threshold that still choose breakout; the table is a clean
    threshold policy iff it is empty.
    """

    threshold: int | None
    violations: list[int] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass
class SolveResult:
    value: np.ndarray
    policy: np.ndarray
    gain: float
    iterations: int
    converged: bool
    threshold: int | None = None

    def to_dict(self) -> dict:
        report = threshold_of(self.policy)
        return {
            "gain": self.gain,
            "iterations": self.iterations,
            "converged": self.converged,
            "threshold": report.threshold,
            "threshold_is_clean": report.clean,
            "policy": ["breakout" if a else "core" for a in self.policy],
            "value": self.value.tolist(),
        }


@dataclass
class Model:
    """Precomputed rewards and transition kernel for one parameter point."""

    params: SystemParams
    r_bac: np.ndarray
    r_cn: float
    kernel: np.ndarray

    @classmethod
    def build(cls, params: SystemParams, delay: DelayModel) -> "Model":
        r_bac, r_cn = reward_vectors(params, delay)
        return cls(params, r_bac, r_cn, level_kernel(params))

    def q_values(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Action values for core (all states) and breakout (states < B)."""
        cont = self.kernel @ v
        core = self.r_cn + cont
        breakout = self.r_bac[:-1] + cont[1:]
        return core, breakout

    def backup(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        core, breakout = self.q_values(v)
        policy = np.zeros(len(v), dtype=np.int8)
        policy[:-1] = breakout >= core[:-1]
        new_v = core.copy()
        new_v[:-1] = np.where(policy[:-1] == 1, breakout, core[:-1])
        return new_v, policy

    def transition_matrix(self, table: np.ndarray) -> np.ndarray:
        levels = np.arange(len(table)) + np.asarray(table, dtype=int)
        return self.kernel[levels]

    def reward_vector(self, table: np.ndarray) -> np.ndarray:
        table = np.asarray(table)
        return np.where(table == 1, np.append(self.r_bac[:-1], 0.0), self.r_cn)


def bellman_backup(params: SystemParams, delay: DelayModel, v) -> tuple[np.ndarray, np.ndarray]:
    """One application of the average-reward Bellman operator.

    Returns the maximised values and the maximising action per state
    (1 = breakout, 0 = core; ties go to breakout).  Breakout is never
    considered at a full queue.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (params.n_states,) or not np.all(np.isfinite(v)):
        raise ValueError(f"value function must have {params.n_states} finite entries")
    return Model.build(params, delay).backup(v)


def relative_value_iteration(model: Model) -> SolveResult:
    params = model.params
    v = np.zeros(params.n_states)
    converged = False
    gain = 0.0
    policy = np.zeros(params.n_states, dtype=np.int8)
    it = 0
    for it in range(1, params.max_iterations + 1):
        new_v, policy = model.backup(v)
        gain = new_v[0]
        new_v -= gain
        delta = np.abs(new_v - v)
        noise = ROUNDOFF_ULPS * np.finfo(float).eps * (abs(gain) + np.abs(v).max())
        settled = (delta < params.epsilon * np.maximum(np.abs(v), DIVISION_FLOOR)) | (delta <= noise)
        v = new_v
        if it > 1 and settled.all():
            converged = True
            break
    result = SolveResult(value=v, policy=policy, gain=float(gain),
                         iterations=it, converged=converged)
    result.threshold = threshold_of(policy).threshold
    return result


def solve(params: SystemParams, delay: DelayModel) -> SolveResult:
    """Relative value iteration anchored at the empty queue.

    Starts from V = 0, applies the Bellman backup, subtracts the value of
    state 0 and stops once every state's relative change is below
    ``params.epsilon`` (or sits at floating-point round-off of the
    reward scale, where no relative change is resolvable).  ``gain`` is the pre-normalisation value at state 0
    of the last backup, i.e. the long-run reward per packet.
    """
    return relative_value_iteration(Model.build(params, delay))


def bellman_residual(params: SystemParams, delay: DelayModel, result: SolveResult) -> float:
    new_v, _ = bellman_backup(params, delay, result.value)
    return float(np.max(np.abs(new_v - result.value - result.gain)))


def threshold_of(policy) -> ThresholdReport:
    policy = [int(a) for a in policy]
    try:
        k = policy.index(int(Action.CORE))
    except ValueError:
        return ThresholdReport(threshold=None)
    violations = [s for s in range(k, len(policy)) if policy[s] == int(Action.BREAKOUT)]
    return ThresholdReport(threshold=k, violations=violations)


def extract_threshold(result: SolveResult) -> ThresholdReport:
    if not result.converged:
        raise ValueError("threshold requested from a non-converged solve")
    return threshold_of(result.policy)


def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Stationary law of a unichain stochastic matrix."""
    n = matrix.shape[0]
    system = matrix.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(system, rhs)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def policy_gain(params: SystemParams, delay: DelayModel, table, model: Model | None = None) -> float:
    """Long-run reward per packet of a stationary deterministic policy."""
    model = model or Model.build(params, delay)
    table = np.asarray(table, dtype=int)
    if table[-1] != 0:
        raise ValueError("policy routes to breakout at a full queue")
    pi = stationary_distribution(model.transition_matrix(table))
    return float(pi @ model.reward_vector(table))
