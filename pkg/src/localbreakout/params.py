"""Model constants shared by the kernel, solver and simulator."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, replace


class InvalidParams(ValueError):
    """Raised when a parameter set violates its invariants."""


class InvalidAction(ValueError):
    """Raised when breakout is requested on a full backhaul queue."""


class Action(enum.IntEnum):
    """Routing decision for an arriving packet.

    The integer value is the number of packets the decision adds to the
    backhaul queue, so ``q_len + action`` is the post-decision level.
    """

    CORE = 0
    BREAKOUT = 1


@dataclass(frozen=True)
class SystemParams:
    p: float = 0.05
    q: float = 0.05
    tau_ms: float = 0.02
    deadline_slots: int = 965
    buffer_size: int = 100
    reward_unit: float = 1.0
    epsilon: float = 1e-9
    tail_mass: float = 1e-12
    max_iterations: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidParams(f"arrival probability p={self.p} not in (0, 1)")
        if not 0.0 < self.q <= 1.0:
            raise InvalidParams(f"departure probability q={self.q} not in (0, 1]")
        if not self.tau_ms > 0:
            raise InvalidParams(f"slot length tau_ms={self.tau_ms} must be positive")
        if int(self.deadline_slots) != self.deadline_slots or self.deadline_slots < 1:
            raise InvalidParams(f"deadline_slots={self.deadline_slots} must be a positive integer")
        if int(self.buffer_size) != self.buffer_size or self.buffer_size < 1:
            raise InvalidParams(f"buffer_size={self.buffer_size} must be a positive integer")
        if self.reward_unit < 0:
            raise InvalidParams(f"reward_unit={self.reward_unit} must be nonnegative")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParams(f"epsilon={self.epsilon} not in (0, 1)")
        if not 0.0 < self.tail_mass < 1.0:
            raise InvalidParams(f"tail_mass={self.tail_mass} not in (0, 1)")
        if self.max_iterations < 1:
            raise InvalidParams("max_iterations must be at least 1")
        object.__setattr__(self, "deadline_slots", int(self.deadline_slots))
        object.__setattr__(self, "buffer_size", int(self.buffer_size))

    @property
    def deadline_ms(self) -> float:
        return self.deadline_slots * self.tau_ms

    @property
    def n_states(self) -> int:
        return self.buffer_size + 1

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        return cls(**data)


def check_state(params: SystemParams, q_len: int) -> int:
    if int(q_len) != q_len or not 0 <= q_len <= params.buffer_size:
        raise InvalidParams(f"queue length {q_len} outside [0, {params.buffer_size}]")
    return int(q_len)
