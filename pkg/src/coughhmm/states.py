"""Hidden-state alphabet and the allowed-transition topology of a cough."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class StateLabel(enum.IntEnum):
    """Cough stages.

    A, B, C are the explosive, intermediate and voiced phases of one cough,
    D is the short pause between coughs of a bout and E the ambient
    non-coughing state. The integer order is used for tie-breaking.
    """

    A = 0
    B = 1
    C = 2
    D = 3
    E = 4


STATE_NAMES = tuple(s.name for s in StateLabel)
N_STATES = len(STATE_NAMES)


def parse_state(token: str) -> StateLabel:
    token = token.strip().upper()
    try:
        return StateLabel[token]
    except KeyError:
        raise ValueError(f"unknown state token {token!r}; expected one of {', '.join(STATE_NAMES)}") from None


# from -> allowed destinations
_COUGH_EDGES = {
    "A": "AB",
    "B": "BC",
    "C": "CD",
    "D": "ADE",
    "E": "AE",
}


@dataclass(frozen=True)
class Topology:
    """Boolean mask of permitted ``(from, to)`` transitions."""

    allowed: np.ndarray

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        if allowed.shape != (N_STATES, N_STATES):
            raise ValueError(f"topology mask must be {N_STATES}x{N_STATES}, got {allowed.shape}")
        if not allowed.any(axis=1).all():
            dead = [STATE_NAMES[i] for i in np.flatnonzero(~allowed.any(axis=1))]
            raise ValueError(f"states without outgoing transitions: {dead}")
        allowed.setflags(write=False)
        object.__setattr__(self, "allowed", allowed)

    @classmethod
    def cough(cls) -> "Topology":
        mask = np.zeros((N_STATES, N_STATES), dtype=bool)
        for src, dests in _COUGH_EDGES.items():
            for dst in dests:
                mask[StateLabel[src], StateLabel[dst]] = True
        return cls(mask)

    def is_allowed(self, src: int, dst: int) -> bool:
        return bool(self.allowed[src, dst])

    def successors(self, src: int) -> list[int]:
        """Allowed destinations of ``src`` other than itself."""
        return [int(j) for j in np.flatnonzero(self.allowed[src]) if j != src]

    def is_strongly_connected(self) -> bool:
        reach = self.allowed | np.eye(N_STATES, dtype=bool)
        for _ in range(N_STATES):
            reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
        return bool(reach.all())

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return bool(np.array_equal(self.allowed, other.allowed))

    def __hash__(self):
        return hash(self.allowed.tobytes())


COUGH_TOPOLOGY = Topology.cough()
