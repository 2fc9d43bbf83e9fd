"""Simulation clocks.

One master clock per simulation run; every node reads it through a
NodeClock carrying a signed offset so time skew can be injected per node.
"""

from __future__ import annotations


class SimClock:
    """Master simulation clock, integer seconds from run start."""

    def __init__(self, start: int = 0) -> None:
        self._now = int(start)

    @property
    def now(self) -> int:
        return self._now

    def advance(self, dt: int) -> int:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self._now += int(dt)
        return self._now


class NodeClock:
    """A node's view of time: master clock plus an injectable offset."""

    def __init__(self, node_id: str, sim: SimClock, offset: int = 0) -> None:
        self.node_id = node_id
        self._sim = sim
        self.offset = int(offset)

    @property
    def now(self) -> int:
        return self._sim.now + self.offset

    def set_offset(self, offset: int) -> None:
        self.offset = int(offset)
