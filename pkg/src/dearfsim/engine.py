"""Discrete-event engine: integer-microsecond clock, heap-ordered event queue
and seeded per-entity random streams.

Events with equal fire times dispatch in insertion order, so a run is fully
determined by its configuration and seed.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from collections import deque
from enum import Enum

US_PER_S = 1_000_000


class SimulationError(AssertionError):
    """An engine or scheduler invariant was violated."""


class EventKind(str, Enum):
    DTIM_BOUNDARY = "dtim-boundary"
    BEACON_START = "beacon-start"
    BEACON_END = "beacon-end"
    SLOT_START = "slot-start"
    SLOT_END = "slot-end"
    TX_START = "tx-start"
    TX_END = "tx-end"
    BACKOFF_EXPIRY = "backoff-expiry"
    ARRIVAL = "arrival"
    TIMER = "timer"


class SimEvent:
    """A scheduled callback. The instance itself is the cancellation handle."""

    __slots__ = ("fire_at", "sequence", "kind", "callback", "args", "pending")

    def __init__(self, fire_at, sequence, kind, callback, args):
        self.fire_at = fire_at
        self.sequence = sequence
        self.kind = kind
        self.callback = callback
        self.args = args
        self.pending = True

    def __repr__(self):
        return f"SimEvent(t={self.fire_at}, seq={self.sequence}, kind={self.kind.value})"


class Simulator:
    def __init__(self, trace_len: int = 64):
        self.now = 0
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = itertools.count()
        self.dispatched = 0
        self.cancelled = 0
        self.trace: deque = deque(maxlen=trace_len)

    def schedule(self, fire_at: int, kind: EventKind, callback, *args) -> SimEvent:
        if fire_at < self.now:
            raise SimulationError(
                f"cannot schedule {kind.value} at t={fire_at} us, clock is at {self.now} us"
            )
        ev = SimEvent(fire_at, next(self._seq), kind, callback, args)
        heapq.heappush(self._heap, (fire_at, ev.sequence, ev))
        return ev

    def cancel(self, event: SimEvent) -> bool:
        if not event.pending:
            return False
        # lazy deletion: the heap entry is skipped on pop
        event.pending = False
        self.cancelled += 1
        return True

    def pending_count(self) -> int:
        return sum(1 for _, _, ev in self._heap if ev.pending)

    def run_until(self, end: int) -> int:
        """Dispatch every pending event with ``fire_at <= end``; leave the clock at ``end``."""
        if end < self.now:
            raise SimulationError(f"run_until({end}) is behind the clock ({self.now})")
        heap = self._heap
        pop = heapq.heappop
        trace = self.trace.append
        count = 0
        while heap and heap[0][0] <= end:
            fire_at, _, ev = pop(heap)
            if not ev.pending:
                continue
            if fire_at < self.now:
                raise SimulationError(f"clock would move backwards: {fire_at} < {self.now}")
            self.now = fire_at
            ev.pending = False
            trace((fire_at, ev.kind.value))
            try:
                ev.callback(*ev.args)
            except AssertionError as exc:
                self.dispatched += count
                err = exc if isinstance(exc, SimulationError) else SimulationError(str(exc))
                if getattr(err, "trace", None) is None:
                    err.trace = self.trace_tail()
                if err is exc:
                    raise
                raise err from exc
            count += 1
        self.now = end
        self.dispatched += count
        return count

    def trace_tail(self) -> list[str]:
        return [f"{t:>12d} us  {kind}" for t, kind in self.trace]


def derive_seed(seed: int, *key) -> int:
    """64-bit seed for the stream named by ``key`` under the run seed."""
    text = repr((int(seed),) + tuple(key)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def stream(seed: int, *key) -> random.Random:
    """Independent generator for one entity, e.g. ``stream(seed, "backoff", device_id)``.

    Streams do not depend on how many other entities exist, so adding devices
    to a scenario leaves the draws of existing devices untouched.
    """
    return random.Random(derive_seed(seed, *key))
