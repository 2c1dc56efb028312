"""Shared half-duplex channel, frame airtime and per-device energy accounting.

Energy is kept in integer nanojoules: a draw in mW held for a duration in us
is exactly mW * us nJ.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .engine import EventKind, SimulationError


class PowerState(IntEnum):
    TX = 0
    RX = 1
    IDLE = 2
    SLEEP = 3


ACTIVE_STATES = (PowerState.TX, PowerState.RX, PowerState.IDLE)


@dataclass(frozen=True)
class PowerProfile:
    tx_mw: int = 285
    rx_mw: int = 145
    idle_mw: int = 70
    sleep_mw: int = 5

    def __post_init__(self):
        if not self.tx_mw > self.rx_mw > self.idle_mw > self.sleep_mw >= 0:
            raise ValueError(
                "power draws must satisfy Tx > Rx > Idle > Sleep >= 0, got "
                f"{self.tx_mw}/{self.rx_mw}/{self.idle_mw}/{self.sleep_mw} mW"
            )

    @property
    def draws(self) -> tuple[int, int, int, int]:
        # indexed by PowerState
        return (self.tx_mw, self.rx_mw, self.idle_mw, self.sleep_mw)


@dataclass(frozen=True)
class PhyParams:
    rate_bps: int = 650_000
    sifs_us: int = 160
    difs_us: int = 274
    backoff_slot_us: int = 52

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError("rate_bps must be positive")
        if not 0 <= self.sifs_us < self.difs_us:
            raise ValueError("need 0 <= SIFS < DIFS")
        if self.backoff_slot_us <= 0:
            raise ValueError("backoff_slot_us must be positive")

    def airtime(self, size_bytes: int) -> int:
        return tx_duration(size_bytes, self.rate_bps)


def tx_duration(size_bytes: int, rate_bps: int) -> int:
    """Airtime in microseconds, rounded up to the next whole microsecond."""
    if size_bytes <= 0:
        raise ValueError(f"frame size must be positive, got {size_bytes}")
    bits_us = size_bytes * 8 * 1_000_000
    return -(-bits_us // rate_bps)


class EnergyLedger:
    """Time and energy a device spends in each power state.

    The ledger is a running integral: ``set_state`` closes the open interval
    and opens a new one. Snapshots of the active (non-sleep) totals let
    callers attribute time and energy to an interval such as one packet's
    lifetime.
    """

    __slots__ = ("state", "since", "times", "draws", "_active_energy", "_active_time")

    def __init__(self, draws, start: int = 0, state: PowerState = PowerState.SLEEP):
        self.draws = tuple(draws)
        self.state = state
        self.since = start
        self.times = [0, 0, 0, 0]
        self._active_energy = 0
        self._active_time = 0

    def set_state(self, state: PowerState, at: int) -> None:
        dt = at - self.since
        if dt < 0:
            raise SimulationError(f"power state change at {at} precedes open interval at {self.since}")
        cur = self.state
        self.times[cur] += dt
        if cur != PowerState.SLEEP:
            self._active_time += dt
            self._active_energy += dt * self.draws[cur]
        self.state = state
        self.since = at

    def close(self, at: int) -> None:
        self.set_state(self.state, at)

    @property
    def awake(self) -> bool:
        return self.state != PowerState.SLEEP

    def time_in(self, state: PowerState) -> int:
        return self.times[state]

    def total_time(self) -> int:
        return sum(self.times)

    def energy_nj(self) -> int:
        return sum(t * d for t, d in zip(self.times, self.draws))

    def active_time_at(self, at: int) -> int:
        extra = at - self.since if self.state != PowerState.SLEEP else 0
        return self._active_time + extra

    def active_energy_at(self, at: int) -> int:
        extra = (at - self.since) * self.draws[self.state] if self.state != PowerState.SLEEP else 0
        return self._active_energy + extra


class Outcome(Enum):
    SUCCESS = "success"
    COLLISION = "collision"


class AccessPoint:
    """Transmitter identity for AP-originated frames (beacons, ACKs). Always awake."""

    id = -1
    awake = True
    ledger = None


class Transmission:
    __slots__ = ("sender", "start", "end", "size_bytes", "kind", "collided", "on_end", "expects_ack")

    def __init__(self, sender, start, end, size_bytes, kind, on_end, expects_ack):
        self.sender = sender
        self.start = start
        self.end = end
        self.size_bytes = size_bytes
        self.kind = kind
        self.collided = False
        self.on_end = on_end
        self.expects_ack = expects_ack

    def __repr__(self):
        return f"Transmission({self.sender.id}, {self.start}-{self.end}, {self.kind}, collided={self.collided})"


class Channel:
    """Single shared medium.

    A transmission succeeds iff no other transmission overlaps its
    ``[start, end)`` interval; there is no capture effect. A maximal run of
    overlapping transmissions (a busy period) that contains any overlap
    counts as one collision event for ``on_collision``.

    A successful frame sent with ``expects_ack`` keeps the medium reserved
    for SIFS and is answered by an AP ACK, as carried in the frame's
    duration field.

    ``contention_free`` lists window kinds where an overlap means the
    scheduler is broken; it raises ``SimulationError``.
    """

    def __init__(self, sim, phy: PhyParams, ack_bytes: int = 14, contention_free=(), record: bool = False):
        self.sim = sim
        self.phy = phy
        self.ack_us = phy.airtime(ack_bytes)
        self.ack_bytes = ack_bytes
        self.contention_free = frozenset(contention_free)
        self.ap = AccessPoint()
        self.listeners: list = []
        self.collision_observers: list = []
        self.in_flight: list[Transmission] = []
        self._reserved = False
        self._cluster_collided = False
        self.busy = False
        self.log: list[tuple] | None = [] if record else None
        self.collision_events: dict = {}
        self.successes: dict = {}

    def add_listener(self, listener) -> None:
        self.listeners.append(listener)

    def remove_listener(self, listener) -> None:
        self.listeners.remove(listener)

    def begin_transmission(self, sender, size_bytes: int, kind, window_end: int,
                           on_end=None, expects_ack: bool = False) -> Transmission:
        now = self.sim.now
        if not sender.awake:
            raise SimulationError(f"device {sender.id} transmits while asleep at {now}")
        duration = self.phy.airtime(size_bytes)
        end = now + duration
        exchange_end = end + (self.phy.sifs_us + self.ack_us if expects_ack else 0)
        if exchange_end > window_end:
            raise SimulationError(
                f"device {sender.id} exchange {now}-{exchange_end} crosses window end {window_end}"
            )
        if self._reserved and sender is not self.ap:
            raise SimulationError(f"device {sender.id} transmits into a reserved SIFS gap at {now}")
        tx = Transmission(sender, now, end, size_bytes, kind, on_end, expects_ack)
        for other in self.in_flight:
            if other.end > now:
                other.collided = True
                tx.collided = True
        if tx.collided:
            self._cluster_collided = True
            if kind in self.contention_free:
                raise SimulationError(f"overlapping transmissions inside contention-free {kind} window at {now}")
        self.in_flight.append(tx)
        if not self.busy:
            self.busy = True
            for listener in tuple(self.listeners):
                listener.on_busy(now)
        self.sim.schedule(end, EventKind.TX_END, self._end, tx)
        return tx

    def _end(self, tx: Transmission) -> None:
        now = self.sim.now
        self.in_flight.remove(tx)
        outcome = Outcome.COLLISION if tx.collided else Outcome.SUCCESS
        if self.log is not None:
            self.log.append((tx.sender.id, tx.start, tx.end, tx.kind, outcome))
        if outcome is Outcome.SUCCESS:
            self.successes[tx.kind] = self.successes.get(tx.kind, 0) + 1
        ack = outcome is Outcome.SUCCESS and tx.expects_ack
        if not self.in_flight:
            if self._cluster_collided:
                self.collision_events[tx.kind] = self.collision_events.get(tx.kind, 0) + 1
                for obs in self.collision_observers:
                    obs(tx.kind, now)
            self._cluster_collided = False
            if ack:
                self._reserved = True
                self.sim.schedule(now + self.phy.sifs_us, EventKind.TX_START, self._send_ack, tx)
        if tx.on_end is not None:
            tx.on_end(tx, outcome)
        if not self.in_flight and not self._reserved and self.busy:
            self.busy = False
            for listener in tuple(self.listeners):
                listener.on_idle(now)

    def _send_ack(self, data: Transmission) -> None:
        self._reserved = False
        # the ACK is answered SIFS after the data frame and may not cross its window
        self.begin_transmission(self.ap, self.ack_bytes, data.kind, self.sim.now + self.ack_us)

    def outcome(self, tx: Transmission) -> Outcome:
        if tx in self.in_flight:
            raise SimulationError("transmission has not ended yet")
        return Outcome.COLLISION if tx.collided else Outcome.SUCCESS
