"""CSMA/CA (DCF, basic access) inside a contention window.

Devices sense DIFS, count down a backoff drawn uniformly from ``[0, cw]``
in backoff slots while the medium is idle and freeze it while busy. A frame
is only sent if data + SIFS + ACK finishes before the window closes; a
device that cannot make it sleeps until its next window with cw, retries
and the frozen counter intact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .engine import EventKind, SimulationError
from .phy import Outcome, PowerState


@dataclass(frozen=True)
class DcfParams:
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 4
    difs_us: int = 274
    sifs_us: int = 160
    slot_us: int = 52
    data_us: int = 1231
    ack_us: int = 173
    data_bytes: int = 100

    def __post_init__(self):
        for cw in (self.cw_min, self.cw_max):
            if cw < 1 or (cw + 1) & cw:
                raise ValueError(f"contention window {cw} is not of the form 2^k - 1")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min exceeds cw_max")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")

    @property
    def exchange_us(self) -> int:
        return self.data_us + self.sifs_us + self.ack_us


class BackoffState:
    """Per-device contention state. Survives across windows and DTIMs."""

    __slots__ = ("cw", "counter")

    def __init__(self, cw_min: int = 15):
        self.cw = cw_min
        self.counter: int | None = None

    def draw(self, rng) -> int:
        self.counter = rng.randint(0, self.cw)
        return self.counter

    def on_collision(self, params: DcfParams) -> None:
        self.cw = min(2 * (self.cw + 1) - 1, params.cw_max)
        self.counter = None

    def reset(self, params: DcfParams) -> None:
        self.cw = params.cw_min
        self.counter = None


class Result(Enum):
    SENT = "sent"
    DEFERRED = "deferred"
    DROPPED = "dropped"


# per-device phases inside one window
_WAIT, _COUNT, _TX, _TIMEOUT, _DONE = range(5)


class _Entry:
    __slots__ = ("device", "phase", "expiry", "count_start")

    def __init__(self, device):
        self.device = device
        self.phase = _WAIT
        self.expiry = None
        self.count_start = 0


class Contention:
    """One contention window ``[start, end)`` shared by a set of devices.

    ``has_packet(device)`` tells whether the device still holds an eligible
    packet; ``on_result(device, result, packet, at)`` receives every SENT and
    DROPPED packet (``at`` is the end of the data frame for SENT) and one
    DEFERRED per device that leaves the window with traffic still queued.
    A device reads its head-of-line packet from ``device.queue[0]`` and its
    backoff state from ``device.backoff`` and ``device.rng``.
    """

    def __init__(self, sim, channel, params: DcfParams, start: int, end: int, kind,
                 has_packet, on_result):
        self.sim = sim
        self.channel = channel
        self.p = params
        self.start = start
        self.end = end
        self.kind = kind
        self.has_packet = has_packet
        self.on_result = on_result
        self.entries: list[_Entry] = []
        self._by_id: dict[int, _Entry] = {}
        self._open = False

    def add(self, device) -> None:
        e = _Entry(device)
        self.entries.append(e)
        self._by_id[device.id] = e

    def open(self) -> None:
        """Wake every member and start contending; call at the window start."""
        now = self.sim.now
        self._open = True
        self.channel.add_listener(self)
        busy = self.channel.busy
        for e in self.entries:
            d = e.device
            if d.backoff.counter is None:
                d.backoff.draw(d.rng)
            if busy:
                d.ledger.set_state(PowerState.RX, now)
            else:
                d.ledger.set_state(PowerState.IDLE, now)
                self._resume(e, now)
        self.sim.schedule(self.end, EventKind.SLOT_END, self._close)

    def _resume(self, e: _Entry, now: int) -> None:
        e.count_start = now + self.p.difs_us
        e.phase = _COUNT
        e.expiry = self.sim.schedule(
            e.count_start + e.device.backoff.counter * self.p.slot_us,
            EventKind.BACKOFF_EXPIRY, self._expire, e)

    def _freeze(self, e: _Entry, now: int) -> None:
        self.sim.cancel(e.expiry)
        if now > e.count_start:
            e.device.backoff.counter -= (now - e.count_start) // self.p.slot_us
        e.phase = _WAIT

    def on_busy(self, now: int) -> None:
        for e in self.entries:
            if e.phase == _COUNT:
                if e.expiry.fire_at > now:
                    self._freeze(e, now)
                    e.device.ledger.set_state(PowerState.RX, now)
            elif e.phase == _WAIT:
                e.device.ledger.set_state(PowerState.RX, now)

    def on_idle(self, now: int) -> None:
        for e in self.entries:
            if e.phase == _WAIT:
                e.device.ledger.set_state(PowerState.IDLE, now)
                self._resume(e, now)

    def _expire(self, e: _Entry) -> None:
        now = self.sim.now
        d = e.device
        d.backoff.counter = 0
        if now + self.p.exchange_us > self.end:
            # holding: the exchange would cross the window boundary
            self._leave(e, now, deferred=True)
            return
        e.phase = _TX
        d.ledger.set_state(PowerState.TX, now)
        self.channel.begin_transmission(d, self.p.data_bytes, self.kind, self.end,
                                        on_end=self._tx_end, expects_ack=True)

    def _tx_end(self, tx, outcome: Outcome) -> None:
        now = self.sim.now
        e = self._by_id[tx.sender.id]
        d = e.device
        d.ledger.set_state(PowerState.IDLE, now)
        e.phase = _TIMEOUT
        done_at = now + self.p.sifs_us + self.p.ack_us
        if outcome is Outcome.SUCCESS:
            self.sim.schedule(done_at, EventKind.TIMER, self._acked, e, now)
        else:
            packet = d.queue[0]
            packet.retries += 1
            if packet.retries > self.p.retry_limit:
                d.backoff.reset(self.p)
                self.on_result(d, Result.DROPPED, packet, now)
            else:
                d.backoff.on_collision(self.p)
            self.sim.schedule(done_at, EventKind.TIMER, self._timed_out, e)

    def _acked(self, e: _Entry, data_end: int) -> None:
        now = self.sim.now
        d = e.device
        d.ledger.set_state(PowerState.RX, data_end + self.p.sifs_us)
        d.backoff.reset(self.p)
        self.on_result(d, Result.SENT, d.queue[0], data_end)
        self._continue(e, now)

    def _timed_out(self, e: _Entry) -> None:
        self._continue(e, self.sim.now)

    def _continue(self, e: _Entry, now: int) -> None:
        d = e.device
        if not self.has_packet(d):
            self._leave(e, now, deferred=False)
            return
        if not self._open:
            # exchange finished exactly on the window boundary
            self._leave(e, now, deferred=True)
            return
        if d.backoff.counter is None:
            d.backoff.draw(d.rng)
        if self.channel.busy:
            e.phase = _WAIT
            d.ledger.set_state(PowerState.RX, now)
        else:
            d.ledger.set_state(PowerState.IDLE, now)
            self._resume(e, now)

    def _leave(self, e: _Entry, now: int, deferred: bool) -> None:
        e.phase = _DONE
        e.device.ledger.set_state(PowerState.SLEEP, now)
        if deferred:
            self.on_result(e.device, Result.DEFERRED, e.device.queue[0], now)

    def _close(self) -> None:
        now = self.sim.now
        for e in self.entries:
            if e.phase == _COUNT:
                self._freeze(e, now)
            if e.phase == _WAIT:
                self._leave(e, now, deferred=True)
            elif e.phase == _TX:
                # holding guarantees every exchange ends by the window end
                raise SimulationError(f"device {e.device.id} still transmitting at window end")
        self._open = False
        self.channel.remove_listener(self)

    @property
    def active(self) -> int:
        return sum(1 for e in self.entries if e.phase != _DONE)
