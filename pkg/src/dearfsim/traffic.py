"""Uplink arrivals for delay-sensitive (DSMD) and delay-tolerant devices."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .engine import stream


class PacketState(str, Enum):
    PENDING = "pending"
    SERVED = "served"
    MISSED = "missed"    # deadline passed while queued
    DROPPED = "dropped"  # retry limit exceeded


@dataclass(slots=True, eq=False)
class Packet:
    owner: int
    arrival: int
    size_bytes: int = 100
    deadline_dtims: int | None = None
    arrival_dtim: int = 0
    retries: int = 0
    served_at: int | None = None
    state: PacketState = PacketState.PENDING
    # ledger snapshots for per-packet accounting
    active_time_mark: int = 0
    energy_mark: int = 0

    @property
    def expiry_dtim(self) -> int | None:
        """Last DTIM index in which the packet may still be delivered."""
        if self.deadline_dtims is None:
            return None
        return self.arrival_dtim + self.deadline_dtims

    def expiry_time(self, dtim_us: int) -> int | None:
        if self.deadline_dtims is None:
            return None
        return (self.expiry_dtim + 1) * dtim_us

    def within_deadline(self, dtim_us: int) -> bool:
        if self.served_at is None:
            return False
        exp = self.expiry_time(dtim_us)
        return exp is None or self.served_at < exp


@dataclass(frozen=True)
class ScenarioSpec:
    scheme: str
    n_dsmd: int
    x_dtims: int
    seed: int
    n_non_dsmd: int = 200
    deadline_dtims: int = 5

    def __post_init__(self):
        if self.x_dtims < 1:
            raise ValueError("x_dtims must be >= 1")
        if self.scheme not in ("basic", "dearf"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def generate_arrivals(spec: ScenarioSpec, horizon: int, dtim_us: int, cycle_dtims: int,
                      first_non_dsmd: int | None = None) -> list[tuple[int, int, bool]]:
    """Arrival schedule as sorted ``(time_us, device_id, is_dsmd)`` tuples.

    DSMDs are device ids ``0 .. n_dsmd-1``; each receives one packet per
    arrival cycle, uniformly over the first ``x_dtims`` DTIMs of the cycle.
    Cycles repeat every ``max(cycle_dtims, x_dtims)`` DTIMs. Delay-tolerant
    devices follow (ids from ``first_non_dsmd``) and receive one packet per
    DTIM, uniform within it. Draws come from per-device streams, so both
    schemes see the same schedule for a given seed.
    """
    first_non_dsmd = spec.n_dsmd if first_non_dsmd is None else first_non_dsmd
    period = max(cycle_dtims, spec.x_dtims) * dtim_us
    window = spec.x_dtims * dtim_us
    out = []
    for d in range(spec.n_dsmd):
        rng = stream(spec.seed, "traffic", d)
        cycle_start = 0
        while cycle_start < horizon:
            t = cycle_start + rng.randrange(window)
            if t < horizon:
                out.append((t, d, True))
            cycle_start += period
    for j in range(spec.n_non_dsmd):
        dev = first_non_dsmd + j
        rng = stream(spec.seed, "traffic", dev)
        k = 0
        while k * dtim_us < horizon:
            t = k * dtim_us + rng.randrange(dtim_us)
            if t < horizon:
                out.append((t, dev, False))
            k += 1
    out.sort()
    return out


def expire_deadlines(queue, dtim_index: int) -> list[Packet]:
    """Remove and return queued packets whose last usable DTIM is before ``dtim_index``.

    Call at each DTIM boundary. The removed packets are marked MISSED.
    """
    expired = [p for p in queue if p.deadline_dtims is not None and p.expiry_dtim < dtim_index]
    for p in expired:
        queue.remove(p)
        p.state = PacketState.MISSED
    return expired
