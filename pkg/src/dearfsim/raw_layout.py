"""Per-DTIM schedules: beacons, restricted access windows and slot mapping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .engine import SimulationError

log = logging.getLogger(__name__)


class RawKind(str, Enum):
    GENERIC = "generic"
    CI = "ci"
    DII = "dii"
    DRA = "dra"
    NRA = "nra"


# windows whose slots are exclusive to one device (or one group, for CI)
EXCLUSIVE_KINDS = frozenset({RawKind.CI, RawKind.DII, RawKind.DRA})


def assign_slot(aid: int, n_offset: int, slot_count: int) -> int:
    """Slot index of a station within a RAW of ``slot_count`` slots."""
    if slot_count < 1:
        raise ValueError(f"slot_count must be >= 1, got {slot_count}")
    return (aid + n_offset) % slot_count


def next_offset(dtim_index: int, slot_count: int, fixed: int | None = None) -> int:
    """Per-DTIM slot offset: rotates with the DTIM index unless pinned."""
    if fixed is not None:
        return fixed
    if slot_count < 1:
        return 0
    return dtim_index % slot_count


@dataclass
class RawWindow:
    kind: RawKind
    start: int
    duration: int
    slot_duration: int
    slot_count: int
    # device id -> slot index (for CI: group -> slot index)
    assignment: dict[int, int] = field(default_factory=dict)
    group: int | None = None

    @classmethod
    def sliced(cls, kind: RawKind, start: int, duration: int, slot_duration: int, **kw) -> "RawWindow":
        if slot_duration <= 0:
            raise ValueError("slot duration must be positive")
        return cls(kind, start, duration, slot_duration, duration // slot_duration, **kw)

    @property
    def end(self) -> int:
        return self.start + self.duration

    @property
    def guard(self) -> int:
        return self.duration - self.slot_count * self.slot_duration

    def slot_start(self, i: int) -> int:
        if not 0 <= i < self.slot_count:
            raise IndexError(i)
        return self.start + i * self.slot_duration

    def slot_end(self, i: int) -> int:
        return self.slot_start(i) + self.slot_duration

    def slot_members(self) -> list[list[int]]:
        slots: list[list[int]] = [[] for _ in range(self.slot_count)]
        for member, slot in self.assignment.items():
            slots[slot].append(member)
        return slots


@dataclass(frozen=True)
class Beacon:
    time: int
    duration: int
    size_bytes: int
    kind: str  # "dtim", "tim" or "special"
    raw_index: int | None = None

    @property
    def end(self) -> int:
        return self.time + self.duration


@dataclass
class DtimPlan:
    index: int
    start: int
    length: int
    dtim_beacon: Beacon
    tim_beacons: list[Beacon] = field(default_factory=list)
    raws: list[RawWindow] = field(default_factory=list)
    # airtime held back for a window sized later in the DTIM (the DII RAW)
    reserved: tuple[int, int] | None = None
    carried_groups: list[int] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.start + self.length

    def raws_of(self, kind: RawKind) -> list[RawWindow]:
        return [r for r in self.raws if r.kind == kind]

    def validate(self) -> None:
        """Assert that beacons and RAWs are disjoint, inside the DTIM and announced."""
        spans = [(b.time, b.end, f"{b.kind} beacon") for b in [self.dtim_beacon, *self.tim_beacons]]
        spans += [(r.start, r.end, f"{r.kind.value} RAW") for r in self.raws]
        if self.reserved is not None:
            spans.append((*self.reserved, "reserved"))
        spans.sort()
        if spans and spans[0][0] < self.start:
            raise SimulationError(f"{spans[0][2]} starts before DTIM {self.index}")
        for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise SimulationError(f"{n0} [{s0},{e0}) overlaps {n1} [{s1},{e1}) in DTIM {self.index}")
        if spans and spans[-1][1] > self.end:
            raise SimulationError(f"{spans[-1][2]} runs past the end of DTIM {self.index}")
        beacon_ends = {b.end for b in [self.dtim_beacon, *self.tim_beacons]}
        for r in self.raws:
            if r.kind != RawKind.CI and r.start not in beacon_ends:
                raise SimulationError(f"{r.kind.value} RAW at {r.start} has no announcing beacon")
            if r.slot_count * r.slot_duration > r.duration:
                raise SimulationError("slots overflow their RAW")


def contiguous_groups(aids: list[int], group_count: int) -> list[list[int]]:
    """Split AIDs (in order) into ``group_count`` contiguous blocks of near-equal size."""
    if group_count < 1:
        raise ValueError("group_count must be >= 1")
    n = len(aids)
    bounds = [(g * n) // group_count for g in range(group_count + 1)]
    return [aids[bounds[g]:bounds[g + 1]] for g in range(group_count)]


def build_basic_dtim(dtim_index: int, start: int, pending: dict[int, list[tuple[int, int]]],
                     cfg) -> DtimPlan:
    """Layout of one DTIM under standard RAW access.

    ``pending`` maps group index -> [(device id, aid)] for devices holding
    uplink traffic. Each such group gets one generic RAW announced by a TIM
    beacon; RAWs are packed in group order after the DTIM beacon. Groups that
    no longer fit in the interval are returned in ``carried_groups``.
    """
    dtim_bcn = Beacon(start, cfg.airtime(cfg.dtim_beacon_bytes), cfg.dtim_beacon_bytes, "dtim")
    plan = DtimPlan(dtim_index, start, cfg.dtim_interval_us, dtim_bcn)
    tim_us = cfg.airtime(cfg.tim_beacon_bytes)
    t = dtim_bcn.end
    for group in sorted(g for g, members in pending.items() if members):
        if t + tim_us + cfg.raw_us > plan.end:
            plan.carried_groups.append(group)
            continue
        plan.tim_beacons.append(Beacon(t, tim_us, cfg.tim_beacon_bytes, "tim", len(plan.raws)))
        t += tim_us
        raw = RawWindow.sliced(RawKind.GENERIC, t, cfg.raw_us, cfg.raw_slot_us, group=group)
        offset = next_offset(dtim_index, raw.slot_count, cfg.fixed_offset)
        for dev_id, aid in pending[group]:
            raw.assignment[dev_id] = assign_slot(aid, offset, raw.slot_count)
        plan.raws.append(raw)
        t = raw.end
    if plan.carried_groups:
        log.info("DTIM %d: %d groups carried to the next DTIM", dtim_index, len(plan.carried_groups))
    plan.validate()
    return plan
