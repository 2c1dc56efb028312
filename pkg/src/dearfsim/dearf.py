"""DEARF: RAW scheduling that gives delay-sensitive devices contention-free slots by deadline.

Delay-sensitive devices (DSMDs) announce pending data with a beacon in their
group's slot of the contention indication (CI) RAW, report their deadline in
a contention-free delay information (DII) slot and are then granted
contention-free DSMD resource allocation (DRA) slots in later DTIMs. Other
devices contend in non-DSMD resource allocation (NRA) RAWs. The AP splits
each DTIM between DRA and NRA airtime with ``allocate_resources``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .engine import SimulationError
from .raw_layout import Beacon, DtimPlan, RawKind, RawWindow, assign_slot, next_offset


class DsmdStatus(Enum):
    IDLE = "idle"
    CONTENDING = "contending"
    TRANSMITTING = "transmitting"


_ALLOWED = {
    (DsmdStatus.IDLE, DsmdStatus.CONTENDING),
    (DsmdStatus.CONTENDING, DsmdStatus.TRANSMITTING),
    (DsmdStatus.TRANSMITTING, DsmdStatus.IDLE),
    # only reachable when a DII cap leaves a device contending past its deadline
    (DsmdStatus.CONTENDING, DsmdStatus.IDLE),
}


def transition(old: DsmdStatus, new: DsmdStatus) -> DsmdStatus:
    if (old, new) not in _ALLOWED:
        raise SimulationError(f"illegal DSMD status change {old.value} -> {new.value}")
    return new


class DeadlineClasses:
    """Transmitting DSMDs keyed by DTIMs left until their deadline.

    ``self[i]`` is the ordered list of members that must be served within
    ``i`` DTIMs of the current one (``self[0]``: this DTIM). Members keep
    report order inside a class.
    """

    def __init__(self):
        self._classes: dict[int, list] = {}
        self._where: dict = {}

    def insert(self, member, index: int) -> None:
        if index < 0:
            raise ValueError(f"class index must be >= 0, got {index}")
        if member in self._where:
            raise SimulationError(f"{member!r} is already in class C_{self._where[member]}")
        self._classes.setdefault(index, []).append(member)
        self._where[member] = index

    def remove(self, member) -> None:
        i = self._where.pop(member)
        self._classes[i].remove(member)
        if not self._classes[i]:
            del self._classes[i]

    def __getitem__(self, index: int) -> list:
        return list(self._classes.get(index, ()))

    def __contains__(self, member) -> bool:
        return member in self._where

    def __len__(self) -> int:
        return len(self._where)

    def index_of(self, member) -> int:
        return self._where[member]

    def indices(self) -> list[int]:
        return sorted(self._classes)

    def in_order(self, start: int = 0) -> list:
        """Members of ``C_start, C_start+1, ...`` in class order."""
        out = []
        for i in self.indices():
            if i >= start:
                out.extend(self._classes[i])
        return out

    def copy(self) -> "DeadlineClasses":
        c = DeadlineClasses()
        for i in self.indices():
            for m in self._classes[i]:
                c.insert(m, i)
        return c

    def advance(self) -> list:
        """Move every class one DTIM closer to its deadline; return what was in C_0."""
        expired = self._classes.pop(0, [])
        for m in expired:
            del self._where[m]
        self._classes = {i - 1: ms for i, ms in self._classes.items()}
        for m in self._where:
            self._where[m] -= 1
        return expired


@dataclass
class Allocation:
    grants: list
    nra_us: int
    expired: list
    classes: DeadlineClasses
    dra_us: int = 0


def max_slots(budget: int, dra_cost, limit: int) -> int:
    """Largest ``k <= limit`` with ``dra_cost(k) <= budget``."""
    lo, hi = 0, max(limit, 0)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if dra_cost(mid) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return lo


def allocate_resources(classes: DeadlineClasses, nra_min_us: int, collision_threshold: int,
                       n_collision: int, t_avail_us: int, dra_cost=None) -> Allocation:
    """Split one DTIM's DRA/NRA airtime.

    Members of ``C_0`` are granted first, as far as the airtime left after
    the NRA minimum allows; the NRA minimum is then reserved. When the NRA
    RAWs of the last DTIM saw at least ``collision_threshold`` collision
    events, all remaining airtime goes to NRA; otherwise it serves ``C_1``,
    ``C_2``, ... in order and whatever is still left goes to NRA.

    Returns the grants (in slot order), the NRA airtime, the members of
    ``C_0`` that could not be served (they miss their deadline) and the
    classes re-indexed for the next DTIM. ``classes`` is not modified.
    """
    if dra_cost is None:
        dra_cost = lambda k: k * 1684  # noqa: E731
    if nra_min_us > t_avail_us:
        raise ValueError(f"minimum NRA airtime {nra_min_us} exceeds available {t_avail_us}")
    floor = t_avail_us - nra_min_us
    c0 = classes[0]
    k0 = max_slots(floor, dra_cost, len(c0))
    grants = c0[:k0]
    expired = c0[k0:]
    remaining = t_avail_us - dra_cost(k0) - nra_min_us
    if not (n_collision >= collision_threshold and remaining > 0):
        later = classes.in_order(1)
        k = max_slots(floor, dra_cost, k0 + len(later))
        grants += later[:k - k0]
    dra_us = dra_cost(len(grants))
    nxt = classes.copy()
    for m in grants:
        nxt.remove(m)
    nxt.advance()
    return Allocation(grants, t_avail_us - dra_us, expired, nxt, dra_us)


# --- CI / DII ---------------------------------------------------------------

def ci_slot_of(t: int, ci: RawWindow) -> int:
    """CI slot (= group) whose interval contains time ``t``."""
    if not ci.start <= t < ci.start + ci.slot_count * ci.slot_duration:
        raise ValueError(f"t={t} is outside the CI slots")
    return (t - ci.start) // ci.slot_duration


def run_ci_raw(ci: RawWindow, contending_groups) -> set[int]:
    """Groups the AP flags: every slot where at least one beacon was heard.

    A collision in a slot still carries energy, so it flags the group too.
    """
    flagged = set()
    for g in contending_groups:
        if not 0 <= g < ci.slot_count:
            raise ValueError(f"group {g} has no CI slot")
        flagged.add(g)
    return flagged


def build_dii_raw(flagged_groups, members_by_group, start: int, slot_us: int,
                  group_cap: int | None = None) -> RawWindow:
    """One contention-free slot for every member of every flagged group.

    The AP cannot tell which members have data, so all of them get a slot.
    Slots follow group order, then member order. At most ``group_cap``
    groups are served; the rest signal again in the next CI RAW.
    """
    groups = sorted(flagged_groups)
    if group_cap is not None:
        groups = groups[:group_cap]
    assignment = {}
    for g in groups:
        for member in members_by_group[g]:
            if member in assignment:
                raise SimulationError(f"member {member} appears in two CI groups")
            assignment[member] = len(assignment)
    n = len(assignment)
    return RawWindow(RawKind.DII, start, n * slot_us, slot_us, n, assignment)


@dataclass(frozen=True)
class DeadlineReport:
    member: int
    arrival: int
    expiry_dtim: int


def run_dii_raw(dii: RawWindow, reports: dict) -> list[tuple[int, DeadlineReport]]:
    """Reports actually sent, in slot order. Members without data leave their slot empty."""
    sent = [(slot, m) for m, slot in dii.assignment.items() if m in reports]
    sent.sort()
    return [(m, reports[m]) for _, m in sent]


# --- DTIM layout --------------------------------------------------------------

@dataclass(frozen=True)
class DearfBudget:
    t_avail_us: int
    dii_reserve_us: int
    slots_per_dra_raw: int
    dra_slot_us: int
    tim_us: int

    def dra_cost(self, k: int) -> int:
        return k * self.dra_slot_us + math.ceil(k / self.slots_per_dra_raw) * self.tim_us


def dearf_budget(cfg, n_dsmd: int) -> DearfBudget:
    """Airtime left for DRA + NRA once the fixed DEARF overhead is reserved.

    The DII RAW is sized only after the CI RAW is observed, so its worst
    case (every member of ``dii_group_cap`` full groups) is held back.
    """
    tim_us = cfg.airtime(cfg.tim_beacon_bytes)
    overhead = cfg.airtime(cfg.dtim_beacon_bytes)
    dii_reserve = 0
    if n_dsmd > 0:
        group_size = math.ceil(n_dsmd / cfg.ci_groups)
        worst = min(n_dsmd, group_size * cfg.dii_group_cap)
        dii_reserve = tim_us + worst * cfg.dii_slot_us
        overhead += cfg.ci_raw_us + cfg.airtime(cfg.special_beacon_bytes) + dii_reserve
    t_avail = cfg.dtim_interval_us - overhead
    return DearfBudget(t_avail, dii_reserve, cfg.raw_us // cfg.dra_slot_us, cfg.dra_slot_us, tim_us)


@dataclass
class DearfPlan:
    plan: DtimPlan
    ci: RawWindow | None
    special_beacon: Beacon | None
    dii_tim: int | None
    nra_offset: int = 0
    nra_slots: int = 0
    raw_tims: dict = field(default_factory=dict)


def nra_windows(start: int, budget: int, cfg) -> list[tuple[int, RawWindow]]:
    """Chop NRA airtime into announced RAWs of at most ``raw_us``; returns (TIM time, RAW)."""
    tim_us = cfg.airtime(cfg.tim_beacon_bytes)
    out = []
    t, rem = start, budget
    while rem >= tim_us + cfg.nra_slot_us:
        dur = min(cfg.raw_us, rem - tim_us)
        out.append((t, RawWindow.sliced(RawKind.NRA, t + tim_us, dur, cfg.nra_slot_us)))
        t += tim_us + dur
        rem -= tim_us + dur
    return out


def build_dearf_dtim(dtim_index: int, start: int, cfg, grants, nra_us: int,
                     budget: DearfBudget, has_dsmds: bool, nra_stations=()) -> DearfPlan:
    """Layout: DTIM beacon, CI RAW, DRA RAW(s), special beacon, NRA RAW(s), DII reservation.

    ``grants`` are DSMD device ids in slot order; ``nra_stations`` are
    ``(device id, aid)`` pairs mapped onto the NRA slots of this DTIM.
    """
    tim_us = budget.tim_us
    dtim_bcn = Beacon(start, cfg.airtime(cfg.dtim_beacon_bytes), cfg.dtim_beacon_bytes, "dtim")
    plan = DtimPlan(dtim_index, start, cfg.dtim_interval_us, dtim_bcn)
    out = DearfPlan(plan, None, None, None)
    t = dtim_bcn.end
    if has_dsmds:
        ci = RawWindow.sliced(RawKind.CI, t, cfg.ci_raw_us, cfg.ci_slot_us)
        ci.assignment = {g: g for g in range(ci.slot_count)}
        plan.raws.append(ci)
        out.ci = ci
        t = ci.end
    grants = list(grants)
    per_raw = budget.slots_per_dra_raw
    for i in range(0, len(grants), per_raw):
        chunk = grants[i:i + per_raw]
        plan.tim_beacons.append(Beacon(t, tim_us, cfg.tim_beacon_bytes, "tim", len(plan.raws)))
        t += tim_us
        raw = RawWindow(RawKind.DRA, t, len(chunk) * cfg.dra_slot_us, cfg.dra_slot_us, len(chunk),
                        {dev: s for s, dev in enumerate(chunk)})
        plan.raws.append(raw)
        t = raw.end
    if has_dsmds:
        sb_us = cfg.airtime(cfg.special_beacon_bytes)
        out.special_beacon = Beacon(t, sb_us, cfg.special_beacon_bytes, "special")
        plan.tim_beacons.append(out.special_beacon)
        t += sb_us
    nra = nra_windows(t, nra_us, cfg)
    if not nra:
        raise SimulationError(f"DTIM {dtim_index}: no NRA RAW fits in {nra_us} us")
    total = sum(r.slot_count for _, r in nra)
    out.nra_slots = total
    out.nra_offset = next_offset(dtim_index, total, cfg.fixed_offset)
    bases = []
    base = 0
    for tim_t, raw in nra:
        plan.tim_beacons.append(Beacon(tim_t, tim_us, cfg.tim_beacon_bytes, "tim", len(plan.raws)))
        plan.raws.append(raw)
        bases.append(base)
        base += raw.slot_count
    for dev, aid in nra_stations:
        g = assign_slot(aid, out.nra_offset, total)
        for (_, raw), b in zip(reversed(nra), reversed(bases)):
            if g >= b:
                raw.assignment[dev] = g - b
                break
    # NRA budget was granted as whole airtime; the DII block follows it
    t += nra_us
    if budget.dii_reserve_us:
        plan.reserved = (t, t + budget.dii_reserve_us)
        out.dii_tim = t
    plan.validate()
    return out
