"""One simulation run: population, AP scheduler for either scheme, and metrics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import dearf as df
from .config import Config
from .dcf import BackoffState, Contention, Result
from .engine import EventKind, SimulationError, Simulator, stream
from .metrics import MetricsCollector, RunSummary
from .phy import Channel, EnergyLedger, Outcome, PowerState
from .raw_layout import Beacon, RawKind, build_basic_dtim, contiguous_groups
from .traffic import Packet, ScenarioSpec, expire_deadlines, generate_arrivals

SLEEP, RX, IDLE, TX = PowerState.SLEEP, PowerState.RX, PowerState.IDLE, PowerState.TX


class Device:
    __slots__ = ("id", "aid", "is_dsmd", "group", "ci_group", "queue", "ledger", "backoff", "rng",
                 "status")

    def __init__(self, dev_id, aid, is_dsmd, draws, cw_min, seed):
        self.id = dev_id
        self.aid = aid
        self.is_dsmd = is_dsmd
        self.group = 0
        self.ci_group = None
        self.queue: deque[Packet] = deque()
        self.ledger = EnergyLedger(draws)
        self.backoff = BackoffState(cw_min)
        self.rng = stream(seed, "backoff", dev_id)
        self.status = df.DsmdStatus.IDLE if is_dsmd else None

    @property
    def awake(self) -> bool:
        return self.ledger.state != SLEEP

    def __repr__(self):
        return f"Device({self.id}, aid={self.aid}, {'dsmd' if self.is_dsmd else 'non-dsmd'})"


def build_population(n_dsmd: int, n_non: int, cfg: Config, seed: int) -> list[Device]:
    """Devices ``0..n_dsmd-1`` are DSMDs, the rest delay tolerant.

    AIDs ``1..N`` are a seeded permutation over all devices. A regular
    interleave would alias with the modulo slot mapping (e.g. every fifth
    AID landing in the same two slots of ten).
    """
    total = n_dsmd + n_non
    aids = list(range(1, total + 1))
    stream(seed, "aid").shuffle(aids)
    draws = cfg.power.draws
    devices = [Device(i, aids[i], i < n_dsmd, draws, cfg.cw_min, seed) for i in range(total)]
    by_aid = sorted(devices, key=lambda d: d.aid)
    for g, block in enumerate(contiguous_groups(by_aid, cfg.basic_groups)):
        for d in block:
            d.group = g
    return devices


@dataclass
class SimulationResult:
    summary: RunSummary
    dsmd_delays_us: list
    devices: list
    channel: Channel
    plans: list


class _Scheme:
    def __init__(self, net: "Network"):
        self.net = net
        self.sim = net.sim
        self.cfg = net.cfg

    def on_arrival(self, device: Device, packet: Packet) -> None:
        pass

    def on_dtim(self, k: int, t0: int) -> None:
        raise NotImplementedError


class Network:
    def __init__(self, cfg: Config, spec: ScenarioSpec, record: bool = False):
        self.cfg = cfg
        self.spec = spec
        self.sim = Simulator()
        self.dtim_us = cfg.dtim_interval_us
        self.horizon = cfg.sim_time_us
        self.dcf = cfg.dcf
        self.channel = Channel(self.sim, cfg.phy, cfg.ack_bytes,
                               contention_free=(RawKind.DRA, RawKind.DII), record=record)
        self.metrics = MetricsCollector(self.dtim_us)
        self.devices = build_population(spec.n_dsmd, spec.n_non_dsmd, cfg, spec.seed)
        self.dsmds = self.devices[:spec.n_dsmd]
        self.non_dsmds = self.devices[spec.n_dsmd:]
        self.plans = [] if record else None
        self.scheme = (BasicScheme if spec.scheme == "basic" else DearfScheme)(self)

    # --- packets --------------------------------------------------------------
    def _arrive(self, device: Device, packet: Packet) -> None:
        self.metrics.record_arrival(packet, device.ledger)
        if not device.queue:
            self.metrics.start_service(packet, device.ledger, packet.arrival)
        device.queue.append(packet)
        self.scheme.on_arrival(device, packet)

    def _pop(self, device: Device, packet: Packet) -> None:
        if not device.queue or device.queue[0] is not packet:
            raise SimulationError(f"device {device.id} finished a packet that is not head of line")
        device.queue.popleft()
        if device.queue:
            self.metrics.start_service(device.queue[0], device.ledger, self.sim.now)

    def deliver(self, device: Device, packet: Packet, served_at: int) -> None:
        self.metrics.record_delivery(packet, served_at, device.ledger, self.sim.now)
        self._pop(device, packet)

    def drop(self, device: Device, packet: Packet) -> None:
        self.metrics.record_miss(packet, device.ledger, self.sim.now, dropped=True)
        self._pop(device, packet)

    def expire(self, device: Device, k: int) -> list[Packet]:
        head = device.queue[0] if device.queue else None
        expired = expire_deadlines(device.queue, k)
        for p in expired:
            self.metrics.record_miss(p, device.ledger, self.sim.now)
        if head is not None and device.queue and device.queue[0] is not head:
            self.metrics.start_service(device.queue[0], device.ledger, self.sim.now)
        return expired

    # --- helpers shared by the schemes ------------------------------------------
    def beacon(self, beacon, listeners) -> None:
        """Wake ``listeners`` (a list, or a callable evaluated at beacon time) to receive it."""
        def start():
            devs = listeners() if callable(listeners) else listeners
            now = self.sim.now
            for d in devs:
                d.ledger.set_state(RX, now)
            self.sim.schedule(beacon.end, EventKind.BEACON_END, end, devs)

        def end(devs):
            now = self.sim.now
            for d in devs:
                lg = d.ledger
                # a device whose state changed since the beacon started (a
                # transmission or window opening at this instant) stays awake
                if lg.state is RX and lg.since == beacon.time:
                    lg.set_state(SLEEP, now)

        self.sim.schedule(beacon.time, EventKind.BEACON_START, start)

    def contention_slot(self, start: int, end: int, kind, members, cutoff: int) -> None:
        def has_packet(d):
            return bool(d.queue) and d.queue[0].arrival < cutoff

        def on_result(d, result, packet, at):
            if result is Result.SENT:
                self.deliver(d, packet, at)
            elif result is Result.DROPPED:
                self.drop(d, packet)

        def open_slot():
            active = [d for d in members if has_packet(d)]
            if not active:
                return
            c = Contention(self.sim, self.channel, self.dcf, start, end, kind, has_packet, on_result)
            for d in active:
                c.add(d)
            c.open()

        self.sim.schedule(start, EventKind.SLOT_START, open_slot)

    def eligible(self, device: Device, cutoff: int) -> bool:
        return bool(device.queue) and device.queue[0].arrival < cutoff

    # --- run --------------------------------------------------------------------
    def _dtim(self, k: int) -> None:
        t0 = self.sim.now
        self.scheme.on_dtim(k, t0)
        nxt = t0 + self.dtim_us
        if nxt < self.horizon:
            self.sim.schedule(nxt, EventKind.DTIM_BOUNDARY, self._dtim, k + 1)

    def run(self) -> SimulationResult:
        spec, cfg = self.spec, self.cfg
        arrivals = generate_arrivals(spec, self.horizon, self.dtim_us, cfg.arrival_cycle_dtims)
        for t, dev_id, is_dsmd in arrivals:
            p = Packet(dev_id, t, cfg.packet_bytes, spec.deadline_dtims if is_dsmd else None,
                       t // self.dtim_us)
            self.sim.schedule(t, EventKind.ARRIVAL, self._arrive, self.devices[dev_id], p)
        self.sim.schedule(0, EventKind.DTIM_BOUNDARY, self._dtim, 0)
        self.sim.run_until(self.horizon)
        for d in self.devices:
            d.ledger.close(self.horizon)
        extra = {
            "nra_collision_events": self.channel.collision_events.get(RawKind.NRA, 0),
            "contention_free_collisions": sum(self.channel.collision_events.get(k, 0)
                                              for k in (RawKind.DRA, RawKind.DII)),
            "events_dispatched": self.sim.dispatched,
        }
        summary = self.metrics.finalize(spec, [d.ledger for d in self.dsmds], extra)
        return SimulationResult(summary, self.metrics.dsmd_delays(), self.devices, self.channel,
                                self.plans)


class BasicScheme(_Scheme):
    """Standard RAW access: one generic RAW per group with traffic, DCF in each slot."""

    def __init__(self, net):
        super().__init__(net)
        self.groups: dict[int, list[Device]] = {}
        for d in net.devices:
            self.groups.setdefault(d.group, []).append(d)

    def on_dtim(self, k, t0):
        net = self.net
        for d in net.dsmds:
            if d.queue:
                net.expire(d, k)
        pending = {}
        for g, devs in self.groups.items():
            active = [d for d in devs if net.eligible(d, t0)]
            if active:
                pending[g] = [(d.id, d.aid) for d in active]
        plan = build_basic_dtim(k, t0, pending, self.cfg)
        if net.plans is not None:
            net.plans.append(plan)
        net.beacon(plan.dtim_beacon, net.devices)
        for tim in plan.tim_beacons:
            raw = plan.raws[tim.raw_index]
            members = [net.devices[i] for i in raw.assignment]
            net.beacon(tim, members)
            for slot, ids in enumerate(raw.slot_members()):
                if ids:
                    net.contention_slot(raw.slot_start(slot), raw.slot_end(slot), RawKind.GENERIC,
                                        [net.devices[i] for i in ids], t0)


class DearfScheme(_Scheme):
    """AP side of DEARF: CI observation, DII sizing, deadline classes and DRA grants."""

    def __init__(self, net):
        super().__init__(net)
        cfg = self.cfg
        self.budget = df.dearf_budget(cfg, len(net.dsmds))
        self.classes = df.DeadlineClasses()
        self.members_by_group: dict[int, list[int]] = {}
        if net.dsmds:
            for g, block in enumerate(contiguous_groups(net.dsmds, cfg.ci_groups)):
                self.members_by_group[g] = [d.id for d in block]
                for d in block:
                    d.ci_group = g
        self.nra_collisions = 0
        self.last_allocation = None
        net.channel.collision_observers.append(self._on_collision)
        self.ci_us = cfg.airtime(cfg.ci_beacon_bytes)
        self.tim_us = cfg.airtime(cfg.tim_beacon_bytes)

    def _on_collision(self, kind, at):
        if kind == RawKind.NRA:
            self.nra_collisions += 1

    def _set_status(self, d: Device, new) -> None:
        d.status = df.transition(d.status, new)

    def _settle(self, d: Device) -> None:
        """Status after the current packet left: idle, or contending for the next one."""
        if d.status is not df.DsmdStatus.IDLE:
            self._set_status(d, df.DsmdStatus.IDLE)
        if d.queue:
            self._set_status(d, df.DsmdStatus.CONTENDING)

    def on_arrival(self, device, packet):
        if device.is_dsmd and device.status is df.DsmdStatus.IDLE:
            self._set_status(device, df.DsmdStatus.CONTENDING)

    def on_dtim(self, k, t0):
        net, cfg = self.net, self.cfg
        for d in net.dsmds:
            if d.queue and net.expire(d, k):
                if d in self.classes:
                    raise SimulationError(f"expired DSMD {d.id} still holds a deadline class")
                if d.status is not df.DsmdStatus.IDLE and (
                        not d.queue or d.status is df.DsmdStatus.TRANSMITTING):
                    self._settle(d)
        n_coll, self.nra_collisions = self.nra_collisions, 0
        alloc = df.allocate_resources(self.classes, cfg.nra_min_us, cfg.collision_threshold,
                                      n_coll, self.budget.t_avail_us, self.budget.dra_cost)
        self.last_allocation = alloc
        self.classes = alloc.classes
        nra_stations = [(d.id, d.aid) for d in net.non_dsmds if net.eligible(d, t0)]
        dp = df.build_dearf_dtim(k, t0, cfg, [m.id for m in alloc.grants], alloc.nra_us,
                                 self.budget, bool(net.dsmds), nra_stations)
        if net.plans is not None:
            net.plans.append(dp.plan)
        net.beacon(dp.plan.dtim_beacon, net.devices)

        ci_senders: list[Device] = []
        flagged: set[int] = set()
        if dp.ci is not None:
            for d in net.dsmds:
                if d.status is df.DsmdStatus.CONTENDING and d.queue[0].arrival < t0:
                    ci_senders.append(d)
                    self.sim.schedule(dp.ci.slot_start(d.ci_group), EventKind.TX_START,
                                      self._send_ci, d, dp.ci, flagged)

        for tim in dp.plan.tim_beacons:
            if tim.raw_index is None:
                continue
            raw = dp.plan.raws[tim.raw_index]
            members = [net.devices[i] for i in raw.assignment]
            net.beacon(tim, members)
            if raw.kind == RawKind.DRA:
                for dev_id, slot in raw.assignment.items():
                    self.sim.schedule(raw.slot_start(slot), EventKind.TX_START, self._send_dra,
                                      net.devices[dev_id], raw.slot_end(slot))
            else:
                for slot, ids in enumerate(raw.slot_members()):
                    if ids:
                        net.contention_slot(raw.slot_start(slot), raw.slot_end(slot), RawKind.NRA,
                                            [net.devices[i] for i in ids], t0)

        if dp.special_beacon is not None:
            net.beacon(dp.special_beacon, lambda: ci_senders if flagged else [])
        if dp.dii_tim is not None:
            self.sim.schedule(dp.dii_tim, EventKind.TIMER, self._open_dii, k, dp, ci_senders, flagged)

    # --- CI -------------------------------------------------------------------
    def _send_ci(self, d: Device, ci, flagged: set) -> None:
        now = self.sim.now
        d.ledger.set_state(TX, now)
        slot = ci.slot_start(d.ci_group)

        def heard(tx, outcome):
            # energy in the slot flags the group, collided or not
            flagged.update(df.run_ci_raw(ci, [df.ci_slot_of(tx.start, ci)]))
            d.ledger.set_state(SLEEP, self.sim.now)

        self.net.channel.begin_transmission(d, self.cfg.ci_beacon_bytes, RawKind.CI,
                                            slot + ci.slot_duration, on_end=heard)

    # --- DII --------------------------------------------------------------------
    def _open_dii(self, k: int, dp, ci_senders: list, flagged: set) -> None:
        if not flagged:
            return
        cfg = self.cfg
        dii = df.build_dii_raw(flagged, self.members_by_group, self.sim.now + self.tim_us,
                               cfg.dii_slot_us, cfg.dii_group_cap)
        if dii.end > dp.plan.reserved[1]:
            raise SimulationError(f"DII RAW of {dii.slot_count} slots overflows its reservation")
        # the sized DII RAW and its TIM take the place of the reservation
        tim = Beacon(self.sim.now, self.tim_us, cfg.tim_beacon_bytes, "tim", len(dp.plan.raws))
        dp.plan.reserved = None
        dp.plan.tim_beacons.append(tim)
        dp.plan.raws.append(dii)
        reporters = [d for d in ci_senders if d.id in dii.assignment]
        reports = {d.id: df.DeadlineReport(d.id, d.queue[0].arrival, d.queue[0].expiry_dtim)
                   for d in reporters}
        self.net.beacon(tim, reporters)
        for dev_id, report in df.run_dii_raw(dii, reports):
            slot = dii.assignment[dev_id]
            self.sim.schedule(dii.slot_start(slot), EventKind.TX_START, self._send_report,
                              self.net.devices[dev_id], report, dii.slot_end(slot), k)

    def _send_report(self, d: Device, report, slot_end: int, k: int) -> None:
        d.ledger.set_state(TX, self.sim.now)

        def received(tx, outcome):
            d.ledger.set_state(SLEEP, self.sim.now)
            self._set_status(d, df.DsmdStatus.TRANSMITTING)
            index = report.expiry_dtim - (k + 1)
            if index >= 0:
                self.classes.insert(d, index)

        self.net.channel.begin_transmission(d, self.cfg.dii_packet_bytes, RawKind.DII, slot_end,
                                            on_end=received)

    # --- DRA --------------------------------------------------------------------
    def _send_dra(self, d: Device, slot_end: int) -> None:
        if d.status is not df.DsmdStatus.TRANSMITTING or not d.queue:
            raise SimulationError(f"DRA grant for device {d.id} which has nothing to send")
        packet = d.queue[0]
        d.ledger.set_state(TX, self.sim.now)
        p = self.net.dcf

        def data_end(tx, outcome):
            if outcome is not Outcome.SUCCESS:
                raise SimulationError(f"collision in DRA slot of device {d.id}")
            now = self.sim.now
            d.ledger.set_state(IDLE, now)
            self.sim.schedule(now + p.sifs_us + p.ack_us, EventKind.TIMER, acked, now)

        def acked(served_at):
            d.ledger.set_state(RX, served_at + p.sifs_us)
            d.ledger.set_state(SLEEP, self.sim.now)
            self.net.deliver(d, packet, served_at)
            self._settle(d)

        self.net.channel.begin_transmission(d, p.data_bytes, RawKind.DRA, slot_end,
                                            on_end=data_end, expects_ack=True)


def run_simulation(cfg: Config, spec: ScenarioSpec, record: bool = False) -> SimulationResult:
    return Network(cfg, spec, record=record).run()


def scenario(cfg: Config, scheme: str, n_dsmd: int, x_dtims: int, seed: int) -> ScenarioSpec:
    return ScenarioSpec(scheme, n_dsmd, x_dtims, seed, cfg.n_non_dsmd, cfg.deadline_dtims)
