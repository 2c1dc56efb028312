"""Per-run accumulation of delay, energy and delivery metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .engine import US_PER_S, SimulationError
from .traffic import Packet, PacketState


@dataclass(frozen=True)
class RunSummary:
    scheme: str
    n_dsmd: int
    x_dtims: int
    seed: int
    # energy per packet: active (non-sleep) energy spent on every resolved
    # packet while it was head of line, divided by the packets delivered
    avg_energy_per_packet_dsmd_uj: float | None
    # ledger total over the run (sleep included) / number of DSMDs
    avg_energy_per_dsmd_mj: float | None
    avg_delay_per_packet_dsmd_s: float | None
    # delivered within deadline / resolved (delivered + missed + dropped)
    pdr_within_deadline_pct: float | None
    avg_active_time_dsmd_s: float | None
    avg_energy_per_packet_non_dsmd_uj: float | None
    avg_delay_per_packet_non_dsmd_s: float | None
    avg_active_energy_per_dsmd_mj: float | None
    dsmd_arrived: int
    dsmd_served: int
    dsmd_served_in_deadline: int
    dsmd_missed: int
    dsmd_dropped: int
    dsmd_in_flight: int
    non_dsmd_arrived: int
    non_dsmd_served: int
    non_dsmd_dropped: int
    non_dsmd_in_flight: int
    nra_collision_events: int
    contention_free_collisions: int
    events_dispatched: int

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Tally:
    arrived: int = 0
    served: int = 0
    in_deadline: int = 0
    missed: int = 0
    dropped: int = 0
    energy_nj: int = 0
    delays: list = field(default_factory=list)
    active: list = field(default_factory=list)

    @property
    def resolved(self) -> int:
        return self.served + self.missed + self.dropped


def _mean(xs):
    return sum(xs) / len(xs) if xs else None


class MetricsCollector:
    def __init__(self, dtim_us: int):
        self.dtim_us = dtim_us
        self.dsmd = _Tally()
        self.non_dsmd = _Tally()
        self._seen: set[int] = set()

    def _tally(self, packet: Packet) -> _Tally:
        return self.dsmd if packet.deadline_dtims is not None else self.non_dsmd

    def record_arrival(self, packet: Packet, ledger) -> None:
        packet.active_time_mark = ledger.active_time_at(packet.arrival)
        self._tally(packet).arrived += 1

    def start_service(self, packet: Packet, ledger, at: int) -> None:
        """Packet became head of line at ``at``: energy from here on is charged to it."""
        packet.energy_mark = ledger.active_energy_at(at)

    def _terminal(self, packet: Packet, ledger, now: int) -> _Tally:
        key = id(packet)
        if key in self._seen:
            raise SimulationError(f"packet of device {packet.owner} arriving at {packet.arrival} recorded twice")
        self._seen.add(key)
        t = self._tally(packet)
        t.energy_nj += ledger.active_energy_at(now) - packet.energy_mark
        return t

    def record_delivery(self, packet: Packet, served_at: int, ledger, now: int | None = None) -> None:
        if served_at < packet.arrival:
            raise SimulationError("packet served before it arrived")
        now = served_at if now is None else now
        t = self._terminal(packet, ledger, now)
        packet.served_at = served_at
        packet.state = PacketState.SERVED
        t.served += 1
        if packet.within_deadline(self.dtim_us):
            t.in_deadline += 1
        t.delays.append(served_at - packet.arrival)
        # the device stays up through SIFS + ACK, so activity runs to ``now``
        t.active.append(ledger.active_time_at(now) - packet.active_time_mark)

    def record_miss(self, packet: Packet, ledger, now: int, dropped: bool = False) -> None:
        t = self._terminal(packet, ledger, now)
        if dropped:
            packet.state = PacketState.DROPPED
            t.dropped += 1
        else:
            packet.state = PacketState.MISSED
            t.missed += 1

    def dsmd_delays(self) -> list[int]:
        return list(self.dsmd.delays)

    def finalize(self, spec, dsmd_ledgers, extra: dict) -> RunSummary:
        d, n = self.dsmd, self.non_dsmd
        dsmd_energy = [lg.energy_nj() for lg in dsmd_ledgers]
        sleep_draw = [lg.draws[3] for lg in dsmd_ledgers]
        active_energy = [e - lg.times[3] * s for e, lg, s in zip(dsmd_energy, dsmd_ledgers, sleep_draw)]

        def per_packet(t):
            return t.energy_nj / t.served / 1000 if t.served else None

        def seconds(xs):
            m = _mean(xs)
            return None if m is None else m / US_PER_S

        n_dev = len(dsmd_ledgers)
        return RunSummary(
            scheme=spec.scheme, n_dsmd=spec.n_dsmd, x_dtims=spec.x_dtims, seed=spec.seed,
            avg_energy_per_packet_dsmd_uj=per_packet(d),
            avg_energy_per_dsmd_mj=sum(dsmd_energy) / n_dev / 1e6 if n_dev else None,
            avg_delay_per_packet_dsmd_s=seconds(d.delays),
            pdr_within_deadline_pct=100.0 * d.in_deadline / d.resolved if d.resolved else None,
            avg_active_time_dsmd_s=seconds(d.active),
            avg_energy_per_packet_non_dsmd_uj=per_packet(n),
            avg_delay_per_packet_non_dsmd_s=seconds(n.delays),
            avg_active_energy_per_dsmd_mj=sum(active_energy) / n_dev / 1e6 if n_dev else None,
            dsmd_arrived=d.arrived, dsmd_served=d.served, dsmd_served_in_deadline=d.in_deadline,
            dsmd_missed=d.missed, dsmd_dropped=d.dropped, dsmd_in_flight=d.arrived - d.resolved,
            non_dsmd_arrived=n.arrived, non_dsmd_served=n.served, non_dsmd_dropped=n.dropped,
            non_dsmd_in_flight=n.arrived - n.resolved,
            **extra,
        )
