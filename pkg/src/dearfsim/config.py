"""Run configuration: flat ``key = value`` files with ``#`` comments.

Every key has a default; unknown keys are rejected. Lists are
comma-separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dcf import DcfParams
from .phy import PhyParams, PowerProfile, tx_duration

MAC_PHY = "802.11ah MAC/PHY parameter, common to both schemes"
DEARF = "DEARF parameter"
SCENARIO = "evaluation scenario"
MODEL = "model choice (not fixed by the scheme definition)"
RUNNER = "runner setting"


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries a ``path:line:`` anchor when known."""


def _opt(default, origin, **kw):
    if isinstance(default, list):
        return field(default_factory=lambda d=default: list(d), metadata={"origin": origin, **kw})
    return field(default=default, metadata={"origin": origin, **kw})


@dataclass(frozen=True)
class Config:
    cw_min: int = _opt(15, MAC_PHY)
    cw_max: int = _opt(1023, MAC_PHY)
    retry_limit: int = _opt(4, MAC_PHY)
    sim_time_us: int = _opt(18_000_000, MAC_PHY)
    sifs_us: int = _opt(160, MAC_PHY)
    difs_us: int = _opt(274, MAC_PHY)
    phy_rate_bps: int = _opt(650_000, MAC_PHY, note="MCS0")
    packet_bytes: int = _opt(100, MAC_PHY)
    dtim_interval_us: int = _opt(1_600_000, MAC_PHY)
    dtim_beacon_bytes: int = _opt(102, MAC_PHY)
    tim_beacon_bytes: int = _opt(62, MAC_PHY)
    raw_us: int = _opt(200_000, MAC_PHY)
    raw_slot_us: int = _opt(19_000, MAC_PHY)
    n_non_dsmd: int = _opt(200, MAC_PHY)
    dsmd_counts: list = _opt([200, 400, 600, 800, 1000], MAC_PHY)
    power_rx_mw: int = _opt(145, MAC_PHY)
    power_tx_mw: int = _opt(285, MAC_PHY)
    power_idle_mw: int = _opt(70, MAC_PHY)
    power_sleep_mw: int = _opt(5, MAC_PHY)

    ci_raw_us: int = _opt(18_000, DEARF)
    ci_slot_us: int = _opt(180, DEARF)
    dii_slot_us: int = _opt(240, DEARF)
    dra_slot_us: int = _opt(1684, DEARF)
    nra_slot_us: int = _opt(19_000, DEARF)
    ci_beacon_bytes: int = _opt(10, DEARF)
    dii_packet_bytes: int = _opt(10, DEARF)

    x_values: list = _opt([1, 3, 5], SCENARIO, note="DTIMs across which DSMD arrivals are spread")
    schemes: list = _opt(["basic", "dearf"], SCENARIO)

    backoff_slot_us: int = _opt(52, MODEL, note="aSlotTime")
    ack_bytes: int = _opt(14, MODEL)
    special_beacon_bytes: int = _opt(62, MODEL, note="sized like a TIM beacon")
    nra_min_us: int = _opt(200_000, MODEL, note="T: minimum NRA airtime per DTIM")
    collision_threshold: int = _opt(50, MODEL, note="lambda: NRA collision events per DTIM")
    deadline_dtims: int = _opt(5, MODEL)
    arrival_cycle_dtims: int = _opt(5, MODEL, note="period of the DSMD arrival cycle")
    basic_groups: int = _opt(7, MODEL, note="RAW groups in the standard scheme")
    slot_offset: str = _opt("rotate", MODEL, note="'rotate' or a fixed integer N_offset")
    dii_group_cap: int = _opt(100, MODEL, note="max CI groups served by one DII RAW")

    seeds: int = _opt(5, RUNNER)
    seed_base: int = _opt(1, RUNNER)
    workers: int = _opt(1, RUNNER)
    out_dir: str = _opt("results", RUNNER)

    def __post_init__(self):
        self.validate()

    # derived quantities -------------------------------------------------
    def airtime(self, size_bytes: int) -> int:
        return tx_duration(size_bytes, self.phy_rate_bps)

    @property
    def phy(self) -> PhyParams:
        return PhyParams(self.phy_rate_bps, self.sifs_us, self.difs_us, self.backoff_slot_us)

    @property
    def power(self) -> PowerProfile:
        return PowerProfile(self.power_tx_mw, self.power_rx_mw, self.power_idle_mw, self.power_sleep_mw)

    @property
    def dcf(self) -> DcfParams:
        return DcfParams(self.cw_min, self.cw_max, self.retry_limit, self.difs_us, self.sifs_us,
                         self.backoff_slot_us, self.airtime(self.packet_bytes),
                         self.airtime(self.ack_bytes), self.packet_bytes)

    @property
    def fixed_offset(self) -> int | None:
        return None if self.slot_offset == "rotate" else int(self.slot_offset)

    @property
    def ci_groups(self) -> int:
        return self.ci_raw_us // self.ci_slot_us

    def validate(self) -> None:
        try:
            self.phy
            self.power
            self.dcf
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        positive = ["sim_time_us", "dtim_interval_us", "packet_bytes", "raw_us", "raw_slot_us",
                    "ci_raw_us", "ci_slot_us", "dii_slot_us", "dra_slot_us", "nra_slot_us",
                    "dtim_beacon_bytes", "tim_beacon_bytes", "ci_beacon_bytes", "dii_packet_bytes",
                    "ack_bytes", "special_beacon_bytes", "deadline_dtims", "arrival_cycle_dtims",
                    "basic_groups", "seeds", "workers", "dii_group_cap"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_non_dsmd < 0 or self.collision_threshold < 0 or self.nra_min_us < 0:
            raise ConfigError("n_non_dsmd, collision_threshold and nra_min_us must be non-negative")
        if any(n < 0 for n in self.dsmd_counts):
            raise ConfigError("dsmd_counts must be non-negative")
        if not self.x_values or any(x < 1 for x in self.x_values):
            raise ConfigError("x_values must be >= 1")
        bad = set(self.schemes) - {"basic", "dearf"}
        if bad or not self.schemes:
            raise ConfigError(f"unknown scheme(s): {sorted(bad)}")
        if self.slot_offset != "rotate":
            try:
                if int(self.slot_offset) < 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("slot_offset must be 'rotate' or a non-negative integer") from None
        if self.raw_slot_us > self.raw_us:
            raise ConfigError("raw_slot_us exceeds raw_us")
        if self.ci_slot_us > self.ci_raw_us:
            raise ConfigError("ci_slot_us exceeds ci_raw_us")
        if self.ci_slot_us < self.airtime(self.ci_beacon_bytes):
            raise ConfigError("CI slot is shorter than the CI beacon airtime")
        if self.dii_slot_us < self.airtime(self.dii_packet_bytes):
            raise ConfigError("DII slot is shorter than the DII report airtime")
        if self.dra_slot_us < self.dcf.exchange_us:
            raise ConfigError("DRA slot cannot hold data + SIFS + ACK")
        if self.raw_slot_us < self.difs_us + self.dcf.exchange_us:
            raise ConfigError("RAW slot cannot hold a single DCF exchange")
        if self.nra_min_us < self.airtime(self.tim_beacon_bytes) + self.nra_slot_us:
            raise ConfigError("nra_min_us must fit at least one announced NRA slot")
        header = self.airtime(self.dtim_beacon_bytes) + self.ci_raw_us + self.airtime(self.special_beacon_bytes)
        if header + self.nra_min_us > self.dtim_interval_us:
            raise ConfigError("nra_min_us does not fit in the DTIM interval")

    # (de)serialisation ------------------------------------------------------
    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


def _field_map():
    return {f.name: f for f in fields(Config)}


def _coerce(name: str, raw: str):
    f = _field_map()[name]
    raw = raw.strip()
    default = f.default_factory() if f.default is dataclasses.MISSING else f.default
    try:
        if isinstance(default, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return [int(s) for s in items]
            return [s.lower() for s in items]
        if isinstance(default, int):
            return int(raw.replace("_", ""))
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def parse_lines(lines, source: str = "<config>") -> dict:
    values = {}
    known = _field_map()
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {text!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path=None, overrides=()) -> Config:
    """Defaults, then the file at ``path``, then ``KEY=VALUE`` overrides."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{p}: {exc.strerror}") from None
        values.update(parse_lines(text.splitlines(), str(p)))
    for i, item in enumerate(overrides, 1):
        values.update(parse_lines([item], f"--set #{i}"))
    try:
        return Config(**values)
    except ConfigError as exc:
        where = f"{path}: " if path is not None else ""
        raise ConfigError(f"{where}{exc}") from None


def format_value(value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def render(cfg: Config) -> str:
    """Config file text with every value and a comment naming where it comes from."""
    out = []
    section = None
    for f in fields(Config):
        origin = f.metadata["origin"]
        if origin != section:
            out.append(f"\n# --- {origin} ---")
            section = origin
        note = f.metadata.get("note")
        line = f"{f.name} = {format_value(getattr(cfg, f.name))}"
        out.append(f"{line:<40s}# {note}" if note else line)
    return "\n".join(out).lstrip() + "\n"
