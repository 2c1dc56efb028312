"""Parameter sweeps: run the scenario matrix, write CSV and a manifest, compare schemes."""

from __future__ import annotations

import csv
import io
import json
import logging
import platform
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import Config, format_value
from .metrics import RunSummary
from .simulation import run_simulation, scenario

log = logging.getLogger(__name__)

# config keys repeated on every row so a CSV is self-describing
ECHO_KEYS = ("deadline_dtims", "arrival_cycle_dtims", "nra_min_us", "collision_threshold",
             "basic_groups", "n_non_dsmd", "sim_time_us")
HEADER = RunSummary.field_names() + [f"cfg_{k}" for k in ECHO_KEYS]

SAVINGS_NOTE = "savings_pct = (basic - dearf) / dearf * 100; pdr_delta_pp = dearf - basic"


def sweep_points(cfg: Config) -> list[tuple[str, int, int, int]]:
    """Every ``(scheme, n_dsmd, x, seed)`` of the configured matrix, in output order."""
    seeds = range(cfg.seed_base, cfg.seed_base + cfg.seeds)
    pts = {(s, n, x, seed) for s in cfg.schemes for n in cfg.dsmd_counts
           for x in cfg.x_values for seed in seeds}
    return sorted(pts, key=lambda p: (p[1], p[2], p[3], p[0]))


def _run_point(args) -> tuple[RunSummary, float]:
    cfg, point = args
    t = time.perf_counter()
    summary = run_simulation(cfg, scenario(cfg, *point)).summary
    return summary, time.perf_counter() - t


def run_sweep(cfg: Config, workers: int | None = None, progress=None) -> list[tuple[RunSummary, float]]:
    """Run every sweep point; results come back in ``sweep_points`` order regardless of workers."""
    points = sweep_points(cfg)
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, p) for p in points]
    if workers <= 1:
        out = []
        for job in jobs:
            out.append(_run_point(job))
            if progress:
                progress(out[-1][0], out[-1][1])
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(_run_point, jobs))
    if progress:
        for summary, dt in out:
            progress(summary, dt)
    return out


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(summaries, cfg: Config) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    echo = [format_value(getattr(cfg, k)) for k in ECHO_KEYS]
    for s in summaries:
        w.writerow([_cell(v) for v in s.as_dict().values()] + echo)
    return buf.getvalue()


def write_results(out_dir, cfg: Config, results, elapsed_s: float) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    csv_path.write_bytes(rows_to_csv([s for s, _ in results], cfg).encode("utf-8"))
    manifest = {
        "tool": "dearfsim",
        "version": __version__,
        "python": platform.python_version(),
        "command": sys.argv,
        "config": cfg.as_dict(),
        "seeds": list(range(cfg.seed_base, cfg.seed_base + cfg.seeds)),
        "runs": len(results),
        "elapsed_s": round(elapsed_s, 3),
        "run_seconds": {f"{s.scheme}/{s.n_dsmd}/{s.x_dtims}/{s.seed}": round(dt, 3) for s, dt in results},
        "csv": csv_path.name,
        "savings": SAVINGS_NOTE,
    }
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, man_path


# --- comparison ---------------------------------------------------------------

COMPARE_METRICS = [
    ("energy_per_packet_dsmd", "avg_energy_per_packet_dsmd_uj"),
    ("energy_per_dsmd", "avg_energy_per_dsmd_mj"),
    ("delay_dsmd", "avg_delay_per_packet_dsmd_s"),
    ("active_time_dsmd", "avg_active_time_dsmd_s"),
    ("energy_per_packet_non_dsmd", "avg_energy_per_packet_non_dsmd_uj"),
    ("delay_non_dsmd", "avg_delay_per_packet_non_dsmd_s"),
]


def savings_pct(basic, dearf):
    if basic is None or dearf is None or dearf == 0:
        return None
    return (basic - dearf) / dearf * 100.0


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    return float(s) if s not in ("", None) else None


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def compare_rows(rows: list[dict]) -> list[dict]:
    """Pair basic/dearf rows on ``(n_dsmd, x, seed)`` and average the savings per sweep point.

    Unpaired rows are logged and skipped.
    """
    by_key = defaultdict(dict)
    for r in rows:
        by_key[(int(r["n_dsmd"]), int(r["x_dtims"]), int(r["seed"]))][r["scheme"]] = r
    points = defaultdict(list)
    for key in sorted(by_key):
        pair = by_key[key]
        if set(pair) != {"basic", "dearf"}:
            log.warning("unpaired row for n_dsmd=%d x=%d seed=%d skipped", *key)
            continue
        b, d = pair["basic"], pair["dearf"]
        rec = {name: savings_pct(_num(b[col]), _num(d[col])) for name, col in COMPARE_METRICS}
        pb, pd = _num(b["pdr_within_deadline_pct"]), _num(d["pdr_within_deadline_pct"])
        rec["pdr_basic"], rec["pdr_dearf"] = pb, pd
        rec["pdr_delta_pp"] = None if pb is None or pd is None else pd - pb
        points[key[:2]].append(rec)
    table = []
    for (n, x), recs in sorted(points.items()):
        row = {"n_dsmd": n, "x_dtims": x, "seeds": len(recs)}
        for k in recs[0]:
            row[k] = _mean(r[k] for r in recs)
        table.append(row)
    return table


def format_comparison(table: list[dict]) -> str:
    cols = ["n_dsmd", "x_dtims", "seeds"] + [n for n, _ in COMPARE_METRICS] + [
        "pdr_basic", "pdr_dearf", "pdr_delta_pp"]
    lines = [f"# {SAVINGS_NOTE}", ",".join(cols)]
    for row in table:
        lines.append(",".join(_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"
