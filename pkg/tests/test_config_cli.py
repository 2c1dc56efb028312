import csv

import pytest

from dearfsim import cli
from dearfsim.config import Config, ConfigError, load_config, parse_lines, render
from dearfsim.sweep import compare_rows, read_rows, sweep_points

SMALL = ["sim_time_us = 3200000", "dsmd_counts = 20", "n_non_dsmd = 10", "seeds = 1"]


def test_defaults():
    c = Config()
    assert (c.cw_min, c.cw_max, c.retry_limit) == (15, 1023, 4)
    assert c.airtime(c.tim_beacon_bytes) == 764
    assert c.ci_groups == 100
    assert c.dcf.exchange_us == 1231 + 160 + 173
    assert len(sweep_points(c)) == 2 * 5 * 3 * 5


def test_parse_lines_anchors_errors():
    with pytest.raises(ConfigError, match=r"f.cfg:3: unknown key 'bogus'"):
        parse_lines(["# c", "cw_min = 15", "bogus = 1"], "f.cfg")
    with pytest.raises(ConfigError, match=r"f.cfg:1: "):
        parse_lines(["cw_min: 15"], "f.cfg")
    with pytest.raises(ConfigError, match=r"f.cfg:2: cw_min"):
        parse_lines(["", "cw_min = fifteen"], "f.cfg")


def test_file_then_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("dsmd_counts = 200, 400  # two points\nschemes = basic\n")
    c = load_config(f, ["dsmd_counts=600"])
    assert c.dsmd_counts == [600] and c.schemes == ["basic"]


def test_semantic_validation():
    with pytest.raises(ConfigError):
        Config(cw_min=16)
    with pytest.raises(ConfigError):
        Config(power_tx_mw=100)
    with pytest.raises(ConfigError):
        Config(nra_min_us=1_590_000)
    with pytest.raises(ConfigError):
        Config(dra_slot_us=1000)
    with pytest.raises(ConfigError):
        Config(schemes=["basic", "other"])


def test_render_round_trips():
    c = Config(dsmd_counts=[5, 7], slot_offset="3")
    text = render(c)
    assert "# --- DEARF parameter ---" in text
    assert load_config(None, [l for l in text.splitlines() if "=" in l]) == c


def test_print_config_exit_zero(capsys):
    assert cli.main(["run", "--print-config", "--set", "cw_min=31"]) == 0
    assert "cw_min = 31" in capsys.readouterr().out


def test_malformed_config_exit_2(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("cw_min = 15\nnot a setting\n")
    assert cli.main(["run", "--config", str(f)]) == 2
    assert "bad.cfg:2:" in capsys.readouterr().err


def test_unknown_override_exit_2(capsys):
    assert cli.main(["run", "--set", "nope=1"]) == 2


def test_simulation_failure_exit_3(monkeypatch, tmp_path, capsys):
    from dearfsim import sweep
    from dearfsim.engine import SimulationError

    def broken(*a, **k):
        err = SimulationError("scheduler invariant")
        err.trace = ["       10 us  tx-end"]
        raise err

    monkeypatch.setattr(sweep, "run_sweep", broken)
    assert cli.main(["run", "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "scheduler invariant" in err and "tx-end" in err


def test_run_writes_csv_and_manifest(tmp_path):
    args = ["run", "--out", str(tmp_path)] + [a for s in SMALL for a in ("--set", s)]
    assert cli.main(args) == 0
    rows = read_rows(tmp_path / "results.csv")
    assert len(rows) == 2 * 3
    assert (tmp_path / "manifest.json").exists()
    raw = (tmp_path / "results.csv").read_bytes()
    assert b"\r\n" not in raw


def test_sweep_filter_rows(tmp_path):
    args = ["run", "--out", str(tmp_path), "--set", "dsmd_counts=20", "--set", "schemes=basic",
            "--set", "sim_time_us=1600000", "--seeds", "1"]
    assert cli.main(args) == 0
    assert len(read_rows(tmp_path / "results.csv")) == 3


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        args = ["run", "--out", str(tmp_path / name)] + [a for s in SMALL for a in ("--set", s)]
        assert cli.main(args) == 0
        outs.append((tmp_path / name / "results.csv").read_bytes())
    assert outs[0] == outs[1]


def test_compare_self_is_zero_and_unpaired_skipped(tmp_path, capsys):
    base = {"n_dsmd": "200", "x_dtims": "1", "seed": "1",
            "avg_energy_per_packet_dsmd_uj": "10.0", "avg_energy_per_dsmd_mj": "2.0",
            "avg_delay_per_packet_dsmd_s": "1.5", "avg_active_time_dsmd_s": "0.01",
            "avg_energy_per_packet_non_dsmd_uj": "3.0", "avg_delay_per_packet_non_dsmd_s": "1.0",
            "pdr_within_deadline_pct": "90.0"}
    rows = [dict(base, scheme="basic"), dict(base, scheme="dearf"),
            dict(base, scheme="basic", seed="2")]
    table = compare_rows(rows)
    assert len(table) == 1 and table[0]["seeds"] == 1
    assert table[0]["energy_per_packet_dsmd"] == 0.0
    assert table[0]["pdr_delta_pp"] == 0.0
    path = tmp_path / "r.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    assert cli.main(["compare", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# savings_pct = (basic - dearf) / dearf * 100")


def test_compare_savings_formula():
    base = {"n_dsmd": "1000", "x_dtims": "1", "seed": "1", "avg_energy_per_dsmd_mj": "",
            "avg_delay_per_packet_dsmd_s": "1", "avg_active_time_dsmd_s": "1",
            "avg_energy_per_packet_non_dsmd_uj": "1", "avg_delay_per_packet_non_dsmd_s": "1",
            "pdr_within_deadline_pct": "27"}
    b = dict(base, scheme="basic", avg_energy_per_packet_dsmd_uj="13")
    d = dict(base, scheme="dearf", avg_energy_per_packet_dsmd_uj="10", pdr_within_deadline_pct="90")
    row = compare_rows([b, d])[0]
    assert row["energy_per_packet_dsmd"] == pytest.approx(30.0)
    assert row["energy_per_dsmd"] is None
    assert row["pdr_delta_pp"] == pytest.approx(63.0)


def test_missing_csv_exit_2(tmp_path):
    assert cli.main(["compare", str(tmp_path / "none.csv")]) == 2
