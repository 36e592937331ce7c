import json
import os

import pytest

from qthermo.cli import main
from qthermo.config import (
    apply_assignment,
    load_config,
    parse_grid,
    parse_scalar,
)
from qthermo.errors import ConfigError

SECTION3 = """\
protocol = "section3"

[section3]
e0 = 10.0
beta = 1.0
tau_ramp = 5.0
policy = "sLPM"

[numerics]
seed = 3
"""

PROCESS_A = """\
protocol = "process_a"

[process_a]
e = 1.0
beta = 1.0
policy = "LPM"
"""

NEEDLE = """\
protocol = "needle"

[needle]
n_z = 21
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigLoading:
    def test_roundtrip(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        assert cfg.protocol == "section3"
        assert cfg.params["e0"] == 10.0
        assert cfg.params["policy"] == "sLPM"
        assert cfg.seed == 3
        assert cfg.tol is None

    def test_missing_protocol(self, tmp_path):
        with pytest.raises(ConfigError, match="protocol"):
            load_config(write(tmp_path, "c.toml", "[section3]\ne0 = 1.0\n"))

    def test_unknown_protocol(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown protocol"):
            load_config(write(tmp_path, "c.toml", 'protocol = "warp"\n'))

    def test_unknown_top_level_field(self, tmp_path):
        text = SECTION3 + "\nstray = 1\n"
        with pytest.raises(ConfigError, match="stray"):
            load_config(write(tmp_path, "c.toml", text))

    def test_unknown_block_field(self, tmp_path):
        text = SECTION3.replace("policy = \"sLPM\"", "polcy = \"sLPM\"")
        with pytest.raises(ConfigError, match="polcy"):
            load_config(write(tmp_path, "c.toml", text))

    def test_missing_required_field(self, tmp_path):
        text = 'protocol = "section3"\n\n[section3]\ne0 = 10.0\n'
        with pytest.raises(ConfigError, match="beta"):
            load_config(write(tmp_path, "c.toml", text))

    def test_bad_policy_value(self, tmp_path):
        text = SECTION3.replace('"sLPM"', '"strict"')
        with pytest.raises(ConfigError, match="policy"):
            load_config(write(tmp_path, "c.toml", text))

    def test_type_errors(self, tmp_path):
        text = 'protocol = "section3"\n\n[section3]\ne0 = "big"\nbeta = 1.0\n'
        with pytest.raises(ConfigError, match="e0"):
            load_config(write(tmp_path, "c.toml", text))
        text = SECTION3 + "\n[output]\ndir = 4\n"
        with pytest.raises(ConfigError, match="output.dir"):
            load_config(write(tmp_path, "c.toml", text))

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="TOML"):
            load_config(write(tmp_path, "c.toml", "protocol = [unclosed\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "absent.toml"))


class TestOverrides:
    def test_scalar_parsing(self):
        assert parse_scalar("3") == 3
        assert parse_scalar("2.5") == 2.5
        assert parse_scalar("true") is True
        assert parse_scalar("sLPM") == "sLPM"
        assert parse_scalar('"quoted"') == "quoted"

    def test_bare_key_hits_protocol_block(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        cfg = apply_assignment(cfg, "tau_ramp", 42.0)
        assert cfg.params["tau_ramp"] == 42.0

    def test_bare_key_falls_back_to_numerics(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        cfg = apply_assignment(cfg, "seed", 9)
        assert cfg.seed == 9

    def test_qualified_keys(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        cfg = apply_assignment(cfg, "numerics.tol", 1e-8)
        cfg = apply_assignment(cfg, "section3.e0", 4.0)
        cfg = apply_assignment(cfg, "output.dir", "elsewhere")
        assert cfg.tol == 1e-8
        assert cfg.params["e0"] == 4.0
        assert cfg.out_dir == "elsewhere"

    def test_wrong_block_rejected(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        with pytest.raises(ConfigError, match="does not match"):
            apply_assignment(cfg, "erasure.tau", 1.0)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.toml", SECTION3))
        with pytest.raises(ConfigError, match="unknown override"):
            apply_assignment(cfg, "warp_factor", 9)

    def test_grid_parsing(self):
        grid = parse_grid("tau_ramp=1.0,10.0; policy=sLPM,LPM")
        assert grid == [("tau_ramp", [1.0, 10.0]), ("policy", ["sLPM", "LPM"])]

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            parse_grid("  ;  ")
        with pytest.raises(ConfigError):
            parse_grid("tau_ramp=")


class TestSimulateCommand:
    def test_writes_ledger_and_summary(self, tmp_path):
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        out = str(tmp_path / "run")
        assert main(["simulate", cfg, "--out", out]) == 0
        ledger = (tmp_path / "run" / "ledger.csv").read_text()
        assert ledger.splitlines()[0] == "t,E,W_cum,Q_cum_0,S,sigma_0,event"
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert summary["protocol"] == "process_a"
        assert summary["policy"] == "LPM"
        assert summary["net_work_extracted"] == pytest.approx(0.5, abs=1e-9)
        assert summary["second_law_consistent"] is False
        assert summary["audit"]["passed"] is True

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        assert main(["simulate", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["simulate", cfg, "--out", str(tmp_path / "b")]) == 0
        for name in ("ledger.csv", "summary.json"):
            first = (tmp_path / "a" / name).read_bytes()
            second = (tmp_path / "b" / name).read_bytes()
            assert first == second

    def test_seed_changes_selective_outcomes(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        outcomes = set()
        for seed in range(6):
            out = str(tmp_path / f"s{seed}")
            assert main(["simulate", cfg, "--seed", str(seed),
                         "--out", out]) == 0
            summary = json.loads((tmp_path / f"s{seed}" / "summary.json")
                                 .read_text())
            assert summary["seed"] == seed
            outcomes.add(tuple(summary["outcomes"]))
        assert len(outcomes) > 1

    def test_set_override_applies(self, tmp_path):
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        out = str(tmp_path / "o")
        assert main(["simulate", cfg, "--set", "policy=sLPM",
                     "--out", out]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["policy"] == "sLPM"
        assert summary["second_law_consistent"] is True

    def test_missing_field_exits_2_without_outputs(self, tmp_path,
                                                   monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write(tmp_path, "c.toml",
                    'protocol = "section3"\n\n[section3]\ne0 = 10.0\n')
        assert main(["simulate", cfg]) == 2
        assert not (tmp_path / "qthermo_out").exists()

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.toml")]) == 2

    def test_protocol_failure_exits_3(self, tmp_path):
        text = PROCESS_A + "n_cycles = 0\n"
        cfg = write(tmp_path, "c.toml", text)
        assert main(["simulate", cfg, "--out", str(tmp_path / "x")]) == 3
        assert not (tmp_path / "x").exists()

    def test_out_of_range_tol_exits_2(self, tmp_path):
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        assert main(["simulate", cfg, "--tol", "0.5",
                     "--out", str(tmp_path / "x")]) == 2

    def test_env_var_and_flag_precedence(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        monkeypatch.setenv("QTHERMO_OUT", str(tmp_path / "fromenv"))
        assert main(["simulate", cfg]) == 0
        assert (tmp_path / "fromenv" / "summary.json").exists()
        assert main(["simulate", cfg, "--out", str(tmp_path / "fromflag")]) == 0
        assert (tmp_path / "fromflag" / "summary.json").exists()

    def test_config_output_dir_used_last(self, tmp_path, monkeypatch):
        monkeypatch.delenv("QTHERMO_OUT", raising=False)
        text = PROCESS_A + f'\n[output]\ndir = "{tmp_path / "fromcfg"}"\n'
        cfg = write(tmp_path, "c.toml", text)
        assert main(["simulate", cfg]) == 0
        assert (tmp_path / "fromcfg" / "ledger.csv").exists()

    def test_floats_serialized_round_trip_exact(self, tmp_path):
        import math
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        out = str(tmp_path / "fmt")
        assert main(["simulate", cfg, "--set", "policy=sLPM",
                     "--out", out]) == 0
        text = (tmp_path / "fmt" / "summary.json").read_text()
        assert "%.17g" % (2.0 * math.log(2.0)) in text
        parsed = json.loads(text)
        assert parsed["measurement_charges"] == 2.0 * math.log(2.0)


class TestSweepCommand:
    def test_grid_rows_and_monotone_extraction(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        out = str(tmp_path / "swp")
        assert main(["sweep", cfg, "--grid", "tau_ramp=1.0,5.0,20.0",
                     "--out", out]) == 0
        lines = (tmp_path / "swp" / "sweep.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[0] == "index"
        assert header[1] == "grid.tau_ramp"
        col = header.index("raw_work_extracted")
        values = [float(line.split(",")[col]) for line in lines[1:]]
        assert len(values) == 3
        assert values[0] < values[1] < values[2]

    def test_policy_sweep_verdicts(self, tmp_path):
        text = """\
protocol = "process_b"

[process_b]
e0 = 10.0
beta = 1.0
tau_ramp = 20.0
"""
        cfg = write(tmp_path, "c.toml", text)
        out = str(tmp_path / "swp")
        assert main(["sweep", cfg, "--grid", "policy=sLPM,LPM",
                     "--out", out]) == 0
        lines = (tmp_path / "swp" / "sweep.csv").read_text().splitlines()
        header = lines[0].split(",")
        col = header.index("second_law_consistent")
        verdicts = [line.split(",")[col] for line in lines[1:]]
        assert verdicts == ["true", "false"]

    def test_in_row_failures_do_not_abort(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        out = str(tmp_path / "swp")
        assert main(["sweep", cfg, "--grid", "tau_ramp=-1.0,5.0",
                     "--out", out]) == 0
        lines = (tmp_path / "swp" / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3
        header = lines[0].split(",")
        err_col = header.index("error")
        first = lines[1].split(",")
        assert first[err_col] != "" or '"' in lines[1]
        good = lines[2].split(",")
        assert good[err_col] == ""

    def test_empty_grid_exits_2(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        assert main(["sweep", cfg, "--grid", " ; "]) == 2

    def test_bad_grid_key_exits_2(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SECTION3)
        assert main(["sweep", cfg, "--grid", "nonsense=1,2"]) == 2


class TestNeedleCommand:
    def test_profile_and_summary(self, tmp_path):
        cfg = write(tmp_path, "c.toml", NEEDLE)
        out = str(tmp_path / "ndl")
        assert main(["needle", cfg, "--out", out]) == 0
        lines = (tmp_path / "ndl" / "needle_profile.csv").read_text().splitlines()
        assert lines[0] == "z,F"
        assert len(lines) == 22
        summary = json.loads((tmp_path / "ndl" / "summary.json").read_text())
        assert abs(summary["net_work"]) <= 1e-8
        assert summary["alignment_probability"] >= 0.999
        assert summary["reset_ok"] is True

    def test_rejects_other_protocols(self, tmp_path):
        cfg = write(tmp_path, "c.toml", PROCESS_A)
        assert main(["needle", cfg]) == 2

    def test_simulate_also_runs_needle(self, tmp_path):
        cfg = write(tmp_path, "c.toml", NEEDLE)
        out = str(tmp_path / "viasim")
        assert main(["simulate", cfg, "--out", out]) == 0
        assert (tmp_path / "viasim" / "needle_profile.csv").exists()
