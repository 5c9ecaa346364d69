import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from dopsim.cli import cli_main
from dopsim.harness import (
    ConfigError,
    load_config,
    load_config_file,
    predicted_scan_line,
    run_calibrate,
    run_fig2_scan,
    run_fig3_shake,
    run_pmd_sweep,
)

SMALL_SHAKE = {
    "scenario": "fig3_shake",
    "seed": 11,
    "dt_s": 0.001,
    "shake": {"windows": 5, "window_s": 0.4},
}


class TestConfigLoading:
    def test_scan_defaults(self):
        cfg = load_config({"scenario": "fig2_scan"})
        assert cfg.seed == 0
        assert cfg.scan.base_count == 5
        assert cfg.scan.two_phi_deg == tuple(float(x) for x in range(0, 100, 10))
        assert cfg.meter.noise_sigma_rel == 0.15
        assert cfg.two_laser.lambda1_nm == 1552.0

    def test_unknown_key_has_field_path(self):
        with pytest.raises(ConfigError, match="meter"):
            load_config({"scenario": "fig2_scan", "meter": {"visibilty": 0.9}})

    def test_bad_value_message_names_field(self):
        with pytest.raises(ConfigError, match="meter.visibility"):
            load_config({"scenario": "fig2_scan", "meter": {"visibility": 1.5}})

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="scenario"):
            load_config({"scenario": "warp"})

    def test_seed_precedence(self, monkeypatch):
        doc = {"scenario": "fig2_scan", "seed": 5}
        assert load_config(doc).seed == 5
        assert load_config(doc, seed_override=9).seed == 9
        monkeypatch.setenv("DOPSIM_SEED", "77")
        assert load_config({"scenario": "fig2_scan"}).seed == 77
        monkeypatch.delenv("DOPSIM_SEED")
        assert load_config({"scenario": "fig2_scan"}).seed == 0

    def test_noise_off_override(self):
        cfg = load_config(SMALL_SHAKE, noise_off=True)
        assert cfg.meter.noise_sigma_rel == 0.0
        assert cfg.polarimeter.noise_sigma_rel == 0.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "nope.json")

    def test_fixed_stage_count_enforced(self):
        with pytest.raises(ConfigError, match="stack"):
            load_config({"scenario": "fig2_scan", "meter": {"stack": {"stages": 3}}})

    def test_zero_channel_axis_rejected(self):
        doc = dict(SMALL_SHAKE)
        doc["channel"] = {"axis": [0, 0, 0]}
        with pytest.raises(ConfigError, match="channel.axis"):
            load_config(doc)

    def test_non_unit_axes_are_normalized(self):
        doc = {"scenario": "pmd_sweep", "pmd": {"axis": [2.0, 0.0, 0.0]}}
        cfg = load_config(doc)
        assert cfg.pmd.axis == (1.0, 0.0, 0.0)

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigError, match="seed"):
            load_config({"scenario": "fig2_scan", "seed": -3})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config_file(path)


class TestScan:
    def test_noiseless_scan_matches_prediction(self):
        cfg = load_config({"scenario": "fig2_scan", "meter": {"noise_sigma_rel": 0.0}})
        result = run_fig2_scan(cfg)
        assert len(result.records) == 150
        slope, intercept = predicted_scan_line(cfg)
        assert abs(result.slope - slope) < 1e-9
        assert abs(result.intercept - intercept) < 1e-9
        assert result.r_squared >= 1.0 - 1e-12
        for level in result.per_level:
            assert level["repeats"] == 15
            assert level["readout_std"] < 1e-12

    def test_noisy_scan_is_deterministic(self):
        doc = {"scenario": "fig2_scan", "seed": 21}
        a = run_fig2_scan(load_config(doc))
        b = run_fig2_scan(load_config(doc))
        assert a.records == b.records

    def test_unbalanced_intensities_still_linear(self):
        cfg = load_config(
            {
                "scenario": "fig2_scan",
                "source": {"intensity1": 2.0, "intensity2": 0.5},
                "meter": {"noise_sigma_rel": 0.0, "visibility": 0.9, "gain": 1.7, "dark_offset": 0.03},
            }
        )
        result = run_fig2_scan(cfg)
        assert result.r_squared >= 1.0 - 1e-12
        slope, intercept = predicted_scan_line(cfg)
        assert abs(result.slope - slope) < 1e-9
        assert abs(result.intercept - intercept) < 1e-9

    def test_per_circle_normalization_supported(self):
        cfg = load_config(
            {"scenario": "fig2_scan", "scan": {"normalization": "per_circle"},
             "meter": {"noise_sigma_rel": 0.0}}
        )
        result = run_fig2_scan(cfg)
        top = [level for level in result.per_level if level["two_phi_deg"] == 90.0][0]
        assert abs(top["normalized_mean"] - 1.0) < 1e-12


class TestShake:
    def test_deterministic(self):
        a = run_fig3_shake(load_config(SMALL_SHAKE))
        b = run_fig3_shake(load_config(SMALL_SHAKE))
        assert a.records == b.records

    def test_first_and_last_windows_are_references(self):
        result = run_fig3_shake(load_config(SMALL_SHAKE))
        assert not result.records[0].shaken
        assert not result.records[-1].shaken
        assert all(r.shaken for r in result.records[1:-1])

    def test_meter_stable_polarimeter_drops(self):
        result = run_fig3_shake(load_config(SMALL_SHAKE))
        for r in result.records:
            assert abs(r.meter_dop - result.reference_meter_dop) < 0.03
        for r in result.records[1:-1]:
            assert r.polarimeter_dop < r.meter_dop

    def test_no_shaking_keeps_both_flat(self):
        doc = dict(SMALL_SHAKE)
        doc["channel"] = {"axis_diffusion_rad2_per_s": 0.0, "retardance_sigma_rad": 0.0}
        result = run_fig3_shake(load_config(doc, noise_off=True))
        values = {round(r.meter_dop, 9) for r in result.records}
        assert len(values) == 1
        for r in result.records:
            assert abs(r.polarimeter_dop - r.meter_dop) < 1e-6

    def test_angular_coverage_reported(self):
        result = run_fig3_shake(load_config(SMALL_SHAKE))
        assert result.summary["scrambling_mean_deflection_rad"] > 0.3
        assert result.summary["scrambling_max_deflection_rad"] <= math.pi + 1e-12


class TestPmdSweep:
    def test_zero_dgd_full_dop_and_monotone_decay(self):
        result = run_pmd_sweep(load_config({"scenario": "pmd_sweep"}))
        assert abs(result.records[0].source_dop - 1.0) < 1e-12
        assert abs(result.records[0].meter_dop - 1.0) < 1e-9
        for a, b in zip(result.records, result.records[1:]):
            assert b.source_dop <= a.source_dop + 1e-12
            assert b.meter_dop <= a.meter_dop + 1e-9
        assert result.records[-1].source_dop < 0.01

    def test_meter_tracks_source_when_pairs_clean(self):
        result = run_pmd_sweep(load_config({"scenario": "pmd_sweep"}))
        for r in result.records:
            assert abs(r.meter_dop - r.source_dop) < 1e-6

    def test_degenerate_geometry_flagged_not_raised(self):
        doc = {"scenario": "pmd_sweep", "pmd": {"axis": [0.0, 0.0, 1.0]}}
        result = run_pmd_sweep(load_config(doc))
        assert result.degenerate_geometry
        for r in result.records:
            assert abs(r.source_dop - 1.0) < 1e-12


class TestCalibrate:
    def test_noiseless_recovery_is_exact(self):
        doc = {
            "scenario": "calibrate",
            "meter": {"gain": 3.1, "dark_offset": 0.07, "visibility": 0.94, "noise_sigma_rel": 0.0},
        }
        record = run_calibrate(load_config(doc))
        assert abs(record["gain"] - 3.1) < 1e-12
        assert abs(record["dark_offset"] - 0.07) < 1e-12

    def test_noisy_recovery_close(self):
        doc = {"scenario": "calibrate", "seed": 2, "calibration": {"samples": 4000}}
        record = run_calibrate(load_config(doc))
        assert abs(record["gain"] - 1.0) < 0.05
        assert abs(record["dark_offset"]) < 0.02


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


class TestCli:
    def test_validate_config_ok(self, tmp_path, capsys):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan"})
        assert cli_main(["validate-config", path]) == 0
        assert "OK" in capsys.readouterr().out

    def test_validate_config_rejects_with_field(self, tmp_path, capsys):
        path = write_json(tmp_path / "bad.json", {"scenario": "fig2_scan", "dt_s": -1})
        assert cli_main(["validate-config", path]) == 2
        assert "dt_s" in capsys.readouterr().err

    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli_main(["frobnicate"]) == 2

    def test_unknown_flag_exits_2(self, tmp_path, capsys):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan"})
        assert cli_main(["scan", "--config", path, "--frobnicate"]) == 2

    def test_scenario_command_mismatch_exits_2(self, tmp_path, capsys):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan"})
        assert cli_main(["shake", "--config", path]) == 2

    def test_scan_noise_off_writes_perfect_fit(self, tmp_path, capsys):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan", "seed": 4})
        out = tmp_path / "results"
        assert cli_main(["scan", "--config", path, "--out", str(out), "--noise", "off"]) == 0
        summary = json.loads((out / "scan_summary.json").read_text())
        assert summary["r_squared"] >= 1.0 - 1e-12
        csv_text = (out / "scan.csv").read_text()
        header = csv_text.splitlines()[0]
        assert header == "circle,base_idx,two_phi_deg,true_dop,one_minus_dop2,readout_mean,readout_std"
        assert len(csv_text.splitlines()) == 151

    def test_shake_seeded_runs_are_byte_identical(self, tmp_path):
        doc = dict(SMALL_SHAKE)
        doc["output"] = {"trajectory_csv": "trajectory.csv"}
        path = write_json(tmp_path / "shake.json", doc)
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert cli_main(["shake", "--config", path, "--seed", "7", "--out", str(out)]) == 0
            outputs.append(
                (
                    (out / "shake.csv").read_bytes(),
                    (out / "shake_summary.json").read_bytes(),
                    (out / "trajectory.csv").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]

    def test_pmd_and_calibrate_commands(self, tmp_path):
        pmd_path = write_json(tmp_path / "pmd.json", {"scenario": "pmd_sweep"})
        assert cli_main(["pmd", "--config", pmd_path, "--out", str(tmp_path / "p")]) == 0
        assert (tmp_path / "p" / "pmd.csv").exists()
        assert (tmp_path / "p" / "pmd_summary.json").exists()

        cal_path = write_json(tmp_path / "cal.json", {"scenario": "calibrate", "seed": 3})
        assert cli_main(["calibrate", "--config", cal_path, "--out", str(tmp_path / "c")]) == 0
        record = json.loads((tmp_path / "c" / "calibration.json").read_text())
        assert set(record) >= {"gain", "dark_offset", "visibility"}

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan"})
        monkeypatch.setenv("DOPSIM_SEED", "123")
        out = tmp_path / "env"
        assert cli_main(["scan", "--config", path, "--out", str(out)]) == 0
        summary = json.loads((out / "scan_summary.json").read_text())
        assert summary["seed"] == 123

    def test_console_entry_point(self, tmp_path):
        path = write_json(tmp_path / "scan.json", {"scenario": "fig2_scan"})
        proc = subprocess.run(
            [sys.executable, "-m", "dopsim.cli", "validate-config", path],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "OK" in proc.stdout
