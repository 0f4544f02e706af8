"""Command-line interface: subcommand plumbing, formats, exit codes."""

import csv
import json

import numpy as np
import pytest

from srsloc import iqio
from srsloc.channel import IqCapture
from srsloc.cli import main
from srsloc.experiments import table_from_json


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _mini_scenario_file(tmp_path):
    doc = {
        "schema_version": 1,
        "name": "mini",
        "seed": 5,
        "carrier_hz": 866e6,
        "area": {"polygon": [[0, 0], [60, 0], [60, 60], [0, 60]]},
        "srs": {"band_k0": [8]},
        "mission": {"perimeter_margin_m": 15.0, "hex_radius_m": 10.0},
        "ues": [
            {"ue_id": "u0", "band": 0, "shift": 0, "position_m": [20, 25, 1.5]},
            {"ue_id": "u1", "band": 0, "shift": 4, "position_m": [42, 38, 1.5]},
        ],
    }
    path = tmp_path / "mini.scn"
    path.write_text(json.dumps(doc))
    return path


class TestGenerateProcessLoop:
    def test_round_trip_zero_misses(self, tmp_path):
        out = str(tmp_path)
        rc = main(
            [
                "generate",
                "--seed",
                "1",
                "--out-dir",
                out,
                "--shifts",
                "0,3",
                "--periods",
                "6",
                "--snr-db",
                "15",
            ]
        )
        assert rc == 0
        rc = main(
            [
                "process",
                str(tmp_path / "capture.iq"),
                "--out-dir",
                out,
                "--assigned",
                "0,3",
            ]
        )
        assert rc == 0
        rows = _rows(tmp_path / "detections.csv")
        assert len(rows) >= 5
        for row in rows:
            assert row["verdict"] == "srs_confirmed"
            assert row["missed_w0"] == "0"
            assert row["missed_w3"] == "0"
            assert abs(float(row["snr_db"]) - 15.0) < 3.0

    def test_process_json_format(self, tmp_path):
        out = str(tmp_path)
        main(["generate", "--seed", "1", "--out-dir", out, "--periods", "3"])
        rc = main(
            [
                "process",
                str(tmp_path / "capture.iq"),
                "--out-dir",
                out,
                "--assigned",
                "0",
                "--format",
                "json",
            ]
        )
        assert rc == 0
        rows = json.loads((tmp_path / "detections.json").read_text())
        assert rows and rows[0]["verdict"] == "srs_confirmed"
        assert rows[0]["missed_w0"] == 0

    def test_dump_metric_trace(self, tmp_path):
        out = str(tmp_path)
        main(["generate", "--seed", "1", "--out-dir", out, "--periods", "3"])
        rc = main(
            [
                "process",
                str(tmp_path / "capture.iq"),
                "--out-dir",
                out,
                "--assigned",
                "0",
                "--dump-metric",
                "metric.csv",
            ]
        )
        assert rc == 0
        trace = _rows(tmp_path / "metric.csv")
        assert set(trace[0]) == {"n", "m", "m_f"}
        assert max(float(r["m_f"]) for r in trace) > 0.9  # noiseless capture

    def test_dummy_traffic_does_not_break_detection(self, tmp_path):
        out = str(tmp_path)
        main(
            [
                "generate",
                "--seed",
                "2",
                "--out-dir",
                out,
                "--periods",
                "4",
                "--snr-db",
                "20",
                "--dummy-traffic",
            ]
        )
        rc = main(
            ["process", str(tmp_path / "capture.iq"), "--out-dir", out,
             "--assigned", "0"]
        )
        assert rc == 0
        rows = _rows(tmp_path / "detections.csv")
        assert all(r["missed_w0"] == "0" for r in rows)


class TestDeterminism:
    def test_generate_is_byte_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            main(
                ["generate", "--seed", "9", "--out-dir", str(d), "--periods", "2",
                 "--snr-db", "10"]
            )
        assert (a / "capture.iq").read_bytes() == (b / "capture.iq").read_bytes()

    def test_generate_seed_changes_noise(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["generate", "--seed", "9", "--out-dir", str(a), "--periods", "2",
              "--snr-db", "10"])
        main(["generate", "--seed", "10", "--out-dir", str(b), "--periods", "2",
              "--snr-db", "10"])
        assert (a / "capture.iq").read_bytes() != (b / "capture.iq").read_bytes()

    def test_composite_is_byte_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            main(["composite", "--seed", "3", "--out-dir", str(d)])
        assert (a / "composite.iq").read_bytes() == (b / "composite.iq").read_bytes()


class TestComposite:
    def test_duplicate_band_second_band_recoverable(self, tmp_path):
        out = str(tmp_path)
        main(
            ["composite", "--seed", "3", "--out-dir", out, "--duplicate-band",
             "--cfo-ppm", "0"]
        )
        rc = main(
            [
                "process",
                str(tmp_path / "composite.iq"),
                "--out-dir",
                out,
                "--band",
                "1",
                "--assigned",
                "0,4,2",
                "--out",
                "band1.csv",
            ]
        )
        assert rc == 0
        rows = _rows(tmp_path / "band1.csv")
        assert len(rows) == 1
        row = rows[0]
        assert row["missed_w0"] == row["missed_w4"] == row["missed_w2"] == "0"
        # levels follow the requested -5/-8/-15 dBfs ordering
        g = {w: float(row[f"gamma_db_w{w}"]) for w in (0, 4, 2)}
        assert g[0] > g[4] > g[2]

    def test_sidecar_carries_carrier(self, tmp_path):
        main(["composite", "--seed", "3", "--out-dir", str(tmp_path),
              "--carrier-hz", "7e8"])
        meta = json.loads(
            iqio.sidecar_path(tmp_path / "composite.iq").read_text()
        )
        assert meta["center_freq_hz"] == 7e8


class TestMission:
    def test_mission_writes_report_and_estimates(self, tmp_path):
        scn = _mini_scenario_file(tmp_path)
        out = tmp_path / "run"
        rc = main(
            ["mission", "--config", str(scn), "--seed", "6", "--out-dir", str(out)]
        )
        assert rc == 0
        report = json.loads((out / "mission_report.json").read_text())
        assert report["seed"] == 6
        assert report["scenario"] == "mini"
        assert report["ale_refined_m"] is not None
        assert "measurements" not in report  # log only with --log
        rows = _rows(out / "mission_estimates.csv")
        assert {r["ue_id"] for r in rows} == {"u0", "u1"}
        for r in rows:
            assert float(r["le_refined_m"]) >= 0.0
            assert r["band"] == "0"

    def test_unknown_scenario_is_domain_error(self, tmp_path, capsys):
        rc = main(
            ["mission", "--config", "atlantis", "--out-dir", str(tmp_path)]
        )
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestSweepAndReport:
    _ARGS = [
        "sweep",
        "--kind",
        "misid",
        "--trials",
        "2",
        "--ub",
        "2",
        "--delay-spreads-us",
        "0,1",
        "--power-spreads-db",
        "0,12",
        "--bandwidths",
        "1.4MHz",
        "--seed",
        "4",
    ]

    def test_misid_sweep_csv(self, tmp_path):
        rc = main(self._ARGS + ["--out-dir", str(tmp_path)])
        assert rc == 0
        rows = _rows(tmp_path / "misid_ub2.csv")
        assert len(rows) == 4  # 1 bandwidth x 2 delays x 2 powers
        assert set(rows[0]) == {
            "bandwidth", "delay_spread_s", "power_spread_db",
            "value", "count", "ci_lo", "ci_hi",
        }
        assert all(r["count"] == "2" for r in rows)

    def test_misid_sweep_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            main(self._ARGS + ["--out-dir", str(d), "--format", "json"])
        assert (a / "misid_ub2.json").read_bytes() == (
            b / "misid_ub2.json"
        ).read_bytes()

    def test_report_converts_json_to_csv(self, tmp_path, capsys):
        src = tmp_path / "in"
        main(self._ARGS + ["--out-dir", str(src), "--format", "json"])
        table_path = src / "misid_ub2.json"
        table = table_from_json(table_path.read_text())
        assert table.meta["ub"] == 2
        assert "ub" not in table.axes

        dst = tmp_path / "out"
        rc = main(["report", str(table_path), "--out-dir", str(dst)])
        assert rc == 0
        assert (dst / "misid_ub2.csv").exists()
        assert "kind=misid_grid" in capsys.readouterr().out

    def test_report_refuses_overwriting_input(self, tmp_path, capsys):
        main(self._ARGS + ["--out-dir", str(tmp_path), "--format", "json"])
        rc = main(
            [
                "report",
                str(tmp_path / "misid_ub2.json"),
                "--out-dir",
                str(tmp_path),
                "--format",
                "json",
            ]
        )
        assert rc == 1
        assert "refusing" in capsys.readouterr().err


class TestExitCodes:
    def test_missing_capture_file_is_domain_error(self, tmp_path, capsys):
        rc = main(["process", str(tmp_path / "nope.iq"), "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "srsloc: error:" in capsys.readouterr().err

    def test_noise_only_capture_reports_no_signal(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        n = 160_000
        cap = IqCapture(
            samples=0.01 * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
            sample_rate_hz=3.84e6,
        )
        path = tmp_path / "noise.iq"
        iqio.write_iq(path, cap)
        rc = main(["process", str(path), "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "no sounding signal" in capsys.readouterr().err

    def test_usage_error_exits_2_with_schema_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sweep"])  # missing required --kind
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "usage" in err

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["teleport"])
        assert exc.value.code == 2

    def test_offset_bounds_checked(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(
                ["generate", "--out-dir", str(tmp_path), "--offset", "153500"]
            )
        assert exc.value.code == 2
        assert "--offset" in capsys.readouterr().err

    def test_bad_int_list_is_domain_error(self, tmp_path, capsys):
        rc = main(
            ["generate", "--out-dir", str(tmp_path), "--shifts", "0,x"]
        )
        assert rc == 1
        assert "--shifts" in capsys.readouterr().err

    def test_out_dir_created_nested(self, tmp_path):
        nested = tmp_path / "a" / "b" / "c"
        rc = main(
            ["generate", "--out-dir", str(nested), "--periods", "1"]
        )
        assert rc == 0
        assert (nested / "capture.iq").exists()
