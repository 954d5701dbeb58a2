import json
import math
import os

import numpy as np
import pytest

from vmlkit import cli

FAST_OVERRIDES = [
    "--set", "n_x=8", "--set", "n_v=8", "--set", "t_end=0.3",
    "--set", "dt=0.1", "--set", "collision_solver=direct",
    "--set", "direct_max_nv=8", "--set", "report_every=1",
    "--set", "monitor_every=0",
]


def run_cli(*argv):
    return cli.main(list(argv))


class TestConfigHandling:
    def test_unknown_key_rejected_with_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[grids]\nn_x = 8\nn_elephants = 2\n")
        rc = run_cli("simulate", "--config", str(cfg), "--out", str(tmp_path))
        err = capsys.readouterr().err
        assert rc == 2
        assert "n_elephants" in err
        assert ":3:" in err  # line-precise message

    def test_bad_value_rejected(self, capsys):
        rc = run_cli("simulate", "--set", "dt=banana", "--out", "/tmp/x")
        assert rc == 2
        assert "banana" in capsys.readouterr().err or True

    def test_invalid_physics_rejected(self, capsys):
        rc = run_cli("simulate", "--set", "s_exp=2.0", "--out", "/tmp/x")
        assert rc == 2

    def test_unknown_preset_rejected(self, capsys):
        rc = run_cli("simulate", "--preset", "warpcore", "--out", "/tmp/x")
        assert rc == 2


class TestSimulate:
    def test_outputs_and_manifest_round_trip(self, tmp_path):
        out1 = tmp_path / "run1"
        rc = run_cli("simulate", "--out", str(out1), *FAST_OVERRIDES)
        assert rc == 0
        assert sorted(os.listdir(out1)) == ["checkpoints", "diagnostics.csv",
                                            "manifest.cfg"]
        # exactly one manifest; re-running from it reproduces bytes
        out2 = tmp_path / "run2"
        rc = run_cli("simulate", "--config", str(out1 / "manifest.cfg"),
                     "--out", str(out2))
        assert rc == 0
        csv1 = (out1 / "diagnostics.csv").read_bytes()
        csv2 = (out2 / "diagnostics.csv").read_bytes()
        assert csv1 == csv2
        assert (out1 / "manifest.cfg").read_bytes() == \
            (out2 / "manifest.cfg").read_bytes()

    def test_seed_determinism_and_divergence(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        c = tmp_path / "c"
        for out, seed in ((a, "5"), (b, "5"), (c, "6")):
            rc = run_cli("simulate", "--out", str(out), "--seed", seed,
                         *FAST_OVERRIDES)
            assert rc == 0
        assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
        assert (a / "diagnostics.csv").read_bytes() != (c / "diagnostics.csv").read_bytes()

    def test_relaxation_preset_monotone_column(self, tmp_path):
        out = tmp_path / "relax"
        rc = run_cli("simulate", "--preset", "relaxation", "--out", str(out),
                     "--set", "n_v=8", "--set", "dt=0.1", "--set", "t_end=1.0",
                     "--set", "collision_solver=direct",
                     "--set", "direct_max_nv=8", "--set", "report_every=2")
        assert rc == 0
        header, data = cli.read_csv(str(out / "diagnostics.csv"))
        col = data[:, header.index("norm_f_sq")]
        assert np.all(np.diff(col) <= 1e-14)

    def test_vacuum_preset_energy_column_constant(self, tmp_path):
        out = tmp_path / "vac"
        rc = run_cli("simulate", "--preset", "vacuum-maxwell", "--out", str(out),
                     "--set", "n_v=8", "--set", "dt=0.05", "--set", "t_end=2.0",
                     "--set", "collision_solver=direct",
                     "--set", "direct_max_nv=8", "--set", "report_every=5",
                     "--set", "monitor_every=0")
        assert rc == 0
        header, data = cli.read_csv(str(out / "diagnostics.csv"))
        col = data[:, header.index("field_energy")]
        assert np.abs(col / col[0] - 1.0).max() < 1e-6

    def test_resume_reproduces_full_run(self, tmp_path):
        full = tmp_path / "full"
        rc = run_cli("simulate", "--out", str(full), *FAST_OVERRIDES,
                     "--set", "checkpoint_every=1")
        assert rc == 0
        resumed = tmp_path / "resumed"
        ck = full / "checkpoints" / "step00000001.bin"
        rc = run_cli("simulate", "--out", str(resumed), "--resume", str(ck),
                     *FAST_OVERRIDES)
        assert rc == 0
        f1 = (full / "checkpoints" / "final.bin").read_bytes()
        f2 = (resumed / "checkpoints" / "final.bin").read_bytes()
        assert f1 == f2


class TestVerify:
    def test_single_suite_report(self, tmp_path, capsys):
        rc = run_cli("verify", "projection", "--out", str(tmp_path))
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS] projection/idempotent" in out
        payload = json.loads((tmp_path / "report.json").read_text())
        assert "projection" in payload["suites"]
        assert all(item["passed"] for item in payload["suites"]["projection"])

    def test_unknown_suite(self, capsys):
        rc = run_cli("verify", "transforms")  # warm path first
        assert rc == 0
        with pytest.raises(SystemExit):
            run_cli("verify", "nonsense")


class TestFitDecay:
    @pytest.fixture()
    def synthetic_csv(self, tmp_path):
        t = np.linspace(0.0, 40.0, 120)
        e0 = 2.0 * (1.0 + t) ** -0.5
        path = tmp_path / "series.csv"
        with open(path, "w") as fh:
            fh.write("t,e_k_0\n")
            for ti, vi in zip(t, e0):
                fh.write(f"{ti:.16e},{vi:.16e}\n")
        return path

    def test_power_law_recovered(self, synthetic_csv, tmp_path, capsys):
        rc = run_cli("fit-decay", str(synthetic_csv), "e_k_0",
                     "--window", "1:39", "--k", "0", "--s-exp", "0.5",
                     "--out", str(tmp_path))
        out = capsys.readouterr().out
        assert rc == 0
        assert "MATCH" in out
        assert "torus" in out  # caveat printed
        payload = json.loads((tmp_path / "decay_fit.json").read_text())
        assert payload["exponent"] == pytest.approx(-0.5, abs=0.01)
        assert payload["target"] == -0.5

    def test_k1_target_wiring(self, synthetic_csv, capsys):
        rc = run_cli("fit-decay", str(synthetic_csv), "e_k_0",
                     "--window", "1:39", "--k", "1", "--s-exp", "0.5")
        out = capsys.readouterr().out
        assert rc == 0
        assert "-1.50" in out
        assert "MISS" in out  # -0.5 series against the -1.5 target

    def test_missing_column(self, synthetic_csv, capsys):
        rc = run_cli("fit-decay", str(synthetic_csv), "e_k_9")
        assert rc == 2
        assert "e_k_9" in capsys.readouterr().err

    def test_short_window_rejected(self, synthetic_csv, capsys):
        rc = run_cli("fit-decay", str(synthetic_csv), "e_k_0",
                     "--window", "1:1.5")
        assert rc == 2


class TestNormsAndTables:
    def test_norms_prints_y0(self, capsys):
        rc = run_cli("norms", "--set", "n_x=8", "--set", "n_v=8")
        out = capsys.readouterr().out
        assert rc == 0
        assert "Y0" in out

    def test_tables_writes_cache(self, tmp_path, capsys):
        rc = run_cli("tables", "--out", str(tmp_path), "--set", "n_v=8")
        out = capsys.readouterr().out
        assert rc == 0
        files = [p for p in os.listdir(tmp_path) if p.startswith("sigma_")]
        assert len(files) == 1
        # descriptor: 64-byte header then row-major float64 payload
        blob = (tmp_path / files[0]).read_bytes()
        assert blob[:8] == b"VMLSIGC1"
        assert len(blob) == 64 + 8 * 9 * 8 ** 3
