import json

import numpy as np
import pytest

from modalsr import read_matrix
from modalsr.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDispatch:
    def test_no_arguments_usage(self, capsys):
        code, _, err = run(capsys)
        assert code == 2

    def test_unknown_subcommand(self, capsys):
        code, *_ = run(capsys, "frobnicate")
        assert code == 2

    def test_version(self, capsys):
        code, out, _ = run(capsys, "--version")
        assert code == 0
        assert "modalsr" in out

    def test_error_is_single_line(self, tmp_path, capsys):
        code, _, err = run(capsys, "geometry", "--config", str(tmp_path / "missing.json"),
                           "--out", str(tmp_path / "g.csv"))
        assert code == 1
        lines = [l for l in err.strip().splitlines() if l]
        assert len(lines) == 1
        assert lines[0].startswith("error: ")


class TestGeometry:
    def test_default_hybrid_csv(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        code, *_ = run(capsys, "geometry", "--out", str(out), "--deterministic")
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "x,y,z,label"
        assert len(lines) == 97
        assert lines[1].endswith("SMA")
        assert lines[-1].endswith("LMA3")

    def test_timestamp_header_toggle(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        run(capsys, "geometry", "--out", str(a))
        run(capsys, "geometry", "--out", str(b), "--deterministic")
        assert a.read_text().startswith("# generated ")
        assert b.read_text().startswith("x,y,z,label")


class TestDictionary:
    def test_writes_sfmx(self, tmp_path, capsys):
        out = tmp_path / "h.sfmx"
        code, *_ = run(capsys, "dictionary", "--out", str(out), "--freqs", "1000,2000",
                       "--grid-level", "2")
        assert code == 0
        mats = read_matrix(out)
        assert mats.shape == (2, 96, 162)
        assert np.allclose(np.abs(mats), 1.0, atol=1e-12)


class TestModes:
    def test_tables_written(self, tmp_path, capsys):
        out = tmp_path / "modes"
        code, *_ = run(capsys, "modes", "--out", str(out), "--freqs", "1000,2000",
                       "--grid-level", "2", "--k-list", "9,16", "--no-figures",
                       "--deterministic")
        assert code == 0
        sweep = (out / "angle_sweep.csv").read_text().strip().splitlines()
        assert sweep[0] == "array,frequency,K,mean_angle_deg"
        assert len(sweep) == 1 + 2 * 2 * 2       # arrays x freqs x K
        assert (out / "singular_values.csv").exists()
        assert (out / "mode_patterns.csv").exists()

    def test_figures_rendered(self, tmp_path, capsys):
        out = tmp_path / "modes_fig"
        code, *_ = run(capsys, "modes", "--out", str(out), "--freqs", "1500",
                       "--grid-level", "1", "--k-list", "9", "--deterministic")
        assert code == 0
        assert (out / "angle_sweep.png").stat().st_size > 0
        assert (out / "singular_values.png").stat().st_size > 0
        assert (out / "modes_1500Hz.png").stat().st_size > 0


@pytest.fixture()
def scene_file(tmp_path):
    doc = {
        "sources": {"count": 1, "distance_m": 2.0},
        "free_field": True,
        "frames": 4,
        "snr_db": "inf",
        "seed": 3,
    }
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(doc))
    return p


class TestPipeline:
    def test_simulate_recover_evaluate(self, tmp_path, scene_file, capsys):
        sim = tmp_path / "sim"
        code, *_ = run(capsys, "simulate", "--config", str(scene_file), "--out", str(sim),
                       "--freqs", "1500,2500", "--grid-level", "2")
        assert code == 0
        cube = read_matrix(sim.with_suffix(".sfmx"))
        assert cube.shape == (2, 96, 4)
        meta = json.loads(sim.with_suffix(".json").read_text())
        assert len(meta["truth_directions"]) == 1

        rec = tmp_path / "rec"
        code, *_ = run(capsys, "recover", "--input", str(sim), "--method", "modal",
                       "--modes", "16", "--out", str(rec))
        assert code == 0
        coeffs = read_matrix(rec.with_suffix(".sfmx"))
        assert coeffs.shape == (2, 162, 4)
        diag = json.loads(rec.with_suffix(".json").read_text())
        assert diag["method"] == "modal-16"

        out_csv = tmp_path / "eval.csv"
        code, *_ = run(capsys, "evaluate", "--solution", str(rec), "--out", str(out_csv),
                       "--deterministic")
        assert code == 0
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "frequency,method,E,angular_error_deg,miss_rate"
        assert len(lines) == 3

    def test_recover_sma_and_joint(self, tmp_path, scene_file, capsys):
        sim = tmp_path / "sim"
        run(capsys, "simulate", "--config", str(scene_file), "--out", str(sim),
            "--freqs", "2000", "--grid-level", "2")
        for method in ("sma", "joint"):
            rec = tmp_path / f"rec_{method}"
            code, *_ = run(capsys, "recover", "--input", str(sim), "--method", method,
                           "--out", str(rec))
            assert code == 0


class TestSweep:
    def test_tiny_sweep_outputs(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("MODAL_SR_THREADS", "1")
        cfg = {
            "methods": ["sma", "modal-9"],
            "source_counts": [2],
            "distances_m": [2.5],
            "trials": 1,
            "freqs": [800.0, 1600.0],
            "frames": 6,
            "master_seed": 5,
        }
        p = tmp_path / "sweep.json"
        p.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        code, *_ = run(capsys, "sweep", "--config", str(p), "--out", str(out),
                       "--no-figures", "--deterministic")
        assert code == 0
        raw = (out / "raw.csv").read_text().strip().splitlines()
        assert raw[0].startswith("method,")
        assert len(raw) == 1 + 2 * 2           # methods x freqs
        assert (out / "aggregate.csv").exists()
        assert (out / "fig4-dist2.5.csv").exists()
        assert (out / "fig5-dist2.5.csv").exists()
