import csv
import json

import numpy as np
import pytest

from evrecon.checkpoint import load_tensors
from evrecon.cli import main, read_pgm, write_pgm
from evrecon.model import Network


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    """A small simulated scene shared by the pipeline tests."""
    out = tmp_path_factory.mktemp("sim")
    cfg = out / "scene.json"
    cfg.write_text(json.dumps({"height": 16, "width": 16, "steps": 6,
                               "contrast": 0.1}))
    assert main(["--seed", "5", "simulate", "--config", str(cfg),
                 "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, sim_dir):
    """A checkpoint produced by a short training run on the scene."""
    out = tmp_path_factory.mktemp("run")
    spec = out / "spec.json"
    spec.write_text(json.dumps({"height": 16, "width": 16, "n_channels": 4,
                                "n_encoders": 2, "n_residual": 1}))
    tc = out / "train.json"
    tc.write_text(json.dumps({"batch": 1, "seq_len": 5, "epochs": 1}))
    assert main(["train", "--spec", str(spec), "--data", str(sim_dir),
                 "--train-config", str(tc), "--out", str(out)]) == 0
    return out


class TestPGM:
    def test_roundtrip(self, tmp_path):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        np.testing.assert_allclose(back, img, atol=1 / 255.0 + 1e-12)

    def test_clipping(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, np.array([[-1.0, 2.0]]))
        np.testing.assert_array_equal(read_pgm(path), [[0.0, 1.0]])


class TestSimulate:
    def test_outputs(self, sim_dir):
        assert (sim_dir / "events.txt").exists()
        assert (sim_dir / "meta.json").exists()
        assert len(list(sim_dir.glob("gt_*.pgm"))) == 6

    def test_events_parse_back(self, sim_dir):
        from evrecon.events import load_events
        events, sensor = load_events(sim_dir / "events.txt")
        assert sensor == (16, 16)
        assert len(events) > 0

    def test_deterministic_given_seed(self, sim_dir, tmp_path):
        cfg = tmp_path / "scene.json"
        cfg.write_text(json.dumps({"height": 16, "width": 16, "steps": 6,
                                   "contrast": 0.1}))
        main(["--seed", "5", "simulate", "--config", str(cfg), "--out", str(tmp_path)])
        assert (tmp_path / "events.txt").read_text() == \
            (sim_dir / "events.txt").read_text()


class TestVoxelize:
    def test_grid_dump(self, sim_dir, tmp_path):
        out = tmp_path / "grids.spkt"
        assert main(["voxelize", "--events", str(sim_dir / "events.txt"),
                     "--out", str(out), "--bins", "3", "--window-count", "40"]) == 0
        tensors, meta = load_tensors(out)
        assert meta["bins"] == 3 and meta["height"] == 16
        assert all(t.shape == (3, 16, 16) for t in tensors.values())
        assert len(meta["spans"]) == len(tensors)

    def test_missing_window_mode_fails(self, sim_dir, tmp_path, capsys):
        rc = main(["voxelize", "--events", str(sim_dir / "events.txt"),
                   "--out", str(tmp_path / "g.spkt")])
        assert rc == 1
        assert "window" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_and_metrics(self, trained_dir):
        assert (trained_dir / "checkpoint.spkt").exists()
        with open(trained_dir / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["loss"]) > 0

    def test_checkpoint_loads(self, trained_dir):
        net = Network.load(trained_dir / "checkpoint.spkt")
        assert net.spec.height == 16

    def test_zero_epochs_saves_untrained(self, sim_dir, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"height": 16, "width": 16, "n_channels": 4,
                                    "n_encoders": 2, "n_residual": 1}))
        assert main(["train", "--spec", str(spec), "--data", str(sim_dir),
                     "--epochs", "0", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "checkpoint.spkt").exists()


class TestReconstruct:
    def test_writes_frames(self, sim_dir, trained_dir, tmp_path):
        assert main(["reconstruct",
                     "--checkpoint", str(trained_dir / "checkpoint.spkt"),
                     "--events", str(sim_dir / "events.txt"),
                     "--out", str(tmp_path), "--bins", "1",
                     "--window-ms", "10"]) == 0
        frames = sorted(tmp_path.glob("recon_*.pgm"))
        assert len(frames) >= 1
        img = read_pgm(frames[0])
        assert img.shape == (16, 16)
        assert 0.0 <= img.min() and img.max() <= 1.0


class TestProbe:
    def test_probe_csv(self, sim_dir, trained_dir, tmp_path):
        assert main(["probe",
                     "--checkpoint", str(trained_dir / "checkpoint.spkt"),
                     "--events", str(sim_dir / "events.txt"),
                     "--cutoff", "2", "--gt", str(sim_dir),
                     "--out", str(tmp_path), "--bins", "1",
                     "--window-ms", "10"]) == 0
        with open(tmp_path / "probe.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        flags = [int(r["after_cutoff"]) for r in rows]
        assert flags[:2] == [0, 0] and all(f == 1 for f in flags[2:])
        for r in rows:
            assert 0.0 <= float(r["spike_rate"]) <= 1.0


class TestProfile:
    def test_paper_rates_evsnn(self, capsys):
        assert main(["profile", "--paper-rates", "evsnn"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["energy_joules"] == pytest.approx(3.83e-3, rel=0.005)
        assert data["ann_snn_ratio"] == pytest.approx(19.36, rel=0.005)

    def test_paper_rates_normalized_energy(self, capsys):
        main(["profile", "--paper-rates", "evsnn"])
        evsnn = json.loads(capsys.readouterr().out)
        main(["profile", "--paper-rates", "pa-evsnn"])
        pa = json.loads(capsys.readouterr().out)
        assert evsnn["normalized_energy"] == pytest.approx(0.0415, rel=0.01)
        assert pa["normalized_energy"] == pytest.approx(0.1142, rel=0.01)

    def test_unknown_operating_point(self, capsys):
        assert main(["profile", "--paper-rates", "nope"]) == 1
        assert "operating point" in capsys.readouterr().err

    def test_spec_with_events(self, sim_dir, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"height": 16, "width": 16, "n_channels": 4,
                                    "n_encoders": 2, "n_residual": 1}))
        assert main(["profile", "--spec", str(spec),
                     "--events", str(sim_dir / "events.txt"),
                     "--bins", "1", "--window-ms", "10",
                     "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "total" in out
        report = json.loads((tmp_path / "energy.json").read_text())
        assert report["total_joules"] > 0


class TestGradcheck:
    def test_all_pass(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "lif_3step_surrogate" in out
