"""Command-line interface: subcommands, exit codes, artifacts."""

import csv
import json

import numpy as np
import pytest

from curveloft import fixtures
from curveloft.cli import export_mesh, run_cli
from curveloft.curves import NormalizationTransform, save_curves
from curveloft.errors import ContractError
from curveloft.field import init_geometric, load_checkpoint
from curveloft.geometry import read_obj


@pytest.fixture(scope="module")
def circle_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "circle.json"
    save_curves(fixtures.make_circle(radius=1.0, n=96), path)
    return path


@pytest.fixture(scope="module")
def tiny_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps({
        "network": {"width": 16, "depth": 2},
        "iterations": 10, "n_p": 96, "n_q": 96, "n_qzero": 96,
        "mc_train_resolution": 24, "refresh_period": 5,
        "weights": {"cycle_length": 8},
    }))
    return path


class TestExportMesh:
    def test_geometric_init_exports_sphere(self, tmp_path):
        params = init_geometric(16, 2, 0.3, seed=0, fit_steps=150)
        out = tmp_path / "sphere.obj"
        stats = export_mesh(params, 64, NormalizationTransform.identity(), out)
        assert stats["genus"] == 0
        mesh = read_obj(out)
        assert mesh.n_vertices == stats["n_vertices"]
        assert mesh.n_triangles == stats["n_triangles"]

    def test_low_resolution_rejected(self, tmp_path):
        params = init_geometric(16, 2, 0.3, seed=0, fit_steps=50)
        with pytest.raises(ContractError):
            export_mesh(params, 4, NormalizationTransform.identity(),
                        tmp_path / "x.obj")

    def test_inverse_transform_applied(self, tmp_path):
        params = init_geometric(16, 2, 0.3, seed=0, fit_steps=150)
        transform = NormalizationTransform(0.5, np.array([0.0, 0.0, 0.0]))
        out = tmp_path / "scaled.obj"
        export_mesh(params, 32, transform, out)
        mesh = read_obj(out)
        # inverse of scale 0.5 doubles the radius-0.3 sphere
        radius = np.linalg.norm(mesh.vertices, axis=1).mean()
        assert radius == pytest.approx(0.6, abs=0.05)


class TestCliCommands:
    def test_train_surface_eval_round_trip(self, tmp_path, circle_file,
                                           tiny_config_file):
        ckpt = tmp_path / "model.npz"
        log = tmp_path / "log.csv"
        code = run_cli(["train", str(circle_file), "--config",
                        str(tiny_config_file), "--out", str(ckpt),
                        "--log", str(log)])
        assert code == 0
        assert ckpt.exists()
        assert log.exists()
        params, _ = load_checkpoint(ckpt)
        assert params.hidden_width == 16

        obj = tmp_path / "mesh.obj"
        code = run_cli(["surface", str(ckpt), "--res", "32", "--out", str(obj),
                        "--transform", str(ckpt) + ".transform.json"])
        assert code == 0
        assert read_obj(obj).n_triangles > 0

        report = tmp_path / "report.csv"
        code = run_cli(["eval", str(ckpt), str(circle_file), "--res", "24",
                        "--report", str(report)])
        assert code == 0
        with open(report) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["mean_abs_f"]) >= 0.0

    def test_perturb(self, tmp_path, circle_file):
        out = tmp_path / "noisy.json"
        code = run_cli(["perturb", str(circle_file), "--sigma", "0.05",
                        "--seed", "3", "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_sweep(self, tmp_path, circle_file, tiny_config_file):
        out = tmp_path / "sweep.csv"
        code = run_cli(["sweep", "genus_curve", str(circle_file), "--config",
                        str(tiny_config_file), "--out", str(out)])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["iteration"] for r in rows] == ["0", "5"]

    def test_missing_input_exit_1(self, tmp_path):
        code = run_cli(["train", str(tmp_path / "missing.json")])
        assert code == 1

    def test_unknown_flag_exit_1(self, circle_file):
        assert run_cli(["train", str(circle_file), "--bogus"]) == 1

    def test_unknown_subcommand_exit_1(self):
        assert run_cli(["frobnicate"]) == 1

    def test_surface_low_res_exit_1(self, tmp_path, circle_file,
                                    tiny_config_file):
        ckpt = tmp_path / "m.npz"
        run_cli(["train", str(circle_file), "--config", str(tiny_config_file),
                 "--out", str(ckpt)])
        code = run_cli(["surface", str(ckpt), "--res", "4", "--out",
                        str(tmp_path / "m.obj")])
        assert code == 1

    def test_numerical_abort_exit_2(self, tmp_path, circle_file):
        cfg = tmp_path / "diverge.json"
        cfg.write_text(json.dumps({
            "network": {"width": 16, "depth": 2}, "lr": 1e6,
            "iterations": 40, "n_p": 96, "n_q": 96, "n_qzero": 96,
            "mc_train_resolution": 24, "refresh_period": 5,
        }))
        code = run_cli(["train", str(circle_file), "--config", str(cfg),
                        "--out", str(tmp_path / "m.npz")])
        assert code == 2
