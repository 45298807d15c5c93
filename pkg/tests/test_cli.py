from __future__ import annotations

import csv
import json
import shutil
from pathlib import Path

import pytest
from typer.testing import CliRunner

import gdkm.cli as cli
from gdkm.dataio.dataset import save_dataset
from gdkm.dataio.synthetic import synthetic_dataset


@pytest.fixture(autouse=True)
def _quiet_logs(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("GDKM_LOG", "ERROR")


def _write_dataset(root: Path) -> Path:
    save_dataset(synthetic_dataset("homophilous", num_nodes=24, num_features=6, seed=0), root)
    return root


def _write_config(path: Path, *, dataset: str = "data", extra: str = "") -> Path:
    path.write_text(
        "\n".join(
            [
                "run:",
                "  dataset:",
                f"    path: {dataset}",
                "  model:",
                "    depth: 2",
                "    num_inducing: 6",
                "    mc_samples_eval: 2",
                "  training:",
                "    epochs: 2",
                "  output_dir: out",
                extra,
                "",
            ]
        ),
        encoding="utf-8",
    )
    return path


def test_init_writes_template_once(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        result = runner.invoke(cli.app, ["init", "--dataset", "datasets/cora"], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        assert "Created gdkm.yaml" in result.output
        text = (Path(wd) / "gdkm.yaml").read_text(encoding="utf-8")
        assert "path: datasets/cora" in text

        again = runner.invoke(cli.app, ["init"], catch_exceptions=False)
        assert again.exit_code == 2
        assert "config already exists" in again.output


def test_validate_exit_codes(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")

        ok = runner.invoke(cli.app, ["validate"], catch_exceptions=False)
        assert ok.exit_code == 0, ok.output
        assert "Configuration and dataset are valid." in ok.output
        assert "24 nodes" in ok.output

        bad_config = runner.invoke(cli.app, ["validate", "--set", "model.scheme=nowhere"], catch_exceptions=False)
        assert bad_config.exit_code == 2
        assert "ERROR: config: model.scheme must be one of: inter, intra" in bad_config.output

        (wd_path / "data" / "splits.json").unlink()
        bad_data = runner.invoke(cli.app, ["validate"], catch_exceptions=False)
        assert bad_data.exit_code == 3
        assert "splits.json not found" in bad_data.output


def test_train_then_eval(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")

        result = runner.invoke(cli.app, ["train", "--nu", "1,inf"], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output.strip().splitlines()[-1])
        assert set(summary) == {"val_acc", "test_acc", "checkpoint"}

        out = wd_path / "out"
        lines = (out / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        final = json.loads((out / "final.json").read_text(encoding="utf-8"))
        assert final["status"] == "ok"
        assert final["nu"] == [1.0, "inf"]
        assert (out / "model.gdkmckpt").exists()
        sidecar = json.loads((out / "model.gdkmckpt.json").read_text(encoding="utf-8"))
        assert Path(sidecar["run"]["dataset"]["path"]).is_absolute()

        # eval finds the dataset through the sidecar
        (wd_path / "gdkm.yaml").unlink()
        report = runner.invoke(cli.app, ["eval", "out/model.gdkmckpt", "--mc-samples", "3"], catch_exceptions=False)
        assert report.exit_code == 0, report.output
        payload = json.loads(report.output)
        assert payload["mc_samples"] == 3
        assert payload["dataset"] == "data"
        assert 0.0 <= payload["test_acc"] <= 1.0
        assert set(payload["per_class_acc"]) == {"0", "1"}


def test_train_missing_dataset_exits_with_data_error(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        _write_config(Path(wd) / "gdkm.yaml", dataset="nowhere")
        result = runner.invoke(cli.app, ["train"], catch_exceptions=False)
        assert result.exit_code == 3
        assert '"error": "SchemaError"' in result.output
        assert "dataset directory not found" in result.output


def test_train_config_error_lists_every_problem(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        _write_config(Path(wd) / "gdkm.yaml", extra="  colour: blue")
        result = runner.invoke(cli.app, ["train", "--set", "model.depth=0"], catch_exceptions=False)
        assert result.exit_code == 2
        assert "unknown config key: colour" in result.output
        assert "model.depth must be >= 1" in result.output


def _write_graph_dataset(root: Path, num_graphs: int = 10) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    (root / "features.csv").write_text("".join(f"{i % 3}.0,1.0\n" for i in range(2 * num_graphs)), encoding="utf-8")
    (root / "graph_id.csv").write_text("".join(f"{i // 2}\n" for i in range(2 * num_graphs)), encoding="utf-8")
    (root / "edges.txt").write_text("".join(f"{2 * g} {2 * g + 1}\n" for g in range(num_graphs)), encoding="utf-8")
    labels = "".join(f"{g},{g % 2}\n" for g in range(num_graphs))
    (root / "labels.csv").write_text("graph_id,label\n" + labels, encoding="utf-8")
    return root


def test_train_rejects_intra_scheme_on_graph_task(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        _write_graph_dataset(Path(wd) / "graphs")
        _write_config(Path(wd) / "gdkm.yaml", dataset="graphs")
        result = runner.invoke(cli.app, ["train", "--scheme", "intra"], catch_exceptions=False)
        assert result.exit_code == 2
        assert "not applicable to graph classification" in result.output
        assert not (Path(wd) / "out" / "final.json").exists()


def test_nngp_exports_kernels(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")
        result = runner.invoke(
            cli.app, ["nngp", "--export-kernels", "--max-nodes", "10", "-o", "nngp-out"], catch_exceptions=False
        )
        assert result.exit_code == 0, result.output
        kernels = wd_path / "nngp-out" / "kernels"
        assert (kernels / "nngp_layer_1.csv").exists()
        assert (kernels / "nngp_layer_2.csv").exists()
        with (kernels / "nodes.csv").open(encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        labels = [int(r["label"]) for r in rows]
        assert labels == sorted(labels)
        final = json.loads((wd_path / "nngp-out" / "final.json").read_text(encoding="utf-8"))
        assert final["nu"] == ["inf", "inf"]


def test_linear_demo_writes_tables(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        result = runner.invoke(
            cli.app,
            ["linear-demo", "--nodes", "12", "--edge-prob", "0.3", "--lambdas", "0.5,1.0", "--gd-epochs", "2", "-o", "demo"],
            catch_exceptions=False,
        )
        assert result.exit_code == 0, result.output
        assert "lambda=0.5" in result.output
        demo = Path(wd) / "demo"
        with (demo / "cka.csv").open(encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["lambda"]) for r in rows] == [0.5, 1.0]
        for name in ("dkm_layer_1.csv", "dkm_layer_2.csv", "nngp_layer_1.csv", "nngp_layer_2.csv", "nodes.csv"):
            assert (demo / "kernels" / name).exists()
        summary = json.loads((demo / "summary.json").read_text(encoding="utf-8"))
        assert summary["num_nodes"] == 12
        assert summary["gd"]["epochs"] == 2
        assert len((demo / "gd_metrics.jsonl").read_text(encoding="utf-8").splitlines()) == 3


def test_sweep_writes_table(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")
        result = runner.invoke(
            cli.app, ["sweep", "--nu-grid", "1,inf", "--schemes", "inter", "--epochs", "1"], catch_exceptions=False
        )
        assert result.exit_code == 0, result.output
        with (wd_path / "out" / "sweep.csv").open(encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["nu"] for r in rows] == ["1.0", "inf"]
        assert all(r["dataset"] == "data" for r in rows)
        summary = json.loads((wd_path / "out" / "sweep_summary.json").read_text(encoding="utf-8"))
        assert len(summary["groups"]) == 2


def test_sweep_inducing_and_centering_axes(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")
        result = runner.invoke(
            cli.app,
            ["sweep", "--nu-grid", "1", "--schemes", "inter", "--epochs", "1", "--num-inducing", "3,4", "--centering", "none,learned"],
            catch_exceptions=False,
        )
        assert result.exit_code == 0, result.output
        with (wd_path / "out" / "sweep.csv").open(encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        assert reader.fieldnames[:3] == ["dataset", "num_inducing", "centering"]
        assert [(r["num_inducing"], r["centering"]) for r in rows] == [
            ("3", "none"),
            ("3", "learned"),
            ("4", "none"),
            ("4", "learned"),
        ]


def test_sweep_rejects_unknown_scheme(tmp_path: Path) -> None:
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        wd_path = Path(wd)
        _write_dataset(wd_path / "data")
        _write_config(wd_path / "gdkm.yaml")
        result = runner.invoke(cli.app, ["sweep", "--schemes", "inter,global"], catch_exceptions=False)
        assert result.exit_code == 2
        assert "unknown scheme: global" in result.output


def test_smoke_project_validates_and_trains(tmp_path: Path) -> None:
    source = Path(__file__).resolve().parents[1] / "_smoke_project"
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path) as wd:
        project = Path(wd) / "smoke"
        shutil.copytree(source, project)
        config = str(project / "gdkm.yaml")

        checked = runner.invoke(cli.app, ["validate", "--config", config], catch_exceptions=False)
        assert checked.exit_code == 0, checked.output
        assert "data: 10 nodes, 11 edges, 3 features, 2 classes" in checked.output

        trained = runner.invoke(cli.app, ["train", "--config", config, "--epochs", "2", "-o", "smoke-out"], catch_exceptions=False)
        assert trained.exit_code == 0, trained.output
        final = json.loads((Path(wd) / "smoke-out" / "final.json").read_text(encoding="utf-8"))
        assert final["scheme"] == "intra"
        assert final["nu"] == [1.0, "inf"]
