import gzip
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from hdopt.errors import ConfigError, DataFormatError, OutputError
from hdopt.harness import (
    CSV_COLUMNS,
    DATA_ENV,
    ExperimentConfig,
    MethodSpec,
    RosenbrockConfig,
    RunRecord,
    emit_outputs,
    emit_single_step,
    load_config,
    load_mnist_idx,
    parse_idx,
    parse_seeds,
    read_idx,
    run_experiment,
    run_rosenbrock_suite,
    single_step_study,
    trajectory_streams,
)
from hdopt.harness.checks import run_checks
from hdopt.models import DatasetBatch
from hdopt.harness.cli import main
from hdopt.harness.experiments import ExperimentResult, Trajectory, iterations_to, loss_matrix
from hdopt.harness.outputs import fmt, median_curves_csv, records_csv, slug, summary_json

from .helpers import idx_bytes, write_mnist_like

GOLDEN = Path(__file__).parent / "golden" / "sgd_logreg_seed0.csv"


@pytest.fixture
def synth_dir(tmp_path):
    return write_mnist_like(tmp_path / "data", n_train=256, n_val=64)


def small_config(data, out, **kw):
    base = dict(
        model={"kind": "logreg"},
        methods=[{"method": "BP", "eta": 0.1, "batch_size": 32}],
        epochs=1, seeds=[0], data_dir=str(data), out_dir=str(out),
        precision="f64", record_wall_time=False,
    )
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestIDX:
    def test_magic_bytes(self):
        raw = idx_bytes(np.zeros((2, 3, 3)), 2051)
        assert raw[:4] == bytes.fromhex("00000803")
        assert parse_idx(raw, 2051).shape == (2, 3, 3)

    def test_labels(self):
        raw = idx_bytes(np.array([3, 1, 4]), 2049)
        np.testing.assert_array_equal(parse_idx(raw, 2049), [3, 1, 4])

    def test_wrong_magic(self):
        with pytest.raises(DataFormatError, match="magic"):
            parse_idx(idx_bytes(np.zeros(3), 2049), 2051)

    def test_truncated(self):
        raw = idx_bytes(np.zeros((2, 3, 3)), 2051)
        with pytest.raises(DataFormatError, match="truncated"):
            parse_idx(raw[:-1], 2051)
        with pytest.raises(DataFormatError, match="truncated"):
            parse_idx(raw[:6], 2051)
        with pytest.raises(DataFormatError, match="truncated"):
            parse_idx(b"\x00", 2051)

    def test_trailing_bytes(self):
        with pytest.raises(DataFormatError, match="trailing"):
            parse_idx(idx_bytes(np.zeros(3), 2049) + b"\x00", 2049)

    def test_gzip_detected(self, tmp_path):
        p = tmp_path / "labels.gz"
        p.write_bytes(gzip.compress(idx_bytes(np.array([7, 8]), 2049)))
        np.testing.assert_array_equal(read_idx(p, 2049), [7, 8])

    def test_load_scaled(self, synth_dir):
        train, val = load_mnist_idx(synth_dir)
        assert train.inputs.shape == (256, 784) and val.inputs.shape == (64, 784)
        assert train.inputs.min() >= 0.0 and train.inputs.max() == 1.0
        assert train.labels.dtype == np.int64

    def test_gz_files(self, tmp_path):
        d = write_mnist_like(tmp_path / "gz", gz=True)
        assert len(load_mnist_idx(d)[0]) == 64

    def test_count_mismatch(self, tmp_path):
        d = write_mnist_like(tmp_path / "bad")
        (d / "train-labels-idx1-ubyte").write_bytes(idx_bytes(np.zeros(5), 2049))
        with pytest.raises(DataFormatError, match="labels"):
            load_mnist_idx(d)

    def test_missing_file(self, tmp_path):
        d = write_mnist_like(tmp_path / "miss")
        (d / "t10k-images-idx3-ubyte").unlink()
        with pytest.raises(FileNotFoundError):
            load_mnist_idx(d)

    def test_env_fallback(self, synth_dir, monkeypatch):
        monkeypatch.setenv(DATA_ENV, str(synth_dir))
        assert len(load_mnist_idx()[0]) == 256
        monkeypatch.delenv(DATA_ENV)
        with pytest.raises(FileNotFoundError):
            load_mnist_idx()

    def test_bundled_subset(self, mnist_dir):
        train, val = load_mnist_idx(mnist_dir, subset=True)
        assert (len(train), len(val)) == (10_000, 2_000)
        assert np.bincount(train.labels, minlength=10).min() > 800
        assert 0.0 <= train.inputs.min() and train.inputs.max() <= 1.0


class TestConfig:
    def test_parse_seeds(self):
        assert parse_seeds("0,1,2") == (0, 1, 2)
        assert parse_seeds(4) == (4,)
        assert parse_seeds([3, 5]) == (3, 5)
        for bad in ("", [], [-1], "a"):
            with pytest.raises(ConfigError):
                parse_seeds(bad)

    def test_yaml_round_trip(self, tmp_path, synth_dir):
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(yaml.safe_dump({
            "model": {"kind": "logreg"}, "epochs": 3, "seeds": "0,1",
            "data_dir": str(synth_dir),
            "methods": [{"method": "FoMoH-KD", "K": 2, "eta": 0.1, "batch_size": 32,
                         "scheduler": {"kind": "plateau", "factor": 0.5}}],
        }))
        cfg = load_config(cfg_path)
        assert cfg.seeds == (0, 1) and cfg.epochs == 3
        assert cfg.methods[0].label == "FoMoH-2D (LR-Sch.)"
        assert cfg.methods[0].optimizer.scheduler.factor == 0.5

    @pytest.mark.parametrize("patch,match", [
        ({"epochs": -1}, "epochs"),
        ({"seeds": []}, "seeds"),
        ({"precision": "f16"}, "precision"),
        ({"colour": "blue"}, "unknown keys"),
        ({"data_dir": "/nonexistent/path"}, "does not exist"),
        ({"methods": []}, "method"),
        ({"methods": [{"method": "BP", "eta": 0.1, "momentum": 0.9}]}, "unknown keys"),
        ({"methods": [{"method": "BP", "eta": 0.1, "batch_size": 0}]}, "batch_size"),
        ({"methods": [{"method": "FoMoH-KD", "eta": 1.0, "K": 9000}]}, "exceeds"),
        ({"methods": [{"method": "BP", "eta": 0.1}, {"method": "BP", "eta": 0.2}]}, "unique"),
        ({"model": {"kind": "resnet"}}, "unknown model"),
    ])
    def test_validation(self, tmp_path, patch, match):
        with pytest.raises(ConfigError, match=match):
            small_config(tmp_path, tmp_path, **patch)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("model: [unclosed")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_rosenbrock_config(self):
        cfg = RosenbrockConfig.from_dict({"dims": [2], "etas": {"FGD": 1e-3}, "seeds": "0,1"})
        assert cfg.etas == {"FGD": 1e-3, "BP": 2e-4}
        with pytest.raises(ConfigError):
            RosenbrockConfig(dims=(1,))
        with pytest.raises(ConfigError):
            RosenbrockConfig.from_dict({"n_seeds": 3})

    def test_shipped_configs_validate(self, mnist_dir):
        root = Path(__file__).resolve().parents[1] / "configs"
        for path in sorted(root.glob("*.yaml")):
            data = yaml.safe_load(path.read_text())
            if "methods" in data:
                load_config(path)
            else:
                RosenbrockConfig.from_dict(data)


class TestOutputs:
    def test_header(self):
        assert ",".join(CSV_COLUMNS) == "seed,iter,train_loss,val_loss,train_acc,val_acc,eta,wall_ms,jitter,retries"
        assert records_csv([]) == ",".join(CSV_COLUMNS) + "\n"

    def test_formatting(self):
        assert fmt(1 / 3) == "0.333333333"
        assert fmt(3) == "3"
        assert fmt(float("nan")) == "nan"
        assert fmt(-math.inf) == "-inf"
        assert fmt(1e-20) == "1e-20"

    def test_rows_sorted(self):
        recs = [RunRecord(1, 0, 1.0), RunRecord(0, 1, 2.0), RunRecord(0, 0, 3.0)]
        lines = records_csv(recs).splitlines()[1:]
        assert [ln.split(",")[:2] for ln in lines] == [["0", "0"], ["0", "1"], ["1", "0"]]

    def test_json_round_trip(self):
        summary = {"b": {"mean": 0.1234567891234, "std": float("nan")}, "a": [1, 2.5], "ok": True}
        text = summary_json(summary)
        assert json.loads(text)["b"] == {"mean": 0.123456789, "std": None}
        assert summary_json(json.loads(text)) == text

    def test_slug(self):
        assert slug("FoMoH-2D (LR-Sch.)") == "FoMoH-2D_LR-Sch"

    def test_median_curves(self):
        text = median_curves_csv({"B": np.array([2.0, 1.0]), "A": np.array([3.0])})
        assert text == "method,iter,median_loss\nA,0,3\nB,0,2\nB,1,1\n"

    def test_emit(self, tmp_path):
        traj = Trajectory("FoMoH-2D", 0, [RunRecord(0, 0, 1.0), RunRecord(0, 1, 0.5)])
        result = ExperimentResult({"FoMoH-2D": [traj]}, {"x": 1.0}, {"FoMoH-2D": np.array([1.0, 0.5])})
        written = emit_outputs(result, tmp_path / "out")
        assert sorted(p.name for p in written) == ["FoMoH-2D.csv", "median_curves.csv", "summary.json"]

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError):
            emit_outputs(ExperimentResult({}, {}), blocker / "sub")


class TestTraining:
    def test_golden_sgd(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        result = run_experiment(small_config(synth_dir, tmp_path), train, val)
        got = records_csv(result.trajectories["BP"][0].records)
        golden = GOLDEN.read_text()
        assert got.splitlines()[0] == golden.splitlines()[0]
        for a, b in zip(got.splitlines()[1:], golden.splitlines()[1:]):
            np.testing.assert_allclose([float(v) for v in a.split(",")],
                                       [float(v) for v in b.split(",")], rtol=1e-6)
        assert len(got.splitlines()) == len(golden.splitlines()) == 3

    def test_zero_epochs(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        result = run_experiment(small_config(synth_dir, tmp_path, epochs=0), train, val)
        traj = result.trajectories["BP"][0]
        assert len(traj.records) == 1
        s = result.summary["BP"]
        assert s["val_loss"]["mean"] == pytest.approx(math.log(10), rel=0.05)
        assert s["val_acc"]["mean"] == traj.records[0].val_acc

    def test_duplicate_seeds_identical(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        cfg = small_config(synth_dir, tmp_path, seeds=[3, 3], epochs=2,
                           methods=[{"method": "FoMoH-KD", "K": 2, "eta": 0.2, "batch_size": 32}])
        a, b = run_experiment(cfg, train, val).trajectories["FoMoH-2D"]
        assert records_csv(a.records) == records_csv(b.records)

    def test_rerun_bytes_identical(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        texts = []
        for run in ("a", "b"):
            cfg = small_config(synth_dir, tmp_path / run, epochs=2, seeds=[0, 1],
                               methods=[{"method": "FGD", "eta": 1e-3, "batch_size": 64},
                                        {"method": "FoMoH-BP", "eta": 0.5, "batch_size": 64}])
            emit_outputs(run_experiment(cfg, train, val), cfg.out_dir)
            texts.append({p.name: p.read_bytes() for p in sorted(Path(cfg.out_dir).iterdir())})
        assert texts[0] == texts[1]
        assert set(texts[0]) == {"FGD.csv", "FoMoH-BP.csv", "summary.json"}

    def test_shared_shuffles(self):
        a, _ = trajectory_streams(7)
        b, _ = trajectory_streams(7)
        np.testing.assert_array_equal(a.permutation(50), b.permutation(50))
        _, t = trajectory_streams(7)
        assert not np.array_equal(trajectory_streams(7)[0].standard_normal(5), t.standard_normal(5))

    def test_aborted_seed(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        # non-finite inputs make every step non-finite, so every step is rejected
        bad = DatasetBatch(np.full_like(train.inputs, np.nan), train.labels)
        cfg = small_config(synth_dir, tmp_path, epochs=3, seeds=[0, 1],
                           methods=[{"method": "FGD", "eta": 1e-3, "batch_size": 32}])
        with np.errstate(all="ignore"):
            result = run_experiment(cfg, bad, val)
        traj = result.trajectories["FGD"][0]
        assert traj.aborted and len(traj.records) == 2
        assert "8/8 steps rejected" in traj.diagnostic
        assert set(result.summary["FGD"]["aborted"]) == {"0", "1"}

    def test_scheduler_applied(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        cfg = small_config(synth_dir, tmp_path, epochs=3, methods=[
            {"method": "BP", "eta": 0.1, "batch_size": 32,
             "scheduler": {"kind": "step_decay", "factor": 0.5, "period": 1}}])
        recs = run_experiment(cfg, train, val).trajectories["BP (LR-Sch.)"][0].records
        assert [r.eta for r in recs] == [0.1, 0.1, 0.05, 0.025]

    def test_float32_training(self, synth_dir, tmp_path):
        train, val = load_mnist_idx(synth_dir)
        cfg = small_config(synth_dir, tmp_path, precision="f32", epochs=2,
                           methods=[{"method": "FoMoH-KD", "K": 2, "eta": 0.2, "batch_size": 32}])
        recs = run_experiment(cfg, train, val).trajectories["FoMoH-2D"][0].records
        assert recs[-1].train_loss < recs[0].train_loss


class TestRosenbrockSuite:
    def test_shared_starts_and_outputs(self, tmp_path):
        cfg = RosenbrockConfig(dims=(2,), seeds=(0, 1, 2), iterations=30,
                               methods_2d=("FoMoH-2D", "Newton"))
        result = run_rosenbrock_suite(cfg)[2]
        for a, b in zip(result.trajectories["FoMoH-2D"], result.trajectories["Newton"]):
            assert a.records[0].train_loss == b.records[0].train_loss
        assert result.curves["Newton"].shape == (31,)
        emit_outputs(result, tmp_path)
        assert (tmp_path / "median_curves.csv").read_text().startswith("method,iter,median_loss\n")

    def test_newton_converges_within_50(self):
        cfg = RosenbrockConfig(dims=(2,), seeds=tuple(range(10)), iterations=50, methods_2d=("Newton",))
        trajs = run_rosenbrock_suite(cfg)[2].trajectories["Newton"]
        assert all(t.records[-1].train_loss < 1e-10 for t in trajs)

    def test_ten_d_methods(self):
        cfg = RosenbrockConfig(dims=(10,), seeds=(0,), iterations=3, ks_10d=(2, 5, 10))
        assert set(run_rosenbrock_suite(cfg)[10].trajectories) == {"FoMoH-2D", "FoMoH-5D", "FoMoH-10D", "Newton"}

    def test_helpers(self):
        t1 = Trajectory("x", 0, [RunRecord(0, i, v) for i, v in enumerate([5.0, 1e-7])])
        t2 = Trajectory("x", 1, [RunRecord(1, i, v) for i, v in enumerate([5.0, 4.0, 3.0])])
        np.testing.assert_array_equal(loss_matrix([t1, t2], 2), [[5.0, 1e-7, 1e-7], [5.0, 4.0, 3.0]])
        np.testing.assert_array_equal(iterations_to([t1, t2], 1e-6), [1.0, math.inf])


class TestSingleStep:
    def test_small_study(self, tmp_path):
        study = single_step_study(n_samples=200, seed=1)
        assert {k: len(v) for k, v in study.steps.items()} == {"FGD": 200, "FoMoH": 200, "FoMoH-2D": 200}
        np.testing.assert_allclose(study.mean("FoMoH-2D"), study.newton, rtol=1e-6)
        files = emit_single_step(study, tmp_path)
        lines = files[0].read_text().splitlines()
        assert lines[0] == "method,sample,dx,dy" and len(lines) == 602
        assert json.loads(files[1].read_text())["FGD"]["n_samples"] == 200


class TestCLI:
    def test_check(self, capsys):
        assert main(["check"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 5 and "[FAIL]" not in out
        assert run_checks(verbose=False)

    def test_train(self, synth_dir, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"model": {"kind": "logreg"}, "epochs": 1,
                                       "methods": [{"method": "BP", "eta": 0.1, "batch_size": 64}]}))
        out = tmp_path / "runs"
        rc = main(["train", "--config", str(cfg), "--data", str(synth_dir), "--out", str(out),
                   "--seed", "0,1", "--precision", "f64", "--no-timing"])
        assert rc == 0
        rows = (out / "BP.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2
        assert all(r.split(",")[7] == "0" for r in rows[1:])
        assert "BP" in capsys.readouterr().out

    def test_train_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("model: {kind: logreg}\nmethods: []\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err

    def test_train_missing_data(self, tmp_path, monkeypatch):
        monkeypatch.delenv(DATA_ENV, raising=False)
        cfg = tmp_path / "c.yaml"
        cfg.write_text("model: {kind: logreg}\nmethods: [{method: BP, eta: 0.1}]\n")
        assert main(["train", "--config", str(cfg)]) == 2

    def test_rosenbrock(self, tmp_path, capsys):
        rc = main(["rosenbrock", "--dims", "2", "--iterations", "20", "--seed", "0,1",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "D2" / "summary.json").exists()
        assert "FoMoH-2D" in capsys.readouterr().out

    def test_single_step(self, tmp_path, capsys):
        assert main(["single-step", "--samples", "50", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "single_step_samples.csv").exists()

    def test_usage_error(self):
        with pytest.raises(SystemExit):
            main(["train", "--precision", "f16"])
