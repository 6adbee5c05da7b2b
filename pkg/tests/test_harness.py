"""Training-harness tests: datasets, training, evaluation, checkpoints, CSV."""

import json
import warnings

import numpy as np
import pytest

from steinbn.data import Dataset, load_csv_images, make_synthetic_blobs, save_csv_images, split_indices
from steinbn.harness import (
    RESULTS_HEADER,
    Checkpoint,
    ExperimentConfig,
    ResultRow,
    aggregate_results,
    evaluate_under_noise,
    load_arrays,
    make_dataset,
    rows_from_csv,
    rows_to_csv,
    run_sweep,
    save_arrays,
    train_model,
)
from steinbn.tensor import InvalidInputError

FAST = dict(
    n_classes=4,
    n_per_class=50,
    channels=3,
    hw=2,
    hidden=16,
    max_epochs=3,
    seeds=[1],
)


class TestData:
    def test_blobs_shape_and_labels(self):
        ds = make_synthetic_blobs(4, 25, 3, 2, sep=3.0, seed=0)
        assert ds.images.shape == (100, 3, 2, 2)
        assert ds.n_classes == 4
        assert np.bincount(ds.labels).tolist() == [25, 25, 25, 25]

    def test_blobs_deterministic(self):
        a = make_synthetic_blobs(3, 10, 2, 2, sep=1.0, seed=7)
        b = make_synthetic_blobs(3, 10, 2, 2, sep=1.0, seed=7)
        np.testing.assert_array_equal(a.images, b.images)

    def test_blobs_separation_scaling(self):
        # class centers grow with sep while within-class spread stays unit
        ds = make_synthetic_blobs(4, 200, 2, 2, sep=10.0, seed=1)
        for cls in range(4):
            cut = ds.images[ds.labels == cls]
            assert cut.std(axis=0).mean() == pytest.approx(1.0, abs=0.1)

    def test_blobs_invalid_inputs(self):
        with pytest.raises(InvalidInputError):
            make_synthetic_blobs(1, 10, 2, 2, sep=1.0, seed=0)
        with pytest.raises(InvalidInputError):
            make_synthetic_blobs(3, 10, 2, 2, sep=-1.0, seed=0)

    def test_split_is_80_10_10_partition(self):
        tr, va, te = split_indices(100, seed=3)
        assert len(tr) == 80 and len(va) == 10 and len(te) == 10
        assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(100))

    def test_split_deterministic(self):
        a = split_indices(50, seed=4)
        b = split_indices(50, seed=4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_csv_images_roundtrip(self, tmp_path):
        ds = make_synthetic_blobs(3, 5, 2, 2, sep=1.0, seed=5)
        # rescale into [0, 1] as the external schema expects
        lo, hi = ds.images.min(), ds.images.max()
        ds = Dataset(images=(ds.images - lo) / (hi - lo), labels=ds.labels)
        path = tmp_path / "imgs.csv"
        save_csv_images(path, ds)
        header = path.read_text().splitlines()[0]
        assert header == "label," + ",".join(f"px_{i}" for i in range(8))
        back = load_csv_images(path, channels=2, hw=2)
        np.testing.assert_allclose(back.images, ds.images, atol=1e-12)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_csv_images_wrong_width_rejected(self, tmp_path):
        path = tmp_path / "imgs.csv"
        path.write_text("label,px_0,px_1\n0,0.1,0.2\n")
        with pytest.raises(InvalidInputError):
            load_csv_images(path, channels=3, hw=2)


class TestConfig:
    def test_json_roundtrip_with_lambda_key(self):
        cfg = ExperimentConfig(bn_variant="lasso", lam=0.05, seeds=[1, 2])
        text = cfg.to_json()
        assert json.loads(text)["lambda"] == 0.05
        assert "lam" not in json.loads(text)
        back = ExperimentConfig.from_json(text)
        assert back == cfg

    def test_invalid_configs_rejected(self):
        with pytest.raises(InvalidInputError):
            ExperimentConfig(batch_size=1)
        with pytest.raises(InvalidInputError):
            ExperimentConfig(seeds=[])
        with pytest.raises(InvalidInputError):
            ExperimentConfig(noise_levels=[0, 120])
        with pytest.raises(ValueError):
            ExperimentConfig(bn_variant="bogus")


class TestResultsCsv:
    def test_header_is_bit_exact(self):
        assert RESULTS_HEADER == "method,batch_size,noise_pct,seed,metric,value,epochs"

    def test_roundtrip(self):
        rows = [
            ResultRow("stein", 32, 10.0, 1, "accuracy", 87.5, 12),
            ResultRow("standard", 64, 0.0, 2, "accuracy", 99.0, 7),
        ]
        assert rows_from_csv(rows_to_csv(rows)) == rows

    def test_roundtrip_skips_comment_lines(self):
        rows = [ResultRow("stein", 32, 0.0, 1, "accuracy", 50.0, 1)]
        text = rows_to_csv(rows) + "# config: {}\n"
        assert rows_from_csv(text) == rows

    def test_value_range_enforced(self):
        with pytest.raises(InvalidInputError):
            ResultRow("stein", 32, 0.0, 1, "accuracy", 101.0, 1)


class TestCheckpointFormat:
    def test_array_blob_roundtrip(self, tmp_path):
        arrays = {
            "w": np.arange(6.0).reshape(2, 3),
            "b": np.array([1.5]),
            "scalar": np.array(2.5),
        }
        path = tmp_path / "a.ckpt"
        save_arrays(path, arrays)
        assert path.read_bytes()[:4] == b"SBN1"
        back = load_arrays(path)
        for k, v in arrays.items():
            np.testing.assert_array_equal(back[k], v)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(InvalidInputError):
            load_arrays(path)

    def test_checkpoint_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(**FAST)
        ds = make_dataset(cfg, seed=1)
        ckpt = train_model(cfg, ds, seed=1)
        path = tmp_path / "model.ckpt"
        ckpt.save(path)
        back = Checkpoint.load(path)
        assert back.config == cfg
        assert back.seed == ckpt.seed
        assert back.epochs_trained == ckpt.epochs_trained
        assert back.best_val_acc == pytest.approx(ckpt.best_val_acc)
        for k in ckpt.arrays:
            np.testing.assert_array_equal(back.arrays[k], ckpt.arrays[k])


class TestTraining:
    def test_zero_epochs_returns_initialization_at_chance(self):
        # larger test split so "near chance" is statistically meaningful
        cfg = ExperimentConfig(**{**FAST, "max_epochs": 0, "n_per_class": 250})
        ds = make_dataset(cfg, seed=1)
        ckpt = train_model(cfg, ds, seed=1)
        assert ckpt.epochs_trained == 0
        rows = evaluate_under_noise(ckpt, ds, [0], cfg.noise_family, seed=1)
        assert abs(rows[0].value - 25.0) < 20.0  # 4 classes, near chance

    def test_strong_signal_reaches_95(self):
        cfg = ExperimentConfig(**{**FAST, "sep": 10.0, "max_epochs": 20})
        ds = make_dataset(cfg, seed=1)
        ckpt = train_model(cfg, ds, seed=1)
        rows = evaluate_under_noise(ckpt, ds, [0], cfg.noise_family, seed=1)
        assert rows[0].value >= 95.0

    def test_determinism_of_full_runs(self):
        cfg = ExperimentConfig(**FAST)
        a = run_sweep(cfg)
        b = run_sweep(cfg)
        assert a == b

    @pytest.mark.parametrize("variant", ["standard", "stein", "mean-only", "khoshsirat", "lasso", "ridge"])
    def test_all_variants_train(self, variant):
        cfg = ExperimentConfig(**{**FAST, "bn_variant": variant, "lam": 0.01})
        rows = run_sweep(cfg)
        assert all(0.0 <= r.value <= 100.0 for r in rows)

    def test_tiny_cnn_trains(self):
        cfg = ExperimentConfig(**{**FAST, "model": "TinyCNN", "max_epochs": 2})
        rows = run_sweep(cfg)
        assert all(0.0 <= r.value <= 100.0 for r in rows)

    def test_lasso_ridge_zero_lambda_match_standard_trajectories(self):
        base = ExperimentConfig(**{**FAST, "bn_variant": "standard"})
        ref = run_sweep(base)
        for variant in ("lasso", "ridge"):
            cfg = ExperimentConfig(**{**FAST, "bn_variant": variant, "lam": 0.0})
            rows = run_sweep(cfg)
            assert [r.value for r in rows] == [r.value for r in ref]


class TestEvaluation:
    def _trained(self):
        cfg = ExperimentConfig(**FAST)
        ds = make_dataset(cfg, seed=1)
        return cfg, ds, train_model(cfg, ds, seed=1)

    def test_level_zero_equals_clean_accuracy(self):
        cfg, ds, ckpt = self._trained()
        rows = evaluate_under_noise(ckpt, ds, [0, 0], cfg.noise_family, seed=1)
        assert rows[0].value == rows[1].value

    def test_rows_carry_config_fields(self):
        cfg, ds, ckpt = self._trained()
        rows = evaluate_under_noise(ckpt, ds, [0, 10], cfg.noise_family, seed=1)
        assert [r.noise_pct for r in rows] == [0.0, 10.0]
        assert all(r.method == cfg.bn_variant for r in rows)
        assert all(r.batch_size == cfg.batch_size for r in rows)

    def test_noise_draws_deterministic_per_level(self):
        cfg, ds, ckpt = self._trained()
        a = evaluate_under_noise(ckpt, ds, [20], cfg.noise_family, seed=1)
        b = evaluate_under_noise(ckpt, ds, [20], cfg.noise_family, seed=1)
        assert a == b

    def test_feature_noise_flag(self):
        cfg = ExperimentConfig(**{**FAST, "feature_noise": True})
        ds = make_dataset(cfg, seed=1)
        ckpt = train_model(cfg, ds, seed=1)
        rows = evaluate_under_noise(ckpt, ds, [0, 20], cfg.noise_family, seed=1)
        assert all(0.0 <= r.value <= 100.0 for r in rows)


class TestAggregate:
    def test_mean_and_sd(self):
        rows = [
            ResultRow("stein", 32, 0.0, s, "accuracy", v, 5)
            for s, v in [(1, 1.0), (2, 3.0)]
        ]
        out = aggregate_results(rows)
        lines = out.splitlines()
        assert lines[0] == "method,batch_size,noise_pct,metric,mean,sd,n_seeds"
        cells = lines[1].split(",")
        assert float(cells[4]) == 2.0
        assert float(cells[5]) == pytest.approx(np.sqrt(2.0), rel=1e-5)
        assert cells[6] == "2"

    def test_duplicate_value_zero_sd(self):
        rows = [ResultRow("stein", 32, 0.0, s, "accuracy", 7.0, 5) for s in (1, 2)]
        assert float(aggregate_results(rows).splitlines()[1].split(",")[5]) == 0.0

    def test_single_seed_cell_warned_and_omitted(self):
        rows = [ResultRow("stein", 32, 0.0, 1, "accuracy", 7.0, 5)]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = aggregate_results(rows)
        assert any("single seed" in str(w.message) or "fewer than 2" in str(w.message) for w in caught)
        assert any(line.startswith("# warning") for line in out.splitlines())
