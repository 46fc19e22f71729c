import json
import math

import numpy as np
import pytest

from matinfo.errors import ConfigError, DegenerateLabels, DivergedLoss
from matinfo.measures import (
    effective_rank,
    eigen_js,
    joint_entropy,
    matrix_js,
    mutual_information,
    tcr,
)
from matinfo.spectral import gram_kernel, load_feature_csv, psd_sanitize
from matinfo.sandbox import (
    Decoder,
    Encoder,
    SandboxConfig,
    descent_probe,
    format_sweep,
    linear_probe,
    make_dataset,
    mu_sweep,
    train,
    train_masked,
    train_siamese,
    write_trajectory,
)
from matinfo.sandbox.train import augment, build_model

SMALL = dict(n_samples=128, batch=64, steps=40, record_every=10, d=4, hidden=16)


class TestConfig:
    def test_loss_defaults(self):
        assert SandboxConfig(loss="mmae").lam == 0.01
        assert SandboxConfig(loss="mmae").mu == 1.0
        assert SandboxConfig(loss="mmae").mask_ratio == 0.75
        assert SandboxConfig(loss="mae").lam == 0.0

    def test_explicit_values_win(self):
        c = SandboxConfig(loss="barlow", lam=0.3, lr=0.01)
        assert (c.lam, c.lr) == (0.3, 0.01)

    @pytest.mark.parametrize("field,value", [("d", 0), ("batch", 1), ("mask_ratio", 1.0),
                                             ("mu", 0.0), ("steps", 20001), ("loss", "byol")])
    def test_invalid(self, field, value):
        with pytest.raises(ConfigError) as err:
            SandboxConfig(**{field: value})
        assert err.value.field == field

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("loss: umae\nmask-ratio: 0.5\nsteps: 10\n")
        c = SandboxConfig.from_file(path)
        assert (c.loss, c.mask_ratio, c.steps, c.lam) == ("umae", 0.5, 10, 0.01)

    def test_json_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"loss": "spectral", "d": 6}))
        assert SandboxConfig.from_file(path).d == 6

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            SandboxConfig.from_mapping({"learning_rate": 0.1})
        assert err.value.field == "learning_rate"

    def test_round_trip(self):
        c = SandboxConfig(loss="mmae", seed=3)
        assert SandboxConfig.from_mapping(c.to_dict()) == c


class TestData:
    @pytest.mark.parametrize("dataset", ["latent_linear", "cluster_mixture"])
    def test_deterministic(self, dataset):
        c = SandboxConfig(dataset=dataset, n_samples=50, batch=10)
        a, b = make_dataset(c), make_dataset(c)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.samples.shape == (50, 64)
        assert np.all(np.isfinite(a.samples))

    def test_seed_changes_data(self):
        c = SandboxConfig(n_samples=20, batch=10)
        assert not np.array_equal(make_dataset(c, 0).samples, make_dataset(c, 1).samples)

    def test_cluster_labels(self):
        ds = make_dataset(SandboxConfig(dataset="cluster_mixture", n_samples=400, batch=10, n_clusters=3))
        assert ds.n_tasks == 1
        assert set(np.unique(ds.labels)) == {0, 1, 2}


class TestModel:
    @pytest.mark.parametrize("kind", ["mlp", "affine"])
    def test_unit_columns(self, kind):
        enc = Encoder(12, 5, hidden=7, kind=kind, rng=np.random.default_rng(0))
        z, _ = enc.forward(np.random.default_rng(1).standard_normal((12, 9)))
        np.testing.assert_allclose(np.linalg.norm(z, axis=0), np.ones(9), atol=1e-14)

    def test_parameter_count(self):
        assert Encoder(12, 5, hidden=7).parameter_count == 7 * 12 + 7 + 5 * 7 + 5
        assert Encoder(12, 5, kind="affine").parameter_count == 5 * 12 + 5
        assert Decoder(5, 12).parameter_count == 12 * 5 + 12

    def test_augmentations_differ(self):
        x = np.random.default_rng(2).standard_normal((64, 8))
        for kind, s in [("noise", 0.1), ("dropout", 0.2), ("patch_mask", 0.5)]:
            c = SandboxConfig(augmentation=kind, aug_strength=s)
            rng = np.random.default_rng(3)
            assert not np.array_equal(augment(x, c, rng), augment(x, c, rng))


class TestTraining:
    def test_zero_steps(self):
        run = train(SandboxConfig(steps=0, **{k: v for k, v in SMALL.items() if k != "steps"}))
        assert len(run.trajectory) == 1 and run.trajectory[0].step == 0

    def test_record_schedule(self):
        run = train(SandboxConfig(**{**SMALL, "steps": 25}))
        assert list(run.steps) == [0, 10, 20, 25]

    @pytest.mark.parametrize("loss", ["barlow", "spectral", "infonce", "mae", "umae", "mmae"])
    def test_bitwise_deterministic(self, loss, tmp_path):
        c = SandboxConfig(loss=loss, **SMALL)
        write_trajectory(train(c), tmp_path / "a")
        write_trajectory(train(c), tmp_path / "b")
        assert (tmp_path / "a" / "trajectory.jsonl").read_bytes() == (tmp_path / "b" / "trajectory.jsonl").read_bytes()

    def test_mmae_lambda_zero_equals_mae(self):
        mae = train(SandboxConfig(loss="mae", **SMALL))
        mmae = train(SandboxConfig(loss="mmae", lam=0.0, **SMALL))
        np.testing.assert_array_equal([r.loss.terms["reconstruction"] for r in mae.trajectory],
                                      [r.loss.terms["reconstruction"] for r in mmae.trajectory])
        np.testing.assert_array_equal(mae.series("effective_rank"), mmae.series("effective_rank"))

    def test_family_guards(self):
        with pytest.raises(ValueError):
            train_siamese(SandboxConfig(loss="mae", **SMALL))
        with pytest.raises(ValueError):
            train_masked(SandboxConfig(loss="barlow", **SMALL))

    def test_diverged_loss_keeps_trajectory(self):
        with pytest.raises(DivergedLoss) as err:
            train(SandboxConfig(loss="mae", lr=1e6, steps=60, record_every=1, n_samples=128, batch=64))
        assert len(err.value.trajectory) >= 1
        assert all(math.isfinite(r.loss.total) for r in err.value.trajectory)


class TestRecords:
    @pytest.fixture(scope="class")
    @staticmethod
    def siamese_run():
        return train(SandboxConfig(loss="barlow", **SMALL))

    @pytest.fixture(scope="class")
    @staticmethod
    def masked_run():
        return train(SandboxConfig(loss="mmae", **SMALL))

    def test_siamese_measures_recomputed(self, siamese_run):
        for rec in siamese_run.trajectory:
            k1, k2 = psd_sanitize(rec.matrices["k1"]), psd_sanitize(rec.matrices["k2"])
            expected = {
                "mutual_information": mutual_information(k1, k2).value,
                "joint_entropy": joint_entropy(k1, k2).value,
                "matrix_js": matrix_js(k1, k2).value,
                "eigen_js": eigen_js(k1, k2).value,
                "effective_rank": effective_rank(k1.data).value,
                "tcr": tcr(k1, 1.0).value,
            }
            for label, value in expected.items():
                assert rec.value(label) == pytest.approx(value, abs=1e-8)

    def test_masked_measures_recomputed(self, masked_run):
        for rec in masked_run.trajectory:
            z = rec.matrices["z"]
            assert rec.value("tcr") == pytest.approx(tcr(z, 1.0).value, abs=1e-8)
            assert rec.value("effective_rank") == pytest.approx(effective_rank(gram_kernel(z).data).value, abs=1e-8)

    def test_bounds_every_step(self, siamese_run):
        ln_d = math.log(siamese_run.config.d)
        for rec in siamese_run.trajectory:
            assert -1e-8 <= rec.value("mutual_information") <= ln_d + 1e-8
            assert -1e-8 <= rec.value("joint_entropy") <= ln_d + 1e-8
            assert -1e-8 <= rec.value("matrix_js") <= math.log(2) + 1e-8
            assert -1e-8 <= rec.value("eigen_js") <= math.log(2) + 1e-8
            assert 1 - 1e-8 <= rec.value("effective_rank") <= siamese_run.config.d + 1e-8

    @pytest.mark.parametrize("loss", ["barlow", "spectral", "infonce", "mae", "umae", "mmae"])
    def test_descent_probe(self, loss):
        config = SandboxConfig(loss=loss, **SMALL)
        enc, dec = build_model(config)
        data = make_dataset(config).samples
        rng = np.random.default_rng(0)
        for k in range(10):
            x = data[rng.choice(len(data), size=config.batch, replace=False)].T
            assert descent_probe(config, enc, dec, x, seed=k)

    def test_trajectory_file(self, siamese_run, tmp_path):
        path = write_trajectory(siamese_run, tmp_path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(siamese_run.trajectory)
        first = json.loads(lines[0])
        assert first["step"] == 0
        labels = [m["label"] for m in first["measures"]]
        assert {"mutual_information", "joint_entropy", "matrix_js", "eigen_js"} <= set(labels)

    def test_feature_dumps(self, tmp_path):
        run = train(SandboxConfig(loss="barlow", dump_features=True, **SMALL))
        write_trajectory(run, tmp_path)
        z = load_feature_csv(tmp_path / "features" / "branch1" / "step_40.csv").data
        np.testing.assert_array_equal(z, run.final.matrices["z1"])
        assert (tmp_path / "kernels" / "branch2" / "step_0.csv").exists()


class TestProbe:
    def test_separable_clusters(self):
        rng = np.random.default_rng(0)
        y = np.repeat([0, 1], 100)
        z = rng.standard_normal((3, 200)) * 0.1
        z[0] += np.where(y == 1, 2.0, -2.0)
        perm = rng.permutation(200)
        z, y = z[:, perm], y[perm]
        assert linear_probe(z[:, :100], y[:100], z[:, 100:], y[100:]) == 1.0

    def test_chance_level(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((4, 2000))
        y = rng.integers(0, 2, 2000)
        acc = linear_probe(z[:, :1000], y[:1000], z[:, 1000:], y[1000:])
        assert acc == pytest.approx(0.5, abs=0.1)

    def test_missing_class(self):
        z = np.random.default_rng(2).standard_normal((2, 10))
        with pytest.raises(DegenerateLabels):
            linear_probe(z[:, :5], np.zeros(5, int), z[:, 5:], np.array([0, 1, 0, 1, 0]))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        z, y = rng.standard_normal((3, 60)), rng.integers(0, 3, 60)
        assert linear_probe(z[:, :30], y[:30], z[:, 30:], y[30:], seed=4) == \
            linear_probe(z[:, :30], y[:30], z[:, 30:], y[30:], seed=4)


class TestSweep:
    def test_single_row(self):
        rows = mu_sweep(SandboxConfig(loss="mmae", **SMALL), [1.0])
        table = format_sweep(rows).splitlines()
        assert len(table) == 2 and table[0].split("\t")[0] == "mu"

    def test_rows_finite(self):
        rows = mu_sweep(SandboxConfig(loss="mmae", **SMALL), [0.5, 3.0])
        assert [r["mu"] for r in rows] == [0.5, 3.0]
        assert all(math.isfinite(r[k]) for r in rows for k in r)
