import json
import math

import numpy as np
import pytest

from pecep.errors import DivergenceError, InvalidConfigError, InvalidInputError
from pecep.predictors import (
    PARAM_NAMES,
    ArrayDataset,
    FcnConfig,
    LinearPredictor,
    collect_residuals,
    cosine_lr,
    evaluate_mse,
    fcn_init,
    fcn_train,
    load_checkpoint,
    save_checkpoint,
)


def toy_model(dropout=0.0, seed=0):
    cfg = FcnConfig(hidden1=16, hidden2=8, dropout_rate=dropout, seed=seed)
    return fcn_init(cfg, 24, 6)


class TestInit:
    def test_shapes(self):
        model = toy_model()
        assert model.dims == (24, 16, 8, 6)
        assert model.params["w1"].shape == (24, 16)
        assert model.params["b3"].shape == (6,)

    def test_fan_in_bounds(self):
        model = fcn_init(FcnConfig(hidden1=64, hidden2=32), 100, 10)
        assert np.max(np.abs(model.params["w1"])) <= 0.1
        assert np.max(np.abs(model.params["w2"])) <= 1 / 8
        assert np.max(np.abs(model.params["w3"])) <= 1 / math.sqrt(32)

    def test_dtype(self):
        model = fcn_init(FcnConfig(hidden1=4, hidden2=4, dtype="float32"), 3, 2)
        assert all(v.dtype == np.float32 for v in model.params.values())

    def test_outputs_in_unit_interval(self):
        model = toy_model()
        y = model.predict(np.random.default_rng(1).standard_normal((50, 24)) * 100)
        assert np.all((y >= 0) & (y <= 1))


class TestGradients:
    @pytest.mark.parametrize("use_dropout", [False, True])
    def test_finite_difference(self, use_dropout):
        model = toy_model(dropout=0.25 if use_dropout else 0.0, seed=3)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((10, 24))
        t = rng.uniform(size=(10, 6))
        mask = model.dropout_mask(10, rng) if use_dropout else None
        _, grads = model.loss_and_grads(x, t, mask)
        h = 1e-5
        worst = 0.0
        for name in PARAM_NAMES:
            w = model.params[name]
            flat = w.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp, _ = model.loss_and_grads(x, t, mask)
                flat[i] = orig - h
                lm, _ = model.loss_and_grads(x, t, mask)
                flat[i] = orig
                num = (lp - lm) / (2 * h)
                ana = grads[name].reshape(-1)[i]
                denom = max(abs(num), abs(ana), 1e-7)
                worst = max(worst, abs(num - ana) / denom)
        assert worst < 1e-4

    def test_dropout_mask_scaling(self):
        model = fcn_init(FcnConfig(hidden1=2000, hidden2=4, dropout_rate=0.1), 3, 2)
        mask = model.dropout_mask(50, np.random.default_rng(0))
        np.testing.assert_allclose(np.unique(mask), [0.0, 1 / 0.9])
        assert mask.mean() == pytest.approx(1.0, abs=0.01)

    def test_no_mask_without_dropout(self):
        assert toy_model().dropout_mask(5, np.random.default_rng(0)) is None


class TestCosineSchedule:
    def test_endpoints(self):
        assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)
        assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)
        assert cosine_lr(100, 100, 1e-3) == pytest.approx(0.0, abs=1e-18)

    def test_monotone(self):
        lrs = [cosine_lr(s, 40, 1.0) for s in range(41)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))


class TestTraining:
    def test_overfits_small_problem(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((64, 24))
        t = rng.uniform(0.2, 0.8, size=(64, 6))
        cfg = FcnConfig(hidden1=64, hidden2=32, dropout_rate=0.0, epochs=300, batch_size=16,
                        base_learning_rate=3e-3, weight_decay=0.0)
        model = fcn_init(cfg, 24, 6)
        start = evaluate_mse(model, (x, t))
        model, hist = fcn_train(model, (x, t), (x, t), cfg)
        assert hist.train_mse[-1] < 0.01 * start
        assert len(hist.val_mse) == 300 and len(hist.learning_rate) == 300

    def test_reproducible(self):
        rng = np.random.default_rng(1)
        data = ArrayDataset(rng.standard_normal((40, 24)), rng.uniform(size=(40, 6)))
        cfg = FcnConfig(hidden1=16, hidden2=8, epochs=3, batch_size=8)
        a, _ = fcn_train(fcn_init(cfg, 24, 6), data, None, cfg)
        b, _ = fcn_train(fcn_init(cfg, 24, 6), data, None, cfg)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_divergence_raised(self):
        cfg = FcnConfig(hidden1=4, hidden2=4, epochs=2)
        model = fcn_init(cfg, 3, 2)
        x = np.full((8, 3), np.nan)
        with pytest.raises(DivergenceError) as exc:
            fcn_train(model, (x, np.zeros((8, 2))), None, cfg)
        assert exc.value.epoch == 0

    def test_learning_rate_history_starts_at_base(self):
        cfg = FcnConfig(hidden1=4, hidden2=4, epochs=4, base_learning_rate=2e-3)
        rng = np.random.default_rng(2)
        _, hist = fcn_train(fcn_init(cfg, 3, 2), (rng.standard_normal((10, 3)), np.zeros((10, 2))), None, cfg)
        assert hist.learning_rate[0] == pytest.approx(2e-3)
        assert all(a > b for a, b in zip(hist.learning_rate, hist.learning_rate[1:]))

    @pytest.mark.parametrize(
        "kw", [dict(dropout_rate=1.0), dict(dropout_rate=-0.1), dict(epochs=0), dict(batch_size=0), dict(hidden1=0)]
    )
    def test_config_validation(self, kw):
        with pytest.raises(InvalidConfigError):
            FcnConfig(**kw)


class TestResiduals:
    def test_identity_predictor(self):
        x = np.arange(6.0).reshape(3, 2)
        batch = collect_residuals(LinearPredictor(np.eye(2)), x, x + 1.0, mask=[True, False, True])
        np.testing.assert_array_equal(batch.residuals, np.ones((3, 2)))
        assert batch.masked().shape == (2, 2)
        assert batch.predictor_kind == "ols"

    def test_shape_checks(self):
        with pytest.raises(InvalidInputError):
            collect_residuals(LinearPredictor(np.eye(2)), np.zeros((3, 2)), np.zeros((4, 2)))
        with pytest.raises(InvalidInputError):
            collect_residuals(LinearPredictor(np.eye(2)), np.zeros((3, 3)), np.zeros((3, 2)))
        with pytest.raises(InvalidInputError):
            collect_residuals(LinearPredictor(np.eye(2)), np.zeros((3, 2)), np.zeros((3, 2)), mask=[True])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = FcnConfig(hidden1=16, hidden2=8, epochs=2, batch_size=4)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((12, 24))
        model, hist = fcn_train(fcn_init(cfg, 24, 6), (x, rng.uniform(size=(12, 6))), None, cfg)
        path = save_checkpoint(model, tmp_path / "fcn.ckpt", cfg, hist, {"species": 3})
        loaded, meta = load_checkpoint(path)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(loaded.params[name], model.params[name])
        np.testing.assert_array_equal(loaded.predict(x), model.predict(x))
        assert meta["species"] == 3 and meta["config"]["hidden1"] == 16
        assert meta["dims"] == [24, 16, 8, 6]
        json.dumps(meta)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"x" * 64)
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = save_checkpoint(toy_model(), tmp_path / "m.ckpt")
        raw = path.read_bytes()
        path.write_bytes(raw + b"\0" * 8)
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)
