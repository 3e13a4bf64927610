import json
import logging
import math

import numpy as np
import pytest

from landseg.dataset import BandStats, DataError, compute_stats, cut_patches
from landseg.engine import Tensor
from landseg.engine.gradcheck import grad_check
from landseg.models import build_baseline_unet, encoder_checksum
from landseg.training import (LossConfig, LossConfigError, NumericAbort, TrainConfig, TrainingSet, TrainLog,
                              bce_with_logits, composite_loss, fit, lr_at, one_hot, pos_weights, soft_dice)


def naive_bce(y, t, p, m):
    """Direct per-element formula in float64 (explicit sigmoid and logs)."""
    s = 1 / (1 + np.exp(-y))
    pc = np.asarray(p).reshape(1, -1, 1, 1)
    ell = -(pc * t * np.log(s) + (1 - t) * np.log(1 - s))
    mm = np.broadcast_to(m[:, None], y.shape)
    return ell[mm].sum() / mm.sum()


def naive_dice(y, t, m, eps=1.0):
    s = 1 / (1 + np.exp(-y))
    out = []
    for c in range(y.shape[1]):
        sc, tc = s[:, c][m], t[:, c][m]
        out.append(1 - (2 * np.sum(sc * tc) + eps) / (np.sum(sc) + np.sum(tc) + eps))
    return np.mean(out)


@pytest.fixture
def case(rng):
    y = rng.standard_normal((2, 3, 4, 4)) * 2
    t = (rng.random((2, 3, 4, 4)) < 0.3).astype(np.float64)
    m = rng.random((2, 4, 4)) < 0.8
    return y, t, m


class TestBce:
    def test_ln2(self):
        v = bce_with_logits(Tensor(np.zeros((1, 1, 1, 1))), np.ones((1, 1, 1, 1)), [1.0]).item()
        assert abs(v - math.log(2)) < 1e-9

    def test_saturation(self):
        one = np.ones((1, 1, 1, 1))
        assert bce_with_logits(Tensor(np.full((1, 1, 1, 1), 20.0)), one).item() < 1e-8
        assert bce_with_logits(Tensor(np.full((1, 1, 1, 1), -20.0)), one).item() == pytest.approx(20, abs=1e-8)

    def test_naive_oracle(self, case):
        y, t, m = case
        p = [0.5, 2.0, 1.0]
        got = bce_with_logits(Tensor(y), t, p, m).item()
        assert abs(got - naive_bce(y, t, p, m)) / naive_bce(y, t, p, m) < 1e-6

    def test_linear_in_p(self, case):
        y, t, m = case
        f = [bce_with_logits(Tensor(y), t, [a, 1.0, 1.0], m).item() for a in (1.0, 2.0, 3.0)]
        assert f[2] - f[1] == pytest.approx(f[1] - f[0], rel=1e-9)

    def test_pixel_permutation_invariant(self, case, rng):
        y, t, m = case
        perm = rng.permutation(16)

        def shuffle(a):
            return a.reshape(a.shape[:-2] + (16,))[..., perm].reshape(a.shape)
        a = bce_with_logits(Tensor(y), t, None, m).item()
        b = bce_with_logits(Tensor(shuffle(y)), shuffle(t), None, shuffle(m)).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_empty_mask(self, case):
        y, t, _ = case
        with pytest.raises(DataError):
            bce_with_logits(Tensor(y), t, None, np.zeros((2, 4, 4), bool))

    def test_extreme_logits_finite(self, case):
        _, t, m = case
        y = Tensor(np.where(t > 0, -50.0, 50.0), requires_grad=True)
        loss = composite_loss(y, t, LossConfig(), m)
        loss.backward()
        assert np.isfinite(loss.item()) and np.all(np.isfinite(y.grad))


class TestDice:
    def test_perfect_overlap(self):
        t = np.zeros((1, 2, 32, 32))
        t[0, 0, :16] = 1
        t[0, 1, 16:] = 1
        assert soft_dice(Tensor(np.where(t > 0, 20.0, -20.0)), t).item() < 1e-3

    def test_smoothing_empty_class(self):
        t = np.zeros((1, 1, 8, 8))
        assert soft_dice(Tensor(np.full(t.shape, -20.0)), t).item() < 1e-6

    def test_oracle(self, case):
        y, t, m = case
        got = soft_dice(Tensor(y), t, m).item()
        assert abs(got - naive_dice(y, t, m)) / naive_dice(y, t, m) < 1e-6


class TestComposite:
    def test_weights(self, case):
        y, t, m = case
        d = soft_dice(Tensor(y), t, m).item()
        b = bce_with_logits(Tensor(y), t, None, m).item()
        assert composite_loss(Tensor(y), t, LossConfig(1.0, 0.0), m).item() == d
        assert abs(composite_loss(Tensor(y), t, LossConfig(), m).item() - (d + b) / 2) < 1e-9

    def test_gradient(self, case):
        _, t, m = case
        err = grad_check(lambda y: composite_loss(y, t, LossConfig(), m, [0.5, 2, 3]), [(2, 3, 4, 4)], 3)
        assert err < 1e-3

    def test_non_negative(self, case):
        y, t, m = case
        assert composite_loss(Tensor(y), t, LossConfig(), m).item() >= 0

    def test_masked_pixels_zero_gradient(self, case):
        y, t, m = case
        yt = Tensor(y, requires_grad=True)
        composite_loss(yt, t, LossConfig(), m).backward()
        assert np.all(yt.grad.transpose(1, 0, 2, 3)[:, ~m] == 0)

    def test_config_validation(self):
        with pytest.raises(LossConfigError):
            LossConfig(pos_weight_mode="bogus")
        with pytest.raises(LossConfigError):
            LossConfig(pos_weight=(1.0, 0.0))
        cfg = LossConfig(pos_weight=(1.0, 2.0))
        assert LossConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


class TestPosWeights:
    def test_formula(self):
        assert pos_weights([10], [90])[0] == 9
        assert pos_weights([50], [50])[0] == 1
        np.testing.assert_array_equal(pos_weights([1, 2, 3], mode="ones"), [1, 1, 1])

    def test_zero_positives_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            p = pos_weights([0, 10], [100, 90])
        assert p[0] == 1 and p[1] == 9
        assert "no positive samples" in caplog.text


class TestLr:
    def test_examples(self):
        cfg = TrainConfig(freeze_encoder=True)
        assert lr_at(cfg, 0) == 5e-4
        assert lr_at(cfg, 20) == 2.5e-4
        assert lr_at(cfg, 80) == pytest.approx(3.125e-6, rel=1e-12)
        assert lr_at(cfg, 80, frozen_phase=False) == pytest.approx(5e-4 / 16)


def test_one_hot():
    t, m = one_hot(np.array([[[0, -1], [2, 1]]]), 3)
    assert t.shape == (1, 3, 2, 2)
    np.testing.assert_array_equal(m, [[[True, False], [True, True]]])
    np.testing.assert_array_equal(t.sum(axis=1), m)


@pytest.fixture(scope="module")
def tiny_set(small_areas, taxonomy):
    refs = [r for a in ("s0", "s1", "s2", "s3") for r in cut_patches(small_areas[a])]
    return TrainingSet(refs, small_areas, compute_stats(small_areas, list(small_areas)), taxonomy)


class TestFit:
    def test_smoke_and_log(self, tiny_set, tmp_path):
        cfg = TrainConfig(epochs=2, batch_size=2, seed=1, checkpoint_every=1)
        model, log = fit(build_baseline_unet(seed=0), tiny_set, cfg, out_dir=tmp_path)
        assert len(log) == 2 and [r.epoch for r in log.records] == [0, 1]
        assert all(math.isfinite(v) for v in log.losses)
        assert (tmp_path / "epoch_000.lckp").exists() and (tmp_path / "model.lckp").exists()
        back = TrainLog.load(tmp_path / "train_log.ndjson")
        assert back.losses == log.losses

    def test_bitwise_loss_sequence(self, tiny_set):
        cfg = TrainConfig(epochs=2, batch_size=2, seed=3)
        a = fit(build_baseline_unet(seed=0), tiny_set, cfg)[1].losses
        b = fit(build_baseline_unet(seed=0), tiny_set, cfg)[1].losses
        assert a == b

    def test_freeze_schedule(self, tiny_set):
        cfg = TrainConfig(epochs=3, batch_size=4, seed=0, freeze_encoder=True, unfreeze_epoch=2)
        m = build_baseline_unet(seed=0)
        sums = []
        fit(m, tiny_set, cfg, progress=lambda rec: sums.append((rec.frozen, encoder_checksum(m))))
        start = build_baseline_unet(seed=0)
        assert sums[0] == (True, encoder_checksum(start)) and sums[1] == sums[0]
        assert sums[2][0] is False and sums[2][1] != sums[1][1]

    def test_numeric_abort(self, tiny_set):
        m = build_baseline_unet(seed=0)
        m.head.bias.data[:] = np.nan
        with pytest.raises(NumericAbort) as err:
            fit(m, tiny_set, TrainConfig(epochs=1, batch_size=2))
        assert err.value.epoch == 0 and err.value.batch == 0

    def test_empty_set(self, tiny_set):
        empty = TrainingSet([], tiny_set.areas, BandStats.identity(), tiny_set.taxonomy)
        with pytest.raises(DataError):
            fit(build_baseline_unet(), empty, TrainConfig(epochs=1))

    def test_neg_over_pos_mode_runs(self, tiny_set):
        _, log = fit(build_baseline_unet(seed=0), tiny_set, TrainConfig(epochs=1, batch_size=4),
                     LossConfig(pos_weight_mode="neg_over_pos"))
        assert math.isfinite(log.losses[0])


def test_separable_data_fits():
    """30 epochs on well-separated classes cut the train loss below 0.3 of its start."""
    from landseg.dataset import generate_synthetic_area
    from landseg.models import BaselineUNetConfig
    from landseg.taxonomy import ClcTaxonomy, default_taxonomy

    codes = (112, 211, 312, 411)
    tx = ClcTaxonomy.from_records([r for r in default_taxonomy().to_records() if r["code3"] in codes + (523,)])
    areas = {f"s{i}": generate_synthetic_area(f"s{i}", 192, 192, seed=40 + i, classes=codes) for i in range(2)}
    data = TrainingSet([r for a in sorted(areas) for r in cut_patches(areas[a], hop=32)], areas,
                       compute_stats(areas, list(areas)), tx)
    model = build_baseline_unet(BaselineUNetConfig(num_classes=tx.size, encoder_channels=(8, 16, 32, 64)), seed=0)
    _, log = fit(model, data, TrainConfig(epochs=30, batch_size=2, initial_lr=3e-3, seed=0))
    assert log.losses[-1] < 0.3 * log.losses[0]
