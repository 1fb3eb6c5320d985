import numpy as np
import pytest

from triplane import engine as E
from triplane.config import PlaneConfig, ModelConfig, PEConfig, VolConfig, preset
from triplane.data import (
    CLASS_NAMES, OCCUPANCY_THRESHOLD, ShapeSample, gen_shapes, make_shape,
    occlude,
)
from triplane.backbone import VoxelGrid
from triplane.errors import ConfigError, DataError
from triplane.metrics import (
    chamfer_l2, classification_accuracy, f_score, iou, metric_suite,
)
from triplane.train import (
    Adam, TrainConfig, evaluate, load_checkpoint, restore_model,
    save_checkpoint, train_model,
)
from triplane.models import build_model, param_dict

from oracles import chamfer_two_sets

DIMS = (16, 16, 16)


class TestGenShapes:
    def test_same_seed_bit_identical(self):
        a = gen_shapes(seed=3, count=8, dims=DIMS, task="complete")
        b = gen_shapes(seed=3, count=8, dims=DIMS, task="complete")
        for sa, sb in zip(a, b):
            assert sa.label == sb.label
            np.testing.assert_array_equal(sa.volume.data.data, sb.volume.data.data)
            np.testing.assert_array_equal(sa.target.data.data, sb.target.data.data)

    def test_different_seeds_differ(self):
        a = gen_shapes(seed=3, count=4, dims=DIMS)
        b = gen_shapes(seed=4, count=4, dims=DIMS)
        assert any(not np.array_equal(x.volume.data.data, y.volume.data.data)
                   for x, y in zip(a, b))

    def test_balanced_classes(self):
        samples = gen_shapes(seed=0, count=16, dims=DIMS)
        labels = [s.label for s in samples]
        assert all(labels.count(c) == 4 for c in range(4))

    def test_sphere_volume_close_to_analytic(self):
        # occupancy fraction of a ball is its volume over the world cube
        rng_hits = 0
        for seed in range(6):
            occ = make_shape([77, seed], 0, (32, 32, 32))
            frac = (occ > OCCUPANCY_THRESHOLD).mean()
            # recover the radius from the generator's own rng stream
            rng = np.random.default_rng([77, seed])
            rng.standard_normal(4)
            rng.uniform(-0.15, 0.15, size=3)
            radius = rng.uniform(0.38, 0.6)
            expected = (4.0 / 3.0) * np.pi * radius ** 3 / 8.0
            if abs(frac - expected) <= 0.10 * expected:
                rng_hits += 1
        assert rng_hits >= 5  # within 10 percent on nearly all draws

    def test_every_sample_non_empty(self):
        for sample in gen_shapes(seed=1, count=12, dims=DIMS, task="complete"):
            frac = (sample.target.data.data > OCCUPANCY_THRESHOLD).mean()
            assert frac >= 0.01

    def test_small_dims_rejected(self):
        with pytest.raises(ConfigError):
            gen_shapes(seed=0, count=4, dims=(8, 8, 8))

    def test_values_in_unit_interval(self):
        for sample in gen_shapes(seed=2, count=4, dims=DIMS):
            data = sample.volume.data.data
            assert data.min() >= 0.0 and data.max() <= 1.0


class TestOcclude:
    def _shape(self, seed=0):
        return VoxelGrid(E.Tensor(make_shape([9, seed], 0, (32, 32, 32))))

    def test_fraction_bounds(self):
        with pytest.raises(ConfigError):
            occlude(self._shape(), 0.0, seed=0)
        with pytest.raises(ConfigError):
            occlude(self._shape(), 1.0, seed=0)

    def test_subset_of_original(self):
        grid = self._shape()
        out = occlude(grid, 0.4, seed=1)
        full = grid.data.data > OCCUPANCY_THRESHOLD
        cut = out.data.data > OCCUPANCY_THRESHOLD
        assert np.logical_and(cut, ~full).sum() == 0

    @pytest.mark.parametrize("fraction", [0.25, 0.4, 0.6])
    def test_removed_fraction_accuracy(self, fraction):
        for seed in range(5):
            grid = self._shape(seed)
            out = occlude(grid, fraction, seed=[5, seed])
            full = (grid.data.data > OCCUPANCY_THRESHOLD).sum()
            kept = (out.data.data > OCCUPANCY_THRESHOLD).sum()
            removed = (full - kept) / full
            assert removed == pytest.approx(fraction, abs=0.05)

    def test_small_fraction_remains_mostly_intact(self):
        grid = self._shape()
        out = occlude(grid, 0.05, seed=2)
        full = (grid.data.data > OCCUPANCY_THRESHOLD).sum()
        kept = (out.data.data > OCCUPANCY_THRESHOLD).sum()
        assert kept >= 0.90 * full

    def test_deterministic(self):
        grid = self._shape()
        a = occlude(grid, 0.4, seed=3).data.data
        b = occlude(grid, 0.4, seed=3).data.data
        np.testing.assert_array_equal(a, b)

    def test_empty_volume_rejected(self):
        empty = VoxelGrid(E.Tensor(np.zeros((1, 16, 16, 16), dtype=np.float32)))
        with pytest.raises(DataError):
            occlude(empty, 0.4, seed=0)


class TestMetrics:
    def test_identical_grids(self):
        vol = make_shape([1, 0], 2, (16, 16, 16))
        m = metric_suite(vol, vol)
        assert m.iou == 1.0 and m.f_score == 1.0 and m.accuracy == 1.0
        assert m.chamfer_l2 == 0.0

    def test_disjoint_sets(self):
        a = np.zeros((1, 4, 4, 4))
        b = np.zeros((1, 4, 4, 4))
        a[0, 0, 0, 0] = 1.0
        b[0, 3, 3, 3] = 1.0
        assert iou(a, b) == 0.0
        assert f_score(a, b) == 0.0

    def test_two_point_chamfer(self):
        a = np.zeros((1, 4, 4, 4))
        b = np.zeros((1, 4, 4, 4))
        a[0, 0, 0, 0] = 1.0
        b[0, 1, 0, 0] = 1.0
        assert chamfer_l2(a, b) == pytest.approx(1.0)

    def test_chamfer_matches_brute_oracle(self):
        rng = np.random.default_rng(8)
        a = np.zeros((1, 6, 6, 6))
        b = np.zeros((1, 6, 6, 6))
        pts_a = rng.integers(0, 6, size=(10, 3))
        pts_b = rng.integers(0, 6, size=(7, 3))
        for p in pts_a:
            a[0, p[0], p[1], p[2]] = 1.0
        for p in pts_b:
            b[0, p[0], p[1], p[2]] = 1.0
        expected = chamfer_two_sets(np.argwhere(a[0] > 0.5),
                                    np.argwhere(b[0] > 0.5))
        assert chamfer_l2(a, b) == pytest.approx(expected, rel=1e-9)

    def test_empty_empty_overlap_is_perfect(self):
        empty = np.zeros((1, 4, 4, 4))
        assert iou(empty, empty) == 1.0
        assert f_score(empty, empty) == 1.0

    def test_chamfer_on_empty_is_error(self):
        empty = np.zeros((1, 4, 4, 4))
        full = np.ones((1, 4, 4, 4))
        with pytest.raises(DataError):
            chamfer_l2(empty, full)
        with pytest.raises(DataError):
            chamfer_l2(empty, empty)

    def test_symmetry(self):
        a = make_shape([2, 0], 0, (16, 16, 16))
        b = make_shape([2, 1], 2, (16, 16, 16))
        assert iou(a, b) == iou(b, a)
        assert f_score(a, b) == pytest.approx(f_score(b, a))
        assert chamfer_l2(a, b) == pytest.approx(chamfer_l2(b, a))

    def test_classification_accuracy(self):
        assert classification_accuracy([1, 2, 3], [1, 2, 0]) == pytest.approx(2 / 3)
        with pytest.raises(DataError):
            classification_accuracy([], [])


def tiny_cfg(task="complete"):
    return ModelConfig(variant="hybrid", task=task, dims=DIMS, seed=0,
                       feat_channels=4,
                       plane=PlaneConfig(layers=2, hidden=4),
                       pe=PEConfig(mode="none"),
                       vol=VolConfig(enabled=True, ratio=0.5, layers=2, hidden=4))


class TestTraining:
    def test_single_sample_overfit_within_200_steps(self):
        samples = gen_shapes(seed=10, count=1, dims=DIMS, task="complete")
        cfg = tiny_cfg()
        result = train_model(cfg, samples, samples,
                             TrainConfig(epochs=200, batch_size=1, lr=5e-3, seed=0))
        losses = [v for _, split, metric, v in result.history
                  if split == "train" and metric == "loss"]
        assert losses[-1] < 0.05
        # decreasing in trend: late average far below early average
        assert np.mean(losses[-20:]) < 0.25 * np.mean(losses[:20])

    def test_zero_learning_rate_keeps_params(self):
        samples = gen_shapes(seed=11, count=4, dims=DIMS, task="complete")
        cfg = tiny_cfg()
        model = build_model(cfg)
        before = {k: p.data.copy() for k, p in param_dict(model).items()}
        result = train_model(cfg, samples, samples,
                             TrainConfig(epochs=1, batch_size=2, lr=0.0, seed=0))
        for name, arr in before.items():
            np.testing.assert_array_equal(result.best_params[name], arr)

    def test_same_seed_identical_history(self):
        samples = gen_shapes(seed=12, count=6, dims=DIMS, task="complete")
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=2, batch_size=3, lr=1e-3, seed=7)
        r1 = train_model(cfg, samples[:4], samples[4:], tc)
        r2 = train_model(cfg, samples[:4], samples[4:], tc)
        assert r1.history == r2.history

    def test_classification_smoke(self):
        samples = gen_shapes(seed=13, count=8, dims=DIMS, task="classify")
        cfg = tiny_cfg(task="classify")
        result = train_model(cfg, samples, samples,
                             TrainConfig(epochs=2, batch_size=4, seed=0))
        assert 0.0 <= result.best_metric <= 1.0
        scores = evaluate(restore_model(cfg, result.best_params), samples,
                          "classify")
        assert scores["accuracy"] == pytest.approx(result.best_metric)

    def test_nan_loss_aborts(self):
        samples = gen_shapes(seed=14, count=2, dims=DIMS, task="complete")
        bad = samples[0].volume.data.data.copy()
        bad[0, 0, 0, 0] = np.nan
        samples[0] = ShapeSample(volume=VoxelGrid(E.Tensor(bad)),
                                 label=samples[0].label,
                                 target=samples[0].target)
        from triplane.errors import NumericError
        with pytest.raises(NumericError):
            train_model(tiny_cfg(), samples, samples,
                        TrainConfig(epochs=1, batch_size=2, seed=0))

    def test_adam_moves_toward_minimum(self):
        p = E.Tensor(np.array([5.0], dtype=np.float32), requires_grad=True)
        opt = Adam({"p": p}, TrainConfig(lr=0.1))
        for _ in range(200):
            opt.zero_grad()
            with E.Tape() as tape:
                loss = E.sum_all(E.mul(p, p))
            tape.backward(loss)
            opt.step()
        assert abs(float(p.data[0])) < 0.1


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        cfg = tiny_cfg()
        model = build_model(cfg)
        params = param_dict(model)
        path = tmp_path / "model.tpck"
        save_checkpoint(path, cfg, params, meta={"note": "test"})
        cfg2, loaded, meta = load_checkpoint(path)
        assert cfg2 == cfg
        assert meta["note"] == "test"
        for name, tensor in params.items():
            np.testing.assert_array_equal(loaded[name],
                                          tensor.data.astype(np.float32))

    def test_byte_identical_writes(self, tmp_path):
        cfg = tiny_cfg()
        params = param_dict(build_model(cfg))
        p1, p2 = tmp_path / "a.tpck", tmp_path / "b.tpck"
        save_checkpoint(p1, cfg, params)
        save_checkpoint(p2, cfg, params)
        assert p1.read_bytes() == p2.read_bytes()

    def test_mismatched_checkpoint_rejected(self, tmp_path):
        cfg = tiny_cfg()
        params = param_dict(build_model(cfg))
        path = tmp_path / "model.tpck"
        save_checkpoint(path, cfg, params)
        _, loaded, _ = load_checkpoint(path)
        del loaded["head.conv.w"]
        with pytest.raises(DataError):
            restore_model(cfg, loaded)

    def test_truncated_file_rejected(self, tmp_path):
        cfg = tiny_cfg()
        params = param_dict(build_model(cfg))
        path = tmp_path / "model.tpck"
        save_checkpoint(path, cfg, params)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(DataError):
            load_checkpoint(path)
