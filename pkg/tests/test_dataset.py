import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landseg.dataset import (BAND_NAMES, AreaRaster, BandStats, DataError, FoldPlan, PatchRef, PreconditionError,
                             apply_d4, assemble_area, compose_d4, compute_stats, cut_patches, discard_sea_only,
                             generate_synthetic_area, materialize, random_split, read_area, resample_20m,
                             signature_table, split_folds, write_area)
from landseg.dataset.splits import IONIAN_FOLDS
from landseg.engine import DimensionError, ParameterError
from landseg.taxonomy import SEA


def blank_area(h, w, label=211, area_id="a"):
    return AreaRaster(area_id, np.zeros((10, h, w), np.float32), np.full((h, w), label, np.uint16))


class TestCutPatches:
    @pytest.mark.parametrize("h,w,hop,n", [(256, 256, 64, 9), (128, 128, 64, 1), (300, 300, 64, 9)])
    def test_examples(self, h, w, hop, n):
        assert len(cut_patches(blank_area(h, w), hop=hop)) == n

    def test_boundary_offsets(self):
        offs = sorted({p.row for p in cut_patches(blank_area(300, 300), hop=64)})
        assert offs == [0, 64, 128]

    def test_too_small_is_empty(self):
        area = AreaRaster("a", np.zeros((10, 100, 300), np.float32), np.zeros((100, 300), np.uint16))
        assert cut_patches(area) == []

    @settings(max_examples=60, deadline=None)
    @given(st.integers(128, 700), st.integers(128, 700), st.integers(1, 200))
    def test_count_formula(self, h, w, hop):
        refs = cut_patches(_Shape(h, w), hop=hop)
        assert len(refs) == ((h - 128) // hop + 1) * ((w - 128) // hop + 1)
        assert all(r.row + 128 <= h and r.col + 128 <= w for r in refs)


class _Shape:
    """Stand-in exposing only what cut_patches reads."""

    def __init__(self, h, w):
        self.height, self.width, self.area_id = h, w, "shape"


class TestSeaDiscard:
    def test_rules(self):
        area = blank_area(128, 384, SEA)
        area.labels[:, 128:256] = 0
        area.labels[5, 300] = 112
        refs = cut_patches(area, hop=128)
        kept = discard_sea_only(refs, area)
        assert [r.col for r in kept] == [256]

    def test_mixed_sea_and_unlabeled_removed(self):
        area = blank_area(128, 128, SEA)
        area.labels[:10] = 0
        assert discard_sea_only(cut_patches(area), area) == []


class TestD4:
    def test_rotation_moves_pixel(self):
        y = np.zeros((128, 128), np.uint16)
        y[3, 10] = 7
        r = apply_d4(y, 2)  # one clockwise quarter turn, no flip
        assert r[10, 127 - 3] == 7

    def test_group_closure_and_histogram(self, rng):
        y = rng.integers(0, 5, (6, 6))
        counts = np.bincount(y.ravel(), minlength=5)
        results = {apply_d4(y, e).tobytes() for e in range(8)}
        assert len(results) == 8
        for a in range(8):
            np.testing.assert_array_equal(np.bincount(apply_d4(y, a).ravel(), minlength=5), counts)
            for b in range(8):
                c = compose_d4(a, b)
                assert c in range(8)
                np.testing.assert_array_equal(apply_d4(apply_d4(y, b), a), apply_d4(y, c))

    def test_bad_element(self):
        with pytest.raises(ValueError):
            apply_d4(np.zeros((2, 2)), 8)


class TestMaterialize:
    def test_identity_stats(self, small_areas):
        ref = cut_patches(small_areas["s0"])[0]
        x, y = materialize(ref, small_areas, BandStats.identity())
        np.testing.assert_array_equal(x, small_areas["s0"].bands)
        np.testing.assert_array_equal(y, small_areas["s0"].labels)

    def test_lazy_equals_eager(self, taxonomy):
        area = generate_synthetic_area("e", 320, 256, seed=9)
        stats = compute_stats({"e": area}, ["e"])
        _, h, w = area.bands.shape
        eager = {}
        for r0 in range(0, h - 127, 64):
            for c0 in range(0, w - 127, 64):
                eager[(r0, c0)] = ((area.bands[:, r0:r0 + 128, c0:c0 + 128] - stats.mean_array)
                                   / stats.std_array, area.labels[r0:r0 + 128, c0:c0 + 128])
        refs = cut_patches(area)
        assert len(refs) == len(eager)
        for ref in refs:
            x, y = materialize(ref, {"e": area}, stats)
            ex, ey = eager[(ref.row, ref.col)]
            assert x.tobytes() == ex.astype(np.float32).tobytes()
            assert y.tobytes() == ey.tobytes()

    def test_same_transform_on_x_and_y(self, small_areas):
        ref = cut_patches(small_areas["s1"])[0]
        stats = BandStats.identity()
        for e in range(8):
            x, y = materialize(ref, small_areas, stats, augment=e)
            np.testing.assert_array_equal(x, apply_d4(small_areas["s1"].bands, e))
            np.testing.assert_array_equal(y, apply_d4(small_areas["s1"].labels, e))

    def test_random_augment_is_seeded(self, small_areas):
        ref = cut_patches(small_areas["s1"])[0]
        a = materialize(ref, small_areas, BandStats.identity(), "random", seed=(3, 4))
        b = materialize(ref, small_areas, BandStats.identity(), "random", seed=(3, 4))
        assert a[0].tobytes() == b[0].tobytes()

    def test_missing_area(self, small_areas):
        with pytest.raises(LookupError):
            materialize(PatchRef("nope", 0, 0), small_areas, BandStats.identity())

    def test_destandardize_inverts(self, small_areas):
        stats = compute_stats(small_areas, ["s0", "s1"])
        raw = small_areas["s2"].bands
        np.testing.assert_allclose(stats.destandardize(stats.standardize(raw)), raw, atol=1e-5)


class TestResample:
    def test_example(self):
        out = resample_20m(np.array([[1, 2], [3, 4]], np.float32))
        np.testing.assert_array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])

    def test_sum_and_constant(self, rng):
        g = rng.random((5, 7)).astype(np.float32)
        assert resample_20m(g).sum() == pytest.approx(4 * g.sum(), rel=1e-6)
        np.testing.assert_array_equal(resample_20m(np.full((3, 3), 2.0)), np.full((6, 6), 2.0))

    def test_non_double(self):
        with pytest.raises(DimensionError):
            resample_20m(np.zeros((2, 2)), 5, 4)

    def test_assemble(self):
        native = [np.full((4, 4), i, np.float32) for i in range(4)]
        twenty = [np.full((2, 2), 10 + i, np.float32) for i in range(6)]
        area = assemble_area("x", native, twenty, np.zeros((4, 4), np.uint16))
        assert area.bands.shape == (10, 4, 4)
        assert area.band_names == BAND_NAMES
        assert area.bands[9, 3, 3] == 15


class TestStats:
    def test_constant_floor(self):
        area = AreaRaster("c", np.full((10, 4, 4), 5.0, np.float32), np.full((4, 4), 211, np.uint16))
        s = compute_stats({"c": area}, ["c"])
        assert s.means[0] == 5 and s.stds[0] == 1e-6

    def test_two_pixels(self):
        bands = np.zeros((10, 1, 2), np.float32)
        bands[:, 0, 1] = 2
        s = compute_stats({"t": AreaRaster("t", bands, np.full((1, 2), 211, np.uint16))}, ["t"])
        assert s.means[0] == 1 and s.stds[0] == 1

    def test_two_pass_oracle(self, rng):
        areas = {}
        for i in range(2):
            bands = (rng.standard_normal((10, 20, 30)) * 3 + 7).astype(np.float32)
            labels = rng.choice(np.array([0, 211, 523], np.uint16), (20, 30))
            areas[f"r{i}"] = AreaRaster(f"r{i}", bands, labels)
        s = compute_stats(areas, list(areas))
        pix = np.concatenate([a.bands[:, a.labels != 0].astype(np.float64) for a in areas.values()], axis=1)
        mean = [sum(row) / len(row) for row in pix.tolist()]
        std = [math.sqrt(sum((v - m) ** 2 for v in row) / len(row)) for row, m in zip(pix.tolist(), mean)]
        np.testing.assert_allclose(s.means, mean, rtol=1e-6)
        np.testing.assert_allclose(s.stds, std, rtol=1e-6)

    def test_empty_selection(self):
        with pytest.raises(DataError):
            compute_stats({"z": blank_area(4, 4, 0, "z")}, ["z"])

    def test_save_load(self, tmp_path, small_areas):
        s = compute_stats(small_areas, ["s0"])
        s.save(tmp_path / "s.json")
        assert BandStats.load(tmp_path / "s.json") == s


class TestFolds:
    def test_default_plan(self):
        plan = FoldPlan.default()
        assert len(plan) == 6
        train, val = split_folds(plan, 3)
        assert val == IONIAN_FOLDS[plan.names[2]]
        assert len(train) == len(plan.area_ids) - len(val)

    def test_partition(self):
        plan = FoldPlan.default()
        vals = [set(split_folds(plan, k)[1]) for k in range(1, 7)]
        assert vals[0].isdisjoint(vals[1])
        assert set().union(*vals) == set(plan.area_ids)
        for k in range(1, 7):
            t, v = split_folds(plan, k)
            assert set(t).isdisjoint(v) and set(t) | set(v) == set(plan.area_ids)

    @pytest.mark.parametrize("k", [0, 7])
    def test_out_of_range(self, k):
        with pytest.raises(ParameterError):
            split_folds(FoldPlan.default(), k)

    def test_overlapping_groups_rejected(self):
        with pytest.raises(ValueError):
            FoldPlan({"a": ["x"], "b": ["x"]})


class TestRandomSplit:
    def refs(self, n):
        return [PatchRef("a", 0, 128 * i) for i in range(n)]

    def test_seven_three(self):
        tr, va = random_split(self.refs(10), 0.7, seed=1)
        assert len(tr) == 7 and len(va) == 3 and set(tr).isdisjoint(va)

    def test_deterministic(self):
        assert random_split(self.refs(13), seed=5) == random_split(self.refs(13), seed=5)

    def test_overlap_rejected(self):
        refs = cut_patches(blank_area(256, 256), hop=64)
        with pytest.raises(PreconditionError):
            random_split(refs)

    def test_bad_ratio(self):
        with pytest.raises(ParameterError):
            random_split(self.refs(3), 1.0)


class TestRasterFormat:
    def test_round_trip_bytes(self, tmp_path, small_areas):
        area = small_areas["s0"]
        write_area(area, tmp_path / "a")
        back = read_area(tmp_path / "a")
        write_area(back, tmp_path / "b")
        for name in ("header.json", "bands.bin", "labels.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truncated_bands(self, tmp_path, small_areas):
        write_area(small_areas["s0"], tmp_path / "a")
        p = tmp_path / "a" / "bands.bin"
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(DataError):
            read_area(tmp_path / "a")

    def test_missing_header(self, tmp_path):
        with pytest.raises(DataError):
            read_area(tmp_path)


class TestSynthetic:
    def test_noise_free_equals_signatures(self, taxonomy):
        area = generate_synthetic_area("n", seed=3, noise_sigma=0.0)
        sig = signature_table(taxonomy)
        idx = taxonomy.indices(area.labels)
        np.testing.assert_array_equal(area.bands.transpose(1, 2, 0), sig[idx])

    def test_same_seed_bitwise(self):
        a = generate_synthetic_area("x", seed=11)
        b = generate_synthetic_area("x", seed=11)
        assert a.bands.tobytes() == b.bands.tobytes() and a.labels.tobytes() == b.labels.tobytes()

    def test_sea_margin_present(self):
        assert (generate_synthetic_area("x", seed=2).labels == SEA).sum() >= 24 * 256

    def test_nearest_signature_separability(self, taxonomy):
        area = generate_synthetic_area("x", seed=5, noise_sigma=0.1)
        sig = signature_table(taxonomy)
        px = area.bands.reshape(10, -1).T.astype(np.float64)
        d = ((px[:, None, :] - sig[None]) ** 2).sum(-1)
        pred = np.asarray(taxonomy.codes)[d.argmin(1)]
        assert (pred == area.labels.ravel()).mean() > 0.99

    def test_too_small(self):
        with pytest.raises(ValueError):
            generate_synthetic_area("x", 100, 256)
