import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landseg.dataset import DataError
from landseg.engine import DimensionError
from landseg.evaluation import (ConfusionMatrix, confusion, decode, decode_ppm, evaluate_levels, load_report_json,
                                metrics, project_grids, render_map, report)
from landseg.taxonomy import TaxonomyError


def tally(truth, pred):
    """Brute-force per-pixel tally over labeled truth."""
    classes = sorted({int(v) for v in truth.ravel() if v != 0})
    counts = {(a, b): 0 for a in classes for b in classes}
    other = {a: 0 for a in classes}
    for t, p in zip(truth.ravel().tolist(), pred.ravel().tolist()):
        if t == 0:
            continue
        if p in other:
            counts[(t, p)] += 1
        else:
            other[t] += 1
    return classes, counts, other


def oracle_metrics(classes, counts, other):
    total = sum(counts.values()) + sum(other.values())
    out = {}
    f1s, sups = [], []
    for c in classes:
        tp = counts[(c, c)]
        col = sum(counts[(a, c)] for a in classes)
        row = sum(counts[(c, b)] for b in classes) + other[c]
        p = tp / col if col else 0.0
        r = tp / row if row else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out[c] = (row, p, r, f)
        f1s.append(f)
        sups.append(row)
    acc = sum(counts[(c, c)] for c in classes) / total
    return out, acc, sum(f1s) / len(f1s), sum(f * s for f, s in zip(f1s, sups)) / sum(sups)


class TestDecode:
    def test_one_hot(self, taxonomy):
        codes = np.array([[111, 523], [312, 242]])
        logits = np.zeros((32, 2, 2))
        for (i, j), c in np.ndenumerate(codes):
            logits[taxonomy.index_of(c), i, j] = 1
        np.testing.assert_array_equal(decode(logits, taxonomy), codes)

    def test_tie_goes_low(self, taxonomy):
        logits = np.zeros((32, 1, 1))
        logits[[5, 9], 0, 0] = 3.0
        assert decode(logits, taxonomy)[0, 0] == taxonomy.code_at(5)

    def test_constant_shift_invariant(self, taxonomy, rng):
        logits = rng.standard_normal((2, 32, 4, 4))
        shifted = logits + rng.standard_normal((2, 1, 4, 4)) * 10
        np.testing.assert_array_equal(decode(logits, taxonomy), decode(shifted, taxonomy))

    def test_wrong_width(self, taxonomy):
        with pytest.raises(DimensionError):
            decode(np.zeros((5, 2, 2)), taxonomy)


class TestProjection:
    def test_examples(self, taxonomy):
        t, p = project_grids(np.array([523]), np.array([521]), 3, taxonomy)
        assert t[0] != p[0]
        t, p = project_grids(np.array([523]), np.array([521]), 2, taxonomy)
        assert t[0] == p[0] == 52
        for lv in (1, 2, 3):
            t, p = project_grids(np.array([112]), np.array([211]), lv, taxonomy)
            assert t[0] != p[0]

    def test_unknown(self, taxonomy):
        with pytest.raises(TaxonomyError):
            project_grids(np.array([999]), np.array([111]), 1, taxonomy)

    def test_exclusion_preserved(self, taxonomy):
        t, p = project_grids(np.array([0, 111]), np.array([523, 111]), 1, taxonomy)
        assert list(t) == [0, 1] and list(p) == [0, 1]


class TestConfusion:
    def test_diagonal(self):
        g = np.array([[1, 2], [2, 3]])
        cm = confusion(g, g, 1)
        np.testing.assert_array_equal(cm.counts, np.diag([1, 2, 1]))
        assert cm.total == 4

    def test_oracle_32x32(self, rng):
        codes = np.array([0, 111, 112, 211, 312, 523])
        for _ in range(5):
            t = rng.choice(codes, (32, 32))
            p = rng.choice(codes[1:], (32, 32))
            cm = confusion(t, p, 3)
            classes, counts, other = tally(t, p)
            assert list(cm.classes) == classes
            for i, a in enumerate(classes):
                assert cm.other[i] == other[a]
                for j, b in enumerate(classes):
                    assert cm.counts[i, j] == counts[(a, b)]

    def test_empty_warns(self, caplog):
        cm = confusion(np.zeros((3, 3), int), np.ones((3, 3), int), 2)
        assert cm.total == 0 and "no labeled pixels" in caplog.text

    def test_merge(self):
        a = confusion(np.array([1, 2]), np.array([1, 1]), 1)
        b = confusion(np.array([1, 2]), np.array([2, 2]), 1)
        merged = a + b
        np.testing.assert_array_equal(merged.counts, confusion(np.array([1, 2, 1, 2]), np.array([1, 1, 2, 2]), 1).counts)


class TestMetrics:
    def test_perfect(self):
        m = metrics(ConfusionMatrix(3, (1, 2), np.array([[5, 0], [0, 5]]), np.zeros(2, np.int64)))
        assert m.accuracy == m.f1_macro == m.f1_micro == m.f1_weighted == 1
        assert all(r.precision == r.recall == 1 for r in m.rows)

    def test_hand_tally(self):
        m = metrics(ConfusionMatrix(3, (1, 2), np.array([[3, 1], [2, 4]]), np.zeros(2, np.int64)))
        assert m.accuracy == pytest.approx(0.7, abs=1e-15)
        assert [r.precision for r in m.rows] == pytest.approx([0.6, 0.8], abs=1e-15)
        assert [r.recall for r in m.rows] == pytest.approx([0.75, 2 / 3], abs=1e-15)

    def test_zero_denominator_precision(self):
        m = metrics(ConfusionMatrix(1, (1, 2), np.array([[2, 0], [3, 0]]), np.zeros(2, np.int64)))
        assert m.rows[1].precision == 0 and m.rows[1].f1 == 0

    def test_empty(self):
        with pytest.raises(DataError):
            metrics(ConfusionMatrix(1, (), np.zeros((0, 0), np.int64), np.zeros(0, np.int64)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_properties(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.choice([0, 111, 112, 211, 242, 523], (16, 16))
        p = rng.choice([111, 121, 211, 243, 523], (16, 16))
        if not (t != 0).any():
            return
        lv = evaluate_levels(t, p)
        assert lv[1].accuracy >= lv[2].accuracy >= lv[3].accuracy
        for m in lv.values():
            assert m.f1_micro == m.accuracy
            assert sum(r.support for r in m.rows) == int((t != 0).sum())
            for v in (m.accuracy, m.f1_macro, m.f1_weighted):
                assert 0 <= v <= 1
        perm = rng.permutation(t.size)
        lv2 = evaluate_levels(t.ravel()[perm], p.ravel()[perm])
        assert lv2[3] == lv[3]


class TestRender:
    def test_sea_uniform(self, taxonomy):
        img = decode_ppm(render_map(np.full((4, 5), 523), taxonomy))
        assert img.shape == (4, 5, 3)
        assert np.all(img == np.array(taxonomy.color_of(523), np.uint8))

    def test_header_and_black(self, taxonomy):
        blob = render_map(np.array([[0, 111, 111]]), taxonomy)
        assert blob.startswith(b"P6\n3 1\n255\n")
        assert decode_ppm(blob)[0, 0].tolist() == [0, 0, 0]

    def test_deterministic_and_round_trip(self, taxonomy, rng):
        grid = rng.choice(np.asarray(taxonomy.codes), (7, 9))
        a, b = render_map(grid, taxonomy), render_map(grid, taxonomy)
        assert a == b
        from landseg.evaluation import encode_ppm
        assert encode_ppm(decode_ppm(a)) == a

    def test_unknown(self, taxonomy):
        with pytest.raises(TaxonomyError):
            render_map(np.array([[113]]), taxonomy)


class TestReport:
    def levels(self):
        t = np.array([523, 523, 112, 211, 211, 0])
        p = np.array([523, 521, 112, 312, 211, 111])
        return evaluate_levels(t, p)

    def test_text_layout(self):
        text = report(self.levels())
        assert "CORINE CLASS LEVEL 1 :" in text and "CORINE CLASS LEVEL 3 :" in text
        assert "class\tsupport\tprecision\trecall" in text
        assert "5.2.3 Sea and ocean\t2\t1\t0.5" in text
        assert "accuracy = 0.6" in text

    def test_json_matches_text(self):
        lv = self.levels()
        back = load_report_json(report(lv, "json"))
        assert back == lv
        assert f"f1_macro = {lv[3].f1_macro:.5g}" in report(lv)

    def test_empty_level_note(self):
        text = report({1: None, 2: self.levels()[2]})
        assert "section omitted" in text

    def test_tsv(self):
        rows = report(self.levels(), "tsv").splitlines()
        assert rows[0].split("\t") == ["level", "class", "support", "precision", "recall", "f1"]
        assert any(r.startswith("3\taccuracy") for r in rows)

    def test_golden(self):
        # hand check: class 2 has one hit and one miss into the out-of-set bucket
        golden = (
            "CORINE CLASS LEVEL 1 :\n\n"
            "class\t1. Artificial Surfaces\t2. Agricultural areas\t5. Water bodies\n"
            "support\t1\t2\t2\n"
            "precision\t1\t1\t1\n"
            "recall\t1\t0.5\t1\n\n"
            "accuracy = 0.8\nf1_macro = 0.88889\nf1_micro = 0.8\nf1weighted = 0.86667\n"
        )
        assert report({1: self.levels()[1]}) == golden


def test_cropped_resunet_paints_center(small_areas, taxonomy):
    from landseg.dataset import BandStats
    from landseg.evaluation import predict_area
    from landseg.models import ResUNetConfig, build_resunet

    cfg = ResUNetConfig(blocks=(1, 1, 1, 1), bottleneck_widths=(4, 4, 8, 8), stem_channels=8,
                        decoder_channels=(16, 16, 8, 8, 8), input_size=32, num_classes=taxonomy.size)
    p = predict_area(build_resunet(cfg, 0), small_areas["s0"], BandStats.identity(), taxonomy)
    assert p.pred.shape == p.truth.shape == (1, 32, 32)
    covered = np.argwhere(p.pred_map != 0)
    assert covered.min(0).tolist() == [48, 48] and covered.max(0).tolist() == [79, 79]
    np.testing.assert_array_equal(p.pred_map[48:80, 48:80], p.pred[0])
