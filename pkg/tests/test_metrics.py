import csv
import itertools

import numpy as np
import pytest

from m2rnet import metrics as M
from m2rnet.errors import ContractError, DimensionError
from oracles import (e_measure_loop, f_avg_direct, f_max_search, mae_loop, metric_pair,
                     s_measure_literal, weighted_f_literal)

PAIRS = [metric_pair(np.random.default_rng(1000 + k)) for k in range(50)]


def half_gt(n=8):
    g = np.zeros((n, n))
    g[:, : n // 2] = 1
    return g


def square_gt(n=8, lo=2, hi=6):
    g = np.zeros((n, n))
    g[lo:hi, lo:hi] = 1
    return g


class TestOracles:
    @pytest.mark.parametrize("k", range(50))
    def test_seeded_pair(self, k):
        p, g = PAIRS[k]
        assert M.f_measures(p, g)[0] == f_max_search(p, g)
        assert M.f_measures(p, g)[1] == pytest.approx(f_avg_direct(p, g), abs=1e-12)
        assert abs(M.mae(p, g) - mae_loop(p, g)) <= 1e-9
        assert abs(M.e_measure(p, g) - e_measure_loop(p, g)) <= 1e-9
        assert abs(M.s_measure(p, g) - s_measure_literal(p, g)) <= 1e-9
        assert abs(M.weighted_f(p, g) - weighted_f_literal(p, g)) <= 1e-9

    def test_square_weighted_f(self):
        r = np.random.default_rng(7)
        g = square_gt()
        p = np.clip(g * 0.7 + 0.3 * r.random(g.shape), 0, 1)
        assert abs(M.weighted_f(p, g) - weighted_f_literal(p, g)) <= 1e-9

    def test_random_8x8_e_measure(self):
        r = np.random.default_rng(8)
        for _ in range(20):
            p, g = r.random((8, 8)), (r.random((8, 8)) > 0.6).astype(float)
            assert abs(M.e_measure(p, g) - e_measure_loop(p, g)) <= 1e-9

    def test_nearest_foreground_raster_first(self):
        r = np.random.default_rng(9)
        for _ in range(40):
            fg = r.random((9, 11)) > 0.9
            fg[r.integers(9), r.integers(11)] = True
            dist, iy, ix = M.nearest_foreground(fg)
            pts = np.argwhere(fg)
            for y, x in itertools.product(range(9), range(11)):
                d2 = ((pts - (y, x)) ** 2).sum(1)
                first = pts[np.argmin(d2)]
                assert (iy[y, x], ix[y, x]) == tuple(first)
                assert dist[y, x] == pytest.approx(np.sqrt(d2.min()), abs=1e-12)


class TestClosedForms:
    def test_all_ones_half_foreground(self):
        precision, recall = M.pr_curve(np.ones((8, 8)), half_gt())
        np.testing.assert_array_equal(precision, 0.5)
        np.testing.assert_array_equal(recall, 1.0)
        f_max, f_avg, _ = M.f_measures(np.ones((8, 8)), half_gt())
        assert f_max == pytest.approx(1.3 * 0.5 / (0.3 * 0.5 + 1), abs=1e-15)
        assert round(f_max, 4) == 0.5652
        assert f_avg == f_max

    def test_mae_examples(self):
        assert M.mae(half_gt(), half_gt()) == 0.0
        assert M.mae(np.full((4, 4), 0.5), np.zeros((4, 4))) == 0.5

    def test_perfect_prediction(self):
        g = square_gt()
        report = M.evaluate_image(g, g)
        assert report.mae == 0.0
        assert report.f_max == report.f_avg == 1.0
        assert report.f_weighted == pytest.approx(1.0, abs=1e-12)
        assert report.e_xi == pytest.approx(1.0, abs=1e-12)
        assert report.s_alpha == pytest.approx(1.0, abs=1e-6)
        precision, recall = M.pr_curve(g, g)
        np.testing.assert_array_equal(precision, 1.0)
        np.testing.assert_array_equal(recall, 1.0)

    def test_inverted_prediction(self):
        # the smoothing window is zero padded, so keep the object 3 px clear of the edge
        g = square_gt(16, 5, 11)
        assert M.weighted_f(1 - g, g) < 1e-9
        assert M.e_measure(1 - g, g) < 1e-9
        edge = square_gt()
        assert M.weighted_f(1 - edge, edge) == pytest.approx(weighted_f_literal(1 - edge, edge), abs=1e-12)

    def test_degenerate_ground_truth(self):
        zero = np.zeros((6, 6))
        assert M.s_measure(zero, zero) == 1.0
        p = np.linspace(0, 1, 36).reshape(6, 6)
        assert M.s_measure(p, zero) == pytest.approx(1 - p.mean())
        assert M.s_measure(p, np.ones((6, 6))) == pytest.approx(p.mean())
        report = M.evaluate_image(p, zero)
        assert report.n_degenerate == 1
        np.testing.assert_array_equal(report.recall, 0.0)
        assert report.f_weighted == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            M.mae(np.zeros((3, 3)), np.zeros((3, 4)))


class TestProperties:
    @pytest.mark.parametrize("k", range(0, 50, 5))
    def test_ranges_and_dominance(self, k):
        p, g = PAIRS[k]
        report = M.evaluate_image(p, g)
        for value in report.scores().values():
            assert 0.0 <= value <= 1.0
        assert report.f_max >= report.f_avg
        assert M.mae(p, g) == M.mae(g, p)
        assert report.precision.shape == report.recall.shape == report.f_curve.shape == (255,)

    def test_true_positives_nonincreasing(self):
        p, g = PAIRS[3]
        _, recall = M.pr_curve(p, g)
        assert (np.diff(recall) <= 0).all()

    def test_background_border(self):
        p, g = PAIRS[4]
        pb, gb = np.pad(p, 3), np.pad(g, 3)
        assert M.mae(pb, gb) == pytest.approx(np.abs(p - g).sum() / pb.size, abs=1e-15)
        np.testing.assert_array_equal(M.pr_curve(pb, gb)[0], M.pr_curve(p, g)[0])
        assert M.f_measures(pb, gb)[0] == M.f_measures(p, g)[0]

    def test_prediction_resampled_to_gt(self):
        g = square_gt(8)
        p = np.kron(g[::2, ::2], np.ones((1, 1)))
        assert M.evaluate_image(p, g).mae < 0.5


class TestDataset:
    def test_singleton_and_duplicate(self):
        p, g = PAIRS[0]
        single = M.evaluate_image(p, g)
        for pairs in ([(p, g)], [(p, g), (p, g)]):
            report = M.evaluate_dataset(pairs)
            for name, value in single.scores().items():
                assert getattr(report, name) == pytest.approx(value, abs=1e-15)

    def test_two_images_average(self):
        a, b = M.evaluate_image(*PAIRS[1]), M.evaluate_image(*PAIRS[2])
        both = M.evaluate_dataset(PAIRS[1:3])
        for name in M.METRIC_NAMES:
            assert getattr(both, name) == pytest.approx((getattr(a, name) + getattr(b, name)) / 2, abs=1e-15)
        np.testing.assert_allclose(both.f_curve, (a.f_curve + b.f_curve) / 2, atol=1e-15)
        assert both.n_images == 2

    def test_threads_match_serial(self):
        serial = M.evaluate_dataset(PAIRS[:6])
        threaded = M.evaluate_dataset(PAIRS[:6], workers=3)
        assert serial.scores() == threaded.scores()

    def test_empty(self):
        with pytest.raises(ContractError):
            M.evaluate_dataset([])

    def test_dataset_size_weighting(self):
        a, b = M.evaluate_image(*PAIRS[1]), M.evaluate_image(*PAIRS[2])
        combined = M.weighted_by_dataset_size({"a": a, "b": b}, {"a": 3, "b": 1})
        assert combined.mae == pytest.approx(0.75 * a.mae + 0.25 * b.mae, abs=1e-15)

    def test_csv_files(self, tmp_path):
        report = M.evaluate_dataset(PAIRS[:3])
        paths = M.write_report(report, tmp_path)
        with open(paths["metrics"]) as fh:
            assert fh.readline().strip() == f"# {M.CSV_SCHEMA}"
        rows = {r["metric"]: r["value"] for r in M.read_csv(paths["metrics"])}
        for name in M.METRIC_NAMES:
            assert float(rows[name]) == getattr(report, name)
        for key in ("pr_curve", "f_curve"):
            with open(paths[key]) as fh:
                body = [line for line in fh if not line.startswith("#")]
            table = list(csv.reader(body))
            assert table[0] == ["threshold", "precision", "recall", "f"]
            assert len(table) == 256
            assert float(table[1][0]) == 1 / 255 and float(table[-1][0]) == 1.0
