import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from m2rnet.errors import ConfigError, DimensionError
from m2rnet.gradcheck import check_gradients
from m2rnet.losses import LossConfig, bce_loss, jhol_loss, jhol_terms, total_loss
from m2rnet.tensor import Tensor
from oracles import bce_brute, binary_maps, jhol_brute, jhol_denominators


def terms(p, g, **kw):
    return [float(t.data) for t in jhol_terms(Tensor(np.asarray(p, float)), Tensor(np.asarray(g, float)), **kw)[:4]]


class TestBCE:
    def test_half_vs_one(self):
        assert bce_loss(Tensor([[0.5]]), Tensor([[1.0]]), "sum").item() == pytest.approx(math.log(2), abs=1e-15)

    def test_perfect_binary_near_zero(self):
        g = np.array([[0.0, 1.0], [1.0, 0.0]])
        eps = 1e-8
        p = np.where(g > 0, 1 - eps, eps)
        assert bce_loss(Tensor(p), Tensor(g), "sum").item() <= 4 * 1.1e-8

    def test_sum_matches_oracle(self):
        r = np.random.default_rng(0)
        p, g = r.random((4, 4)), (r.random((4, 4)) > 0.5).astype(float)
        assert abs(bce_loss(Tensor(p), Tensor(g), "sum").item() - bce_brute(p, g)) < 1e-12

    def test_mean_is_sum_over_pixels(self):
        r = np.random.default_rng(1)
        p, g = r.random((4, 4)), r.random((4, 4))
        assert bce_loss(Tensor(p), Tensor(g)).item() == pytest.approx(bce_brute(p, g) / 16, abs=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            bce_loss(Tensor(np.ones((2, 2)) / 2), Tensor(np.ones((2, 3))))

    def test_extreme_predictions_finite(self):
        value = bce_loss(Tensor([[0.0, 1.0]]), Tensor([[1.0, 0.0]]), "sum").item()
        assert math.isfinite(value) and value == pytest.approx(-2 * math.log(1e-8), rel=1e-9)


class TestJHOL:
    def test_perfect_binary(self):
        g = np.array([1, 0, 1, 1, 0, 0, 0, 1, 0], float)
        l1, l2, l3, l4 = terms(g, g)
        assert (l1, l2, l3) == (0.0, 0.0, 0.0)
        assert l4 == 5 / 9

    def test_two_pixel_hand_values(self):
        assert terms([[1.0, 0.0]], [[1.0, 1.0]]) == [0.0, 0.5, 0.5, 0.0]

    def test_all_binary_pairs_match_brute_force(self):
        maps = binary_maps()
        preds = np.stack(maps).reshape(-1, 3, 3)
        worst, compared = 0.0, 0
        for g in maps:
            gts = np.broadcast_to(g.reshape(3, 3), preds.shape)
            ours = np.stack([t.data for t in jhol_terms(Tensor(preds), Tensor(gts.copy()), per_sample=True)[:4]], 1)
            for k, p in enumerate(maps):
                if min(jhol_denominators(p, g)) == 0:
                    continue
                worst = max(worst, np.abs(ours[k] - jhol_brute(p, g)).max())
                compared += 1
        assert compared > 200_000
        assert worst <= 1e-12

    def test_degenerate_gt_flagged_and_finite(self):
        out = jhol_terms(Tensor(np.full((3, 3), 0.3)), Tensor(np.zeros((3, 3))))
        assert out.degenerate
        assert float(out.l2.data) == 0.0
        assert all(math.isfinite(float(t.data)) for t in out[:4])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(0.001, 0.999)),
           arrays(np.float64, (3, 4), elements=st.floats(0.0, 1.0)))
    def test_terms_in_unit_interval(self, p, g):
        for value in terms(p, g):
            assert -1e-12 <= value <= 1 + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(0.01, 0.99)),
           arrays(np.float64, (3, 3), elements=st.floats(0.01, 0.99)))
    def test_l3_symmetric(self, p, g):
        assert terms(p, g)[2] == pytest.approx(terms(g, p)[2], abs=1e-12)

    def test_l1_grows_with_false_positive_mass(self):
        g = np.array([1.0, 1.0, 0.0, 0.0])
        previous = -1.0
        for shift in np.linspace(0, 0.8, 9):
            p = np.array([0.9 - shift / 2, 0.9 - shift / 2, 0.05 + shift / 2, 0.05 + shift / 2])
            l1 = terms(p, g)[0]
            assert l1 >= previous
            previous = l1

    def test_complement_flag(self):
        g = np.array([1.0, 0.0, 1.0, 0.0])
        assert terms(g, g, l4_complement=True)[3] == 0.5
        assert terms(g, g)[3] == 0.5

    def test_per_sample_mean_equals_batch(self):
        r = np.random.default_rng(2)
        p, g = r.uniform(0.1, 0.9, (3, 1, 4, 4)), (r.random((3, 1, 4, 4)) > 0.5).astype(float)
        g[:, 0, 0, 0] = 1
        batch = terms(p, g)
        per = [t.data.mean() for t in jhol_terms(Tensor(p), Tensor(g), per_sample=True)[:4]]
        np.testing.assert_allclose(batch, per, atol=1e-15)

    def test_gradients(self):
        r = np.random.default_rng(3)
        p = Tensor(r.uniform(0.1, 0.9, (2, 5, 5)), True)
        g = Tensor((r.random((2, 5, 5)) > 0.5).astype(float))
        cfg = LossConfig()
        assert max(check_gradients(lambda: jhol_loss(p, g, cfg), [p]).values()) < 1e-4


class TestTotalLoss:
    def test_mu_zero_is_bce_bitwise(self):
        r = np.random.default_rng(4)
        p, g = Tensor(r.uniform(0.01, 0.99, (2, 1, 6, 6))), Tensor((r.random((2, 1, 6, 6)) > 0.5).astype(float))
        cfg = LossConfig(mu=0.0)
        assert total_loss(p, g, cfg).item() == bce_loss(p, g).item()

    def test_single_pixel_composition(self):
        cfg = LossConfig(bce_reduction="sum")
        assert total_loss(Tensor([[0.5]]), Tensor([[1.0]]), cfg).item() == pytest.approx(1.0 + math.log(2), abs=1e-12)

    @pytest.mark.parametrize("k", range(4))
    def test_masking_isolates_one_term(self, k):
        r = np.random.default_rng(5)
        p, g = Tensor(r.uniform(0.05, 0.95, (4, 4))), Tensor((r.random((4, 4)) > 0.4).astype(float))
        active = [i == k for i in range(4)]
        cfg = LossConfig().masked(active)
        expected = bce_loss(p, g).item() + terms(p.data, g.data)[k]
        assert total_loss(p, g, cfg).item() == pytest.approx(expected, abs=1e-14)

    def test_side_outputs_add(self):
        r = np.random.default_rng(6)
        p = Tensor(r.uniform(0.05, 0.95, (1, 1, 4, 4)))
        side = Tensor(r.uniform(0.05, 0.95, (1, 1, 2, 2)))
        g = Tensor(np.kron(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones((2, 2)))[None, None])
        with_side = total_loss(p, g, LossConfig(), [side]).item()
        side_gt = Tensor(np.array([[[[1.0, 0.0], [0.0, 1.0]]]]))
        assert with_side == pytest.approx(total_loss(p, g).item() + total_loss(side, side_gt).item(), abs=1e-13)

    @pytest.mark.parametrize("kwargs", [dict(lambdas=(1, 1, 1)), dict(lambdas=(1, -1, 1, 1)), dict(mu=-1),
                                        dict(eps=0.0), dict(bce_reduction="max")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            LossConfig(**kwargs)
