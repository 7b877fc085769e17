import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from m2rnet import dataset as D
from m2rnet import netpbm
from m2rnet.errors import CodecError, ContractError


class TestNetpbm:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 9).flatmap(lambda h: st.integers(1, 9).flatmap(
        lambda w: arrays(np.uint8, st.sampled_from([(h, w), (3, h, w)])))))
    def test_round_trip_bitwise(self, img):
        back = netpbm.to_uint8(netpbm.decode(netpbm.encode(img)))
        np.testing.assert_array_equal(back, img)

    def test_one_white_pixel(self):
        assert netpbm.decode(b"P5\n1 1\n255\n\xff").tolist() == [[1.0]]
        assert netpbm.encode(np.ones((1, 1))) == b"P5\n1 1\n255\n\xff"

    def test_file_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (3, 4, 5), dtype=np.uint8)
        netpbm.save(tmp_path / "x.ppm", img)
        np.testing.assert_array_equal(netpbm.to_uint8(netpbm.load(tmp_path / "x.ppm")), img)

    def test_header_comments(self):
        assert netpbm.decode(b"P5 # gray\n2 # w\n1\n255\n\x00\xff").tolist() == [[0.0, 1.0]]

    @pytest.mark.parametrize("magic", [b"P2", b"P3"])
    def test_ascii_variants_rejected(self, magic):
        with pytest.raises(CodecError, match="only binary"):
            netpbm.decode(magic + b"\n1 1\n255\n0\n")

    @pytest.mark.parametrize("buf, offset", [
        (b"XX\n1 1\n255\n\x00", "offset 0"),
        (b"P5\n1 1\n65535\n\x00\x00", "offset 7"),
        (b"P5\n0 1\n255\n", "offset 3"),
        (b"P5\n2 2\n255\n\x00", "offset 11"),
        (b"P5\n1 x\n255\n\x00", "offset 5"),
        (b"P5\n1 1", "offset 6"),
    ])
    def test_malformed_reports_offset(self, buf, offset):
        with pytest.raises(CodecError, match=offset):
            netpbm.decode(buf)

    def test_bad_shape(self):
        with pytest.raises(CodecError):
            netpbm.encode(np.zeros((2, 3, 3)))


@pytest.fixture(scope="module")
def samples():
    return D.synth_dataset(12, 32, seed=3)


class TestSynthesis:
    def test_deterministic(self, samples):
        again = D.synth_dataset(12, 32, seed=3)
        for a, b in zip(samples, again):
            for f in ("rgb", "depth", "gt"):
                np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_sample_depends_only_on_index(self, samples):
        longer = D.synth_dataset(15, 32, seed=3)
        np.testing.assert_array_equal(longer[11].rgb, samples[11].rgb)
        assert not np.array_equal(D.synth_dataset(1, 32, seed=4)[0].gt, samples[0].gt)

    def test_field_contracts(self, samples):
        for s in samples:
            assert s.rgb.shape == (3, 32, 32) and s.depth.shape == s.gt.shape == (1, 32, 32)
            assert set(np.unique(s.gt)) <= {0.0, 1.0}
            assert D.FG_FRACTION[0] <= s.gt.mean() <= D.FG_FRACTION[1]
            for f in (s.rgb, s.depth):
                assert f.min() >= 0 and f.max() <= 1

    def test_depth_bimodal_at_high_contrast(self):
        for s in D.synth_dataset(6, 64, seed=5, contrast=0.9):
            hist, edges = np.histogram(s.depth, bins=20, range=(0, 1))
            centres = (edges[:-1] + edges[1:]) / 2
            fg_peak = centres[np.argmax(np.where(centres > 0.6, hist, 0))]
            bg_peak = centres[np.argmax(np.where(centres < 0.45, hist, 0))]
            valley = hist[(centres > 0.45) & (centres < 0.75)].min()
            assert valley < 0.2 * hist[centres == fg_peak][0]
            assert valley < 0.2 * hist[centres == bg_peak][0]

    def test_foreground_deeper_and_coloured_apart(self, samples):
        for s in samples:
            fg = s.gt[0] > 0
            assert s.depth[0][fg].mean() > s.depth[0][~fg].mean() + 0.2
            diff = np.abs(s.rgb[:, fg].mean(1) - s.rgb[:, ~fg].mean(1)).max()
            assert diff > 0.1

    def test_n_zero(self):
        with pytest.raises(ContractError):
            D.synth_dataset(0)

    def test_misaligned_sample(self):
        with pytest.raises(ContractError):
            D.Sample(np.zeros((3, 4, 4)), np.zeros((1, 4, 5)), np.zeros((1, 4, 4)))


class TestAugmentation:
    def test_gt_stays_binary(self, samples):
        rng = np.random.default_rng(0)
        for s in samples:
            for _ in range(3):
                out = D.augment(s, rng)
                assert set(np.unique(out.gt)) <= {0.0, 1.0}
                assert out.rgb.shape == s.rgb.shape and out.gt.shape == s.gt.shape

    def test_double_flip(self, samples):
        s = samples[0]
        twice = D.hflip(D.hflip(s))
        for f in ("rgb", "depth", "gt"):
            np.testing.assert_array_equal(getattr(twice, f), getattr(s, f))

    def test_flip_is_field_consistent(self, samples):
        s = samples[1]
        flipped = D.hflip(s)
        rgb_only = D.with_field(s, rgb=s.rgb[..., ::-1].copy())
        np.testing.assert_array_equal(rgb_only.rgb, flipped.rgb)
        np.testing.assert_array_equal(rgb_only.depth, s.depth)
        np.testing.assert_array_equal(rgb_only.gt, s.gt)
        assert not np.array_equal(flipped.gt, s.gt)

    def test_same_warp_on_every_field(self):
        # gt copied into every field: where the nearest sample is foreground,
        # the bilinear sample puts weight >= 1/4 on that same source pixel
        s = D.synth_dataset(1, 32, seed=8)[0]
        tied = D.Sample(np.repeat(s.gt, 3, 0), s.gt.copy(), s.gt.copy())
        for out in (D.rotate(tied, 7.0), D.crop_resize(tied, 1.3, 2.1, 0.9)):
            inside = out.gt[0] > 0
            assert (out.rgb[:, inside] >= 0.25).all() and (out.depth[0][inside] >= 0.25).all()
            agree = ((out.depth[0] > 0.5) == inside).mean()
            assert agree > 0.95

    def test_identity_transforms(self, samples):
        s = samples[2]
        np.testing.assert_allclose(D.rotate(s, 0.0).rgb, s.rgb, atol=1e-12)
        np.testing.assert_array_equal(D.crop_resize(s, 0.0, 0.0, 1.0).gt, s.gt)

    def test_rotation_fills_gt_corners_with_background(self):
        s = D.Sample(np.ones((3, 16, 16)), np.ones((1, 16, 16)), np.ones((1, 16, 16)))
        out = D.rotate(s, 10.0)
        assert out.gt[0, 0, 0] == 0.0
        assert out.rgb[:, 0, 0].tolist() == [1.0, 1.0, 1.0]

    def test_augment_seeded(self, samples):
        a = D.augment(samples[3], np.random.default_rng(11))
        b = D.augment(samples[3], np.random.default_rng(11))
        np.testing.assert_array_equal(a.rgb, b.rgb)


class TestDiskLayout:
    def test_save_load(self, samples, tmp_path):
        D.save_dataset(tmp_path, samples[:3], ["train", "test", "train"])
        assert (tmp_path / "rgb" / "0002.ppm").exists() and (tmp_path / "gt" / "0000.pgm").exists()
        assert D.read_manifest(tmp_path) == [("0000", "train"), ("0001", "test"), ("0002", "train")]
        train = D.load_dataset(tmp_path, "train")
        assert len(train) == 2 and len(D.load_dataset(tmp_path)) == 3
        np.testing.assert_array_equal(train[1].gt, samples[2].gt)
        np.testing.assert_allclose(train[0].rgb, samples[0].rgb, atol=0.5 / 255 + 1e-12)
