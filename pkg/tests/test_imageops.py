import numpy as np
import pytest

from ftirpad.calibration import PerspectiveTransform
from ftirpad.imageops import (
    GRAY,
    HSV,
    RGB,
    Image,
    ImageError,
    _round_u8,
    downsample_box,
    hist_equalize,
    hsv_to_rgb,
    negate,
    process_ftir,
    rgb_to_hsv,
    to_grayscale,
)


def _rand_gray(rng, h=32, w=40):
    return Image(rng.integers(0, 256, size=(h, w), dtype=np.uint8), GRAY)


def _rand_rgb(rng, h=32, w=40):
    return Image(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8), RGB)


class TestImageType:
    def test_shape_contracts(self):
        with pytest.raises(ImageError):
            Image(np.zeros((4, 4, 3), dtype=np.uint8), GRAY)
        with pytest.raises(ImageError):
            Image(np.zeros((4, 4), dtype=np.uint8), RGB)
        with pytest.raises(ImageError):
            Image(np.zeros((4, 4, 4), dtype=np.uint8), RGB)
        with pytest.raises(ImageError):
            Image(np.zeros((4, 4)), GRAY)  # float dtype
        with pytest.raises(ImageError):
            Image(np.zeros((0, 4), dtype=np.uint8), GRAY)
        with pytest.raises(ImageError):
            Image(np.zeros((4, 4), dtype=np.uint8), "YUV")

    def test_properties(self):
        img = Image(np.zeros((6, 9, 3), dtype=np.uint8), RGB)
        assert (img.height, img.width, img.channels) == (6, 9, 3)


class TestRounding:
    def test_half_up(self):
        assert _round_u8(np.array([0.5, 1.5, 2.49, 254.5])).tolist() == [1, 2, 2, 255]

    def test_clip(self):
        assert _round_u8(np.array([-3.0, 300.0])).tolist() == [0, 255]


class TestGrayscale:
    def test_white_and_primaries(self):
        img = Image(np.array([[[255, 255, 255], [255, 0, 0], [0, 255, 0], [0, 0, 255]]],
                             dtype=np.uint8), RGB)
        assert to_grayscale(img).data[0].tolist() == [255, 76, 150, 29]

    def test_constant_gray_unchanged(self):
        img = Image(np.full((4, 4, 3), 99, dtype=np.uint8), RGB)
        assert np.all(to_grayscale(img).data == 99)

    def test_requires_rgb(self):
        with pytest.raises(ImageError):
            to_grayscale(Image(np.zeros((4, 4), dtype=np.uint8), GRAY))


class TestEqualize:
    def test_constant_identity(self):
        img = Image(np.full((8, 8), 7, dtype=np.uint8), GRAY)
        assert np.array_equal(hist_equalize(img).data, img.data)

    def test_two_level_endpoints(self):
        data = np.zeros((10, 10), dtype=np.uint8)
        data[:3] = 255
        out = hist_equalize(Image(data, GRAY)).data
        assert set(np.unique(out)) == {0, 255}
        assert np.array_equal(out, data)

    def test_ramp_stretches_full_range(self):
        data = np.repeat(np.arange(100, 151, dtype=np.uint8)[None, :], 20, axis=0)
        out = hist_equalize(Image(data, GRAY)).data
        assert out.min() == 0 and out.max() == 255
        counts = np.bincount(out.ravel(), minlength=256)
        nz = counts[counts > 0]
        assert nz.max() / nz.min() <= 2.0

    def test_order_preserved(self):
        rng = np.random.default_rng(0)
        img = _rand_gray(rng)
        out = hist_equalize(img).data.astype(int)
        src = img.data.astype(int)
        # equalization is a monotone LUT: source order implies output order
        idx = np.argsort(src, axis=None)
        assert np.all(np.diff(out.ravel()[idx]) >= 0)


class TestNegate:
    def test_values(self):
        img = Image(np.array([[0, 255, 100]], dtype=np.uint8), GRAY)
        assert negate(img).data.tolist() == [[255, 0, 155]]

    def test_involution(self):
        rng = np.random.default_rng(1)
        img = _rand_gray(rng)
        assert np.array_equal(negate(negate(img)).data, img.data)


class TestDownsample:
    def test_constant_block(self):
        img = Image(np.full((4, 4), 50, dtype=np.uint8), GRAY)
        out = downsample_box(img, 2, 2)
        assert np.all(out.data == 50)

    def test_mean_rounding(self):
        img = Image(np.array([[0, 0], [255, 255]], dtype=np.uint8), GRAY)
        assert downsample_box(img, 1, 1).data.tolist() == [[128]]  # 127.5 rounds up

    def test_identity(self):
        rng = np.random.default_rng(2)
        img = _rand_gray(rng, 10, 12)
        assert np.array_equal(downsample_box(img, 12, 10).data, img.data)

    def test_rejects_upsample(self):
        img = Image(np.zeros((4, 4), dtype=np.uint8), GRAY)
        with pytest.raises(ImageError):
            downsample_box(img, 8, 4)
        with pytest.raises(ImageError):
            downsample_box(img, 0, 2)

    def test_descriptor_scale_preserves_mean(self):
        rng = np.random.default_rng(3)
        data = rng.integers(0, 256, size=(1450, 1944), dtype=np.uint8)
        out = downsample_box(Image(data, GRAY), 145, 108)
        assert out.data.shape == (108, 145)
        assert abs(float(out.data.mean()) - float(data.mean())) <= 1.0

    def test_channels_independent(self):
        rng = np.random.default_rng(4)
        img = _rand_rgb(rng, 12, 12)
        out = downsample_box(img, 6, 6)
        for k in range(3):
            chan = Image(img.data[:, :, k].copy(), GRAY)
            assert np.array_equal(out.data[:, :, k], downsample_box(chan, 6, 6).data)

    def test_commutes_with_negate_within_one(self):
        rng = np.random.default_rng(5)
        img = _rand_gray(rng, 30, 40)
        a = downsample_box(negate(img), 13, 11).data.astype(int)
        b = negate(downsample_box(img, 13, 11)).data.astype(int)
        assert np.max(np.abs(a - b)) <= 1


class TestHsv:
    def test_primary_values(self):
        img = Image(np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255],
                               [255, 255, 255], [0, 0, 0], [128, 128, 128]]],
                             dtype=np.uint8), RGB)
        out = rgb_to_hsv(img).data[0]
        assert out[0].tolist() == [0, 255, 255]       # red
        assert out[1].tolist() == [85, 255, 255]      # green: 120/360*255
        assert out[2].tolist() == [170, 255, 255]     # blue: 240/360*255
        assert out[3].tolist() == [0, 0, 255]         # white achromatic
        assert out[4].tolist() == [0, 0, 0]           # black
        assert out[5].tolist() == [0, 0, 128]         # gray achromatic

    def test_round_trip_close(self):
        rng = np.random.default_rng(6)
        img = _rand_rgb(rng, 16, 16)
        back = hsv_to_rgb(rgb_to_hsv(img))
        assert np.max(np.abs(back.data.astype(int) - img.data.astype(int))) <= 5

    def test_achromatic_inverse(self):
        hsv = Image(np.stack([np.zeros((4, 4)), np.zeros((4, 4)),
                              np.full((4, 4), 200)], axis=2).astype(np.uint8), HSV)
        rgb = hsv_to_rgb(hsv).data
        assert np.all(rgb == 200)

    def test_colorspace_contracts(self):
        g = Image(np.zeros((4, 4), dtype=np.uint8), GRAY)
        with pytest.raises(ImageError):
            rgb_to_hsv(g)
        rgb = Image(np.zeros((4, 4, 3), dtype=np.uint8), RGB)
        with pytest.raises(ImageError):
            hsv_to_rgb(rgb)


class TestProcessFtir:
    def test_identity_pipeline(self):
        from ftirpad.simulate import FingerSpec, Pose, contact_mask, render_views

        finger = FingerSpec("s000", "f00", ridge_orientation_field_seed=3)
        pose = Pose()
        ftir, _ = render_views(finger, None, pose, dims=(256, 192), noise_seed=3)
        ident = PerspectiveTransform.identity()
        out = process_ftir(ftir, ident, native_ppi=(1000.0, 1000.0))
        assert (out.width, out.height) == (128, 96)
        assert out.ppi == (500.0, 500.0)
        assert out.color_space == GRAY

        # ridge-contact areas come out dark, background bright
        mask = contact_mask(finger, pose, (256, 192))
        small_contact = downsample_box(
            Image((mask * 255).astype(np.uint8), GRAY), 128, 96
        ).data > 200
        small_background = downsample_box(
            Image((mask * 255).astype(np.uint8), GRAY), 128, 96
        ).data < 50
        assert out.data[small_contact].mean() < 100
        assert out.data[small_background].mean() > 150

    def test_deterministic(self):
        from ftirpad.simulate import FingerSpec, Pose, render_views

        ftir, _ = render_views(FingerSpec("s001", "f00"), None, Pose(), noise_seed=1)
        t = PerspectiveTransform.identity()
        a = process_ftir(ftir, t, (1594.0, 2463.0))
        b = process_ftir(ftir, t, (1594.0, 2463.0))
        assert np.array_equal(a.data, b.data)

    def test_bad_ppi(self):
        img = Image(np.zeros((16, 16, 3), dtype=np.uint8), RGB)
        with pytest.raises(ImageError):
            process_ftir(img, PerspectiveTransform.identity(), (0.0, 500.0))
