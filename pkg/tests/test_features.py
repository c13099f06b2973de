import numpy as np
import pytest

from spdps.features import (
    DESCRIPTOR_DIMS,
    FeatureField,
    area_resample,
    build_feature_field,
    covariance_descriptor,
    default_wavelengths,
    gabor_bank,
    gabor_kernel,
    gradients,
    image_to_points,
    load_image,
    rec601_luma,
)
from spdps.spd_core import SpdMatrix


def grating(theta, wavelength, size=64):
    ys, xs = np.mgrid[0:size, 0:size]
    return 0.5 + 0.4 * np.cos(2 * np.pi * (xs * np.cos(theta) + ys * np.sin(theta)) / wavelength)


def gabor_patch(theta, wavelength, size=64, envelope=8.0):
    ys, xs = np.mgrid[0:size, 0:size]
    xc, yc = xs - size / 2, ys - size / 2
    carrier = np.cos(2 * np.pi * (xc * np.cos(theta) + yc * np.sin(theta)) / wavelength)
    return np.exp(-(xc**2 + yc**2) / (2 * envelope**2)) * carrier


class TestGradients:
    def test_constant_image_all_zero(self):
        planes = gradients(np.full((8, 10), 3.7))
        for plane in planes:
            np.testing.assert_array_equal(plane, np.zeros((8, 10)))

    def test_x_ramp(self):
        ys, xs = np.mgrid[0:6, 0:9]
        ix, iy, ixx, iyy = gradients(xs.astype(float))
        np.testing.assert_allclose(ix[:, 1:-1], 1.0)
        np.testing.assert_allclose(iy, 0.0)
        np.testing.assert_allclose(ixx[:, 1:-1], 0.0, atol=1e-15)
        np.testing.assert_allclose(iyy, 0.0)

    def test_quadratic_second_derivative(self):
        ys, xs = np.mgrid[0:5, 0:9]
        _, _, ixx, _ = gradients((xs.astype(float)) ** 2)
        np.testing.assert_allclose(ixx[:, 1:-1], 2.0)

    def test_checkerboard_symmetric(self):
        ys, xs = np.mgrid[0:8, 0:8]
        board = ((xs + ys) % 2).astype(float)
        ix, iy, ixx, iyy = gradients(board)
        np.testing.assert_array_equal(ix, iy.T)
        np.testing.assert_array_equal(ixx, iyy.T)

    def test_too_small_image(self):
        with pytest.raises(ValueError):
            gradients(np.zeros((2, 5)))


class TestGaborBank:
    def test_constant_image_near_zero(self):
        bank = gabor_bank(np.full((64, 64), 0.7))
        assert bank.shape == (40, 64, 64)
        assert bank.max() <= 1e-6 * 0.7

    def test_kernel_dc_free_unit_energy(self):
        k = gabor_kernel(8.0, np.pi / 3)
        assert abs(k.sum()) < 1e-10
        assert np.linalg.norm(k) == pytest.approx(1.0, abs=1e-12)

    def test_grating_peaks_at_matching_plane(self):
        lams = default_wavelengths(5)
        for v, u in [(0, 0), (1, 3), (2, 5), (3, 1), (4, 7)]:
            bank = gabor_bank(grating(u * np.pi / 8, lams[v]))
            central = bank[:, 16:48, 16:48].mean(axis=(1, 2))
            assert int(np.argmax(central)) == v * 8 + u

    def test_rotation_by_angle_step_permutes_orientations(self):
        lam = default_wavelengths(5)[1]
        for u in (0, 2, 6):
            a = gabor_bank(gabor_patch(u * np.pi / 8, lam))[8 + u]
            b = gabor_bank(gabor_patch((u + 1) * np.pi / 8, lam))[8 + u + 1]
            assert np.corrcoef(a.ravel(), b.ravel())[0, 1] >= 0.9

    def test_image_smaller_than_kernel(self):
        with pytest.raises(ValueError, match="smaller"):
            gabor_bank(np.zeros((32, 32)))

    def test_wavelength_count_must_match_scales(self):
        with pytest.raises(ValueError):
            gabor_bank(np.zeros((64, 64)), scales=3, wavelengths=[4.0, 8.0])


class TestBuildFeatureField:
    def test_channel_counts(self):
        rng = np.random.default_rng(0)
        gray = rng.random((64, 64))
        rgb = rng.random((16, 16, 3))
        assert build_feature_field(gray, "texture5").dim == 5
        assert build_feature_field(gray, "virus25").dim == 25
        assert build_feature_field(gray, "face43").dim == 43
        assert build_feature_field(rgb, "color11").dim == 11
        assert DESCRIPTOR_DIMS == {"texture5": 5, "virus25": 25, "face43": 43, "color11": 11}

    def test_face_coordinate_plane(self):
        field = build_feature_field(np.random.default_rng(1).random((64, 64)), "face43")
        # channel 1 is the x (column) coordinate, channel 2 the y (row)
        assert field.channels[1][7, 3] == 3.0
        assert field.channels[2][7, 3] == 7.0

    def test_texture_constant_image(self):
        field = build_feature_field(np.full((16, 16), 0.5), "texture5")
        np.testing.assert_array_equal(field.channels[0], np.full((16, 16), 0.5))
        np.testing.assert_array_equal(field.channels[1:], np.zeros((4, 16, 16)))

    def test_rgb_collapses_by_luma(self):
        rgb = np.random.default_rng(2).random((12, 12, 3))
        field = build_feature_field(rgb, "texture5")
        np.testing.assert_allclose(field.channels[0], rec601_luma(rgb), atol=1e-15)

    def test_color_gradient_magnitude_channels(self):
        ys, xs = np.mgrid[0:8, 0:8]
        rgb = np.stack([xs.astype(float), np.full((8, 8), 0.3), ys.astype(float)], axis=2)
        field = build_feature_field(rgb, "color11")
        # R ramps along x: first-derivative magnitude 1 in the interior
        np.testing.assert_allclose(field.channels[5][1:-1, 1:-1], 1.0)
        np.testing.assert_allclose(field.channels[6], 0.0)
        np.testing.assert_allclose(field.channels[8][1:-1, 1:-1], 0.0, atol=1e-15)

    def test_color_needs_rgb(self):
        with pytest.raises(ValueError, match="RGB"):
            build_feature_field(np.zeros((8, 8)), "color11")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_feature_field(np.zeros((8, 8)), "texture7")

    def test_field_validates_channel_count(self):
        with pytest.raises(ValueError):
            FeatureField(4, 4, np.zeros((3, 4, 4)), "texture5")


class TestCovarianceDescriptor:
    def test_two_pixel_hand_oracle(self):
        stack = np.array([[[0.0, 2.0]], [[0.0, 0.0]]])
        desc = covariance_descriptor(stack, (0, 0, 1, 2))
        want = np.array([[2.0 + 1e-6, 0.0], [0.0, 1e-6]])
        np.testing.assert_allclose(np.asarray(desc), want, atol=1e-18)

    def test_constant_field_floors_to_identity(self):
        field = build_feature_field(np.full((16, 16), 0.5), "texture5")
        desc = covariance_descriptor(field, (0, 0, 16, 16))
        np.testing.assert_allclose(np.asarray(desc), 1e-6 * np.eye(5), atol=1e-20)

    def test_intensity_shift_leaves_descriptor_unchanged(self):
        img = np.random.default_rng(3).random((20, 20))
        a = covariance_descriptor(build_feature_field(img, "texture5"), (2, 2, 10, 10))
        b = covariance_descriptor(build_feature_field(img + 0.3, "texture5"), (2, 2, 10, 10))
        np.testing.assert_allclose(np.asarray(a), np.asarray(b), atol=1e-12)

    def test_tile_means_average_to_global_mean(self):
        field = build_feature_field(np.random.default_rng(4).random((16, 16)), "texture5")
        tiles = [
            field.channels[:, r : r + 8, c : c + 8].mean(axis=(1, 2))
            for r in (0, 8)
            for c in (0, 8)
        ]
        np.testing.assert_allclose(
            np.mean(tiles, axis=0), field.channels.mean(axis=(1, 2)), atol=1e-12
        )

    def test_out_of_bounds_region(self):
        field = build_feature_field(np.zeros((8, 8)), "texture5")
        with pytest.raises(ValueError, match="bounds"):
            covariance_descriptor(field, (4, 4, 8, 8))

    def test_degenerate_region(self):
        field = build_feature_field(np.zeros((8, 8)), "texture5")
        with pytest.raises(ValueError):
            covariance_descriptor(field, (0, 0, 1, 1))


class TestAreaResample:
    def test_block_mean(self):
        img = np.arange(16, dtype=float).reshape(4, 4)
        out = area_resample(img, 2, 2)
        want = np.array([[img[:2, :2].mean(), img[:2, 2:].mean()],
                         [img[2:, :2].mean(), img[2:, 2:].mean()]])
        np.testing.assert_allclose(out, want, atol=1e-12)

    def test_fractional_overlap(self):
        out = area_resample(np.array([[1.0, 2.0, 4.0]]), 1, 2)
        # cells are [0, 1.5) and [1.5, 3): (1 + 0.5*2)/1.5 and (0.5*2 + 4)/1.5
        np.testing.assert_allclose(out, [[2.0 / 1.5, 5.0 / 1.5]], atol=1e-12)

    def test_preserves_constant(self):
        out = area_resample(np.full((13, 7), 2.5), 5, 3)
        np.testing.assert_allclose(out, 2.5, atol=1e-12)

    def test_preserves_total_mean(self):
        img = np.random.default_rng(5).random((12, 12))
        out = area_resample(img, 4, 6)
        assert out.mean() == pytest.approx(img.mean(), abs=1e-12)

    def test_rgb_stack(self):
        img = np.random.default_rng(6).random((8, 8, 3))
        out = area_resample(img, 4, 4)
        assert out.shape == (4, 4, 3)
        np.testing.assert_allclose(out[..., 1], area_resample(img[..., 1], 4, 4), atol=1e-12)


class TestImageToPoints:
    def test_texture_grid(self):
        points = image_to_points(np.random.default_rng(7).random((256, 256)), "texture5")
        assert len(points) == 64
        assert all(isinstance(p, SpdMatrix) and p.dim == 5 for p in points)

    def test_texture_resampled_input(self):
        points = image_to_points(np.random.default_rng(8).random((320, 320)), "texture5")
        assert len(points) == 64

    def test_face_single_descriptor(self):
        points = image_to_points(np.random.default_rng(9).random((128, 128)), "face43")
        assert len(points) == 1
        assert points[0].dim == 43

    def test_person_single_descriptor(self):
        points = image_to_points(np.random.default_rng(10).random((128, 64, 3)), "color11")
        assert len(points) == 1
        assert points[0].dim == 11

    def test_custom_tiling(self):
        points = image_to_points(np.random.default_rng(11).random((256, 256)), "texture5", (4, 4))
        assert len(points) == 16

    def test_indivisible_tiling(self):
        with pytest.raises(ValueError, match="tiling"):
            image_to_points(np.zeros((256, 256)), "texture5", (7, 8))

    def test_deterministic(self):
        img = np.random.default_rng(12).random((256, 256))
        a = image_to_points(img, "texture5")
        b = image_to_points(img, "texture5")
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(np.asarray(pa), np.asarray(pb))


class TestLoadImage:
    def test_pgm_round_trip(self, tmp_path):
        from PIL import Image

        data = np.arange(12, dtype=np.uint8).reshape(3, 4)
        path = tmp_path / "img.pgm"
        Image.fromarray(data, mode="L").save(path)
        loaded = load_image(path)
        np.testing.assert_allclose(loaded, data / 255.0, atol=1e-12)

    def test_ppm_round_trip(self, tmp_path):
        from PIL import Image

        data = np.random.default_rng(13).integers(0, 256, (5, 4, 3), dtype=np.uint8)
        path = tmp_path / "img.ppm"
        Image.fromarray(data, mode="RGB").save(path)
        np.testing.assert_allclose(load_image(path), data / 255.0, atol=1e-12)

    def test_png_gray_and_rgb(self, tmp_path):
        from PIL import Image

        gray = np.random.default_rng(14).integers(0, 256, (6, 6), dtype=np.uint8)
        rgb = np.random.default_rng(15).integers(0, 256, (6, 6, 3), dtype=np.uint8)
        Image.fromarray(gray, mode="L").save(tmp_path / "g.png")
        Image.fromarray(rgb, mode="RGB").save(tmp_path / "c.png")
        assert load_image(tmp_path / "g.png").shape == (6, 6)
        assert load_image(tmp_path / "c.png").shape == (6, 6, 3)

    def test_unreadable_file_names_path(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"not an image")
        with pytest.raises(ValueError, match="broken.png"):
            load_image(path)
