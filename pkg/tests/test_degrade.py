import numpy as np
import pytest

from degrade.manifest import degrade_dir
from degrade.pipeline import (
    DegradationParams,
    DegradationRanges,
    add_gaussian_noise,
    degrade,
    gaussian_blur,
    gaussian_kernel,
    gaussian_noise,
    jpeg_encoded_size,
    jpeg_roundtrip,
    resample,
    sample_params,
)
from imagecore.image import Image
from imagecore.io import save_image
from train.priors import procedural_face
from utils.errors import RangeError
from utils.file_manager import read_json


class TestGaussianBlur:
    def test_constant_image_unchanged(self):
        img = Image(np.full((16, 16, 3), 0.3))
        out = gaussian_blur(img, 2.5)
        assert np.max(np.abs(out.pixels - 0.3)) < 1e-12

    def test_zero_sigma_is_identity(self, random_image):
        img = random_image()
        assert np.array_equal(gaussian_blur(img, 0.0).pixels, img.pixels)

    def test_impulse_response_matches_kernel(self):
        pixels = np.zeros((17, 17, 1))
        pixels[8, 8, 0] = 1.0
        out = gaussian_blur(Image(pixels), 1.0).pixels[:, :, 0]
        sigma = 1.0
        for dy in range(-3, 4):
            for dx in range(-3, 4):
                expected = np.exp(-(dx * dx) / (2 * sigma ** 2)) * np.exp(-(dy * dy) / (2 * sigma ** 2))
                norm = sum(np.exp(-(t * t) / 2.0) for t in range(-3, 4)) ** 2
                assert out[8 + dy, 8 + dx] == pytest.approx(expected / norm, abs=1e-12)

    def test_kernel_size(self):
        assert len(gaussian_kernel(1.0)) == 7
        assert len(gaussian_kernel(2.2)) == 2 * 7 + 1

    def test_negative_sigma(self, random_image):
        with pytest.raises(RangeError):
            gaussian_blur(random_image(), -1.0)


class TestResample:
    def test_factor_one_is_identity(self, random_image):
        img = random_image()
        assert resample(img, 1.0, "down") is img

    def test_target_sizes(self):
        img = Image(np.zeros((512, 512, 1)))
        assert resample(img, 2.0, "down").shape[:2] == (256, 256)
        down = resample(img, 6.0, "down")
        assert down.shape[:2] == (85, 85)
        assert resample(down, 6.0, "up", size=(512, 512)).shape[:2] == (512, 512)

    def test_too_small_target(self, random_image):
        with pytest.raises(RangeError):
            resample(random_image(16, 16), 5.0, "down")


class TestNoise:
    def test_zero_delta(self, random_image):
        img = random_image()
        assert np.array_equal(add_gaussian_noise(img, 0.0, seed=3).pixels, img.pixels)

    def test_deterministic_per_seed(self, random_image):
        img = random_image()
        a = add_gaussian_noise(img, 10.0, seed=5)
        b = add_gaussian_noise(img, 10.0, seed=5)
        assert np.array_equal(a.pixels, b.pixels)

    def test_std_matches_delta(self):
        noise = gaussian_noise((256, 256, 1), 25.0, seed=0)
        assert np.std(noise) == pytest.approx(25.0 / 255.0, rel=0.02)
        img = Image(np.full((256, 256, 1), 0.5))
        diff = add_gaussian_noise(img, 25.0, seed=0).pixels - img.pixels
        assert np.std(diff) == pytest.approx(25.0 / 255.0, rel=0.02)

    def test_negative_delta(self, random_image):
        with pytest.raises(RangeError):
            add_gaussian_noise(random_image(), -1.0, seed=0)


class TestJpeg:
    def test_max_quality_on_gradient(self):
        ramp = np.tile(np.linspace(0.0, 1.0, 64), (64, 1))[:, :, None]
        img = Image(ramp)
        out = jpeg_roundtrip(img, 100)
        assert out.shape == img.shape
        assert np.max(np.abs(out.pixels - img.pixels)) <= 2.0 / 255.0 + 0.5 / 255.0

    def test_size_shrinks_with_quality(self):
        photo = procedural_face(64, seed=3)
        sizes = [jpeg_encoded_size(photo, q) for q in (90, 60, 30)]
        assert sizes[0] >= sizes[1] >= sizes[2]

    def test_shape_preserved(self, random_image):
        img = random_image(24, 40, 3)
        assert jpeg_roundtrip(img, 30).shape == img.shape

    def test_quality_out_of_range(self, random_image):
        with pytest.raises(RangeError):
            jpeg_roundtrip(random_image(), 0)


class TestDegradePipeline:
    def test_identity_parameters(self, face):
        out = degrade(face, DegradationParams.identity(), seed=0)
        assert np.array_equal(out.pixels, face.pixels)

    def test_deterministic_and_size_preserving(self, face):
        params = sample_params(11)
        a = degrade(face, params, seed=11)
        b = degrade(face, params, seed=11)
        assert np.array_equal(a.pixels, b.pixels)
        assert a.shape == face.shape
        a.assert_range()

    def test_stage_order_matters(self, face):
        params = DegradationParams(sigma=2.0, r=2.0, delta=10.0, q=40)
        reference = degrade(face, params, seed=4)
        noise_first = add_gaussian_noise(face, params.delta, 4)
        noise_first = gaussian_blur(noise_first, params.sigma)
        noise_first = resample(noise_first, params.r, "down")
        noise_first = jpeg_roundtrip(noise_first, params.q)
        noise_first = resample(noise_first, params.r, "up", size=(face.height, face.width))
        assert not np.allclose(reference.pixels, noise_first.pixels)

    def test_small_image_with_large_factor(self):
        face = procedural_face(40, seed=0)
        params = DegradationParams(sigma=1.0, r=6.0, delta=0.0, q=None)
        out = degrade(face, params, seed=0)
        assert out.shape == face.shape
        out.assert_range()

    def test_small_image_with_jpeg_and_noise(self):
        face = procedural_face(40, seed=1)
        out = degrade(face, DegradationParams(sigma=2.0, r=6.0, delta=10.0, q=30), seed=2)
        assert out.shape == face.shape

    def test_low_resolution_floor(self):
        with pytest.raises(RangeError):
            degrade(procedural_face(16, seed=0), DegradationParams(sigma=1.0, r=6.0, delta=0.0, q=None), seed=0)

    def test_requires_unit_range(self, random_image):
        with pytest.raises(RangeError):
            degrade(random_image(value_range="signed"), DegradationParams.identity(), 0)


class TestSampleParams:
    def test_default_ranges(self):
        for seed in range(200):
            p = sample_params(seed)
            assert 1 <= p.sigma <= 15
            assert 1 <= p.r <= 6
            assert 0 <= p.delta <= 25
            assert 30 <= p.q <= 90

    def test_point_interval(self):
        ranges = DegradationRanges(sigma=(5.0, 5.0))
        assert all(sample_params(s, ranges).sigma == 5.0 for s in range(10))

    def test_fixed_seed(self):
        assert sample_params(9) == sample_params(9)

    def test_inverted_interval(self):
        with pytest.raises(ValueError):
            DegradationRanges(r=(4.0, 2.0))


class TestDegradeDir:
    def test_byte_reproducible_with_manifest(self, tmp_path):
        hq = tmp_path / "hq"
        hq.mkdir()
        for k in range(3):
            save_image(procedural_face(48, seed=k), hq / f"face{k}.png")

        records = degrade_dir(hq, tmp_path / "lq1", seed=7)
        degrade_dir(hq, tmp_path / "lq2", seed=7)

        for k in range(3):
            assert (tmp_path / "lq1" / f"face{k}.png").read_bytes() == (tmp_path / "lq2" / f"face{k}.png").read_bytes()
        assert [r["seed"] for r in records] == [7, 8, 9]

        lines = (tmp_path / "lq1" / "manifest.txt").read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].split("\t")[0].endswith("face0.png")
        sidecar = read_json(tmp_path / "lq1" / "manifest.json")
        assert len(sidecar["pairs"]) == 3
        assert {"sigma", "r", "delta", "q", "seed"} <= set(sidecar["pairs"][0])
