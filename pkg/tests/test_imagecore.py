import numpy as np
import pytest
from PIL import Image as PILImage

from imagecore.image import (
    DeformationField,
    Image,
    SemanticMask,
    convert_range,
    field_from_tensor,
    field_to_tensor,
    from_tensor,
    to_tensor,
)
from imagecore.io import (
    DFLD_HEADER,
    load_field,
    load_image,
    load_mask,
    quantize,
    save_field,
    save_image,
    save_mask,
)
from utils.errors import (
    CorruptImageError,
    ImageFormatError,
    ImageNotFoundError,
    RangeError,
    ShapeMismatchError,
)


def _write_png(path, data: np.ndarray) -> None:
    PILImage.fromarray(data).save(path, format="PNG")


class TestImageInvariants:
    def test_rejects_small_images(self):
        with pytest.raises(ShapeMismatchError):
            Image(np.zeros((4, 4, 3)))

    def test_rejects_two_channels(self):
        with pytest.raises(ShapeMismatchError):
            Image(np.zeros((8, 8, 2)))

    def test_rejects_out_of_range_and_non_finite(self):
        with pytest.raises(RangeError):
            Image(np.full((8, 8, 3), 1.2))
        with pytest.raises(RangeError):
            Image(np.full((8, 8, 3), np.nan))

    def test_clipped_constructor_enforces_range(self):
        img = Image.clipped(np.full((8, 8, 1), -3.0), "signed")
        assert img.pixels.min() == -1.0
        img.assert_range()

    def test_gray_arrays_get_a_channel_axis(self):
        img = Image(np.zeros((8, 9)))
        assert img.shape == (8, 9, 1)
        assert img.color_space == "gray"

    def test_mask_must_be_binary(self):
        with pytest.raises(RangeError):
            SemanticMask(np.full((8, 8), 0.5))
        assert SemanticMask(np.ones((8, 8, 1))).shape == (8, 8)


class TestConvertRange:
    def test_midpoint_and_endpoints(self):
        img = Image(np.tile([0.5, 0.0, 1.0, 0.5], 16).reshape(8, 8, 1), "unit")
        signed = convert_range(img, "signed")
        assert signed.value_range == "signed"
        assert np.allclose(np.unique(signed.pixels), [-1.0, 0.0, 1.0])

    def test_round_trip(self, random_image):
        img = random_image(8, 8, 3)
        back = convert_range(convert_range(img, "signed"), "unit")
        assert np.max(np.abs(back.pixels - img.pixels)) <= 1e-15

    def test_round_trip_exact_above_quarter(self, rng):
        values = rng.uniform(0.25, 1.0, size=(8, 8, 3))
        img = Image(values, "unit")
        assert np.array_equal(convert_range(convert_range(img, "signed"), "unit").pixels, values)

    def test_round_trip_exact_on_dyadic_values(self):
        values = np.array([0.0, 0.25, 0.5, 0.75, 1.0] * 13)[:64].reshape(8, 8, 1)
        img = Image(values, "unit")
        assert np.array_equal(convert_range(convert_range(img, "signed"), "unit").pixels, values)


class TestImageFiles:
    def test_load_scales_endpoints(self, tmp_path):
        data = np.zeros((8, 8), dtype=np.uint8)
        data[0, 0] = 255
        _write_png(tmp_path / "a.png", data)
        unit = load_image(tmp_path / "a.png", "unit")
        signed = load_image(tmp_path / "a.png", "signed")
        assert unit.pixels[0, 0, 0] == 1.0
        assert signed.pixels[1, 1, 0] == -1.0

    def test_save_then_load_within_one_step(self, tmp_path, random_image):
        img = random_image(16, 12, 3)
        save_image(img, tmp_path / "r.png")
        back = load_image(tmp_path / "r.png", "unit")
        assert back.shape == img.shape
        assert np.max(np.abs(back.pixels - img.pixels)) <= 1.0 / 255.0

    def test_quantization_rounds_half_up_and_clips(self, tmp_path):
        img = Image(np.full((8, 8, 1), 0.5), "unit")
        assert quantize(img)[0, 0, 0] == 128
        high = Image.clipped(np.full((8, 8, 1), 1.2), "unit")
        low = Image.clipped(np.full((8, 8, 1), -0.1), "unit")
        save_image(high, tmp_path / "h.png")
        save_image(low, tmp_path / "l.png")
        assert np.asarray(PILImage.open(tmp_path / "h.png"))[0, 0] == 255
        assert np.asarray(PILImage.open(tmp_path / "l.png"))[0, 0] == 0

    def test_save_requires_parent_directory(self, tmp_path, random_image):
        with pytest.raises(FileNotFoundError):
            save_image(random_image(), tmp_path / "missing" / "x.png")

    def test_distinct_load_errors(self, tmp_path):
        with pytest.raises(ImageNotFoundError):
            load_image(tmp_path / "nope.png")

        (tmp_path / "text.png").write_text("not an image")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "text.png")

        _write_png(tmp_path / "full.png", np.random.default_rng(0).integers(0, 255, (64, 64, 3), dtype=np.uint8))
        raw = (tmp_path / "full.png").read_bytes()
        (tmp_path / "cut.png").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(CorruptImageError):
            load_image(tmp_path / "cut.png")

    def test_mask_threshold(self, tmp_path):
        data = np.zeros((8, 8), dtype=np.uint8)
        data[:, :4] = 200
        data[0, 0] = 127
        _write_png(tmp_path / "m.png", data)
        mask = load_mask(tmp_path / "m.png")
        assert mask.mask[0, 0] == 0.0
        assert mask.mask[1, 0] == 1.0
        assert mask.mask[:, 4:].sum() == 0

    def test_mask_save_load(self, tmp_path):
        m = SemanticMask((np.arange(64).reshape(8, 8) % 3 == 0).astype(float))
        save_mask(m, tmp_path / "m.png")
        assert np.array_equal(load_mask(tmp_path / "m.png").mask, m.mask)


class TestFieldFiles:
    def test_dfld_layout_and_round_trip(self, tmp_path, rng):
        field = DeformationField(rng.normal(size=(9, 11, 2)).astype(np.float32))
        save_field(field, tmp_path / "f.dfld")
        raw = (tmp_path / "f.dfld").read_bytes()
        assert raw[:4] == b"DFLD"
        assert len(raw) == 16 + 9 * 11 * 2 * 4
        assert DFLD_HEADER.unpack_from(raw)[1:] == (1, 9, 11)
        assert np.array_equal(load_field(tmp_path / "f.dfld").displacements, field.displacements)

    def test_dx_precedes_dy(self, tmp_path):
        disp = np.zeros((8, 8, 2), dtype=np.float32)
        disp[0, 0] = (1.5, -2.5)
        save_field(DeformationField(disp), tmp_path / "f.dfld")
        payload = np.frombuffer((tmp_path / "f.dfld").read_bytes()[16:24], dtype="<f4")
        assert payload.tolist() == [1.5, -2.5]

    def test_bad_containers(self, tmp_path):
        good = DeformationField.zeros(8, 8)
        save_field(good, tmp_path / "f.dfld")
        raw = (tmp_path / "f.dfld").read_bytes()

        (tmp_path / "magic.dfld").write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ImageFormatError):
            load_field(tmp_path / "magic.dfld")

        (tmp_path / "version.dfld").write_bytes(DFLD_HEADER.pack(b"DFLD", 2, 8, 8) + raw[16:])
        with pytest.raises(ImageFormatError):
            load_field(tmp_path / "version.dfld")

        (tmp_path / "short.dfld").write_bytes(raw[:-4])
        with pytest.raises(CorruptImageError):
            load_field(tmp_path / "short.dfld")


class TestTensorBridges:
    def test_image_layout(self, random_image):
        img = random_image(8, 10, 3, "signed")
        t = to_tensor(img)
        assert t.shape == (1, 3, 8, 10)
        assert np.allclose(from_tensor(t, "signed").pixels, img.pixels, atol=1e-7)

    def test_field_channels_are_dx_dy(self):
        disp = np.zeros((8, 8, 2))
        disp[..., 0] = 1.0
        t = field_to_tensor(DeformationField(disp))
        assert t.shape == (1, 2, 8, 8)
        assert float(t[0, 0].mean()) == 1.0 and float(t[0, 1].abs().max()) == 0.0
        assert np.array_equal(field_from_tensor(t).displacements, disp.astype(np.float32))
