# Image, mask and deformation-field file I/O
# Purpose: 8-bit PNG/JPEG rasters and the DFLD sidecar container

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from imagecore.image import DeformationField, Image, SemanticMask, ValueRange, convert_range
from utils.errors import CorruptImageError, ImageFormatError, ImageNotFoundError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8\xff"

DFLD_MAGIC = b"DFLD"
DFLD_VERSION = 1
DFLD_HEADER = struct.Struct("<4sIII")

_MODE_CONVERSIONS = {"RGB": "RGB", "RGBA": "RGB", "P": "RGB", "CMYK": "RGB", "YCbCr": "RGB", "L": "L", "LA": "L", "1": "L"}


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as f:
        head = f.read(8)
    if head.startswith(PNG_MAGIC):
        return "PNG"
    if head.startswith(JPEG_MAGIC):
        return "JPEG"
    raise ImageFormatError(f"Unsupported image format (expected 8-bit PNG or JPEG): {path}")


def _read_bytes_image(path: Path) -> np.ndarray:
    """Decode an 8-bit PNG/JPEG into an H×W×C uint8 array"""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"Image file not found: {path}")
    fmt = _sniff_format(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = _MODE_CONVERSIONS.get(pil.mode)
            if mode is None:
                raise ImageFormatError(f"Unsupported pixel mode {pil.mode} in {path} (only 8-bit RGB/gray)")
            data = np.asarray(pil.convert(mode))
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise CorruptImageError(f"Corrupt {fmt} data in {path}: {e}") from e
    if data.ndim == 2:
        data = data[:, :, None]
    return data


def load_image(path, value_range: ValueRange = "unit") -> Image:
    """Load an 8-bit PNG/JPEG and rescale [0, 255] to the requested range"""
    data = _read_bytes_image(Path(path))
    img = Image(data.astype(np.float64) / 255.0, "unit")
    return convert_range(img, value_range)


def quantize(img: Image) -> np.ndarray:
    """Clip to range, map to unit, round half up to 8-bit"""
    unit = convert_range(img, "unit").pixels
    return np.floor(np.clip(unit, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: Image, path) -> None:
    """Write an 8-bit PNG"""
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"Output directory does not exist: {path.parent}")
    data = quantize(img)
    pil = PILImage.fromarray(data[:, :, 0] if data.shape[2] == 1 else data)
    pil.save(path, format="PNG")


def load_mask(path) -> SemanticMask:
    """1-channel PNG, 0/255 -> 0/1 (bytes >= 128 count as set)"""
    data = _read_bytes_image(Path(path))
    if data.shape[2] != 1:
        data = data.mean(axis=2, keepdims=True)
    return SemanticMask((data[:, :, 0] >= 128).astype(np.float64))


def save_mask(mask: SemanticMask, path) -> None:
    data = (mask.mask * 255).astype(np.uint8)
    PILImage.fromarray(data).save(Path(path), format="PNG")


# Deformation fields

def save_field(field: DeformationField, path) -> None:
    """DFLD container: 16-byte header then H*W*(dx, dy) little-endian float32"""
    height, width = field.shape
    payload = np.ascontiguousarray(field.displacements, dtype="<f4")
    with open(Path(path), "wb") as f:
        f.write(DFLD_HEADER.pack(DFLD_MAGIC, DFLD_VERSION, height, width))
        f.write(payload.tobytes(order="C"))


def load_field(path) -> DeformationField:
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"Field file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < DFLD_HEADER.size:
        raise CorruptImageError(f"Truncated DFLD header in {path}")
    magic, version, height, width = DFLD_HEADER.unpack_from(raw)
    if magic != DFLD_MAGIC:
        raise ImageFormatError(f"Not a DFLD file (magic {magic!r}): {path}")
    if version != DFLD_VERSION:
        raise ImageFormatError(f"Unsupported DFLD version {version}: {path}")
    expected = height * width * 2 * 4
    payload = raw[DFLD_HEADER.size:]
    if len(payload) != expected:
        raise CorruptImageError(f"DFLD payload is {len(payload)} bytes, expected {expected}: {path}")
    disp = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2).astype(np.float32)
    return DeformationField(disp)
