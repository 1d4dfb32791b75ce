# Anchor-positive synthesis and facial-component masks
# Purpose: I_AP = I_F * M + I_warp * (1 - M), with M built from 5-point landmarks

from pathlib import Path

import numpy as np
import torch

from imagecore.image import Image, SemanticMask, check_same_shape
from utils.errors import ImageFormatError, ImageNotFoundError, RangeError, ShapeMismatchError

# left eye, right eye, nose tip, left mouth corner, right mouth corner on a 512 aligned face
FACE_TEMPLATE_512 = np.array([
    [192.98138, 239.94708],
    [318.90277, 240.19360],
    [256.63416, 314.01935],
    [201.26117, 371.41043],
    [313.08905, 371.15118],
])

NUM_LANDMARKS = 5


def build_anchor_positive(i_f: Image, i_warp: Image, m: SemanticMask) -> Image:
    """Facial components from I_F, skin and context from I_warp"""
    check_same_shape(i_f, i_warp, "I_F and I_warp")
    if i_f.value_range != i_warp.value_range:
        raise RangeError("I_F and I_warp must share a value range")
    if m.shape != (i_f.height, i_f.width):
        raise ShapeMismatchError(f"Mask shape {m.shape} does not match image {i_f.height}×{i_f.width}")
    mask = m.mask[:, :, None]
    return Image.clipped(i_f.pixels * mask + i_warp.pixels * (1.0 - mask), i_f.value_range)


def anchor_positive_tensor(i_f: torch.Tensor, i_warp: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Batched form; mask is (B, 1, H, W) of 0/1"""
    if i_f.shape != i_warp.shape or mask.shape[-2:] != i_f.shape[-2:]:
        raise ShapeMismatchError(f"Anchor-positive inputs differ: {tuple(i_f.shape)}, {tuple(i_warp.shape)}, {tuple(mask.shape)}")
    return i_f * mask + i_warp * (1 - mask)


def canonical_landmarks(height: int, width: int) -> np.ndarray:
    """The aligned-face 5-point template scaled to height×width"""
    return FACE_TEMPLATE_512 * np.array([width / 512.0, height / 512.0])


def mask_from_landmarks(shape: tuple[int, int], landmarks: np.ndarray, scale: float = 1.0) -> SemanticMask:
    """Union of ellipses around both eyes, the nose and the mouth"""
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if landmarks.shape != (NUM_LANDMARKS, 2):
        raise ShapeMismatchError(f"Expected 5 landmarks of (x, y), got shape {landmarks.shape}")
    height, width = shape
    left_eye, right_eye, nose, mouth_left, mouth_right = landmarks
    ocular = max(np.linalg.norm(right_eye - left_eye), 1.0) * scale
    mouth_center = (mouth_left + mouth_right) / 2.0
    mouth_half_width = np.linalg.norm(mouth_right - mouth_left) / 2.0

    ellipses = [
        (left_eye, 0.35 * ocular, 0.22 * ocular),
        (right_eye, 0.35 * ocular, 0.22 * ocular),
        (nose, 0.22 * ocular, 0.32 * ocular),
        (mouth_center, mouth_half_width + 0.15 * ocular, 0.2 * ocular),
    ]
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    mask = np.zeros((height, width), dtype=bool)
    for (cx, cy), rx, ry in ellipses:
        mask |= ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    return SemanticMask(mask.astype(np.float64))


def load_landmarks(path) -> np.ndarray:
    """Five lines of "x y": eyes, nose, mouth corners"""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"Landmark file not found: {path}")
    points = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ImageFormatError(f"Malformed landmark line {line!r} in {path}")
        points.append([float(parts[0]), float(parts[1])])
    return np.asarray(points, dtype=np.float64)


def save_landmarks(landmarks: np.ndarray, path) -> None:
    lines = [f"{x:.4f} {y:.4f}" for x, y in np.asarray(landmarks)]
    Path(path).write_text("\n".join(lines) + "\n")
