# Prior pairs for training
# Purpose: (I_F, I_G, I_HQ) triples from synthetic perturbation or from a directory,
# and seed-ordered batching over them

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from config.settings import get_logger
from dam.warp import invert_field, warp
from degrade.pipeline import blur_array, gaussian_blur
from imagecore.image import (
    DeformationField,
    Image,
    SemanticMask,
    check_same_shape,
    convert_range,
    field_to_tensor,
    mask_to_tensor,
    to_tensor,
)
from imagecore.io import load_field, load_image, load_mask, save_field, save_image, save_mask
from metric.anchor import canonical_landmarks, load_landmarks, mask_from_landmarks, save_landmarks
from utils.errors import ImageNotFoundError, RangeError, ShapeMismatchError
from utils.file_manager import ensure_dir, list_images

logger = get_logger(__name__)

FIELD_GRID = 4


@dataclass(frozen=True, eq=False)
class PriorPair:
    """I_F, I_G and I_HQ in unit range; gt_field only for synthetic pairs"""

    i_f: Image
    i_g: Image
    i_hq: Image
    gt_field: Optional[DeformationField] = None
    mask: Optional[SemanticMask] = None
    landmarks: Optional[np.ndarray] = None

    def __post_init__(self):
        check_same_shape(self.i_f, self.i_g, "I_F and I_G")
        check_same_shape(self.i_f, self.i_hq, "I_F and I_HQ")
        if self.gt_field is not None:
            self.gt_field.check_matches(self.i_f)
        if self.mask is not None and self.mask.shape != (self.i_f.height, self.i_f.width):
            raise ShapeMismatchError(f"Mask shape {self.mask.shape} does not match pair {self.i_f.height}×{self.i_f.width}")


def smooth_random_field(height: int, width: int, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    """H×W×2 field from a bicubically upsampled coarse grid; max norm never exceeds magnitude"""
    if magnitude < 0:
        raise RangeError(f"Warp magnitude must be >= 0, got {magnitude}")
    coarse = torch.from_numpy(rng.normal(size=(1, 2, FIELD_GRID, FIELD_GRID)))
    dense = F.interpolate(coarse, size=(height, width), mode="bicubic", align_corners=True)[0]
    disp = dense.numpy().transpose(1, 2, 0)
    peak = float(np.sqrt((disp ** 2).sum(axis=-1)).max())
    if magnitude == 0 or peak == 0:
        return np.zeros((height, width, 2), dtype=np.float64)
    return disp * (magnitude / peak) * (1.0 - 1e-9)


def synth_prior_pair(
    i_hq: Image,
    warp_magnitude: float,
    texture_strength: float,
    seed: int,
    identity_blur_sigma: float = 1.0,
    landmarks: Optional[np.ndarray] = None,
) -> PriorPair:
    """Stand-in for a fidelity/prior output pair with a known alignment field.

    I_G is I_HQ displaced by the inverse of gt_field plus high-frequency
    texture, so warping I_G by gt_field recovers I_HQ. I_F is a mild blur of
    I_HQ. The mask comes from the landmarks, or the canonical face template.
    """
    if i_hq.value_range != "unit":
        raise RangeError("synth_prior_pair expects a unit-range HQ image")
    if texture_strength < 0:
        raise RangeError(f"Texture strength must be >= 0, got {texture_strength}")
    rng = np.random.default_rng(seed)
    height, width = i_hq.height, i_hq.width

    gt = smooth_random_field(height, width, warp_magnitude, rng)
    gt_tensor = torch.from_numpy(np.ascontiguousarray(gt.transpose(2, 0, 1)))[None]
    displaced = warp(to_tensor(i_hq, torch.float64), invert_field(gt_tensor))
    g_pixels = displaced[0].numpy().transpose(1, 2, 0)

    if texture_strength > 0:
        noise = rng.normal(size=g_pixels.shape)
        high_pass = noise - blur_array(noise, 1.0)
        g_pixels = g_pixels + texture_strength * high_pass

    landmarks = canonical_landmarks(height, width) if landmarks is None else np.asarray(landmarks, dtype=np.float64)
    return PriorPair(
        i_f=gaussian_blur(i_hq, identity_blur_sigma),
        i_g=Image.clipped(g_pixels, "unit"),
        i_hq=i_hq,
        gt_field=DeformationField(gt),
        mask=mask_from_landmarks((height, width), landmarks),
        landmarks=landmarks,
    )


def procedural_face(size: int, seed: int) -> Image:
    """Face-like unit-range test image: shaded oval, dark eyes, nose and mouth at the template landmarks"""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    skin = np.array([0.85, 0.65, 0.55]) + rng.uniform(-0.1, 0.1, size=3)
    background = rng.uniform(0.1, 0.5, size=3)

    face = ((xs - 0.5) / 0.36) ** 2 + ((ys - 0.52) / 0.46) ** 2 <= 1.0
    shading = 0.85 + 0.15 * np.cos(np.pi * (xs - 0.5))
    pixels = np.where(face[..., None], skin * shading[..., None], background)

    points = canonical_landmarks(size, size) / size
    for (cx, cy), rx, ry, tone in [
        (points[0], 0.06, 0.03, 0.15),
        (points[1], 0.06, 0.03, 0.15),
        (points[2], 0.03, 0.05, 0.55),
        ((points[3] + points[4]) / 2, 0.11, 0.025, 0.35),
    ]:
        feature = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        pixels[feature] = tone * skin

    texture = blur_array(rng.normal(size=pixels.shape), 1.0) * 0.08
    return Image.clipped(pixels + texture, "unit")


# Providers

class PairProvider(Protocol):
    def __len__(self) -> int: ...

    def get(self, index: int) -> PriorPair: ...


class SyntheticPairProvider:
    """synth_prior_pair over a list of HQ images; pair k uses seed + k"""

    def __init__(
        self,
        hq_images: Sequence[Image],
        warp_magnitude: float = 3.0,
        texture_strength: float = 0.05,
        seed: int = 0,
        identity_blur_sigma: float = 1.0,
    ):
        if not hq_images:
            raise RangeError("SyntheticPairProvider needs at least one HQ image")
        self.hq_images = list(hq_images)
        self.warp_magnitude = warp_magnitude
        self.texture_strength = texture_strength
        self.seed = seed
        self.identity_blur_sigma = identity_blur_sigma
        self._cache: dict[int, PriorPair] = {}

    @classmethod
    def from_directory(cls, hq_dir, **kwargs) -> "SyntheticPairProvider":
        return cls([load_image(p, "unit") for p in list_images(hq_dir)], **kwargs)

    @classmethod
    def procedural(cls, count: int, size: int, seed: int = 0, **kwargs) -> "SyntheticPairProvider":
        faces = [procedural_face(size, seed + k) for k in range(count)]
        return cls(faces, seed=seed, **kwargs)

    def __len__(self) -> int:
        return len(self.hq_images)

    def get(self, index: int) -> PriorPair:
        if index not in self._cache:
            self._cache[index] = synth_prior_pair(
                self.hq_images[index],
                self.warp_magnitude,
                self.texture_strength,
                self.seed + index,
                self.identity_blur_sigma,
            )
        return self._cache[index]


PAIR_DIRS = ("i_f", "i_g", "hq")


class DirectoryPairProvider:
    """root/{i_f,i_g,hq}/<name>.png with optional masks/, landmarks/<stem>.txt and fields/<stem>.dfld"""

    def __init__(self, root):
        self.root = Path(root)
        for sub in PAIR_DIRS:
            if not (self.root / sub).is_dir():
                raise ImageNotFoundError(f"Pair directory is missing {sub}/: {self.root}")
        self.names = [p.name for p in list_images(self.root / "hq")]
        missing = [
            f"{sub}/{name}" for name in self.names for sub in ("i_f", "i_g") if not (self.root / sub / name).is_file()
        ]
        if missing:
            raise ImageNotFoundError(f"Unmatched pair files under {self.root}: {', '.join(missing)}")
        if not self.names:
            raise ImageNotFoundError(f"No HQ images under {self.root / 'hq'}")

    def __len__(self) -> int:
        return len(self.names)

    def get(self, index: int) -> PriorPair:
        name = self.names[index]
        stem = Path(name).stem
        i_f = load_image(self.root / "i_f" / name, "unit")

        mask = None
        landmarks = None
        landmark_path = self.root / "landmarks" / f"{stem}.txt"
        if landmark_path.is_file():
            landmarks = load_landmarks(landmark_path)
        mask_path = self.root / "masks" / f"{stem}.png"
        if mask_path.is_file():
            mask = load_mask(mask_path)
        elif landmarks is not None:
            mask = mask_from_landmarks((i_f.height, i_f.width), landmarks)

        field_path = self.root / "fields" / f"{stem}.dfld"
        return PriorPair(
            i_f=i_f,
            i_g=load_image(self.root / "i_g" / name, "unit"),
            i_hq=load_image(self.root / "hq" / name, "unit"),
            gt_field=load_field(field_path) if field_path.is_file() else None,
            mask=mask,
            landmarks=landmarks,
        )


def save_prior_pairs(provider: PairProvider, root, names: Optional[Sequence[str]] = None) -> list[str]:
    """Write a provider's pairs in the DirectoryPairProvider layout"""
    root = Path(root)
    for sub in (*PAIR_DIRS, "masks", "landmarks", "fields"):
        ensure_dir(root / sub)
    names = list(names) if names is not None else [f"{k:05d}.png" for k in range(len(provider))]
    for index, name in enumerate(names):
        pair = provider.get(index)
        stem = Path(name).stem
        save_image(pair.i_f, root / "i_f" / name)
        save_image(pair.i_g, root / "i_g" / name)
        save_image(pair.i_hq, root / "hq" / name)
        if pair.mask is not None:
            save_mask(pair.mask, root / "masks" / f"{stem}.png")
        if pair.landmarks is not None:
            save_landmarks(pair.landmarks, root / "landmarks" / f"{stem}.txt")
        if pair.gt_field is not None:
            save_field(pair.gt_field, root / "fields" / f"{stem}.dfld")
    logger.info("Wrote %d prior pairs to %s", len(names), root)
    return names


# Batching

class PairBatch(NamedTuple):
    """Signed-range (B, C, H, W) tensors; gt_field (B, 2, H, W) and mask (B, 1, H, W) when every pair has one"""

    i_f: torch.Tensor
    i_g: torch.Tensor
    i_hq: torch.Tensor
    gt_field: Optional[torch.Tensor]
    mask: Optional[torch.Tensor]
    indices: list[int]


def collate(pairs: Sequence[PriorPair], indices: Sequence[int], dtype: torch.dtype = torch.float32) -> PairBatch:
    def stack(images: list[Image]) -> torch.Tensor:
        return torch.cat([to_tensor(convert_range(img, "signed"), dtype) for img in images])

    fields = [p.gt_field for p in pairs]
    masks = [p.mask for p in pairs]
    return PairBatch(
        i_f=stack([p.i_f for p in pairs]),
        i_g=stack([p.i_g for p in pairs]),
        i_hq=stack([p.i_hq for p in pairs]),
        gt_field=torch.cat([field_to_tensor(f, dtype) for f in fields]) if all(f is not None for f in fields) else None,
        mask=torch.cat([mask_to_tensor(m, dtype) for m in masks]) if all(m is not None for m in masks) else None,
        indices=list(indices),
    )


def epoch_order(size: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(size)


def iterate_batches(provider: PairProvider, batch_size: int, seed: int, dtype: torch.dtype = torch.float32) -> Iterator[PairBatch]:
    """Endless batches; the order within each epoch is a permutation fixed by (seed, epoch)"""
    if len(provider) == 0:
        raise RangeError("Cannot batch an empty pair provider")
    epoch = 0
    while True:
        order = epoch_order(len(provider), seed, epoch)
        for start in range(0, len(order), batch_size):
            chunk = [int(i) for i in order[start:start + batch_size]]
            yield collate([provider.get(i) for i in chunk], chunk, dtype)
        epoch += 1
