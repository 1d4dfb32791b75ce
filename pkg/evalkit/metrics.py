# Full-reference image metrics and landmark distance

import math

import numpy as np
import torch
import torch.nn.functional as F

from imagecore.image import Image, check_same_shape
from utils.errors import RangeError, ShapeMismatchError

PSNR_CAP = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _check_unit(ref: Image, test: Image) -> None:
    check_same_shape(ref, test, "reference and test images")
    if ref.value_range != "unit" or test.value_range != "unit":
        raise RangeError("metrics expect unit-range images")


def psnr(ref: Image, test: Image) -> float:
    """10*log10(1/MSE) in dB; identical images give the cap"""
    _check_unit(ref, test)
    mse = float(np.mean((ref.pixels.astype(np.float64) - test.pixels.astype(np.float64)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def to_gray(img: Image) -> np.ndarray:
    pixels = img.pixels.astype(np.float64)
    if img.channels == 1:
        return pixels[:, :, 0]
    return pixels @ GRAY_WEIGHTS


def ssim_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    taps = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(taps ** 2) / (2.0 * sigma * sigma))
    g = g / g.sum()
    return torch.outer(g, g)[None, None]


def ssim_map(ref: np.ndarray, test: np.ndarray) -> torch.Tensor:
    """Per-window SSIM of two 2-D arrays with dynamic range 1, valid positions only"""
    if ref.shape != test.shape:
        raise ShapeMismatchError(f"SSIM inputs differ in shape: {ref.shape} vs {test.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise RangeError(f"Image {ref.shape} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window")
    window = ssim_window()
    x = torch.from_numpy(np.ascontiguousarray(ref, dtype=np.float64))[None, None]
    y = torch.from_numpy(np.ascontiguousarray(test, dtype=np.float64))[None, None]
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    var_x = F.conv2d(x * x, window) - mu_x * mu_x
    var_y = F.conv2d(y * y, window) - mu_y * mu_y
    cov = F.conv2d(x * y, window) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (numerator / denominator)[0, 0]


def ssim(ref: Image, test: Image) -> float:
    """Single-scale SSIM on the luma of both images"""
    _check_unit(ref, test)
    return float(ssim_map(to_gray(ref), to_gray(test)).mean())


def lmd(ref_landmarks, test_landmarks) -> float:
    """Mean Euclidean distance between corresponding points"""
    ref = np.asarray(ref_landmarks, dtype=np.float64)
    test = np.asarray(test_landmarks, dtype=np.float64)
    if ref.shape != test.shape or ref.ndim != 2 or ref.shape[1] != 2:
        raise ShapeMismatchError(f"Landmark sets must be matching N×2 arrays, got {ref.shape} and {test.shape}")
    if len(ref) == 0:
        raise ShapeMismatchError("Landmark sets are empty")
    return float(np.sqrt(((ref - test) ** 2).sum(axis=1)).mean())
