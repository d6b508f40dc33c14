"""Deterministic image preprocessing and augmentation.

All geometric operations use bilinear interpolation with half-pixel-centered
sampling, and rotation/shear reflect-pad at the borders so no artificial
black corners enter the retinal scans. Every random decision in
:func:`augment` is drawn from a generator seeded per call, so the same seed
always produces the same output regardless of execution order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .dataset import GradeLabel
from .errors import AlreadyNormalizedError, InvalidPolicyError, ZeroDimensionError


class ValueDomain(enum.Enum):
    RAW_0_255 = "raw_0_255"
    UNIT_0_1 = "unit_0_1"


@dataclass(frozen=True)
class ImageTensor:
    """H x W x 3 float32 image plus the value domain its pixels live in."""

    data: np.ndarray
    value_domain: ValueDomain = ValueDomain.RAW_0_255

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"expected HxWx3 data, got shape {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def domain_bounds(self) -> tuple[float, float]:
        return (0.0, 255.0) if self.value_domain is ValueDomain.RAW_0_255 else (0.0, 1.0)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Magnitude bounds for the four augmentation stages.

    The all-zero policy (0 deg, 0 shear, crop 1.0, flip probability 0) is an
    exact identity.
    """

    rotation_max_deg: float = 15.0
    shear_max: float = 0.1
    crop_fraction: float = 0.9
    hflip_probability: float = 0.5

    def validate(self) -> None:
        if self.rotation_max_deg < 0:
            raise InvalidPolicyError(f"rotation_max_deg must be >= 0, got {self.rotation_max_deg}")
        if self.shear_max < 0:
            raise InvalidPolicyError(f"shear_max must be >= 0, got {self.shear_max}")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise InvalidPolicyError(f"crop_fraction must be in (0,1], got {self.crop_fraction}")
        if not 0.0 <= self.hflip_probability <= 1.0:
            raise InvalidPolicyError(
                f"hflip_probability must be in [0,1], got {self.hflip_probability}"
            )

    def is_identity(self) -> bool:
        return (
            self.rotation_max_deg == 0.0
            and self.shear_max == 0.0
            and self.crop_fraction == 1.0
            and self.hflip_probability == 0.0
        )


IDENTITY_POLICY = AugmentationPolicy(0.0, 0.0, 1.0, 0.0)


def load_image(path) -> ImageTensor:
    """Decode a PNG/JPEG file to a raw 0..255 float32 tensor."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        data = np.asarray(rgb, dtype=np.float32)
    return ImageTensor(data, ValueDomain.RAW_0_255)


def resize(image: ImageTensor, target_h: int, target_w: int) -> ImageTensor:
    if target_h < 1 or target_w < 1:
        raise ZeroDimensionError(f"target dims must be >= 1, got {(target_h, target_w)}")
    out = _bilinear_resize(image.data, target_h, target_w)
    return replace(image, data=out)


def normalize(image: ImageTensor) -> ImageTensor:
    """Scale raw 0..255 pixels into [0, 1]."""
    if image.value_domain is ValueDomain.UNIT_0_1:
        raise AlreadyNormalizedError("image is already in the unit domain")
    return ImageTensor(image.data / np.float32(255.0), ValueDomain.UNIT_0_1)


def flip_horizontal(image: ImageTensor) -> ImageTensor:
    return replace(image, data=np.ascontiguousarray(image.data[:, ::-1, :]))


def augment(
    image: ImageTensor,
    label: GradeLabel,
    policy: AugmentationPolicy,
    rng_seed: int,
) -> tuple[ImageTensor, GradeLabel]:
    """Apply the seeded augmentation chain: crop, shear, rotate, flip.

    The output has the input's shape and value domain, and the label passes
    through unchanged. All stage parameters are drawn up front from a single
    generator so the draw layout never depends on the policy values.
    """
    policy.validate()
    rng = np.random.default_rng(rng_seed)
    scale_h = rng.uniform(policy.crop_fraction, 1.0)
    scale_w = rng.uniform(policy.crop_fraction, 1.0)
    offset_h = rng.uniform()
    offset_w = rng.uniform()
    shear = rng.uniform(-policy.shear_max, policy.shear_max)
    angle_deg = rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg)
    do_flip = rng.uniform() < policy.hflip_probability

    data = image.data
    h, w = data.shape[:2]

    crop_h = max(1, int(round(scale_h * h)))
    crop_w = max(1, int(round(scale_w * w)))
    if (crop_h, crop_w) != (h, w):
        top = int(round(offset_h * (h - crop_h)))
        left = int(round(offset_w * (w - crop_w)))
        data = data[top : top + crop_h, left : left + crop_w, :]
        data = _bilinear_resize(data, h, w)

    if shear != 0.0:
        data = _affine_sample(data, _shear_matrix(shear, h, w))
    if angle_deg != 0.0:
        data = _affine_sample(data, _rotation_matrix(angle_deg, h, w))
    if do_flip:
        data = np.ascontiguousarray(data[:, ::-1, :])

    lo, hi = image.domain_bounds()
    data = np.clip(data, lo, hi).astype(np.float32, copy=False)
    return ImageTensor(data, image.value_domain), label


# --- interpolation internals -------------------------------------------------


def _bilinear_resize(data: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    h, w = data.shape[:2]
    if (h, w) == (target_h, target_w):
        return data.copy()
    # half-pixel-centered source coordinates, edges clamped
    ys = (np.arange(target_h, dtype=np.float64) + 0.5) * (h / target_h) - 0.5
    xs = (np.arange(target_w, dtype=np.float64) + 0.5) * (w / target_w) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    ty = (ys - y0).astype(np.float32)
    tx = (xs - x0).astype(np.float32)
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)

    tx_col = tx[None, :, None]
    ty_col = ty[:, None, None]
    top = data[y0c][:, x0c] * (1.0 - tx_col) + data[y0c][:, x1c] * tx_col
    bottom = data[y1c][:, x0c] * (1.0 - tx_col) + data[y1c][:, x1c] * tx_col
    out = top * (1.0 - ty_col) + bottom * ty_col
    return out.astype(np.float32, copy=False)


def _rotation_matrix(angle_deg: float, h: int, w: int) -> np.ndarray:
    # inverse map: rotate output coords by -angle about the image center
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    # [y_src, x_src, 1] = M @ [y_dst, x_dst, 1]
    return np.array(
        [
            [c, -s, cy - c * cy + s * cx],
            [s, c, cx - s * cy - c * cx],
            [0.0, 0.0, 1.0],
        ]
    )


def _shear_matrix(shear: float, h: int, w: int) -> np.ndarray:
    # forward: x' = x + shear * (y - cy); inverse subtracts the shear term
    cy = (h - 1) / 2.0
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [-shear, 1.0, shear * cy],
            [0.0, 0.0, 1.0],
        ]
    )


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    # symmetric reflection about the pixel-box edges: -1 -> 0, n -> n-1
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def _affine_sample(data: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Bilinear resampling under an inverse-map affine, reflect-padded."""
    h, w = data.shape[:2]
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    src_y = matrix[0, 0] * yy + matrix[0, 1] * xx + matrix[0, 2]
    src_x = matrix[1, 0] * yy + matrix[1, 1] * xx + matrix[1, 2]

    y0 = np.floor(src_y)
    x0 = np.floor(src_x)
    ty = (src_y - y0).astype(np.float32)[..., None]
    tx = (src_x - x0).astype(np.float32)[..., None]
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)

    y0r = _reflect_indices(y0, h)
    y1r = _reflect_indices(y0 + 1, h)
    x0r = _reflect_indices(x0, w)
    x1r = _reflect_indices(x0 + 1, w)

    top = data[y0r, x0r] * (1.0 - tx) + data[y0r, x1r] * tx
    bottom = data[y1r, x0r] * (1.0 - tx) + data[y1r, x1r] * tx
    out = top * (1.0 - ty) + bottom * ty
    return out.astype(np.float32, copy=False)
