"""Dense grid primitives: bilinear resampling and training-time augmentations.

Grids are plain numpy arrays. A grayscale image or probability map is an
(H, W) float array with values in [0, 1]; an embedding field is (H, W, D).
Binary masks are (H, W) bool. All functions here are pure; randomness enters
only through an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def validate_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-d grid, got shape {image.shape}")
    return image


def upsample_bilinear(src: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Resample a grid or embedding field to a larger size.

    Uses the align-corners convention: source corners map exactly onto
    target corners, so a 1x2 ramp [0, 1] upsampled to 1x3 gives its exact
    midpoint [0, 0.5, 1]. Works on (H, W) grids and (H, W, D) fields alike.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, D) input, got shape {src.shape}")
    h, w = src.shape[:2]
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be positive, got {target_h}x{target_w}")
    if target_h < h or target_w < w:
        raise ValueError(
            f"target {target_h}x{target_w} smaller than source {h}x{w}"
        )

    def positions(n_src, n_dst):
        if n_dst == 1:
            return np.zeros(1)
        return np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))

    ys = positions(h, target_h)
    xs = positions(w, target_w)
    y0 = np.minimum(np.floor(ys).astype(int), h - 1)
    x0 = np.minimum(np.floor(xs).astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if src.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]

    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def hflip(arr: np.ndarray) -> np.ndarray:
    """Mirror a grid/field left-right. Involution."""
    return np.asarray(arr)[:, ::-1].copy()


def rotate_grid(arr: np.ndarray, degrees: float, nearest: bool = False) -> np.ndarray:
    """Rotate about the grid center, filling uncovered pixels with 0.

    Bilinear sampling by default; `nearest` keeps binary masks binary.
    Implemented as an inverse mapping so rotate(x, a) followed by
    rotate(., -a) round-trips up to resampling loss.
    """
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = rows - cy
    dx = cols - cx
    # Inverse rotation of output coordinates into the source frame.
    src_y = cos_t * dy + sin_t * dx + cy
    src_x = -sin_t * dy + cos_t * dx + cx

    if nearest:
        ry = np.rint(src_y).astype(int)
        rx = np.rint(src_x).astype(int)
        valid = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
        out = np.zeros_like(arr)
        out[valid] = arr[ry[valid], rx[valid]]
        return out

    y0 = np.floor(src_y).astype(int)
    x0 = np.floor(src_x).astype(int)
    fy = src_y - y0
    fx = src_x - x0
    if arr.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    out = np.zeros_like(arr)

    def corner(yi, xi):
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = np.zeros_like(arr)
        vals[inside] = arr[yi[inside], xi[inside]]
        return vals

    out += corner(y0, x0) * (1 - fy) * (1 - fx)
    out += corner(y0, x0 + 1) * (1 - fy) * fx
    out += corner(y0 + 1, x0) * fy * (1 - fx)
    out += corner(y0 + 1, x0 + 1) * fy * fx
    return out


def adjust_brightness(image: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(image + delta, 0.0, 1.0)


def adjust_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale deviations from the image mean by `factor`, then clamp."""
    mean = float(image.mean())
    return np.clip(mean + factor * (image - mean), 0.0, 1.0)


@dataclass(frozen=True)
class AugmentParams:
    """Training augmentation settings.

    Each transform is drawn independently with `per_transform_probability`;
    rotation angle is uniform in +-rotation_degrees, brightness shift uniform
    in +-brightness_delta, contrast scale uniform in 1 +- contrast_delta.
    """

    rotation_degrees: float = 10.0
    flip: bool = True
    brightness_delta: float = 0.3
    contrast_delta: float = 0.3
    per_transform_probability: float = 0.2

    def __post_init__(self):
        if self.rotation_degrees < 0:
            raise ValueError("rotation_degrees must be >= 0")
        if self.brightness_delta < 0 or self.contrast_delta < 0:
            raise ValueError("brightness/contrast deltas must be >= 0")
        if not 0.0 <= self.per_transform_probability <= 1.0:
            raise ValueError("per_transform_probability must be in [0, 1]")


def augment(image, instances, params: AugmentParams, rng_seed: int):
    """Apply one random augmentation draw to an image and its instance masks.

    Geometric transforms (rotation, horizontal flip) hit the image and every
    mask identically, with nearest-neighbor resampling for masks; photometric
    transforms (brightness, contrast) hit the image only. Deterministic for a
    fixed seed. Returns a new (image, instances) pair.
    """
    from .synth import InstanceSet

    image = validate_image(image)
    if (instances.height, instances.width) != image.shape:
        raise ValueError(
            f"image {image.shape} and instance masks "
            f"{(instances.height, instances.width)} disagree on dimensions"
        )

    rng = np.random.default_rng(rng_seed)
    # Draw every random in a fixed order so decisions are reproducible.
    do_rotate = rng.random() < params.per_transform_probability
    angle = rng.uniform(-params.rotation_degrees, params.rotation_degrees)
    do_flip = params.flip and rng.random() < params.per_transform_probability
    do_brightness = rng.random() < params.per_transform_probability
    brightness = rng.uniform(-params.brightness_delta, params.brightness_delta)
    do_contrast = rng.random() < params.per_transform_probability
    contrast = 1.0 + rng.uniform(-params.contrast_delta, params.contrast_delta)

    out_image = image
    masks = [m.copy() for m in instances.masks]
    if do_rotate and angle != 0.0:
        out_image = rotate_grid(out_image, angle)
        masks = [rotate_grid(m.astype(np.float64), angle, nearest=True) >= 0.5 for m in masks]
    if do_flip:
        out_image = hflip(out_image)
        masks = [hflip(m) for m in masks]
    if do_brightness:
        out_image = adjust_brightness(out_image, brightness)
    if do_contrast:
        out_image = adjust_contrast(out_image, contrast)

    out_image = np.clip(out_image, 0.0, 1.0)
    return out_image, InstanceSet(instances.height, instances.width,
                                  [np.asarray(m, dtype=bool) for m in masks])
