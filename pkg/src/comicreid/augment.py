"""Seeded strong/weak augmentation pipelines over small RGB buffers.

Everything operates on float arrays of shape (height, width, 3) with values
in [0, 1] before the final normalization step maps them to [-1, 1]. All
randomness flows through one `numpy.random.Generator` with a fixed draw
order (gate first, parameters inside the taken branch), so outputs are
bitwise-reproducible from a seed and individual branches can be forced in
tests by stubbing the generator.

Conventions (documented; regression-locked by golden files, not claimed to
be bit-identical to any third-party library):
- bilinear interpolation for every resize, half-pixel centers, edge clamp
- color jitter applies brightness, contrast, saturation, then hue, each
  factor uniform in [1-s, 1+s] (hue additive in HSV), clamping after each
- grayscale = ITU-R BT.601 luminance, replicated to all channels
- gaussian sigma from kernel size: sigma = 0.3*((k-1)/2 - 1) + 0.8
- blur kernels are mass-preserving with mirrored borders
- the weak pipeline's shift/scale/rotate fills uncovered pixels with black
"""

from __future__ import annotations

from dataclasses import dataclass

import json

import numpy as np
from scipy import ndimage

from .model import DataError

IMAGE_RECORD_VERSION = 1


# ---------------------------------------------------------------- buffers

@dataclass
class ImageBuffer:
    """Row-major RGB pixel buffer with values in [0, 1] (pre-normalize)."""

    array: np.ndarray  # (height, width, 3) float64

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DataError(f"image must be (h, w, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("image contains non-finite values")
        self.array = arr

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @classmethod
    def from_flat(cls, width: int, height: int, data) -> "ImageBuffer":
        flat = np.asarray(data, dtype=np.float64)
        if flat.size != width * height * 3:
            raise DataError(
                f"flat data has {flat.size} values, want {width * height * 3}")
        return cls(flat.reshape(height, width, 3))

    def flat(self) -> np.ndarray:
        return self.array.reshape(-1)


@dataclass(frozen=True)
class AugmentConfig:
    target_size: int
    min_scale: float
    seed: int = 0

    def __post_init__(self):
        if self.target_size < 1:
            raise DataError("target_size must be >= 1")
        if not (0.0 < self.min_scale <= 1.0):
            raise DataError("min_scale must be in (0, 1]")


# paper operating points
STRONG_FACE = AugmentConfig(target_size=96, min_scale=0.08)
STRONG_BODY = AugmentConfig(target_size=128, min_scale=0.08)
WEAK_FACE = AugmentConfig(target_size=96, min_scale=0.2)
WEAK_BODY = AugmentConfig(target_size=128, min_scale=0.5)


def _require_image(img) -> np.ndarray:
    arr = img.array if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"image must be (h, w, 3), got {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise DataError(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than 2x2")
    if not np.all(np.isfinite(arr)):
        raise DataError("image contains non-finite values")
    return arr.astype(np.float64, copy=True)


# ------------------------------------------------------------- primitives

def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1, :].copy()


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resize with edge clamping."""
    in_h, in_w = img.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((out_h, out_w, 3))
    for c in range(3):
        out[:, :, c] = ndimage.map_coordinates(
            img[:, :, c], [grid_y, grid_x], order=1, mode="nearest")
    return out


def crop(img: np.ndarray, top: int, left: int, h: int, w: int) -> np.ndarray:
    if top < 0 or left < 0 or top + h > img.shape[0] or left + w > img.shape[1]:
        raise DataError("crop window outside image")
    return img[top:top + h, left:left + w, :].copy()


def random_resized_crop(img: np.ndarray, size: int, scale_range, rng,
                        ratio_range=(3.0 / 4.0, 4.0 / 3.0)) -> np.ndarray:
    """Sample an area/aspect window (10 attempts), crop, resize to size^2."""
    height, width = img.shape[:2]
    area = height * width
    lo, hi = scale_range
    for _ in range(10):
        target_area = area * rng.uniform(lo, hi)
        log_ratio = rng.uniform(np.log(ratio_range[0]), np.log(ratio_range[1]))
        ratio = float(np.exp(log_ratio))
        w = int(round(np.sqrt(target_area * ratio)))
        h = int(round(np.sqrt(target_area / ratio)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return resize_bilinear(crop(img, top, left, h, w), size, size)
    # fallback: center crop at the nearest in-range aspect ratio
    in_ratio = width / height
    if in_ratio < ratio_range[0]:
        w = width
        h = min(height, int(round(w / ratio_range[0])))
    elif in_ratio > ratio_range[1]:
        h = height
        w = min(width, int(round(h * ratio_range[1])))
    else:
        w, h = width, height
    top = (height - h) // 2
    left = (width - w) // 2
    return resize_bilinear(crop(img, top, left, h, w), size, size)


_LUMA = np.array([0.299, 0.587, 0.114])


def grayscale(img: np.ndarray) -> np.ndarray:
    luma = img @ _LUMA
    return np.repeat(luma[:, :, None], 3, axis=2)


def _rgb_to_hsv(img: np.ndarray):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=2)
    minc = img.min(axis=2)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.select(
        [delta == 0, maxc == r, maxc == g],
        [np.zeros_like(maxc),
         ((g - b) / safe) % 6.0,
         (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    ) / 6.0
    return h, s, v


def _hsv_to_rgb(h, s, v) -> np.ndarray:
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=2)


def adjust_hue(img: np.ndarray, offset: float) -> np.ndarray:
    h, s, v = _rgb_to_hsv(np.clip(img, 0.0, 1.0))
    return np.clip(_hsv_to_rgb((h + offset) % 1.0, s, v), 0.0, 1.0)


def color_jitter(img: np.ndarray, rng, brightness=0.5, contrast=0.5,
                 saturation=0.5, hue=0.1) -> np.ndarray:
    """Brightness, contrast, saturation (multiplicative), then hue shift."""
    out = img
    b = rng.uniform(1.0 - brightness, 1.0 + brightness)
    out = np.clip(out * b, 0.0, 1.0)
    c = rng.uniform(1.0 - contrast, 1.0 + contrast)
    mean = float((out @ _LUMA).mean())
    out = np.clip(out * c + (1.0 - c) * mean, 0.0, 1.0)
    s = rng.uniform(1.0 - saturation, 1.0 + saturation)
    out = np.clip(out * s + (1.0 - s) * grayscale(out), 0.0, 1.0)
    dh = rng.uniform(-hue, hue)
    return adjust_hue(out, dh)


def gaussian_sigma_for_kernel(kernel_size: int) -> float:
    return 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8


def _gaussian_kernel_1d(kernel_size: int) -> np.ndarray:
    sigma = gaussian_sigma_for_kernel(kernel_size)
    half = (kernel_size - 1) / 2.0
    xs = np.arange(kernel_size) - half
    k = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, kernel_size: int = 9) -> np.ndarray:
    if kernel_size % 2 != 1 or kernel_size < 1:
        raise DataError("gaussian kernel size must be odd and positive")
    k = _gaussian_kernel_1d(kernel_size)
    out = img.copy()
    for c in range(3):
        plane = ndimage.correlate1d(out[:, :, c], k, axis=0, mode="mirror")
        out[:, :, c] = ndimage.correlate1d(plane, k, axis=1, mode="mirror")
    return out


def box_blur(img: np.ndarray, size: int = 3) -> np.ndarray:
    out = img.copy()
    for c in range(3):
        out[:, :, c] = ndimage.uniform_filter(img[:, :, c], size=size, mode="mirror")
    return out


def median_blur(img: np.ndarray, size: int = 3) -> np.ndarray:
    out = img.copy()
    for c in range(3):
        out[:, :, c] = ndimage.median_filter(img[:, :, c], size=size, mode="mirror")
    return out


def motion_blur_kernel(size: int, angle: float) -> np.ndarray:
    """Normalized line kernel through the center at the given angle."""
    kernel = np.zeros((size, size))
    center = (size - 1) / 2.0
    steps = np.linspace(-center, center, 2 * size + 1)
    for step in steps:
        y = int(round(center + step * np.sin(angle)))
        x = int(round(center + step * np.cos(angle)))
        if 0 <= y < size and 0 <= x < size:
            kernel[y, x] = 1.0
    return kernel / kernel.sum()


def motion_blur(img: np.ndarray, size: int, angle: float) -> np.ndarray:
    kernel = motion_blur_kernel(size, angle)
    out = img.copy()
    for c in range(3):
        out[:, :, c] = ndimage.correlate(img[:, :, c], kernel, mode="mirror")
    return out


def longest_max_size(img: np.ndarray, max_size: int) -> np.ndarray:
    h, w = img.shape[:2]
    scale = max_size / max(h, w)
    out_h = max(1, int(round(h * scale)))
    out_w = max(1, int(round(w * scale)))
    return resize_bilinear(img, out_h, out_w)


def pad_to(img: np.ndarray, size: int, value: float = 0.0) -> np.ndarray:
    h, w = img.shape[:2]
    if h > size or w > size:
        raise DataError(f"cannot pad {w}x{h} down to {size}x{size}")
    top = (size - h) // 2
    left = (size - w) // 2
    out = np.full((size, size, 3), value, dtype=np.float64)
    out[top:top + h, left:left + w, :] = img
    return out


def shift_scale_rotate(img: np.ndarray, shift_x: float, shift_y: float,
                       scale: float, angle_deg: float) -> np.ndarray:
    """Affine warp about the center; bilinear; black fill outside."""
    h, w = img.shape[:2]
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    # output (y, x) -> input (y, x): undo shift, then rotation and scale
    inv = np.array([[cos, sin], [-sin, cos]]) / scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    t = np.array([shift_y * h, shift_x * w])
    offset = center - inv @ (center + t)
    out = np.empty_like(img)
    for c in range(3):
        out[:, :, c] = ndimage.affine_transform(
            img[:, :, c], inv, offset=offset, order=1,
            mode="constant", cval=0.0)
    return out


def normalize(img: np.ndarray) -> np.ndarray:
    return (img - 0.5) / 0.5


# -------------------------------------------------------------- pipelines

def strong_augment(img, cfg: AugmentConfig, rng: np.random.Generator) -> ImageBuffer:
    """Flip, random resized crop, jitter, grayscale, blur, normalize."""
    out = _require_image(img)
    if rng.random() < 0.5:
        out = hflip(out)
    out = random_resized_crop(out, cfg.target_size, (cfg.min_scale, 1.0), rng)
    if rng.random() < 0.8:
        out = color_jitter(out, rng)
    if rng.random() < 0.2:
        out = grayscale(out)
    out = gaussian_blur(out, kernel_size=9)
    return ImageBuffer(normalize(out))


def weak_augment(img, cfg: AugmentConfig, rng: np.random.Generator) -> ImageBuffer:
    """Resize-pad to the target, then mild probabilistic perturbations."""
    out = _require_image(img)
    out = longest_max_size(out, cfg.target_size)
    out = pad_to(out, cfg.target_size, value=0.0)
    if rng.random() < 0.25:
        out = random_resized_crop(out, cfg.target_size, (cfg.min_scale, 1.0), rng)
    if rng.random() < 0.5:
        out = hflip(out)
    if rng.random() < 0.5:
        shift_x = rng.uniform(-0.05, 0.05)
        shift_y = rng.uniform(-0.05, 0.05)
        scale = 1.0 + rng.uniform(-0.05, 0.05)
        angle = rng.uniform(-15.0, 15.0)
        out = shift_scale_rotate(out, shift_x, shift_y, scale, angle)
    if rng.random() < 0.1:
        pick = int(rng.integers(0, 4))
        if pick == 0:
            out = gaussian_blur(out, kernel_size=int(rng.choice([5, 7])))
        elif pick == 1:
            size = int(rng.choice([3, 5, 7]))
            angle = rng.uniform(0.0, np.pi)
            out = motion_blur(out, size, angle)
        elif pick == 2:
            out = median_blur(out, size=3)
        else:
            out = box_blur(out, size=3)
    if rng.random() < 0.2:
        out = grayscale(out)
    return ImageBuffer(normalize(out))


# ---------------------------------------------------------------- file IO

def write_image_record(path, img: ImageBuffer) -> None:
    """Pre-decoded tensor on disk: dimensions plus row-major float data."""
    record = {
        "format_version": IMAGE_RECORD_VERSION,
        "width": img.width,
        "height": img.height,
        "channels": 3,
        "data": [float(v) for v in img.flat()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True)
        fh.write("\n")


def read_image_record(path) -> ImageBuffer:
    try:
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"image record not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"image record {path} is not valid ({exc.msg})") from None
    if record.get("format_version") != IMAGE_RECORD_VERSION:
        raise DataError(f"unsupported image record version in {path}")
    if record.get("channels") != 3:
        raise DataError("image records must have 3 channels")
    return ImageBuffer.from_flat(record["width"], record["height"], record["data"])


def read_ppm(path) -> ImageBuffer:
    """Minimal PPM reader: binary P6 or ASCII P3, 8-bit."""
    with open(path, "rb") as fh:
        blob = fh.read()

    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(blob):
        while i < len(blob) and blob[i:i + 1].isspace():
            i += 1
        if blob[i:i + 1] == b"#":
            while i < len(blob) and blob[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i:i + 1].isspace():
            i += 1
        tokens.append(blob[start:i])
    if len(tokens) < 4:
        raise DataError(f"{path}: truncated PPM header")
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise DataError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PPM supported")
    if magic == b"P6":
        data = np.frombuffer(blob[i + 1:i + 1 + width * height * 3], dtype=np.uint8)
        if data.size != width * height * 3:
            raise DataError(f"{path}: truncated PPM pixel data")
    elif magic == b"P3":
        values = blob[i:].split()
        if len(values) < width * height * 3:
            raise DataError(f"{path}: truncated PPM pixel data")
        data = np.array([int(v) for v in values[:width * height * 3]], dtype=np.uint8)
    else:
        raise DataError(f"{path}: not a PPM file (magic {magic!r})")
    arr = data.reshape(height, width, 3).astype(np.float64) / 255.0
    return ImageBuffer(arr)


def write_ppm(path, img: ImageBuffer) -> None:
    arr = np.clip(np.round(img.array * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
