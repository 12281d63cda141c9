"""
Weak and strong augmentation views
==================================

Contrastive pretraining needs two views of every crop: a weak view
(resize-pad plus mild perturbations) that stays recognizable, and a
strong view (aggressive crop, color jitter, grayscale, blur) that
forces the encoder to look past surface style. All transforms operate
on plain float arrays, so the pipeline has no image-library dependency.
"""

import numpy as np

from comicreid.augment import (
    STRONG_BODY,
    STRONG_FACE,
    WEAK_FACE,
    ImageBuffer,
    gaussian_blur,
    grayscale,
    hflip,
    motion_blur,
    random_resized_crop,
    strong_augment,
    weak_augment,
)

# A synthetic 64x48 RGB test card: horizontal and vertical ramps plus a
# bright block, enough structure to see every transform acting.
h, w = 64, 48
img = np.zeros((h, w, 3), dtype=np.float64)
img[..., 0] = np.linspace(0, 255, w)[None, :]
img[..., 1] = np.linspace(0, 255, h)[:, None]
img[10:22, 8:20, 2] = 255.0

print("input:", img.shape, "range", (img.min(), img.max()))

# The primitives work on raw (h, w, 3) arrays and compose freely.
flipped = hflip(img)
assert np.allclose(flipped[:, 0], img[:, -1])
print("hflip swaps columns: ok")

gray = grayscale(img)
assert np.allclose(gray[..., 0], gray[..., 1])
print("grayscale collapses channels: ok")

rng = np.random.default_rng(0)
cropped = random_resized_crop(img, 32, (0.2, 1.0), rng)
print("random_resized_crop ->", cropped.shape)

blurred = gaussian_blur(img, kernel_size=5)
streaked = motion_blur(img, size=7, angle=30.0)
print("gaussian_blur keeps shape:", blurred.shape)
print("motion_blur keeps shape:", streaked.shape)

# The presets bundle the full recipes. Same seed, same view.
print("\nface presets:", WEAK_FACE, "/", STRONG_FACE)
card = ImageBuffer(img)
view_a = strong_augment(card, STRONG_FACE, np.random.default_rng(7))
view_b = strong_augment(card, STRONG_FACE, np.random.default_rng(7))
view_c = strong_augment(card, STRONG_FACE, np.random.default_rng(8))
assert np.array_equal(view_a.array, view_b.array)
assert not np.array_equal(view_a.array, view_c.array)
print("strong view:", view_a.array.shape,
      "- deterministic per seed, different across seeds")

weak = weak_augment(card, WEAK_FACE, np.random.default_rng(7))
print("weak view:", weak.array.shape)

# Body crops use a larger target resolution than faces.
body = strong_augment(card, STRONG_BODY, np.random.default_rng(7))
print("body strong view:", body.array.shape)
