"""Augmentation pipelines: closed-form cases, invariants, golden locks."""

from pathlib import Path

import numpy as np
import pytest

from comicreid.augment import (
    STRONG_FACE,
    WEAK_BODY,
    WEAK_FACE,
    AugmentConfig,
    ImageBuffer,
    adjust_hue,
    box_blur,
    color_jitter,
    gaussian_blur,
    gaussian_sigma_for_kernel,
    grayscale,
    hflip,
    longest_max_size,
    median_blur,
    motion_blur,
    motion_blur_kernel,
    normalize,
    pad_to,
    random_resized_crop,
    read_image_record,
    read_ppm,
    resize_bilinear,
    shift_scale_rotate,
    strong_augment,
    weak_augment,
    write_image_record,
    write_ppm,
)
from comicreid.model import DataError

DATA_DIR = Path(__file__).parent / "data"


class ScriptedRng:
    """Dispenses queued values per method, then falls back to a real rng."""

    def __init__(self, seed=0, random=(), integers=(), uniform=(), choice=()):
        self.inner = np.random.default_rng(seed)
        self.queues = {
            "random": list(random),
            "integers": list(integers),
            "uniform": list(uniform),
            "choice": list(choice),
        }

    def random(self):
        q = self.queues["random"]
        return q.pop(0) if q else self.inner.random()

    def integers(self, low, high=None):
        q = self.queues["integers"]
        return q.pop(0) if q else self.inner.integers(low, high)

    def uniform(self, low=0.0, high=1.0):
        q = self.queues["uniform"]
        if q and isinstance(q[0], tuple):
            # range-matched entry (low, high, value): fires only for its call
            if abs(q[0][0] - low) < 1e-9 and abs(q[0][1] - high) < 1e-9:
                return q.pop(0)[2]
            return self.inner.uniform(low, high)
        return q.pop(0) if q else self.inner.uniform(low, high)

    def choice(self, options):
        q = self.queues["choice"]
        return q.pop(0) if q else self.inner.choice(options)


def random_image(rng, h=12, w=10):
    return rng.random((h, w, 3))


def ramp_4x4():
    vals = np.linspace(0.0, 1.0, 4 * 4 * 3)
    return vals.reshape(4, 4, 3)


# ----------------------------------------------------------------- buffers

def test_image_buffer_validation():
    with pytest.raises(DataError):
        ImageBuffer(np.zeros((4, 4)))
    with pytest.raises(DataError):
        ImageBuffer(np.full((2, 2, 3), np.nan))
    buf = ImageBuffer.from_flat(3, 2, np.arange(18) / 18.0)
    assert buf.width == 3 and buf.height == 2
    assert np.array_equal(buf.flat(), np.arange(18) / 18.0)
    with pytest.raises(DataError):
        ImageBuffer.from_flat(3, 2, np.arange(17))


def test_config_validation():
    with pytest.raises(DataError):
        AugmentConfig(target_size=0, min_scale=0.5)
    with pytest.raises(DataError):
        AugmentConfig(target_size=8, min_scale=0.0)
    with pytest.raises(DataError):
        AugmentConfig(target_size=8, min_scale=1.5)


def test_too_small_image_rejected():
    tall = np.zeros((5, 1, 3))
    for pipeline in (strong_augment, weak_augment):
        with pytest.raises(DataError, match="smaller"):
            pipeline(tall, STRONG_FACE, np.random.default_rng(0))


# -------------------------------------------------------------- primitives

def test_hflip_involution_and_column_reversal():
    rng = np.random.default_rng(0)
    img = random_image(rng)
    assert np.array_equal(hflip(hflip(img)), img)
    assert np.array_equal(hflip(img)[:, 0, :], img[:, -1, :])


def test_resize_same_size_identity():
    rng = np.random.default_rng(1)
    img = random_image(rng)
    assert np.array_equal(resize_bilinear(img, 12, 10), img)


def test_resize_half_pixel_centers_closed_form():
    # single row [0, 1] upscaled to 4 columns: centers -0.25, .25, .75, 1.25
    img = np.zeros((1, 2, 3))
    img[0, 1, :] = 1.0
    out = resize_bilinear(img, 1, 4)
    assert np.allclose(out[0, :, 0], [0.0, 0.25, 0.75, 1.0])


def test_resize_constant_stays_constant():
    img = np.full((5, 7, 3), 0.37)
    out = resize_bilinear(img, 11, 3)
    assert np.allclose(out, 0.37, atol=1e-12)


def test_grayscale_equal_channels_and_luminance():
    rng = np.random.default_rng(2)
    img = random_image(rng)
    g = grayscale(img)
    assert np.array_equal(g[:, :, 0], g[:, :, 1])
    assert np.array_equal(g[:, :, 1], g[:, :, 2])
    expected = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    assert np.allclose(g[:, :, 0], expected)


def test_hue_full_rotation_identity_and_red_to_green():
    rng = np.random.default_rng(3)
    img = random_image(rng)
    assert np.allclose(adjust_hue(img, 1.0), img, atol=1e-9)
    red = np.zeros((1, 1, 3))
    red[0, 0, 0] = 1.0
    green = adjust_hue(red, 1.0 / 3.0)
    assert np.allclose(green[0, 0], [0.0, 1.0, 0.0], atol=1e-9)


def test_color_jitter_constant_gray_scales_by_brightness():
    img = np.full((4, 4, 3), 0.5)
    rng = ScriptedRng(uniform=[0.8, 1.3, 1.2, 0.05])  # b, c, s, hue
    out = color_jitter(img, rng)
    # contrast/saturation/hue are no-ops on a constant gray image
    assert np.allclose(out, 0.5 * 0.8, atol=1e-12)


def test_color_jitter_clamps_and_is_deterministic():
    rng = np.random.default_rng(4)
    img = random_image(rng)
    a = color_jitter(img, np.random.default_rng(7))
    b = color_jitter(img, np.random.default_rng(7))
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_gaussian_sigma_convention():
    assert gaussian_sigma_for_kernel(9) == pytest.approx(1.7)


def test_blurs_preserve_constant_images():
    img = np.full((8, 8, 3), 0.42)
    for blurred in (gaussian_blur(img, 9), box_blur(img), median_blur(img),
                    motion_blur(img, 5, 0.7)):
        assert np.allclose(blurred, 0.42, atol=1e-12)


def test_gaussian_blur_smooths():
    rng = np.random.default_rng(5)
    img = random_image(rng, 16, 16)
    out = gaussian_blur(img, 9)
    assert out.var() < img.var()
    assert out.shape == img.shape


def test_motion_blur_kernel_is_line_through_center():
    k = motion_blur_kernel(3, 0.0)
    assert np.allclose(k, np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]]) / 3.0)
    assert motion_blur_kernel(7, 1.1).sum() == pytest.approx(1.0)


def test_median_blur_removes_impulse():
    img = np.zeros((7, 7, 3))
    img[3, 3, :] = 1.0
    out = median_blur(img, 3)
    assert out[3, 3, 0] == 0.0


def test_longest_max_size_example_then_pad():
    # 4 wide x 2 high, N=2 -> 2x1 content, padded square with a black row
    img = np.full((2, 4, 3), 0.8)
    resized = longest_max_size(img, 2)
    assert resized.shape == (1, 2, 3)
    padded = pad_to(resized, 2)
    assert padded.shape == (2, 2, 3)
    assert np.allclose(padded[0], 0.8, atol=1e-12)  # content row
    assert np.array_equal(padded[1], np.zeros((2, 3)))  # black row


def test_pad_to_rejects_oversize():
    with pytest.raises(DataError):
        pad_to(np.zeros((5, 3, 3)), 4)


def test_shift_scale_rotate_identity_params():
    rng = np.random.default_rng(6)
    img = random_image(rng)
    out = shift_scale_rotate(img, 0.0, 0.0, 1.0, 0.0)
    assert np.allclose(out, img, atol=1e-12)


def test_shift_moves_content():
    img = np.zeros((10, 10, 3))
    img[4:6, 4:6, :] = 1.0
    out = shift_scale_rotate(img, 0.2, 0.0, 1.0, 0.0)  # shift 2px in x
    assert out[4:6, 6:8, :].mean() > 0.9
    assert out.shape == img.shape


def test_random_resized_crop_contract():
    rng = np.random.default_rng(8)
    img = random_image(rng, 20, 14)
    out = random_resized_crop(img, 9, (0.2, 1.0), np.random.default_rng(3))
    again = random_resized_crop(img, 9, (0.2, 1.0), np.random.default_rng(3))
    assert out.shape == (9, 9, 3)
    assert np.array_equal(out, again)
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


# --------------------------------------------------------------- pipelines

def test_strong_uniform_gray_fixed_point():
    img = np.full((8, 8, 3), 0.5)
    # gates: flip (any), jitter OFF, grayscale (no-op on gray anyway)
    rng = ScriptedRng(seed=1, random=[0.9, 0.9, 0.9])
    out = strong_augment(img, AugmentConfig(target_size=6, min_scale=0.5), rng)
    assert np.allclose(out.array, 0.0, atol=1e-9)


def test_strong_brightness_shifts_constant_when_jitter_on():
    img = np.full((8, 8, 3), 0.5)
    # jitter gate ON with scripted brightness 1.4; c/s/hue no-ops on gray
    rng = ScriptedRng(seed=1, random=[0.9, 0.0, 0.9],
                      uniform=[(0.5, 1.5, 1.4), (0.5, 1.5, 1.0),
                               (0.5, 1.5, 1.0), (-0.1, 0.1, 0.0)])
    out = strong_augment(img, AugmentConfig(target_size=6, min_scale=0.999), rng)
    assert np.allclose(out.array, (0.7 - 0.5) / 0.5, atol=1e-9)


def test_strong_deterministic_and_bounded():
    rng = np.random.default_rng(11)
    img = random_image(rng, 20, 16)
    cfg = STRONG_FACE
    a = strong_augment(img, cfg, np.random.default_rng(42))
    b = strong_augment(img, cfg, np.random.default_rng(42))
    assert np.array_equal(a.array, b.array)
    assert a.array.shape == (96, 96, 3)
    assert np.all(np.isfinite(a.array))
    assert a.array.min() >= -1.0 - 1e-9 and a.array.max() <= 1.0 + 1e-9


def test_weak_all_branches_off_is_pure_normalize():
    rng = np.random.default_rng(12)
    img = rng.random((8, 8, 3))
    scripted = ScriptedRng(random=[0.9, 0.9, 0.9, 0.9, 0.9])
    out = weak_augment(img, AugmentConfig(target_size=8, min_scale=0.5), scripted)
    assert np.array_equal(out.array, normalize(img))


def test_weak_deterministic_and_bounded():
    rng = np.random.default_rng(13)
    img = random_image(rng, 30, 22)
    for cfg in (WEAK_FACE, WEAK_BODY):
        a = weak_augment(img, cfg, np.random.default_rng(5))
        b = weak_augment(img, cfg, np.random.default_rng(5))
        assert np.array_equal(a.array, b.array)
        assert a.array.shape == (cfg.target_size, cfg.target_size, 3)
        assert a.array.min() >= -1.0 - 1e-9 and a.array.max() <= 1.0 + 1e-9


@pytest.mark.parametrize("pick", [0, 1, 2, 3])
def test_weak_blur_family_branches(pick):
    rng = np.random.default_rng(14)
    img = random_image(rng, 8, 8)
    scripted = ScriptedRng(seed=2,
                           random=[0.9, 0.9, 0.9, 0.05, 0.9],  # only blur on
                           integers=[pick])
    out = weak_augment(img, AugmentConfig(target_size=8, min_scale=0.5), scripted)
    plain = normalize(img)
    assert out.array.shape == (8, 8, 3)
    assert np.all(np.isfinite(out.array))
    assert not np.array_equal(out.array, plain)  # some smoothing happened


def test_grayscale_branch_gives_equal_channels():
    rng = np.random.default_rng(15)
    img = random_image(rng, 8, 8)
    scripted = ScriptedRng(random=[0.9, 0.9, 0.9, 0.9, 0.0])  # grayscale on
    out = weak_augment(img, AugmentConfig(target_size=8, min_scale=0.5), scripted)
    assert np.array_equal(out.array[:, :, 0], out.array[:, :, 1])
    assert np.array_equal(out.array[:, :, 1], out.array[:, :, 2])


# ------------------------------------------------------------ golden locks

def _golden_check(name, produce):
    """Regression oracle: recorded once by the first run, compared after."""
    path = DATA_DIR / name
    got = produce()
    if not path.exists():
        DATA_DIR.mkdir(exist_ok=True)
        write_image_record(path, got)
        raise AssertionError(f"golden {name} was missing; recorded - rerun")
    want = read_image_record(path)
    assert np.array_equal(got.array, want.array), f"golden {name} drifted"


def test_golden_strong_ramp():
    _golden_check(
        "golden_strong_4x4.json",
        lambda: strong_augment(ramp_4x4(),
                               AugmentConfig(target_size=8, min_scale=0.08),
                               np.random.default_rng(123)))


def test_golden_weak_ramp():
    _golden_check(
        "golden_weak_4x4.json",
        lambda: weak_augment(ramp_4x4(),
                             AugmentConfig(target_size=8, min_scale=0.2),
                             np.random.default_rng(321)))


def test_golden_weak_blur_branch():
    # seed chosen so the one-of blur branch participates in the lock
    def produce():
        scripted = ScriptedRng(seed=9, random=[0.9, 0.3, 0.3, 0.05, 0.9],
                               integers=[1])
        return weak_augment(ramp_4x4(),
                            AugmentConfig(target_size=8, min_scale=0.2),
                            scripted)
    _golden_check("golden_weak_motion_4x4.json", produce)


# ---------------------------------------------------------------- file IO

def test_image_record_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    img = ImageBuffer(random_image(rng, 5, 4))
    path = tmp_path / "img.json"
    write_image_record(path, img)
    back = read_image_record(path)
    assert np.array_equal(back.array, img.array)


def test_image_record_errors(tmp_path):
    with pytest.raises(DataError):
        read_image_record(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        read_image_record(bad)
    wrong = tmp_path / "wrong.json"
    wrong.write_text('{"format_version": 99}')
    with pytest.raises(DataError):
        read_image_record(wrong)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    img = ImageBuffer(np.round(rng.random((6, 5, 3)) * 255) / 255.0)
    path = tmp_path / "img.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    assert np.allclose(back.array, img.array, atol=0.5 / 255)


def test_ppm_ascii_and_errors(tmp_path):
    p3 = tmp_path / "ascii.ppm"
    p3.write_text("P3\n# comment\n2 1\n255\n255 0 0 0 255 0\n")
    img = read_ppm(p3)
    assert img.width == 2 and img.height == 1
    assert np.allclose(img.array[0, 0], [1.0, 0.0, 0.0])
    assert np.allclose(img.array[0, 1], [0.0, 1.0, 0.0])

    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"P5\n2 1\n255\n\x00\x00")
    with pytest.raises(DataError):
        read_ppm(bad)
    deep = tmp_path / "deep.ppm"
    deep.write_bytes(b"P6\n2 1\n65535\n" + b"\x00" * 12)
    with pytest.raises(DataError):
        read_ppm(deep)
    short = tmp_path / "short.ppm"
    short.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00")
    with pytest.raises(DataError):
        read_ppm(short)
