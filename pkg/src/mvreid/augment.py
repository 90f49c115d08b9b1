"""Geometric + photometric augmentation and bilinear resizing.

The geometric chain (rotate, projective corner jitter, crop, resize) is
composed into a single 3x3 backward map so the image is resampled exactly
once. Horizontal flips are deliberately absent: the two profile sides of a
subject are not mirror images, and flipping would teach the network a false
symmetry.
"""

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .errors import ConfigError, ContractError


class AugmentConfig:
    """Sampling ranges for one augmentation draw; zero ranges mean identity."""

    def __init__(self, out_size, rotation_deg=15.0, crop_scale=(0.8, 1.0),
                 corner_jitter=0.05, hue_shift=0.05, sat_range=(0.8, 1.25)):
        if out_size < 1:
            raise ConfigError("output size must be >= 1, got %d" % out_size)
        if rotation_deg < 0 or corner_jitter < 0 or hue_shift < 0:
            raise ConfigError("augmentation ranges must be >= 0")
        lo, hi = crop_scale
        if not (0 < lo <= hi <= 1):
            raise ConfigError("crop scale range must satisfy 0 < lo <= hi <= 1, got %r"
                              % (crop_scale,))
        slo, shi = sat_range
        if not (0 < slo <= shi):
            raise ConfigError("saturation range must be positive, got %r" % (sat_range,))
        self.out_size = int(out_size)
        self.rotation_deg = float(rotation_deg)
        self.crop_scale = (float(lo), float(hi))
        self.corner_jitter = float(corner_jitter)
        self.hue_shift = float(hue_shift)
        self.sat_range = (float(slo), float(shi))


def _bilinear(img, xs, ys):
    """Sample float image (H, W, C) at float coords, clamping to the border."""
    h, w = img.shape[:2]
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    x0 = np.clip(x0.astype(np.intp), 0, w - 1)
    y0 = np.clip(y0.astype(np.intp), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def resize(image, size):
    """Bilinear square resize; destination pixel centers map to
    (dst + 0.5) * (in / out) - 0.5 in the source grid.
    """
    if size < 1:
        raise ContractError("resize target must be >= 1, got %d" % size)
    img = np.asarray(image)
    h, w = img.shape[:2]
    if h == w == size:
        return img.copy()
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    out = _bilinear(img.astype(np.float64), xs[None, :].repeat(size, 0),
                    ys[:, None].repeat(size, 1))
    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(img.dtype)


def _homography_from_corners(src_pts, dst_pts):
    """3x3 map sending each src point to its dst point (h33 = 1)."""
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for k, ((u, v), (x, y)) in enumerate(zip(src_pts, dst_pts)):
        A[2 * k] = [u, v, 1, 0, 0, 0, -x * u, -x * v]
        b[2 * k] = x
        A[2 * k + 1] = [0, 0, 0, u, v, 1, -y * u, -y * v]
        b[2 * k + 1] = y
    m = np.linalg.solve(A, b)
    return np.array([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], 1.0]])


def _sample_params(cfg, rng):
    angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
    jitter = rng.uniform(-cfg.corner_jitter, cfg.corner_jitter, size=(4, 2))
    scale = rng.uniform(*cfg.crop_scale)
    off = rng.uniform(0.0, 1.0, size=2)
    hue = rng.uniform(-cfg.hue_shift, cfg.hue_shift)
    sat = rng.uniform(*cfg.sat_range)
    return angle, jitter, scale, off, hue, sat


def augment(image, cfg, seed):
    """One augmentation draw: rotate, projective-jitter, crop, resize, then
    hue/saturation shift. Deterministic per seed; an all-zero-range config
    reproduces resize() bit-exactly.
    """
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ContractError("augment needs uint8 HxWx3 RGB, got %s %s"
                            % (img.dtype, img.shape))
    h, w = img.shape[:2]
    rng = np.random.default_rng(seed)
    angle, jitter, scale, off, hue, sat = _sample_params(cfg, rng)

    crop_w, crop_h = scale * w, scale * h
    if int(crop_w) < cfg.out_size or int(crop_h) < cfg.out_size:
        raise ContractError(
            "crop of %.1fx%.1f cannot cover output %d; store larger images "
            "or raise the crop scale" % (crop_w, crop_h, cfg.out_size))

    geometric_identity = (angle == 0.0 and not jitter.any() and scale == 1.0)
    photometric_identity = (hue == 0.0 and sat == 1.0)
    if geometric_identity and photometric_identity:
        return resize(img, cfg.out_size)

    # backward maps, output pixel -> source pixel, composed right to left
    out = cfg.out_size
    a_resize = np.array([[crop_w / out, 0, 0.5 * crop_w / out - 0.5],
                         [0, crop_h / out, 0.5 * crop_h / out - 0.5],
                         [0, 0, 1.0]])
    x0 = off[0] * (w - crop_w)
    y0 = off[1] * (h - crop_h)
    a_crop = np.array([[1, 0, x0], [0, 1, y0], [0, 0, 1.0]])
    corners = np.array([[0, 0], [w - 1.0, 0], [w - 1.0, h - 1.0], [0, h - 1.0]])
    moved = corners + jitter * np.array([w - 1.0, h - 1.0])
    b_proj = _homography_from_corners(moved, corners)
    theta = np.deg2rad(angle)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    c, s = np.cos(theta), np.sin(theta)
    b_rot = np.array([[c, -s, cx - c * cx + s * cy],
                      [s, c, cy - s * cx - c * cy],
                      [0, 0, 1.0]])
    total = b_rot @ b_proj @ a_crop @ a_resize

    xd, yd = np.meshgrid(np.arange(out, dtype=np.float64),
                         np.arange(out, dtype=np.float64))
    denom = total[2, 0] * xd + total[2, 1] * yd + total[2, 2]
    xs = (total[0, 0] * xd + total[0, 1] * yd + total[0, 2]) / denom
    ys = (total[1, 0] * xd + total[1, 1] * yd + total[1, 2]) / denom
    warped = _bilinear(img.astype(np.float64), xs, ys) / 255.0

    if not photometric_identity:
        hsv = rgb_to_hsv(np.clip(warped, 0, 1))
        hsv[..., 0] = (hsv[..., 0] + hue) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * sat, 0, 1)
        warped = hsv_to_rgb(hsv)

    return np.clip(np.rint(warped * 255.0), 0, 255).astype(np.uint8)
