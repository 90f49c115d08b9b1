"""Procedural two-view synthetic subjects.

Each identity owns a base coat color, a horn length, a muzzle shade, and two
independent spot layouts — one per view side — because real subjects do not
share left/right markings. Rendering works in normalized [0,1]^2 coordinates
so the same spec draws consistently at any raster size. Everything derives
from (identity, seed) through named SeedSequence streams; renders add
per-capture sensor noise from their own seed.
"""

import numpy as np

from .errors import ContractError

VIEWS = ("frontal", "profile")

_BG = np.array([0.80, 0.83, 0.74])
_EYE = np.array([0.06, 0.05, 0.05])
_HORN = np.array([0.88, 0.85, 0.78])


class IdentitySpec:
    """Renderable description of one subject."""

    def __init__(self, identity, coat, blobs, horn_len, muzzle_shade):
        self.identity = identity
        self.coat = coat                  # RGB in [0,1]
        self.blobs = blobs                # view -> (K, 6): cx cy radius r g b
        self.horn_len = horn_len
        self.muzzle_shade = muzzle_shade

    def __eq__(self, other):
        return (isinstance(other, IdentitySpec)
                and self.identity == other.identity
                and np.array_equal(self.coat, other.coat)
                and all(np.array_equal(self.blobs[v], other.blobs[v]) for v in VIEWS)
                and self.horn_len == other.horn_len
                and self.muzzle_shade == other.muzzle_shade)


def _blob_layout(rng, coat):
    count = int(rng.integers(3, 8))
    blobs = np.zeros((count, 6))
    for k in range(count):
        blobs[k, 0] = rng.uniform(0.28, 0.72)    # cx
        blobs[k, 1] = rng.uniform(0.38, 0.72)    # cy
        blobs[k, 2] = rng.uniform(0.06, 0.15)    # radius
        factor = rng.uniform(0.2, 0.45) if rng.random() < 0.5 else rng.uniform(1.5, 2.2)
        blobs[k, 3:] = np.clip(coat * factor, 0.0, 1.0)
    return blobs


def generate_identity(identity, seed):
    """Deterministic spec; frontal and profile layouts use independent streams."""
    base = np.random.default_rng(np.random.SeedSequence([seed, identity, 0]))
    r = base.uniform(0.30, 0.75)
    coat = np.array([r, r * base.uniform(0.60, 0.95), r * base.uniform(0.35, 0.70)])
    horn_len = float(base.uniform(0.06, 0.20))
    muzzle_shade = float(base.uniform(0.20, 0.60))
    blobs = {
        view: _blob_layout(
            np.random.default_rng(np.random.SeedSequence([seed, identity, 1 + v])),
            coat)
        for v, view in enumerate(VIEWS)
    }
    return IdentitySpec(identity, coat, blobs, horn_len, muzzle_shade)


def _ellipse(xx, yy, cx, cy, rx, ry):
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _segment(xx, yy, p0, p1, thickness):
    """Capsule mask: points within `thickness` of the segment p0-p1."""
    d = np.array(p1) - np.array(p0)
    len2 = float(d @ d)
    if len2 == 0:
        return (xx - p0[0]) ** 2 + (yy - p0[1]) ** 2 <= thickness ** 2
    t = ((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / len2
    t = np.clip(t, 0.0, 1.0)
    px = p0[0] + t * d[0]
    py = p0[1] + t * d[1]
    return (xx - px) ** 2 + (yy - py) ** 2 <= thickness ** 2


def render_view(spec, view, size, noise_seed, noise=0.01):
    """Rasterize one view at `size` pixels; deterministic per (spec, view,
    size, noise seed). `noise` is the sensor-noise standard deviation in
    [0,1] units; zero disables it.
    """
    if view not in VIEWS:
        raise ContractError("unknown view %r (have: %s)" % (view, "/".join(VIEWS)))
    if size < 16:
        raise ContractError("render size must be >= 16, got %d" % size)

    centers = (np.arange(size) + 0.5) / size
    xx, yy = np.meshgrid(centers, centers)
    img = np.empty((size, size, 3))
    img[:] = _BG

    if view == "frontal":
        body = _ellipse(xx, yy, 0.50, 0.56, 0.30, 0.34)
        body |= _ellipse(xx, yy, 0.20, 0.36, 0.07, 0.05)   # ears
        body |= _ellipse(xx, yy, 0.80, 0.36, 0.07, 0.05)
        horns = _segment(xx, yy, (0.30, 0.30),
                         (0.30 - 0.35 * spec.horn_len, 0.30 - spec.horn_len), 0.022)
        horns |= _segment(xx, yy, (0.70, 0.30),
                          (0.70 + 0.35 * spec.horn_len, 0.30 - spec.horn_len), 0.022)
        muzzle = _ellipse(xx, yy, 0.50, 0.76, 0.13, 0.08)
        eyes = _ellipse(xx, yy, 0.40, 0.50, 0.026, 0.026)
        eyes |= _ellipse(xx, yy, 0.60, 0.50, 0.026, 0.026)
    else:
        body = _ellipse(xx, yy, 0.50, 0.56, 0.38, 0.26)
        body |= _ellipse(xx, yy, 0.40, 0.33, 0.06, 0.05)   # single visible ear
        horns = _segment(xx, yy, (0.46, 0.32),
                         (0.46 - 0.30 * spec.horn_len, 0.32 - spec.horn_len), 0.022)
        muzzle = _ellipse(xx, yy, 0.80, 0.60, 0.09, 0.07)
        eyes = _ellipse(xx, yy, 0.66, 0.47, 0.026, 0.026)

    img[body] = spec.coat
    for cx, cy, rad, cr, cg, cb in spec.blobs.get(view, np.zeros((0, 6))):
        blob = ((xx - cx) ** 2 + (yy - cy) ** 2 <= rad ** 2) & body
        img[blob] = (cr, cg, cb)
    img[muzzle & body] = spec.muzzle_shade
    img[eyes & body] = _EYE
    img[horns & ~body] = _HORN

    if noise > 0:
        rng = np.random.default_rng(np.random.SeedSequence(noise_seed))
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
