"""Dataset assembly: split layout, capture-group variation, manifest I/O.

Split structure: train identities are disjoint from database identities; the
test split re-captures the *database* identities in fresh capture groups
(open-set layout — a closed-set training run simply unions train+database).
Each capture group holds one frontal+profile pair per identity, rendered once
and perturbed by a per-group pose/lighting draw standing in for a separate
acquisition session.
"""

import csv
import os
from typing import NamedTuple

import numpy as np

from .augment import AugmentConfig, augment, resize
from .errors import ConfigError, ContractError, FormatError
from .ppm import read_ppm, write_ppm
from .synth import VIEWS, generate_identity, render_view

SPLITS = ("train", "database", "test")

MANIFEST_HEADER = ["path", "identity", "view", "split", "capture_group"]
MANIFEST_NAME = "manifest.csv"

# capture-session jitter: milder than training augmentation, no identity leak
_GROUP_VARIATION = dict(rotation_deg=8.0, crop_scale=(0.88, 1.0),
                        corner_jitter=0.02, hue_shift=0.02, sat_range=(0.92, 1.1))


class SampleRow(NamedTuple):
    path: str
    identity: int
    view: str
    split: str
    capture_group: int


class DatasetConfig:
    """Counts and sizes for one generated benchmark tree."""

    def __init__(self, train_identities=40, database_identities=10,
                 train_groups=8, test_groups=2, image_size=48, seed=0):
        if min(train_identities, database_identities, train_groups, test_groups) < 1:
            raise ConfigError("identity and group counts must be >= 1")
        if image_size < 16:
            raise ConfigError("image size must be >= 16, got %d" % image_size)
        self.train_identities = int(train_identities)
        self.database_identities = int(database_identities)
        self.train_groups = int(train_groups)
        self.test_groups = int(test_groups)
        self.image_size = int(image_size)
        self.seed = int(seed)

    @property
    def render_size(self):
        # leave headroom so the capture-group crop never undershoots the
        # stored size (crop scale floor 0.88)
        return int(np.ceil(self.image_size * 1.25))


def _iter_plan(cfg):
    """Yield (identity, group, view, split) in a fixed, reproducible order."""
    db_ids = range(cfg.train_identities,
                   cfg.train_identities + cfg.database_identities)
    for identity in range(cfg.train_identities):
        for group in range(cfg.train_groups):
            for view in VIEWS:
                yield identity, group, view, "train"
    for identity in db_ids:
        for group in range(cfg.train_groups):
            for view in VIEWS:
                yield identity, group, view, "database"
    for identity in db_ids:
        for group in range(cfg.train_groups, cfg.train_groups + cfg.test_groups):
            for view in VIEWS:
                yield identity, group, view, "test"


def build_dataset(cfg, out_dir):
    """Render every sample, write PPMs plus manifest.csv, return the rows."""
    group_cfg = AugmentConfig(out_size=cfg.image_size, **_GROUP_VARIATION)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    specs = {}
    rows = []
    for identity, group, view, split in _iter_plan(cfg):
        if identity not in specs:
            specs[identity] = generate_identity(identity, cfg.seed)
        view_idx = VIEWS.index(view)
        raw = render_view(specs[identity], view, cfg.render_size,
                          noise_seed=[cfg.seed, identity, group, view_idx, 7])
        img = augment(raw, group_cfg, seed=[cfg.seed, identity, group, view_idx, 11])
        rel = "images/%s_id%04d_g%02d_%s.ppm" % (split, identity, group, view)
        write_ppm(img, os.path.join(out_dir, rel))
        rows.append(SampleRow(rel, identity, view, split, group))
    validate_manifest(rows)
    write_manifest(rows, os.path.join(out_dir, MANIFEST_NAME))
    return rows


# ---------------------------------------------------------------------------
# manifest I/O

def write_manifest(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in rows:
            writer.writerow([r.path, r.identity, r.view, r.split, r.capture_group])


def read_manifest(path):
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise FormatError("cannot open manifest %s: %s" % (path, e))
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("manifest %s is empty" % path)
        if header != MANIFEST_HEADER:
            raise FormatError("manifest header %r != %r in %s"
                              % (header, MANIFEST_HEADER, path))
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 5:
                raise FormatError("manifest %s line %d has %d fields, want 5"
                                  % (path, lineno, len(rec)))
            p, identity, view, split, group = rec
            if view not in VIEWS:
                raise FormatError("manifest %s line %d: bad view %r" % (path, lineno, view))
            if split not in SPLITS:
                raise FormatError("manifest %s line %d: bad split %r" % (path, lineno, split))
            try:
                rows.append(SampleRow(p, int(identity), view, split, int(group)))
            except ValueError:
                raise FormatError("manifest %s line %d: non-integer id/group"
                                  % (path, lineno))
    return rows


def validate_manifest(rows):
    """Enforce the split-identity invariants."""
    if not rows:
        raise ContractError("manifest has no rows")
    ids = {s: {r.identity for r in rows if r.split == s} for s in SPLITS}
    if not ids["test"] <= ids["database"]:
        raise ContractError("test identities %r not enrolled in the database split"
                            % sorted(ids["test"] - ids["database"]))
    overlap = ids["train"] & ids["database"]
    if overlap:
        raise ContractError("train/database identity overlap: %r" % sorted(overlap))


def check_integrity(root, rows):
    """Every row's file exists; every image under images/ has exactly one row."""
    seen = set()
    for r in rows:
        full = os.path.join(root, r.path)
        if not os.path.isfile(full):
            raise ContractError("manifest points at missing file %s" % r.path)
        if r.path in seen:
            raise ContractError("duplicate manifest path %s" % r.path)
        seen.add(r.path)
    img_dir = os.path.join(root, "images")
    on_disk = {"images/" + name for name in os.listdir(img_dir)
               if name.endswith(".ppm")}
    orphans = on_disk - seen
    if orphans:
        raise ContractError("images without manifest rows: %r" % sorted(orphans)[:5])


# ---------------------------------------------------------------------------
# loading

def rows_for(rows, split=None, view=None):
    out = [r for r in rows
           if (split is None or r.split == split) and (view is None or r.view == view)]
    return out


def load_images(root, rows):
    """Stack the rows' images; all must share the stored size."""
    if not rows:
        raise ContractError("no rows to load")
    imgs = [read_ppm(os.path.join(root, r.path)) for r in rows]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ContractError("inconsistent image shapes in dataset: %r" % shapes)
    return np.stack(imgs)


def to_net_input(images, size):
    """uint8 NxHxWx3 -> float32 Nx3xSxS in [0,1], resized bilinearly."""
    out = np.empty((images.shape[0], 3, size, size), dtype=np.float32)
    for i, im in enumerate(images):
        out[i] = resize(im, size).transpose(2, 0, 1).astype(np.float32) / 255.0
    return out


def group_pairs(rows):
    """Map (identity, capture_group) -> {view: row index}; multi-view queries
    and gallery entries are built from complete pairs.
    """
    pairs = {}
    for i, r in enumerate(rows):
        pairs.setdefault((r.identity, r.capture_group), {})[r.view] = i
    return pairs
