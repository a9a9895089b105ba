"""Synthetic single-object shapes with analytic masks, augmentation, and raster file formats.

Dataset directory layout::

    <root>/images/<id>.pgm    8-bit grayscale image
    <root>/masks/<id>.pgm     0/255 object mask
    <root>/scales/<id>.skf    skeleton scale map
    <root>/manifest.tsv       id, seed, kind, max_scale
"""

import hashlib
import os
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, FormatError
from .gt import scale_map_from_mask

SHAPE_KINDS = ("bar", "ellipse", "lshape", "wedge")
MIN_CANVAS = 32
RESIZE_FACTORS = (0.8, 1.0, 1.2)
ROTATIONS = (0, 90, 180, 270)
SKF_MAGIC = b"SKF1\n"


@dataclass
class Sample:
    image: np.ndarray  # float64 in [0, 1], multiples of 1/255
    mask: np.ndarray  # uint8 0/1
    scale_map: np.ndarray  # float64
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.image.shape


# ---------------------------------------------------------------- generation


def _rotate(yy, xx, cy, cx, theta):
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    return dx * c + dy * s, -dx * s + dy * c


def _render(kind, p, canvas):
    yy, xx = np.mgrid[0:canvas, 0:canvas].astype(np.float64)
    u, v = _rotate(yy, xx, p["cy"], p["cx"], p["theta"])
    hw = p["half_width"]
    if kind == "bar":
        return (np.abs(u) <= p["length"] / 2) & (np.abs(v) <= hw)
    if kind == "ellipse":
        return (u / p["length"] * 2) ** 2 + (v / hw) ** 2 <= 1.0
    if kind == "lshape":
        arm1 = (u >= -hw) & (u <= p["length"]) & (np.abs(v) <= hw)
        arm2 = (np.abs(u) <= hw) & (v >= -hw) & (v <= p["length2"])
        return arm1 | arm2
    if kind == "wedge":
        t = (u + p["length"] / 2) / p["length"]
        half = hw + (p["half_width2"] - hw) * t
        return (t >= 0) & (t <= 1) & (np.abs(v) <= half)
    raise ArgumentError(f"unknown shape kind {kind!r}")


def _shape_params(rng, kind, canvas):
    hw = float(np.exp(rng.uniform(np.log(2.0), np.log(0.2 * canvas))))
    length = float(rng.uniform(max(4 * hw, 0.3 * canvas), 0.85 * canvas))
    p = {
        "cy": float(rng.uniform(0.3, 0.7) * canvas),
        "cx": float(rng.uniform(0.3, 0.7) * canvas),
        "theta": float(rng.uniform(0, np.pi)),
        "half_width": hw,
        "length": length,
    }
    if kind == "lshape":
        p["length"] = length * 0.6
        p["length2"] = float(rng.uniform(0.4, 0.6) * length)
        p["cy"] -= p["length2"] * 0.3
        p["cx"] -= p["length"] * 0.3
    elif kind == "wedge":
        p["half_width2"] = float(rng.uniform(0.25, 0.6) * hw) if hw > 4 else float(hw * 2.5)
    return p


def _texture(rng, mask, canvas):
    bg = rng.uniform(0.1, 0.9)
    lo, hi = bg - 0.3, bg + 0.3
    choices = [x for x in (rng.uniform(0.0, lo) if lo > 0 else None,
                           rng.uniform(hi, 1.0) if hi < 1 else None) if x is not None]
    fg = choices[rng.integers(len(choices))]
    img = np.where(mask, fg, bg)
    low = ndimage.gaussian_filter(rng.standard_normal((canvas, canvas)), 4.0, mode="wrap")
    low *= 0.06 / max(low.std(), 1e-12)
    img = img + low + rng.normal(0.0, 0.03, (canvas, canvas))
    return np.round(np.clip(img, 0.0, 1.0) * 255) / 255


def gen_shape(seed, canvas=96):
    """Render one random textured shape and its ground truth, fully determined by ``seed``."""
    if canvas < MIN_CANVAS:
        raise ArgumentError(f"canvas must be >= {MIN_CANVAS}, got {canvas}")
    rng = np.random.default_rng(seed)
    kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    margin = 2
    for _ in range(100):
        p = _shape_params(rng, kind, canvas)
        mask = _render(kind, p, canvas)
        rows, cols = np.nonzero(mask)
        if rows.size < 20:
            continue
        if (rows.min() >= margin and cols.min() >= margin
                and rows.max() < canvas - margin and cols.max() < canvas - margin):
            break
    else:
        raise RuntimeError(f"could not place a {kind} on a {canvas}px canvas (seed {seed})")
    mask = mask.astype(np.uint8)
    scale = scale_map_from_mask(mask)
    image = _texture(rng, mask, canvas)
    meta = {"seed": int(seed), "kind": kind, "max_scale": float(scale.max()), **p}
    return Sample(image, mask, scale, meta)


# -------------------------------------------------------------- augmentation


@lru_cache(maxsize=64)
def _resize_matrix(n_in, n_out):
    # align_corners=False sampling with edge clamping
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), i0), 1 - f)
    np.add.at(m, (np.arange(n_out), i1), f)
    m.setflags(write=False)
    return m


def resize_bilinear(img, out_h, out_w):
    img = np.asarray(img, dtype=np.float64)
    if img.shape[-2:] == (out_h, out_w):
        return img.copy()
    return _resize_matrix(img.shape[-2], out_h) @ img @ _resize_matrix(img.shape[-1], out_w).T


def resize_nearest(img, out_h, out_w):
    img = np.asarray(img)
    h, w = img.shape[-2:]
    ys = np.minimum(np.floor((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    xs = np.minimum(np.floor((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return img[..., ys[:, None], xs[None, :]]


def resize_scale_map(scale, out_h, out_w, factor):
    """Move each skeleton pixel to its resized location; values are multiplied by ``factor``."""
    h, w = scale.shape
    out = np.zeros((out_h, out_w))
    ys, xs = np.nonzero(scale)
    if ys.size == 0:
        return out
    fy, fx = out_h / h, out_w / w
    oy = np.clip(np.round((ys + 0.5) * fy - 0.5).astype(int), 0, out_h - 1)
    ox = np.clip(np.round((xs + 0.5) * fx - 0.5).astype(int), 0, out_w - 1)
    np.maximum.at(out, (oy, ox), scale[ys, xs] * factor)
    return out


def augment_with(sample, factor=1.0, flip=False, angle=0):
    """Resize by ``factor``, optionally mirror left-right, then rotate by ``angle`` degrees."""
    if angle not in ROTATIONS:
        raise ArgumentError(f"rotation must be one of {ROTATIONS}, got {angle}")
    image, mask, scale = sample.image, sample.mask, sample.scale_map
    if factor != 1.0:
        h, w = image.shape
        oh, ow = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
        image = resize_bilinear(image, oh, ow)
        mask = resize_nearest(mask, oh, ow)
        scale = resize_scale_map(scale, oh, ow, factor)
    if flip:
        image, mask, scale = image[:, ::-1], mask[:, ::-1], scale[:, ::-1]
    k = angle // 90
    if k:
        image, mask, scale = np.rot90(image, k), np.rot90(mask, k), np.rot90(scale, k)
    meta = dict(sample.meta, aug=(factor, bool(flip), angle))
    return replace(sample, image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask),
                   scale_map=np.ascontiguousarray(scale), meta=meta)


def augment(sample, seed):
    """One uniformly drawn resize factor, flip flag and rotation."""
    rng = np.random.default_rng(seed)
    factor = RESIZE_FACTORS[rng.integers(len(RESIZE_FACTORS))]
    flip = bool(rng.integers(2))
    angle = ROTATIONS[rng.integers(len(ROTATIONS))]
    return augment_with(sample, factor, flip, angle)


# ------------------------------------------------------------------ file I/O


def write_skf(path, raster):
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ArgumentError(f"SKF raster must be 2-D, got shape {raster.shape}")
    if not np.isfinite(raster).all():
        raise ArgumentError("SKF raster contains non-finite values")
    h, w = raster.shape
    payload = np.ascontiguousarray(raster, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(SKF_MAGIC + f"{w} {h}\n".encode("ascii") + payload)


def parse_skf(buf):
    if buf[:len(SKF_MAGIC)] != SKF_MAGIC:
        raise FormatError(f"bad SKF magic {bytes(buf[:len(SKF_MAGIC)])!r}", 0)
    start = len(SKF_MAGIC)
    end = buf.find(b"\n", start)
    if end < 0:
        raise FormatError("unterminated SKF size line", start)
    m = re.fullmatch(rb"(\d+) (\d+)", buf[start:end])
    if not m:
        raise FormatError(f"bad SKF size line {bytes(buf[start:end])!r}", start)
    w, h = int(m.group(1)), int(m.group(2))
    off = end + 1
    need = 4 * w * h
    if len(buf) - off < need:
        raise FormatError(f"truncated SKF payload: need {need} bytes, have {len(buf) - off}", len(buf))
    if len(buf) - off > need:
        raise FormatError(f"trailing bytes after SKF payload", off + need)
    return np.frombuffer(buf, dtype="<f4", count=w * h, offset=off).reshape(h, w).astype(np.float32)


def read_skf(path):
    with open(path, "rb") as f:
        return parse_skf(f.read())


def write_pgm(path, raster):
    """Binary PGM (P5); uint8 data as 8-bit, uint16 as 16-bit big-endian."""
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ArgumentError(f"PGM raster must be 2-D, got shape {raster.shape}")
    if raster.dtype == np.uint8:
        maxval, payload = 255, raster.tobytes()
    elif raster.dtype == np.uint16:
        maxval, payload = 65535, raster.astype(">u2").tobytes()
    else:
        raise ArgumentError(f"PGM needs uint8 or uint16 data, got {raster.dtype}")
    h, w = raster.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + payload)


def parse_pgm(buf):
    if buf[:2] != b"P5":
        raise FormatError(f"bad PGM magic {bytes(buf[:2])!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header", pos)
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("PGM header not followed by whitespace", pos)
    pos += 1
    w, h, maxval = fields
    if not 0 < maxval < 65536:
        raise FormatError(f"PGM maxval out of range: {maxval}", pos)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    need = w * h * np.dtype(dtype).itemsize
    if len(buf) - pos < need:
        raise FormatError(f"truncated PGM payload: need {need} bytes, have {len(buf) - pos}", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data.astype(np.uint8 if maxval < 256 else np.uint16)


def read_pgm(path):
    with open(path, "rb") as f:
        return parse_pgm(f.read())


def image_to_u8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


# ------------------------------------------------------------------ datasets


def sample_id(i):
    return f"{i:05d}"


def write_sample(root, sid, sample):
    for sub in ("images", "masks", "scales"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    write_pgm(os.path.join(root, "images", sid + ".pgm"), image_to_u8(sample.image))
    write_pgm(os.path.join(root, "masks", sid + ".pgm"), (sample.mask != 0).astype(np.uint8) * 255)
    write_skf(os.path.join(root, "scales", sid + ".skf"), sample.scale_map)


def gen_dataset(root, count, size=96, seed=0):
    """Generate ``count`` samples with seeds seed, seed+1, ...; returns the manifest path."""
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    os.makedirs(root, exist_ok=True)
    rows = []
    for i in range(count):
        s = seed + i
        sample = gen_shape(s, size)
        sid = sample_id(i)
        write_sample(root, sid, sample)
        rows.append((sid, s, sample.meta["kind"], sample.meta["max_scale"]))
    path = os.path.join(root, "manifest.tsv")
    with open(path, "w") as f:
        f.write("id\tseed\tkind\tmax_scale\n")
        for sid, s, kind, ms in rows:
            f.write(f"{sid}\t{s}\t{kind}\t{ms:.6f}\n")
    return path


def read_manifest(root):
    path = os.path.join(root, "manifest.tsv")
    if not os.path.exists(path):
        raise FormatError(f"no manifest.tsv in {root}")
    rows = []
    with open(path) as f:
        header = f.readline().rstrip("\n").split("\t")
        if header[:2] != ["id", "seed"]:
            raise FormatError(f"unexpected manifest header {header}", 0)
        for line in f:
            if line.strip():
                sid, seed, kind, ms = line.rstrip("\n").split("\t")
                rows.append({"id": sid, "seed": int(seed), "kind": kind, "max_scale": float(ms)})
    return rows


def manifest_hash(root):
    with open(os.path.join(root, "manifest.tsv"), "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def split_rows(rows, split=None):
    """Train = even seeds, val = odd seeds."""
    if split is None or split == "all":
        return rows
    if split == "train":
        return [r for r in rows if r["seed"] % 2 == 0]
    if split == "val":
        return [r for r in rows if r["seed"] % 2 == 1]
    raise ArgumentError(f"unknown split {split!r}")


def load_sample(root, row):
    sid = row["id"]
    image = read_pgm(os.path.join(root, "images", sid + ".pgm")).astype(np.float64) / 255
    mask = (read_pgm(os.path.join(root, "masks", sid + ".pgm")) != 0).astype(np.uint8)
    scale = read_skf(os.path.join(root, "scales", sid + ".skf")).astype(np.float64)
    if not image.shape == mask.shape == scale.shape:
        raise FormatError(f"sample {sid}: image/mask/scale shapes differ")
    return Sample(image, mask, scale, dict(row))


def load_dataset(root, split=None):
    return [load_sample(root, r) for r in split_rows(read_manifest(root), split)]
