"""Corpus ingestion: manifests, image decoding, color conversion, augmentation,
and the multi-scale random cropping shared by every downstream stage.

All pixel blocks are float64 H x W x 3 arrays in [0, 1] (sRGB). Decoded 8-bit
values map to v/255 exactly.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import BadLabel, BadSplit, CropTooLarge, DecodeError, MissingFile, UnsupportedFormat

ERA_NAMES = ("Sui", "EarlyTang", "PeakTang", "MiddleTang", "LateTang", "WuDai")
SPLITS = ("train", "test", "val", "predict")

# shorter side of prediction-only images after ingestion
PREDICT_SHORT_SIDE = 600

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])  # ITU-R BT.601


@dataclass(frozen=True, order=True)
class EraLabel:
    """One of the six chronological classes, ordered oldest to newest."""

    index: int
    name: str = field(compare=False)

    def __post_init__(self):
        if not (0 <= self.index < len(ERA_NAMES)) or ERA_NAMES[self.index] != self.name:
            raise BadLabel(f"inconsistent era label ({self.index}, {self.name!r})")

    @classmethod
    def from_name(cls, name: str) -> "EraLabel":
        if name not in ERA_NAMES:
            raise BadLabel(f"unknown era name {name!r}; expected one of {ERA_NAMES}")
        return cls(ERA_NAMES.index(name), name)

    @classmethod
    def from_index(cls, index: int) -> "EraLabel":
        if not 0 <= index < len(ERA_NAMES):
            raise BadLabel(f"era index {index} out of range")
        return cls(index, ERA_NAMES[index])


@dataclass
class ManifestEntry:
    path: str                      # relative to the manifest directory
    label: EraLabel | None         # None only for predict rows
    split: str


@dataclass
class Manifest:
    """Immutable-after-load listing of corpus images."""

    root: str
    entries: list[ManifestEntry]

    def __len__(self):
        return len(self.entries)

    def abspath(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.path)


@dataclass
class LabeledImage:
    """A decoded raster with its era label and split tag."""

    id: str
    pixels: np.ndarray
    label: EraLabel | None
    split: str

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 32 or p.shape[1] < 32:
            raise DecodeError(f"image {self.id!r}: expected H x W x 3 with H, W >= 32, got {p.shape}")
        if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
            raise DecodeError(f"image {self.id!r}: pixel values outside [0, 1]")


def load_manifest(path: str) -> Manifest:
    """Parse a `path,label,split` CSV manifest and validate every row.

    Paths are kept relative to the manifest's directory and must exist.
    Label "?" is accepted only on predict rows.
    """
    if not os.path.isfile(path):
        raise MissingFile(f"manifest not found: {path}")
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["path", "label", "split"]:
            raise DecodeError(f"manifest {path}: expected header 'path,label,split', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DecodeError(f"manifest {path}:{lineno}: expected 3 fields, got {len(row)}")
            rel, label_name, split = (c.strip() for c in row)
            if split not in SPLITS:
                raise BadSplit(f"manifest {path}:{lineno}: bad split {split!r}")
            if label_name == "?":
                if split != "predict":
                    raise BadLabel(f"manifest {path}:{lineno}: label '?' allowed only on predict rows")
                label = None
            else:
                if label_name not in ERA_NAMES:
                    raise BadLabel(f"manifest {path}:{lineno}: unknown label {label_name!r}")
                label = EraLabel.from_name(label_name)
            if not os.path.isfile(os.path.join(root, rel)):
                raise MissingFile(f"manifest {path}:{lineno}: image not found: {rel}")
            entries.append(ManifestEntry(rel, label, split))
    return Manifest(root=root, entries=entries)


# ---------------------------------------------------------------------------
# image decoding / encoding
# ---------------------------------------------------------------------------

def _read_ppm(data: bytes) -> np.ndarray:
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos:pos + 1].isspace():
                pos += 1
            elif data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DecodeError("ppm: truncated header")
        return data[start:pos]

    if token() != b"P6":
        raise UnsupportedFormat("ppm: only binary P6 supported")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise DecodeError(f"ppm: bad header field: {exc}") from exc
    if maxval != 255:
        raise UnsupportedFormat(f"ppm: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + width * height * 3]
    if len(raster) < width * height * 3:
        raise DecodeError("ppm: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)


def load_image(path: str) -> np.ndarray:
    """Decode a PNG or binary PPM (P6) file to an H x W x 3 float block in [0, 1]."""
    if not os.path.isfile(path):
        raise MissingFile(f"image not found: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P6":
        raw = _read_ppm(data)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(io.BytesIO(data)) as im:
                raw = np.asarray(im.convert("RGB"))
        except Exception as exc:
            raise DecodeError(f"png decode failed for {path}: {exc}") from exc
    else:
        raise UnsupportedFormat(f"{path}: not a PNG or binary PPM file")
    return raw.astype(np.float64) / 255.0


def save_ppm(path: str, pixels: np.ndarray) -> None:
    """Write a pixel block as canonical binary PPM (round trips byte-identically)."""
    raw = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = raw.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(raw.tobytes())


def save_png(path: str, pixels: np.ndarray) -> None:
    raw = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(raw, mode="RGB").save(path, format="PNG")


def load_entry(manifest: Manifest, entry: ManifestEntry) -> LabeledImage:
    """Load one manifest row; predict rows are resized to a 600-pixel shorter side."""
    pixels = load_image(manifest.abspath(entry))
    if entry.split == "predict":
        h, w = pixels.shape[:2]
        short = min(h, w)
        if short != PREDICT_SHORT_SIDE:
            scale = PREDICT_SHORT_SIDE / short
            pixels = bilinear_resize(pixels, int(round(h * scale)), int(round(w * scale)))
            pixels = np.clip(pixels, 0.0, 1.0)
    return LabeledImage(id=entry.path, pixels=pixels, label=entry.label, split=entry.split)


# ---------------------------------------------------------------------------
# color conversion
# ---------------------------------------------------------------------------

def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B."""
    return img @ GRAY_WEIGHTS


_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB -> XYZ (D65) -> CIELAB. L in [0, 100], a/b roughly [-128, 127]."""
    linear = np.where(img <= 0.04045, img / 12.92, ((img + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta ** 3, np.cbrt(t), t / (3.0 * delta ** 2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


# ---------------------------------------------------------------------------
# geometry: bilinear sampling, rotation, flips, crops
# ---------------------------------------------------------------------------

def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample `img` at fractional (ys, xs) with bilinear weights, replicating borders.

    Exact at integer coordinates, so identity warps reproduce the input bit for bit.
    """
    h, w = img.shape[:2]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = ys - y0
    wx = xs - x0
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    if img.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = img[y0c, x0c] * (1.0 - wx) + img[y0c, x1c] * wx
    bot = img[y1c, x0c] * (1.0 - wx) + img[y1c, x1c] * wx
    return top * (1.0 - wy) + bot * wy


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize with bilinear interpolation (half-pixel centers; identity when sizes match)."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    return bilinear_sample(img, ys[:, None], xs[None, :])


def rotate_image(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear, border pixels replicated."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy - cy, xx - cx
    src_y = cos_t * dy - sin_t * dx + cy
    src_x = sin_t * dy + cos_t * dx + cx
    return bilinear_sample(img, src_y, src_x)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def augment(images: list[LabeledImage], angles: list[float], flip: bool) -> list[LabeledImage]:
    """Rotations (about the center, replicate border) and optional horizontal flips.

    Output order is image-major, then angle, then [plain, flipped]; labels and
    split tags are inherited. Count = len(images) * len(angles) * (2 if flip else 1).
    """
    if not angles:
        raise ValueError("augment: angles must be nonempty")
    out = []
    for img in images:
        for angle in angles:
            rotated = img.pixels if angle == 0.0 else np.clip(rotate_image(img.pixels, angle), 0.0, 1.0)
            out.append(LabeledImage(f"{img.id}|r{angle:+g}", rotated, img.label, img.split))
            if flip:
                out.append(LabeledImage(f"{img.id}|r{angle:+g}|f", hflip(rotated), img.label, img.split))
    return out


AUGMENT_ANGLES = tuple(np.arange(-10.0, 10.0 + 1e-9, 2.5))  # -10..10 step 2.5, 9 angles


@dataclass(frozen=True)
class CropSpec:
    """Multi-scale random-window sampling parameters.

    Window side at scale s is round(s * target_side); positions are uniform,
    drawn from numpy's PCG64 generator seeded with `seed`, so the crop geometry
    reproduces exactly for a given seed.
    """

    scales: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.2)
    crops_per_scale: int = 20
    target_side: int = 400
    seed: int = 0

    def __post_init__(self):
        if any(s <= 0 for s in self.scales):
            raise ValueError("CropSpec: scales must be strictly positive")
        if self.crops_per_scale < 1:
            raise ValueError("CropSpec: crops_per_scale must be >= 1")


def sample_crops(pixels: np.ndarray, spec: CropSpec) -> list[np.ndarray]:
    """Cut crops_per_scale windows at every scale and resize each to target_side."""
    h, w = pixels.shape[:2]
    for s in spec.scales:
        if int(round(s * spec.target_side)) > min(h, w):
            raise CropTooLarge(
                f"scale {s}: window {int(round(s * spec.target_side))} exceeds image min side {min(h, w)}"
            )
    rng = np.random.default_rng(spec.seed)
    crops = []
    for s in spec.scales:
        side = int(round(s * spec.target_side))
        for _ in range(spec.crops_per_scale):
            y = int(rng.integers(0, h - side + 1))
            x = int(rng.integers(0, w - side + 1))
            window = pixels[y:y + side, x:x + side]
            crops.append(bilinear_resize(window, spec.target_side, spec.target_side))
    return crops
