"""Scale space, difference-of-Gaussians keypoints, and SIFT descriptors.

Two extraction paths share the same descriptor histogram and normalization:
a keypoint path (extrema of the DoG stack, rotated to principal orientation)
and the dense upright grid used for classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .descriptors import DescriptorSet

SIGMA0 = 1.6
LEVELS_PER_OCTAVE = 3
CONTRAST_FLOOR = 0.01
ORI_BINS = 36
ORI_PEAK_RATIO = 0.8
DESC_GRID = 4               # 4 x 4 spatial blocks
DESC_ORI_BINS = 8
DESC_CLAMP = 0.2
DENSE_BIN_SIZES = (4, 6, 8, 10, 12)
_DENSE_SMOOTH_RATIO = 0.4   # gaussian sigma per dense scale = ratio * bin size


@dataclass
class ScaleSpace:
    """Gaussian-smoothed copies of one grayscale image at increasing sigmas."""

    sigmas: list[float]
    levels: list[np.ndarray]
    base: np.ndarray


@dataclass
class DogStack:
    """Adjacent scale-space levels subtracted; layer c = level[c+1] - level[c]."""

    sigmas: list[float]
    layers: list[np.ndarray]


@dataclass
class KeyPoint:
    x: int
    y: int
    scale_index: int
    sigma: float
    orientation: float = 0.0


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at radius ceil(3 sigma), normalized to sum 1."""
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with replicated borders."""
    k = gaussian_kernel1d(sigma)
    out = correlate1d(img, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def build_scale_space(gray: np.ndarray, sigma0: float = SIGMA0,
                      levels_per_octave: int = LEVELS_PER_OCTAVE,
                      num_levels: int = 6) -> ScaleSpace:
    """Smooth `gray` at sigmas sigma0 * 2^(c / levels_per_octave), c = 0..num_levels-1."""
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    if num_levels < 3:
        raise ValueError("need at least 3 levels")
    sigmas = [sigma0 * 2.0 ** (c / levels_per_octave) for c in range(num_levels)]
    levels = [gaussian_blur(gray, s) for s in sigmas]
    return ScaleSpace(sigmas=sigmas, levels=levels, base=gray)


def dog(space: ScaleSpace) -> DogStack:
    if len(space.levels) < 2:
        raise ValueError("scale space needs at least 2 levels")
    layers = [space.levels[c + 1] - space.levels[c] for c in range(len(space.levels) - 1)]
    return DogStack(sigmas=space.sigmas[:-1], layers=layers)


def detect_keypoints(stack: DogStack, contrast_floor: float = CONTRAST_FLOOR) -> list[KeyPoint]:
    """Strict 26-neighbor extrema of the DoG volume with |D| >= contrast_floor.

    Border pixels and the outermost layers are excluded.
    """
    vol = np.stack(stack.layers)
    n_layers, h, w = vol.shape
    if n_layers < 3:
        raise ValueError("need at least 3 DoG layers")
    points = []
    for c in range(1, n_layers - 1):
        center = vol[c, 1:h - 1, 1:w - 1]
        above = np.full_like(center, -np.inf)
        below = np.full_like(center, np.inf)
        for dc in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dc == 0 and dy == 0 and dx == 0:
                        continue
                    nb = vol[c + dc, 1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
                    above = np.maximum(above, nb)
                    below = np.minimum(below, nb)
        mask = ((center > above) | (center < below)) & (np.abs(center) >= contrast_floor)
        ys, xs = np.nonzero(mask)
        for y, x in zip(ys, xs):
            points.append(KeyPoint(x=int(x + 1), y=int(y + 1), scale_index=c,
                                   sigma=stack.sigmas[c]))
    return points


def gradient(level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pixel differences f_x = L(x+1,y) - L(x-1,y), f_y = L(x,y+1) - L(x,y-1).

    Returns (magnitude, orientation); borders replicate, zero gradients get
    orientation 0 (atan2 convention).
    """
    padded = np.pad(level, 1, mode="edge")
    fx = padded[1:-1, 2:] - padded[1:-1, :-2]
    fy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return np.hypot(fx, fy), np.arctan2(fy, fx)


def principal_orientations(x: int, y: int, mag: np.ndarray, ori: np.ndarray,
                           sigma: float) -> list[float]:
    """Peaks of the 36-bin gradient-orientation histogram around (x, y).

    Bins weighted by magnitude times a Gaussian of width 1.5 sigma; every bin
    at >= 80% of the maximum yields one orientation (its bin center). An
    all-zero window returns [0.0].
    """
    radius = int(round(3.0 * sigma))
    h, w = mag.shape
    ys = np.clip(np.arange(y - radius, y + radius + 1), 0, h - 1)
    xs = np.clip(np.arange(x - radius, x + radius + 1), 0, w - 1)
    m = mag[np.ix_(ys, xs)]
    t = ori[np.ix_(ys, xs)]
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    dist2 = offs[:, None] ** 2 + offs[None, :] ** 2
    weights = m * np.exp(-dist2 / (2.0 * (1.5 * sigma) ** 2))
    if not np.any(weights > 0):
        return [0.0]
    bin_width = 2.0 * np.pi / ORI_BINS
    bins = np.floor(np.mod(t, 2.0 * np.pi) / bin_width).astype(int) % ORI_BINS
    hist = np.bincount(bins.ravel(), weights=weights.ravel(), minlength=ORI_BINS)
    peaks = np.nonzero(hist >= ORI_PEAK_RATIO * hist.max())[0]
    return [(b + 0.5) * bin_width for b in peaks]


def _normalize_descriptor(vec: np.ndarray) -> np.ndarray:
    """L2 normalize, clamp components at 0.2, renormalize; zero stays zero."""
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return np.zeros_like(vec)
    vec = np.minimum(vec / norm, DESC_CLAMP)
    return vec / np.linalg.norm(vec)


def descriptor_at(x: float, y: float, mag: np.ndarray, ori: np.ndarray,
                  orientation: float = 0.0, bin_size: float = 4.0) -> np.ndarray:
    """128-d SIFT histogram at (x, y): 4x4 spatial bins of `bin_size` pixels,
    8 orientation bins, trilinear interpolation, Gaussian-windowed, rotated
    by `orientation`. Samples beyond the image replicate border pixels.
    """
    h, w = mag.shape
    radius = int(round(bin_size * (DESC_GRID + 1) * np.sqrt(2) / 2.0))
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    dy = offs[:, None] + np.zeros_like(offs)[None, :]
    dx = np.zeros_like(offs)[:, None] + offs[None, :]
    cos_o, sin_o = np.cos(orientation), np.sin(orientation)
    # rotate offsets into the descriptor frame, in units of bins
    u = (cos_o * dx + sin_o * dy) / bin_size
    v = (-sin_o * dx + cos_o * dy) / bin_size
    ub = u + (DESC_GRID - 1) / 2.0
    vb = v + (DESC_GRID - 1) / 2.0
    keep = (ub > -1.0) & (ub < DESC_GRID) & (vb > -1.0) & (vb < DESC_GRID)

    py = np.clip(np.round(y + dy).astype(np.intp), 0, h - 1)
    px = np.clip(np.round(x + dx).astype(np.intp), 0, w - 1)
    m = mag[py, px]
    theta = np.mod(ori[py, px] - orientation, 2.0 * np.pi)
    window = np.exp(-(u ** 2 + v ** 2) / (2.0 * (DESC_GRID / 2.0) ** 2))
    weight = (m * window)[keep]
    ub, vb = ub[keep], vb[keep]
    ob = theta[keep] / (2.0 * np.pi / DESC_ORI_BINS)

    hist = np.zeros((DESC_GRID, DESC_GRID, DESC_ORI_BINS))
    u0 = np.floor(ub).astype(int)
    v0 = np.floor(vb).astype(int)
    o0 = np.floor(ob).astype(int)
    fu, fv, fo = ub - u0, vb - v0, ob - o0
    for du, wu in ((0, 1.0 - fu), (1, fu)):
        ui = u0 + du
        uok = (ui >= 0) & (ui < DESC_GRID)
        for dv, wv in ((0, 1.0 - fv), (1, fv)):
            vi = v0 + dv
            vok = uok & (vi >= 0) & (vi < DESC_GRID)
            for do, wo in ((0, 1.0 - fo), (1, fo)):
                oi = (o0 + do) % DESC_ORI_BINS
                np.add.at(hist, (vi[vok], ui[vok], oi[vok]),
                          (weight * wu * wv * wo)[vok])
    return _normalize_descriptor(hist.ravel())


def sift_at(kp: KeyPoint, space: ScaleSpace) -> np.ndarray:
    """Descriptor for a detected keypoint, computed at its scale-space level."""
    level = space.levels[kp.scale_index]
    mag, ori = gradient(level)
    return descriptor_at(kp.x, kp.y, mag, ori, orientation=kp.orientation,
                         bin_size=3.0 * kp.sigma)


def keypoint_sift(gray: np.ndarray, sigma0: float = SIGMA0,
                  levels_per_octave: int = LEVELS_PER_OCTAVE, num_levels: int = 6,
                  contrast_floor: float = CONTRAST_FLOOR) -> DescriptorSet:
    """Full keypoint pipeline: scale space, DoG extrema, orientations, descriptors."""
    space = build_scale_space(gray, sigma0, levels_per_octave, num_levels)
    stack = dog(space)
    grads = {}
    vectors, geometry = [], []
    for kp in detect_keypoints(stack, contrast_floor):
        if kp.scale_index not in grads:
            grads[kp.scale_index] = gradient(space.levels[kp.scale_index])
        mag, ori = grads[kp.scale_index]
        for angle in principal_orientations(kp.x, kp.y, mag, ori, kp.sigma):
            vectors.append(descriptor_at(kp.x, kp.y, mag, ori, orientation=angle,
                                         bin_size=3.0 * kp.sigma))
            geometry.append((kp.x, kp.y, kp.sigma))
    if not vectors:
        return DescriptorSet(np.zeros((0, 128), dtype=np.float32))
    return DescriptorSet(np.asarray(vectors, dtype=np.float32),
                         np.asarray(geometry, dtype=np.float32))


def dense_grid(length: int, window: int, step: int) -> np.ndarray:
    """Window centers along one axis: half, half+step, ... while the window fits."""
    half = window // 2
    return np.arange(half, length - half + 1, step, dtype=np.intp)


def _orientation_maps(mag: np.ndarray, ori: np.ndarray) -> np.ndarray:
    """Split gradient magnitude over the 8 orientation bins with linear interpolation."""
    ob = np.mod(ori, 2.0 * np.pi) / (2.0 * np.pi / DESC_ORI_BINS)
    o0 = np.floor(ob).astype(int) % DESC_ORI_BINS
    fo = ob - np.floor(ob)
    maps = np.zeros((DESC_ORI_BINS,) + mag.shape)
    for k in range(DESC_ORI_BINS):
        maps[k] += np.where(o0 == k, mag * (1.0 - fo), 0.0)
        maps[(k + 1) % DESC_ORI_BINS] += np.where(o0 == k, mag * fo, 0.0)
    return maps


def dense_sift(gray: np.ndarray, step: int = 4, num_scales: int = 5) -> DescriptorSet:
    """Upright SIFT on a regular grid at bin sizes 4, 6, 8, ... pixels per scale.

    Spatial binning uses separable triangular (bilinear) weights computed by
    convolution, so whole scales are extracted at once. Windows that would
    exceed the image are excluded. Geometry rows carry (x, y, bin_size).
    """
    if step < 1 or num_scales < 1:
        raise ValueError("step and num_scales must be >= 1")
    h, w = gray.shape
    all_vecs, all_geo = [], []
    for bin_size in DENSE_BIN_SIZES[:num_scales]:
        window = DESC_GRID * bin_size
        ys = dense_grid(h, window, step)
        xs = dense_grid(w, window, step)
        if len(ys) == 0 or len(xs) == 0:
            continue
        smoothed = gaussian_blur(gray, _DENSE_SMOOTH_RATIO * bin_size)
        mag, ori = gradient(smoothed)
        maps = _orientation_maps(mag, ori)
        # triangular kernel of support (-bin_size, bin_size): bilinear bin weights
        tri = 1.0 - np.abs(np.arange(-bin_size + 1, bin_size)) / bin_size
        binned = correlate1d(maps, tri, axis=1, mode="constant")
        binned = correlate1d(binned, tri, axis=2, mode="constant")
        # bin centers sit at offsets (i - 1.5) * bin_size from the window center
        centers = (np.arange(DESC_GRID) - (DESC_GRID - 1) / 2.0) * bin_size
        centers = centers.astype(np.intp)
        desc = np.empty((len(ys), len(xs), DESC_GRID, DESC_GRID, DESC_ORI_BINS))
        for j, cy in enumerate(centers):
            for i, cx in enumerate(centers):
                block = binned[:, ys[:, None] + cy, xs[None, :] + cx]
                desc[:, :, j, i, :] = np.moveaxis(block, 0, -1)
        vecs = desc.reshape(-1, DESC_GRID * DESC_GRID * DESC_ORI_BINS)
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        nz = norms[:, 0] >= 1e-12
        vecs = np.where(nz[:, None], np.minimum(vecs / np.maximum(norms, 1e-12), DESC_CLAMP), 0.0)
        norms2 = np.linalg.norm(vecs, axis=1, keepdims=True)
        vecs = np.where(nz[:, None], vecs / np.maximum(norms2, 1e-12), 0.0)
        gx, gy = np.meshgrid(xs, ys)
        geo = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(bin_size))], axis=1)
        all_vecs.append(vecs)
        all_geo.append(geo)
    if not all_vecs:
        return DescriptorSet(np.zeros((0, 128), dtype=np.float32))
    return DescriptorSet(np.concatenate(all_vecs).astype(np.float32),
                         np.concatenate(all_geo).astype(np.float32))


def dense_grid_count(length: int, window: int, step: int) -> int:
    """Closed-form count of dense grid positions along one axis."""
    half = window // 2
    if length - half < half:
        return 0
    return (length - 2 * half) // step + 1
