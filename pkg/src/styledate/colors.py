"""Color descriptors: the 11-term color-name probabilities, the learned
discriminative color partition, and the regional color co-occurrence matrix
with its Lab-space codebook.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import to_lab
from .descriptors import DescriptorSet
from .encoding import KMeansQuantizer
from .errors import DecodeError, InsufficientPixels, TooFewBins

COLOR_NAMES = ("black", "blue", "brown", "grey", "green", "orange",
               "pink", "purple", "red", "white", "yellow")

# fallback hue sectors (degrees) and value/saturation gates, documented in the
# README color-table format notes
_BLACK_V = 0.15
_ACHROMA_S = 0.12
_WHITE_V = 0.85
_BROWN_V = 0.55
_HUE_SECTORS = (
    (20.0, 45.0, "orange"),     # brown when dark, see _BROWN_V
    (45.0, 70.0, "yellow"),
    (70.0, 165.0, "green"),
    (165.0, 260.0, "blue"),
    (260.0, 320.0, "purple"),
    (320.0, 345.0, "pink"),
)


@dataclass
class ColorNameTable:
    """Per-RGB-bin probabilities over the eleven color terms."""

    resolution: int
    probs: np.ndarray  # resolution^3 x 11, rows sum to 1

    def __post_init__(self):
        expected = (self.resolution ** 3, len(COLOR_NAMES))
        if self.probs.shape != expected:
            raise ValueError(f"color table shape {self.probs.shape}, expected {expected}")

    def bin_index(self, rgb: np.ndarray) -> np.ndarray:
        """Nearest table bin per pixel for an (..., 3) block in [0, 1]."""
        res = self.resolution
        q = np.minimum((rgb * res).astype(np.intp), res - 1)
        return (q[..., 0] * res + q[..., 1]) * res + q[..., 2]


def _rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.maximum(v, 1e-12), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        hue = np.where(
            c == 0, 0.0,
            np.where(v == r, np.mod((g - b) / np.maximum(c, 1e-12), 6.0),
                     np.where(v == g, (b - r) / np.maximum(c, 1e-12) + 2.0,
                              (r - g) / np.maximum(c, 1e-12) + 4.0)))
    return hue * 60.0, s, v


def fallback_color_table(resolution: int = 32) -> ColorNameTable:
    """Analytic one-hot table from fixed HSV rules, used when no learned
    color-name table file is supplied."""
    res = resolution
    centers = (np.arange(res) + 0.5) / res
    rr, gg, bb = np.meshgrid(centers, centers, centers, indexing="ij")
    rgb = np.stack([rr.ravel(), gg.ravel(), bb.ravel()], axis=1)
    h, s, v = _rgb_to_hsv(rgb)

    names = np.full(len(rgb), COLOR_NAMES.index("red"))
    for lo, hi, name in _HUE_SECTORS:
        names[(h >= lo) & (h < hi)] = COLOR_NAMES.index(name)
    orange = names == COLOR_NAMES.index("orange")
    names[orange & (v < _BROWN_V)] = COLOR_NAMES.index("brown")
    achroma = s < _ACHROMA_S
    names[achroma] = COLOR_NAMES.index("grey")
    names[achroma & (v > _WHITE_V)] = COLOR_NAMES.index("white")
    names[v < _BLACK_V] = COLOR_NAMES.index("black")

    probs = np.zeros((len(rgb), len(COLOR_NAMES)))
    probs[np.arange(len(rgb)), names] = 1.0
    return ColorNameTable(resolution=res, probs=probs)


def save_color_table(path: str, table: ColorNameTable) -> None:
    res = table.resolution
    centers = (np.arange(res) + 0.5) / res
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "g", "b"] + list(COLOR_NAMES))
        for idx in range(res ** 3):
            ri, rem = divmod(idx, res * res)
            gi, bi = divmod(rem, res)
            row = [f"{centers[ri]:.6f}", f"{centers[gi]:.6f}", f"{centers[bi]:.6f}"]
            row += [f"{p:.8g}" for p in table.probs[idx]]
            writer.writerow(row)


def load_color_table(path: str) -> ColorNameTable:
    """Read the CSV table (header `r,g,b,black,...,yellow`, one row per bin center)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["r", "g", "b"] + list(COLOR_NAMES):
            raise DecodeError(f"{path}: bad color-table header")
        rows = [row for row in reader if row]
    res = round(len(rows) ** (1.0 / 3.0))
    if res ** 3 != len(rows):
        raise DecodeError(f"{path}: row count {len(rows)} is not a cube")
    probs = np.zeros((res ** 3, len(COLOR_NAMES)))
    for row in rows:
        rgb = np.array([float(row[0]), float(row[1]), float(row[2])])
        q = np.minimum((rgb * res).astype(int), res - 1)
        idx = (q[0] * res + q[1]) * res + q[2]
        p = np.array([float(x) for x in row[3:]])
        if abs(p.sum() - 1.0) > 1e-6 or p.min() < 0:
            raise DecodeError(f"{path}: row for bin {idx} is not a probability vector")
        probs[idx] = p
    return ColorNameTable(resolution=res, probs=probs)


def cn_descriptor(region: np.ndarray, table: ColorNameTable) -> np.ndarray:
    """Mean color-name probability vector over a pixel region (11-dim)."""
    rgb = region.reshape(-1, 3)
    if len(rgb) == 0:
        raise ValueError("cn_descriptor: empty region")
    return table.probs[table.bin_index(rgb)].mean(axis=0)


# ---------------------------------------------------------------------------
# discriminative color partition (information-bottleneck merging)
# ---------------------------------------------------------------------------

def _lab_bin_indices(lab: np.ndarray, bins: int) -> np.ndarray:
    lq = np.clip((lab[..., 0] / 100.0 * bins).astype(np.intp), 0, bins - 1)
    aq = np.clip(((lab[..., 1] + 128.0) / 256.0 * bins).astype(np.intp), 0, bins - 1)
    bq = np.clip(((lab[..., 2] + 128.0) / 256.0 * bins).astype(np.intp), 0, bins - 1)
    return (lq * bins + aq) * bins + bq


def _lab_bin_centers(bins: int) -> np.ndarray:
    ls = (np.arange(bins) + 0.5) / bins * 100.0
    ab = (np.arange(bins) + 0.5) / bins * 256.0 - 128.0
    ll, aa, bb = np.meshgrid(ls, ab, ab, indexing="ij")
    return np.stack([ll.ravel(), aa.ravel(), bb.ravel()], axis=1)


def mutual_information(joint: np.ndarray) -> float:
    """I(row; column) of a joint count (or probability) table."""
    p = joint / joint.sum()
    pr = p.sum(axis=1, keepdims=True)
    pc = p.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(p > 0, p * np.log(p / (pr * pc)), 0.0)
    return float(terms.sum())


def _information_contribution(rows: np.ndarray, class_marginal: np.ndarray) -> np.ndarray:
    """Per-row contribution to I(cluster; class); rows are joint probabilities."""
    s = rows.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(rows > 0, rows * np.log(rows / (s * class_marginal)), 0.0)
    return terms.sum(axis=-1)


class DiscriminativeColorPartition(BaseEstimator):
    """Quantizes Lab space and merges bins into `r` categories by repeatedly
    joining the pair of clusters that loses the least class mutual information.

    Attributes after fit: `assignment_` maps every Lab bin (occupied or not)
    to a category; `joint_counts_` holds the occupied-bin class counts;
    `merge_log_` records each (i, j, cost) merge over positions in the
    occupied-bin list, and `mi_trace_` the mutual information after each merge.
    """

    def __init__(self, r=25, bins=8):
        self.r = r
        self.bins = bins

    def fit(self, X, y):
        """X: list of H x W x 3 sRGB pixel blocks; y: per-image class indices."""
        y = np.asarray(y)
        if len(np.unique(y)) < 2:
            raise ValueError("partition training needs at least 2 classes")
        n_classes = int(y.max()) + 1
        total_bins = self.bins ** 3
        counts = np.zeros((total_bins, n_classes))
        for pixels, cls in zip(X, y):
            idx = _lab_bin_indices(to_lab(pixels), self.bins)
            counts[:, cls] += np.bincount(idx.ravel(), minlength=total_bins)

        occupied = np.nonzero(counts.sum(axis=1) > 0)[0]
        if len(occupied) < self.r:
            raise TooFewBins(f"{len(occupied)} occupied Lab bins < r={self.r}")
        self.occupied_bins_ = occupied
        self.joint_counts_ = counts[occupied]

        joint = self.joint_counts_ / self.joint_counts_.sum()
        class_marginal = joint.sum(axis=0)
        member = {i: [i] for i in range(len(occupied))}
        rows = {i: joint[i].copy() for i in range(len(occupied))}
        contrib = {i: float(_information_contribution(rows[i][None, :], class_marginal)[0])
                   for i in rows}

        def pair_cost(i, j):
            merged = rows[i] + rows[j]
            after = float(_information_contribution(merged[None, :], class_marginal)[0])
            return contrib[i] + contrib[j] - after

        alive = sorted(rows)
        costs = {}
        for a_idx, i in enumerate(alive):
            for j in alive[a_idx + 1:]:
                costs[(i, j)] = pair_cost(i, j)

        self.merge_log_ = []
        self.mi_trace_ = [sum(contrib.values())]
        while len(alive) > self.r:
            (i, j), cost = min(costs.items(), key=lambda kv: (kv[1], kv[0]))
            rows[i] = rows[i] + rows[j]
            contrib[i] = float(_information_contribution(rows[i][None, :], class_marginal)[0])
            member[i].extend(member[j])
            del rows[j], contrib[j], member[j]
            alive.remove(j)
            costs = {k: v for k, v in costs.items() if j not in k}
            for k in alive:
                if k != i:
                    key = (min(i, k), max(i, k))
                    costs[key] = pair_cost(*key)
            self.merge_log_.append((i, j, cost))
            self.mi_trace_.append(sum(contrib.values()))

        # deterministic category ids: order clusters by smallest member position
        order = sorted(alive, key=lambda i: min(member[i]))
        assignment = np.full(total_bins, -1, dtype=np.intp)
        for cat, i in enumerate(order):
            assignment[occupied[member[i]]] = cat

        # unoccupied bins adopt the category of the nearest occupied bin
        centers = _lab_bin_centers(self.bins)
        missing = np.nonzero(assignment < 0)[0]
        if len(missing):
            occ_centers = centers[occupied]
            d2 = (
                np.einsum("ij,ij->i", centers[missing], centers[missing])[:, None]
                - 2.0 * centers[missing] @ occ_centers.T
                + np.einsum("ij,ij->i", occ_centers, occ_centers)[None, :]
            )
            assignment[missing] = assignment[occupied[np.argmin(d2, axis=1)]]
        self.assignment_ = assignment
        self.n_classes_ = n_classes
        return self

    def transform(self, regions) -> np.ndarray:
        return np.stack([dd_descriptor(r, self) for r in regions])


def dd_descriptor(region: np.ndarray, part: DiscriminativeColorPartition) -> np.ndarray:
    """Normalized histogram of partition-category memberships over a region."""
    lab = to_lab(region.reshape(-1, 3))
    if len(lab) == 0:
        raise ValueError("dd_descriptor: empty region")
    cats = part.assignment_[_lab_bin_indices(lab, part.bins)]
    hist = np.bincount(cats, minlength=part.r).astype(np.float64)
    return hist / hist.sum()


# ---------------------------------------------------------------------------
# color codebook and regional co-occurrence
# ---------------------------------------------------------------------------

def train_color_codebook(images, codes: int = 128, seed: int = 0,
                         sample_cap: int = 200_000) -> KMeansQuantizer:
    """K-means over a uniform subsample of Lab pixels pooled from `images`."""
    rng = np.random.default_rng(seed)
    per_image = max(1, sample_cap // max(len(images), 1))
    pools = []
    for pixels in images:
        lab = to_lab(pixels).reshape(-1, 3)
        if len(lab) > per_image:
            lab = lab[rng.choice(len(lab), size=per_image, replace=False)]
        pools.append(lab)
    pool = np.concatenate(pools) if pools else np.zeros((0, 3))
    if len(pool) < codes:
        raise InsufficientPixels(f"{len(pool)} sampled pixels < {codes} codes")
    if len(pool) > sample_cap:
        pool = pool[rng.choice(len(pool), size=sample_cap, replace=False)]
    return KMeansQuantizer(n_clusters=codes, seed=seed).fit(pool)


def rcc_descriptor(pixels: np.ndarray, book: KMeansQuantizer, grid: int = 4) -> np.ndarray:
    """L1-normalized sum of co-occurrence outer products over 4-adjacent cells.

    The image is cut into grid x grid cells (remainder pixels absorbed by the
    last row/column); each cell's histogram counts nearest-codebook
    assignments; every ordered adjacent pair (a, b) contributes
    outer(H^a, H^b). Returns the flattened codes^2 matrix.
    """
    h, w = pixels.shape[:2]
    if grid < 2:
        raise ValueError("rcc grid must be >= 2")
    if h < grid or w < grid:
        raise ValueError(f"image {h}x{w} smaller than grid {grid}")
    n_codes = book.centers_.shape[0]
    codes = book.predict(to_lab(pixels).reshape(-1, 3)).reshape(h, w)

    ys = [i * (h // grid) for i in range(grid)] + [h]
    xs = [j * (w // grid) for j in range(grid)] + [w]
    hists = np.empty((grid, grid, n_codes))
    for i in range(grid):
        for j in range(grid):
            cell = codes[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
            hists[i, j] = np.bincount(cell.ravel(), minlength=n_codes)

    matrix = np.zeros((n_codes, n_codes))
    for i in range(grid):
        for j in range(grid):
            if j + 1 < grid:
                matrix += np.outer(hists[i, j], hists[i, j + 1])
                matrix += np.outer(hists[i, j + 1], hists[i, j])
            if i + 1 < grid:
                matrix += np.outer(hists[i, j], hists[i + 1, j])
                matrix += np.outer(hists[i + 1, j], hists[i, j])
    total = matrix.sum()
    if total > 0:
        matrix /= total
    return matrix.ravel()


# ---------------------------------------------------------------------------
# dense color patches for the bag-of-words encoders
# ---------------------------------------------------------------------------

def _integral_patch_means(channel_map: np.ndarray, ys: np.ndarray, xs: np.ndarray,
                          side: int) -> np.ndarray:
    """Mean of an H x W x C map over side x side patches centered on a grid."""
    sat = channel_map.cumsum(axis=0).cumsum(axis=1)
    sat = np.pad(sat, ((1, 0), (1, 0), (0, 0)))
    half = side // 2
    y0, y1 = ys - half, ys - half + side
    x0, x1 = xs - half, xs - half + side
    tl = sat[np.ix_(y0, x0)]
    tr = sat[np.ix_(y0, x1)]
    bl = sat[np.ix_(y1, x0)]
    br = sat[np.ix_(y1, x1)]
    return (br - bl - tr + tl) / float(side * side)


def _patch_grid(length: int, side: int, step: int) -> np.ndarray:
    half = side // 2
    return np.arange(half, length - half + 1, step, dtype=np.intp)


def extract_cn_patches(pixels: np.ndarray, table: ColorNameTable, step: int = 5,
                       sides: tuple[int, ...] = (12, 20)) -> DescriptorSet:
    """One color-name vector per patch on a regular grid at each patch size."""
    h, w = pixels.shape[:2]
    prob_map = table.probs[table.bin_index(pixels)]
    vecs, geo = [], []
    for side in sides:
        ys, xs = _patch_grid(h, side, step), _patch_grid(w, side, step)
        if len(ys) == 0 or len(xs) == 0:
            continue
        means = _integral_patch_means(prob_map, ys, xs, side)
        vecs.append(means.reshape(-1, len(COLOR_NAMES)))
        gx, gy = np.meshgrid(xs, ys)
        geo.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(side))], axis=1))
    if not vecs:
        return DescriptorSet(np.zeros((0, len(COLOR_NAMES)), dtype=np.float32))
    return DescriptorSet(np.concatenate(vecs).astype(np.float32),
                         np.concatenate(geo).astype(np.float32))


def extract_dd_patches(pixels: np.ndarray, part: DiscriminativeColorPartition,
                       step: int = 5, sides: tuple[int, ...] = (12, 20)) -> DescriptorSet:
    """One partition-category histogram per patch on a regular grid."""
    h, w = pixels.shape[:2]
    cats = part.assignment_[_lab_bin_indices(to_lab(pixels), part.bins)]
    onehot = np.zeros((h, w, part.r))
    np.put_along_axis(onehot, cats[..., None], 1.0, axis=2)
    vecs, geo = [], []
    for side in sides:
        ys, xs = _patch_grid(h, side, step), _patch_grid(w, side, step)
        if len(ys) == 0 or len(xs) == 0:
            continue
        means = _integral_patch_means(onehot, ys, xs, side)
        vecs.append(means.reshape(-1, part.r))
        gx, gy = np.meshgrid(xs, ys)
        geo.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(side))], axis=1))
    if not vecs:
        return DescriptorSet(np.zeros((0, part.r), dtype=np.float32))
    return DescriptorSet(np.concatenate(vecs).astype(np.float32),
                         np.concatenate(geo).astype(np.float32))
