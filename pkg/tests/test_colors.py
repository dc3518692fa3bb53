import numpy as np
import pytest

from styledate import colors
from styledate.corpus import to_lab
from styledate.errors import InsufficientPixels, TooFewBins


def solid(rgb, side=16):
    return np.tile(np.asarray(rgb, dtype=np.float64), (side, side, 1))


# ---------------------------------------------------------------------------
# color names
# ---------------------------------------------------------------------------

def test_cn_is_probability_vector():
    table = colors.fallback_color_table(16)
    rng = np.random.default_rng(0)
    for _ in range(10):
        region = rng.random((7, 5, 3))
        vec = colors.cn_descriptor(region, table)
        assert vec.shape == (11,)
        assert abs(vec.sum() - 1.0) < 1e-6
        assert np.all(vec >= 0)


def test_cn_saturated_red():
    table = colors.fallback_color_table(32)
    vec = colors.cn_descriptor(solid([1.0, 0.0, 0.0]), table)
    assert vec[colors.COLOR_NAMES.index("red")] >= 0.9


def test_cn_fallback_landmarks():
    table = colors.fallback_color_table(32)
    cases = {
        (0.02, 0.02, 0.02): "black",
        (0.97, 0.97, 0.97): "white",
        (0.5, 0.5, 0.5): "grey",
        (0.1, 0.9, 0.1): "green",
        (0.1, 0.2, 0.95): "blue",
        (0.95, 0.95, 0.1): "yellow",
        (0.9, 0.55, 0.1): "orange",
        (0.45, 0.25, 0.05): "brown",
    }
    for rgb, name in cases.items():
        vec = colors.cn_descriptor(solid(rgb), table)
        assert np.argmax(vec) == colors.COLOR_NAMES.index(name), (rgb, name)


def test_cn_two_pixel_average_exact():
    table = colors.fallback_color_table(16)
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.1, 0.2, 0.95])
    region = np.stack([a, b])[None, :, :]  # 1 x 2 x 3
    pa = table.probs[table.bin_index(a[None, :])][0]
    pb = table.probs[table.bin_index(b[None, :])][0]
    assert np.array_equal(colors.cn_descriptor(region, table), (pa + pb) / 2)


def test_color_table_roundtrip(tmp_path):
    table = colors.fallback_color_table(8)
    path = tmp_path / "cn.csv"
    colors.save_color_table(str(path), table)
    back = colors.load_color_table(str(path))
    assert back.resolution == 8
    assert np.allclose(back.probs, table.probs, atol=1e-7)


def test_cn_patches_match_direct_descriptor():
    rng = np.random.default_rng(1)
    table = colors.fallback_color_table(16)
    img = rng.random((40, 40, 3))
    ds = colors.extract_cn_patches(img, table, step=7, sides=(12,))
    for vec, (x, y, side) in zip(ds.vectors, ds.geometry):
        x, y, side = int(x), int(y), int(side)
        half = side // 2
        region = img[y - half:y - half + side, x - half:x - half + side]
        assert np.allclose(vec, colors.cn_descriptor(region, table), atol=1e-5)


# ---------------------------------------------------------------------------
# discriminative partition
# ---------------------------------------------------------------------------

def test_partition_identity_when_r_equals_occupied():
    imgs = [solid([1.0, 0.0, 0.0]), solid([0.0, 0.0, 1.0])]
    part = colors.DiscriminativeColorPartition(r=2, bins=4).fit(imgs, [0, 1])
    assert part.merge_log_ == []
    cats = {part.assignment_[b] for b in part.occupied_bins_}
    assert cats == {0, 1}


def test_partition_too_few_bins():
    imgs = [solid([1.0, 0.0, 0.0]), solid([0.0, 0.0, 1.0])]
    with pytest.raises(TooFewBins):
        colors.DiscriminativeColorPartition(r=3, bins=4).fit(imgs, [0, 1])


def test_partition_groups_shades_by_class():
    # two red shades in class 0, two blue shades in class 1, r=2
    imgs = [solid([0.95, 0.05, 0.05]), solid([0.7, 0.1, 0.1]),
            solid([0.05, 0.05, 0.95]), solid([0.1, 0.15, 0.7])]
    y = [0, 0, 1, 1]
    part = colors.DiscriminativeColorPartition(r=2, bins=4).fit(imgs, y)
    cat = lambda img: int(np.argmax(colors.dd_descriptor(img, part)))
    assert cat(imgs[0]) == cat(imgs[1])
    assert cat(imgs[2]) == cat(imgs[3])
    assert cat(imgs[0]) != cat(imgs[2])


def test_partition_merges_are_argmin_and_mi_monotone():
    rng = np.random.default_rng(2)
    # random corpus occupying a handful of bins across 3 classes
    imgs, y = [], []
    for cls in range(3):
        for _ in range(4):
            imgs.append(np.clip(rng.normal(0.3 * cls + 0.2, 0.15, (8, 8, 3)), 0, 1))
            y.append(cls)
    part = colors.DiscriminativeColorPartition(r=3, bins=2).fit(imgs, y)

    # replay merges with an exhaustive independent search
    joint = part.joint_counts_ / part.joint_counts_.sum()
    marginal = joint.sum(axis=0)

    def contribution(row):
        s = row.sum()
        out = 0.0
        for p, q in zip(row, marginal):
            if p > 0:
                out += p * np.log(p / (s * q))
        return out

    rows = {i: joint[i].copy() for i in range(len(joint))}
    for i, j, cost in part.merge_log_:
        alive = sorted(rows)
        best = min(
            contribution(rows[a]) + contribution(rows[b]) - contribution(rows[a] + rows[b])
            for ai, a in enumerate(alive) for b in alive[ai + 1:]
        )
        this = contribution(rows[i]) + contribution(rows[j]) - contribution(rows[i] + rows[j])
        assert abs(this - cost) < 1e-12
        assert this <= best + 1e-12
        assert this >= -1e-12  # merging never increases information
        rows[i] = rows[i] + rows[j]
        del rows[j]

    mi = np.asarray(part.mi_trace_)
    assert np.all(np.diff(mi) <= 1e-12)


def test_partition_assigns_every_bin():
    imgs = [solid([0.9, 0.1, 0.1]), solid([0.1, 0.1, 0.9])]
    part = colors.DiscriminativeColorPartition(r=2, bins=4).fit(imgs, [0, 1])
    assert part.assignment_.shape == (64,)
    assert np.all(part.assignment_ >= 0)
    assert np.all(part.assignment_ < 2)


def test_dd_descriptor_histograms():
    imgs = [solid([0.9, 0.1, 0.1]), solid([0.1, 0.1, 0.9])]
    part = colors.DiscriminativeColorPartition(r=2, bins=4).fit(imgs, [0, 1])

    one = colors.dd_descriptor(imgs[0], part)
    assert abs(one.sum() - 1.0) < 1e-6
    assert np.isclose(one.max(), 1.0)  # region entirely inside one category

    half = np.concatenate([imgs[0][:, :8], imgs[1][:, :8]], axis=1)
    vec = colors.dd_descriptor(half, part)
    assert np.allclose(sorted(vec), [0.5, 0.5])


def test_partition_supports_r25_and_r50():
    rng = np.random.default_rng(3)
    imgs = [rng.random((12, 12, 3)) for _ in range(30)]
    y = [k % 2 for k in range(30)]
    for r in (25, 50):
        part = colors.DiscriminativeColorPartition(r=r, bins=8).fit(imgs, y)
        vec = colors.dd_descriptor(imgs[0], part)
        assert vec.shape == (r,)
        assert abs(vec.sum() - 1.0) < 1e-6


# ---------------------------------------------------------------------------
# codebook
# ---------------------------------------------------------------------------

def test_codebook_distinct_colors_fixed_point():
    rng = np.random.default_rng(4)
    palette = rng.random((32, 3))
    imgs = [solid(c, side=8) for c in palette]
    book = colors.train_color_codebook(imgs, codes=32, seed=0)
    lab = to_lab(palette.reshape(-1, 1, 3)).reshape(-1, 3)
    d2 = ((book.centers_[:, None, :] - lab[None, :, :]) ** 2).sum(axis=2)
    assert np.sqrt(d2.min(axis=1)).max() < 1e-6
    assert len(np.unique(d2.argmin(axis=1))) == 32  # a permutation, all colors hit


def test_codebook_single_code_is_mean():
    rng = np.random.default_rng(5)
    imgs = [rng.random((6, 6, 3)) for _ in range(3)]
    book = colors.train_color_codebook(imgs, codes=1, seed=0)
    pool = np.concatenate([to_lab(i).reshape(-1, 3) for i in imgs])
    assert np.allclose(book.centers_[0], pool.mean(axis=0), atol=1e-9)


def test_codebook_insufficient_pixels():
    with pytest.raises(InsufficientPixels):
        colors.train_color_codebook([solid([1, 0, 0], side=4)], codes=128)


# ---------------------------------------------------------------------------
# regional co-occurrence
# ---------------------------------------------------------------------------

def two_color_book():
    book = colors.KMeansQuantizer(n_clusters=2)
    red = to_lab(np.array([[[1.0, 0.0, 0.0]]]))[0, 0]
    blue = to_lab(np.array([[[0.0, 0.0, 1.0]]]))[0, 0]
    book.centers_ = np.stack([red, blue])
    return book


def test_rcc_uniform_image_single_entry():
    book = two_color_book()
    mat = colors.rcc_descriptor(solid([1.0, 0.0, 0.0]), book, grid=2).reshape(2, 2)
    assert mat[0, 0] == 1.0
    assert mat.sum() == 1.0


def test_rcc_two_halves_enumeration():
    book = two_color_book()
    img = np.concatenate([solid([1.0, 0.0, 0.0], 16)[:, :8],
                          solid([0.0, 0.0, 1.0], 16)[:, :8]], axis=1)
    mat = colors.rcc_descriptor(img, book, grid=2).reshape(2, 2)
    # hand enumeration: vertical pairs give (a,a) and (b,b), horizontal give (a,b) + (b,a)
    assert mat[0, 0] > 0 and mat[1, 1] > 0 and mat[0, 1] > 0 and mat[1, 0] > 0
    assert abs(mat.sum() - 1.0) < 1e-9
    assert np.isclose(mat[0, 1], mat[1, 0])
    # 2 vertical ordered pairs each of pure a and pure b: each cell 8x8=64 pixels
    # horizontal ordered pairs: 4 products of 64*64 split between (a,b) and (b,a)
    assert np.allclose(mat, np.array([[0.25, 0.25], [0.25, 0.25]]))


def rcc_oracle_reversed(pixels, book, grid):
    # independent accumulation, enumerating cells in reversed order
    h, w = pixels.shape[:2]
    n = book.centers_.shape[0]
    codes = book.predict(to_lab(pixels).reshape(-1, 3)).reshape(h, w)
    ys = [i * (h // grid) for i in range(grid)] + [h]
    xs = [j * (w // grid) for j in range(grid)] + [w]
    hists = {}
    for i in range(grid):
        for j in range(grid):
            hists[(i, j)] = np.bincount(codes[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].ravel(), minlength=n)
    mat = np.zeros((n, n))
    for i, j in sorted(hists, reverse=True):
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if (ni, nj) in hists:
                mat += np.outer(hists[(i, j)], hists[(ni, nj)])
    return (mat / mat.sum()).ravel()


def test_rcc_enumeration_order_invariant():
    rng = np.random.default_rng(6)
    book = colors.train_color_codebook([rng.random((12, 12, 3)) for _ in range(4)],
                                       codes=5, seed=1)
    img = rng.random((24, 20, 3))
    a = colors.rcc_descriptor(img, book, grid=4)
    b = rcc_oracle_reversed(img, book, grid=4)
    assert np.allclose(a, b, atol=1e-12)


def test_rcc_translation_invariance_by_cell_multiples():
    rng = np.random.default_rng(7)
    book = colors.train_color_codebook([rng.random((12, 12, 3)) for _ in range(4)],
                                       codes=4, seed=2)
    tile = rng.random((8, 8, 3))
    img = np.tile(tile, (4, 4, 1))          # 32 x 32, cell size 8 at grid 4
    rolled = np.roll(img, 8, axis=1)        # translate by exactly one cell
    a = colors.rcc_descriptor(img, book, grid=4)
    b = colors.rcc_descriptor(rolled, book, grid=4)
    assert np.allclose(a, b, atol=1e-12)


def test_rcc_sum_one():
    rng = np.random.default_rng(8)
    book = colors.train_color_codebook([rng.random((12, 12, 3)) for _ in range(4)],
                                       codes=6, seed=3)
    vec = colors.rcc_descriptor(rng.random((33, 37, 3)), book, grid=4)
    assert abs(vec.sum() - 1.0) < 1e-9
    assert np.all(vec >= 0)


def test_dd_patches_match_direct_descriptor():
    rng = np.random.default_rng(9)
    imgs = [rng.random((12, 12, 3)) for _ in range(10)]
    part = colors.DiscriminativeColorPartition(r=5, bins=4).fit(imgs, [k % 2 for k in range(10)])
    img = rng.random((40, 40, 3))
    ds = colors.extract_dd_patches(img, part, step=9, sides=(12,))
    for vec, (x, y, side) in zip(ds.vectors, ds.geometry):
        x, y, side = int(x), int(y), int(side)
        half = side // 2
        region = img[y - half:y - half + side, x - half:x - half + side]
        assert np.allclose(vec, colors.dd_descriptor(region, part), atol=1e-5)
