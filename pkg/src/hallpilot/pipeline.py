"""Preprocessing and augmentation operators, composable into a PipelineSpec.

Image currency is numpy: (H, W, 3) uint8 for color, (H, W) for single-channel,
float arrays in [0, 1] where an op documents unit-float output. Every operator
is deterministic given its seed; batch application derives per-sample seeds as
``seed ^ sample_id`` so parallel and serial runs agree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .recorder import Dataset, Sample, bin_index


# ---------------------------------------------------------------------------
# label binning

def label_to_bin(angle: float, n_bins: int) -> int:
    """Uniform bins over [-1, 1]; n_bins must be odd so 0 is a bin center."""
    if n_bins % 2 == 0:
        raise ValueError("n_bins must be odd")
    if abs(angle) > 1.0:
        raise ValueError(f"|angle| must be <= 1, got {angle}")
    return bin_index(angle, n_bins)


def bin_to_angle(index: int, n_bins: int) -> float:
    if n_bins % 2 == 0:
        raise ValueError("n_bins must be odd")
    if not 0 <= index < n_bins:
        raise ValueError(f"bin index {index} out of range for {n_bins} bins")
    return -1.0 + (index + 0.5) * 2.0 / n_bins


# ---------------------------------------------------------------------------
# geometric / photometric ops

def reflect_image(image: np.ndarray) -> np.ndarray:
    """Mirror about the vertical axis: pixel (r, c) -> (r, W-1-c)."""
    return np.ascontiguousarray(image[:, ::-1])


def reflect(sample: Sample) -> Sample:
    """Mirrored sample: image (and depth) flipped horizontally, angle negated."""
    return replace(sample, rgb=reflect_image(sample.rgb),
                   depth=None if sample.depth is None else reflect_image(sample.depth),
                   angle=-sample.angle)


def gaussian_noise(image: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) in unit-float space, clamped to [0, 1]."""
    rng = np.random.default_rng(seed)
    as_bytes = image.dtype == np.uint8
    x = image.astype(np.float64) / 255.0 if as_bytes else image.astype(np.float64)
    x = np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)
    if as_bytes:
        return np.round(x * 255.0).astype(np.uint8)
    return x


def _bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner alignment (output corners sample input corners)."""
    h, w = image.shape[:2]
    x = image.astype(np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    ys = np.linspace(0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    tl = x[np.ix_(y0, x0)]
    tr = x[np.ix_(y0, x1)]
    bl = x[np.ix_(y1, x0)]
    br = x[np.ix_(y1, x1)]
    # incremental lerp form keeps constant inputs exactly constant
    top = tl + fx * (tr - tl)
    bot = bl + fx * (br - bl)
    out = top + fy * (bot - top)
    if image.ndim == 2:
        out = out[:, :, 0]
    if image.dtype == np.uint8:
        return np.round(np.clip(out, 0, 255)).astype(np.uint8)
    return out


def crop_scale(image: np.ndarray, crop: tuple[int, int, int, int] | None = None,
               out_hw: tuple[int, int] = (100, 200)) -> np.ndarray:
    """Crop a window (default 220x400 road band of a 480x640 frame) and
    bilinear-resize to out_hw.

    crop is (top, left, height, width); when None it defaults to rows 200..420
    with the 400 columns centered, scaled proportionally for other input sizes.
    """
    h, w = image.shape[:2]
    if crop is None:
        ch = round(h * 220 / 480)
        cw = round(w * 400 / 640)
        top = round(h * 200 / 480)
        left = (w - cw) // 2
        crop = (top, left, ch, cw)
    top, left, ch, cw = crop
    if top < 0 or left < 0 or ch <= 0 or cw <= 0 or top + ch > h or left + cw > w:
        raise ValueError(f"crop rect {crop} outside {h}x{w} image")
    window = image[top:top + ch, left:left + cw]
    return _bilinear_resize(window, out_hw[0], out_hw[1])


# ---------------------------------------------------------------------------
# color schemes

def _to_unit(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return image.astype(np.float64)


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    h = np.zeros_like(mx)
    nz = delta > 0
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    with np.errstate(invalid="ignore", divide="ignore"):
        h[rmax] = (((g - b) / delta)[rmax] / 6.0) % 1.0
        h[gmax] = (((b - r) / delta)[gmax] / 6.0 + 1.0 / 3.0) % 1.0
        h[bmax] = (((r - g) / delta)[bmax] / 6.0 + 2.0 / 3.0) % 1.0
        s = np.where(mx > 0, delta / np.maximum(mx, 1e-300), 0.0)
    return np.stack([h, s, mx], axis=-1)


def _rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    # sRGB -> linear -> XYZ (D65) -> CIELAB
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    xyz = lin @ m.T
    white = np.array([0.95047, 1.0, 1.08883])
    t = xyz / white
    f = np.where(t > (6 / 29) ** 3, np.cbrt(t), t / (3 * (6 / 29) ** 2) + 4 / 29)
    l = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([l, a, b], axis=-1)


def _rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    # BT.601, unit scale with chroma centered at 0.5
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 + (b - y) / 1.772
    cr = 0.5 + (r - y) / 1.402
    return np.stack([y, cb, cr], axis=-1)


def color_convert(image: np.ndarray, scheme: str) -> np.ndarray:
    """Convert an RGB image to the named scheme; returns float64 channels.

    HXY replaces hue with the two channels (cos 2*pi*H + 1)/2 and
    (sin 2*pi*H + 1)/2, giving a 4-channel (X, Y, S, V) image.
    """
    rgb = _to_unit(image)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("color_convert expects an (H, W, 3) RGB image")
    scheme = scheme.upper()
    if scheme == "RGB":
        return rgb
    if scheme == "HSV":
        return _rgb_to_hsv(rgb)
    if scheme == "LAB":
        return _rgb_to_lab(rgb)
    if scheme == "YCBCR":
        return _rgb_to_ycbcr(rgb)
    if scheme == "HXY":
        hsv = _rgb_to_hsv(rgb)
        twopi_h = 2.0 * math.pi * hsv[..., 0]
        x = (np.cos(twopi_h) + 1.0) / 2.0
        y = (np.sin(twopi_h) + 1.0) / 2.0
        return np.stack([x, y, hsv[..., 1], hsv[..., 2]], axis=-1)
    raise ValueError(f"unknown color scheme {scheme!r}")


# ---------------------------------------------------------------------------
# k-means quantization

def kmeans_quantize(image: np.ndarray, k: int, restarts: int = 3,
                    seed: int = 0, max_iter: int = 20) -> np.ndarray:
    """Reduce the image to at most k colors with restarted Lloyd's algorithm.

    Runs on the distinct colors weighted by their pixel counts (identical
    result to per-pixel Lloyd, much cheaper on shaded renders); keeps the
    restart with the lowest within-cluster sum of squares.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pixels = image.reshape(-1, image.shape[-1]) if image.ndim == 3 else image.reshape(-1, 1)
    colors, inverse, counts = np.unique(pixels, axis=0, return_inverse=True,
                                        return_counts=True)
    if len(colors) < k:
        return image.copy()
    pts = colors.astype(np.float64)
    wts = counts.astype(np.float64)
    rng = np.random.default_rng(seed)
    best_centroids, best_wcss = None, np.inf
    for _ in range(max(restarts, 1)):
        centroids = pts[rng.choice(len(pts), size=k, replace=False)]
        assign = np.full(len(pts), -1)
        for _ in range(max_iter):
            d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            new_assign = np.argmin(d2, axis=1)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for c in range(k):
                sel = assign == c
                if np.any(sel):
                    centroids[c] = np.average(pts[sel], axis=0, weights=wts[sel])
                else:
                    centroids[c] = pts[rng.integers(len(pts))]
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        wcss = float((wts * d2[np.arange(len(pts)), assign]).sum())
        if wcss < best_wcss:
            best_wcss, best_centroids = wcss, centroids.copy()
            best_assign = assign.copy()
    quant = best_centroids[best_assign]          # distinct color -> centroid
    out = quant[inverse]
    if image.dtype == np.uint8:
        out = np.round(np.clip(out, 0, 255)).astype(np.uint8)
    return out.reshape(image.shape)


# ---------------------------------------------------------------------------
# edges and lines

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def _gray(image: np.ndarray) -> np.ndarray:
    x = _to_unit(image)
    if x.ndim == 3:
        return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]
    return x


def _correlate3(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    p = np.pad(x, 1, mode="edge")
    out = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            if kernel[dy, dx] != 0:
                out += kernel[dy, dx] * p[dy:dy + x.shape[0], dx:dx + x.shape[1]]
    return out


def edge_map(image: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Sobel gradient magnitude binarized at threshold; returns uint8 {0, 255}."""
    g = _gray(image)
    gx = _correlate3(g, _SOBEL_X)
    gy = _correlate3(g, _SOBEL_X.T)
    mag = np.hypot(gx, gy)
    return np.where(mag >= threshold, 255, 0).astype(np.uint8)


@dataclass
class Line:
    rho: float          # pixels
    theta: float        # radians in [0, pi)
    votes: int


def hough_lines(binary: np.ndarray, rho_res: float = 1.0,
                theta_res: float = math.pi / 180.0,
                threshold: int | None = None,
                max_lines: int = 10) -> list[Line]:
    """Detect lines via an (rho, theta) accumulator with 3x3 peak suppression.

    threshold defaults to 0.3 * the accumulator maximum. Lines come back
    sorted by votes, strongest first.
    """
    h, w = binary.shape[:2]
    ys, xs = np.nonzero(binary)
    n_theta = max(int(round(math.pi / theta_res)), 1)
    diag = math.hypot(h, w)
    n_rho = int(2 * diag / rho_res) + 1
    acc = np.zeros((n_theta, n_rho), dtype=np.int64)
    if len(xs):
        thetas = np.arange(n_theta) * theta_res
        for ti, th in enumerate(thetas):
            rho = xs * math.cos(th) + ys * math.sin(th)
            idx = np.round((rho + diag) / rho_res).astype(int)
            acc[ti] += np.bincount(idx, minlength=n_rho)
    if threshold is None:
        threshold = max(int(0.3 * acc.max()), 1)
    padded = np.pad(acc, 1, constant_values=-1)
    neighborhood = np.max(
        [padded[dy:dy + n_theta, dx:dx + n_rho]
         for dy in range(3) for dx in range(3)], axis=0)
    peaks = np.argwhere((acc >= threshold) & (acc >= neighborhood) & (acc > 0))
    lines = [Line(rho=float(ri * rho_res - diag), theta=float(ti * theta_res),
                  votes=int(acc[ti, ri])) for ti, ri in peaks]
    lines.sort(key=lambda l: (-l.votes, l.theta, l.rho))
    return lines[:max_lines]


# ---------------------------------------------------------------------------
# patch compositing

def _homography_unit_square(quad: np.ndarray) -> np.ndarray:
    """3x3 homography mapping the unit square corners to the quad corners."""
    src = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float64)
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((u, v), (x, y)) in enumerate(zip(src, quad)):
        a[2 * i] = [u, v, 1, 0, 0, 0, -u * x, -v * x]
        a[2 * i + 1] = [0, 0, 0, u, v, 1, -u * y, -v * y]
        b[2 * i] = x
        b[2 * i + 1] = y
    hvec = np.linalg.solve(a, b)
    return np.append(hvec, 1.0).reshape(3, 3)


def composite_patch(image: np.ndarray, patch: np.ndarray,
                    quad) -> np.ndarray:
    """Warp a patch onto a convex quad via the unit-square homography.

    quad holds 4 (x, y) corners ordered TL, TR, BR, BL of the patch; pixels
    whose centers fall outside the quad are untouched.
    """
    quad = np.asarray(quad, dtype=np.float64).reshape(4, 2)
    h, w = image.shape[:2]
    cross = []
    for i in range(4):
        e1 = quad[(i + 1) % 4] - quad[i]
        e2 = quad[(i + 2) % 4] - quad[(i + 1) % 4]
        cross.append(e1[0] * e2[1] - e1[1] * e2[0])
    cross = np.array(cross)
    if np.any(np.abs(cross) < 1e-12):
        raise ValueError("degenerate quad (collinear corners)")
    if not (np.all(cross > 0) or np.all(cross < 0)):
        raise ValueError("quad must be convex")
    if (quad[:, 0].min() < 0 or quad[:, 1].min() < 0
            or quad[:, 0].max() > w or quad[:, 1].max() > h):
        raise ValueError("quad outside image bounds")

    hom = _homography_unit_square(quad)
    hom_inv = np.linalg.inv(hom)

    x0 = int(math.floor(quad[:, 0].min()))
    x1 = int(math.ceil(quad[:, 0].max()))
    y0 = int(math.floor(quad[:, 1].min()))
    y1 = int(math.ceil(quad[:, 1].max()))
    gx, gy = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)

    sign = 1.0 if np.all(cross > 0) else -1.0
    inside = np.ones(gx.shape, dtype=bool)
    for i in range(4):
        ex, ey = quad[(i + 1) % 4] - quad[i]
        inside &= sign * (ex * (gy - quad[i][1]) - ey * (gx - quad[i][0])) >= 0

    pts = np.stack([gx[inside], gy[inside], np.ones(inside.sum())])
    uvw = hom_inv @ pts
    u = uvw[0] / uvw[2]
    v = uvw[1] / uvw[2]
    ph, pw = patch.shape[:2]
    px = np.clip(u * pw - 0.5, 0, pw - 1)
    py = np.clip(v * ph - 0.5, 0, ph - 1)

    pf = patch.astype(np.float64)
    if pf.ndim == 2:
        pf = pf[:, :, None]
    ix0 = np.floor(px).astype(int)
    iy0 = np.floor(py).astype(int)
    ix1 = np.minimum(ix0 + 1, pw - 1)
    iy1 = np.minimum(iy0 + 1, ph - 1)
    fx = (px - ix0)[:, None]
    fy = (py - iy0)[:, None]
    top = pf[iy0, ix0] + fx * (pf[iy0, ix1] - pf[iy0, ix0])
    bot = pf[iy1, ix0] + fx * (pf[iy1, ix1] - pf[iy1, ix0])
    vals = top + fy * (bot - top)
    if patch.ndim == 2:
        vals = vals[:, 0]
    if image.dtype == np.uint8:
        vals = np.round(np.clip(vals, 0, 255)).astype(np.uint8)

    out = image.copy()
    yy, xx = np.nonzero(inside)
    out[yy + y0, xx + x0] = vals
    return out


# ---------------------------------------------------------------------------
# dataset-level augmentation

def rebalance_omit(dataset: Dataset, straight_bin_cap: float, seed: int = 0,
                   n_bins: int = 15) -> Dataset:
    """Subsample the straight bin so its share of the dataset is <= cap."""
    cap = straight_bin_cap
    if not 0 < cap <= 1:
        raise ValueError(f"cap must be in (0, 1], got {cap}")
    straight = label_to_bin(0.0, n_bins)
    s_idx = [i for i, s in enumerate(dataset.samples)
             if bin_index(s.angle, n_bins) == straight]
    others = len(dataset) - len(s_idx)
    if cap == 1 or len(dataset) == 0:
        return Dataset(samples=list(dataset.samples), root=dataset.root,
                       metadata=dict(dataset.metadata))
    keep_n = math.floor(cap * others / (1 - cap))
    if keep_n >= len(s_idx):
        return Dataset(samples=list(dataset.samples), root=dataset.root,
                       metadata=dict(dataset.metadata))
    rng = np.random.default_rng(seed)
    keep = set(np.asarray(rng.choice(len(s_idx), size=keep_n, replace=False)))
    drop = {s_idx[i] for i in range(len(s_idx)) if i not in keep}
    samples = [s for i, s in enumerate(dataset.samples) if i not in drop]
    return Dataset(samples=samples, root=dataset.root,
                   metadata=dict(dataset.metadata))


def add_reflection(dataset: Dataset) -> Dataset:
    """Union of the dataset with its reflection; new ids continue the sequence."""
    samples = list(dataset.samples)
    next_id = max((s.id for s in samples), default=-1) + 1
    for s in dataset.samples:
        r = reflect(s)
        samples.append(replace(r, id=next_id))
        next_id += 1
    return Dataset(samples=samples, root=dataset.root,
                   metadata=dict(dataset.metadata))


# ---------------------------------------------------------------------------
# declarative pipeline

def _op_reflect(rgb, angle, params, rng):
    return reflect_image(rgb), -angle


def _op_noise(rgb, angle, params, rng):
    return gaussian_noise(rgb, params["sigma"], seed=rng.integers(2 ** 31)), angle


def _op_crop_scale(rgb, angle, params, rng):
    crop = tuple(params["crop"]) if params.get("crop") else None
    out_hw = (params.get("out_h", 100), params.get("out_w", 200))
    return crop_scale(rgb, crop=crop, out_hw=out_hw), angle


def _op_color(rgb, angle, params, rng):
    return color_convert(rgb, params["scheme"]), angle


def _op_kmeans(rgb, angle, params, rng):
    return kmeans_quantize(rgb, params["k"], restarts=params.get("restarts", 3),
                           seed=rng.integers(2 ** 31)), angle


def _op_edges(rgb, angle, params, rng):
    return edge_map(rgb, threshold=params.get("threshold", 0.5)), angle


SAMPLE_OPS = {
    "reflect": (_op_reflect, set(), set()),
    "gaussian_noise": (_op_noise, {"sigma"}, set()),
    "crop_scale": (_op_crop_scale, set(), {"crop", "out_h", "out_w"}),
    "color_convert": (_op_color, {"scheme"}, set()),
    "kmeans_quantize": (_op_kmeans, {"k"}, {"restarts"}),
    "edge_map": (_op_edges, set(), {"threshold"}),
}

DATASET_OPS = {
    "rebalance_omit": ({"cap"}, {"n_bins"}),
    "add_reflection": (set(), set()),
}


@dataclass
class PipelineSpec:
    """Ordered operator chain, JSON-serializable, applied train == inference."""

    ops: list[dict]

    def __post_init__(self):
        for op in self.ops:
            name = op.get("op")
            params = {k: v for k, v in op.items() if k != "op"}
            if name in SAMPLE_OPS:
                _, required, optional = SAMPLE_OPS[name]
            elif name in DATASET_OPS:
                required, optional = DATASET_OPS[name]
            else:
                raise ValueError(f"unknown pipeline op {name!r}")
            missing = required - params.keys()
            if missing:
                raise ValueError(f"op {name!r} missing params {sorted(missing)}")
            unknown = params.keys() - required - optional
            if unknown:
                raise ValueError(f"op {name!r} has unknown params {sorted(unknown)}")

    @classmethod
    def from_json(cls, text: str) -> "PipelineSpec":
        return cls(ops=json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.ops, indent=2)

    def apply_image(self, rgb: np.ndarray, angle: float = 0.0,
                    sample_id: int = 0, seed: int = 0) -> tuple[np.ndarray, float]:
        """Run the per-sample ops on one image (dataset-level ops are skipped)."""
        rng = np.random.default_rng(seed ^ sample_id)
        for op in self.ops:
            name = op["op"]
            if name in DATASET_OPS:
                continue
            fn, _, _ = SAMPLE_OPS[name]
            rgb, angle = fn(rgb, angle, op, rng)
        return rgb, angle

    def apply_dataset(self, dataset: Dataset, seed: int = 0) -> Dataset:
        """Run all ops in order over a dataset.

        Each sample id owns one rng for the whole chain (seeded seed ^ id),
        so per-sample results match apply_image on the same id.
        """
        rngs: dict[int, np.random.Generator] = {}

        def rng_for(sid: int) -> np.random.Generator:
            if sid not in rngs:
                rngs[sid] = np.random.default_rng(seed ^ sid)
            return rngs[sid]

        for op in self.ops:
            name = op["op"]
            if name == "rebalance_omit":
                dataset = rebalance_omit(dataset, op["cap"], seed=seed,
                                         n_bins=op.get("n_bins", 15))
            elif name == "add_reflection":
                dataset = add_reflection(dataset)
            else:
                fn, _, _ = SAMPLE_OPS[name]
                samples = []
                for s in dataset.samples:
                    rgb, angle = fn(s.rgb, s.angle, op, rng_for(s.id))
                    samples.append(replace(s, rgb=rgb, angle=angle))
                dataset = Dataset(samples=samples, root=dataset.root,
                                  metadata=dict(dataset.metadata))
        return dataset
