"""Piecewise-planar image denoising, gradient maps, segmentation and PGM I/O.

Images are 2D float arrays on a nominal 0..255 scale. Denoising runs BGAPN
with the planar parameterization (DC, column ramp, row ramp) and the
identity as measurement operator.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .bgapn import BGAPNConfig, bgapn
from .operators import (InvalidArgument, build_planar_parameterization, dif_operator,
                        identity_measurement)
from .output import RecoveryOutput

NOMINAL_RANGE = (0.0, 255.0)


class PGMError(ValueError):
    """Malformed or unsupported PGM data."""


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or min(img.shape) < 2:
        raise InvalidArgument(f"expected a 2D image of at least 2x2, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidArgument("image contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# Denoising
# ---------------------------------------------------------------------------


@dataclass
class DenoiseOptions:
    geometry: str = "2D-hv"
    epsilon: float | None = None     # absolute threshold; overrides epsilon_scale
    epsilon_scale: float = 1.0       # multiplies the BGAPN default threshold
    rows_per_iter: int | None = None
    gamma: float = 0.0
    tile: int = 64
    overlap: int = 8
    tile_above: int = 128            # tile when either side exceeds this
    clamp: tuple[float, float] | None = NOMINAL_RANGE
    threads: int = 1


@dataclass
class DenoiseReport:
    image: np.ndarray
    outputs: list[RecoveryOutput] = field(default_factory=list)

    @property
    def bound_met(self) -> bool:
        return all(o.info.get("bound_met", True) for o in self.outputs)


def _bgapn_block(block: np.ndarray, sigma: float, opts: DenoiseOptions) -> RecoveryOutput:
    h, w = block.shape
    g = block.ravel()
    eps = opts.epsilon
    if eps is None:
        span = float(np.ptp(g))
        eps = opts.epsilon_scale * (1e-3 * span if span > 0 else 1e-12)
    cfg = BGAPNConfig(noise_norm=sigma * math.sqrt(h * w), epsilon=eps,
                      rows_per_iter=opts.rows_per_iter, gamma=opts.gamma)
    return bgapn(g, identity_measurement(h * w), build_planar_parameterization(h, w),
                 dif_operator(opts.geometry, (h, w)), cfg)


def _tile_starts(size: int, tile: int, overlap: int) -> list[int]:
    if size <= tile:
        return [0]
    stride = tile - overlap
    starts = list(range(0, size - tile, stride)) + [size - tile]
    return sorted(set(starts))


def denoise_image_report(noisy, sigma: float, opts: DenoiseOptions | None = None) -> DenoiseReport:
    """Like :func:`denoise_image` but also returns the BGAPN outputs."""
    opts = opts or DenoiseOptions()
    img = _check_image(noisy)
    if sigma < 0:
        raise InvalidArgument("sigma must be >= 0")
    h, w = img.shape
    if max(h, w) <= opts.tile_above:
        out = _bgapn_block(img, sigma, opts)
        est, outputs = out.estimate.reshape(h, w), [out]
    else:
        if opts.overlap < 0 or opts.overlap >= opts.tile:
            raise InvalidArgument("overlap must lie in [0, tile)")
        boxes = [(r, c) for r in _tile_starts(h, opts.tile, opts.overlap)
                 for c in _tile_starts(w, opts.tile, opts.overlap)]

        def run(box):
            r, c = box
            return _bgapn_block(img[r:r + opts.tile, c:c + opts.tile], sigma, opts)

        if opts.threads > 1:
            with ThreadPoolExecutor(max_workers=opts.threads) as pool:
                outputs = list(pool.map(run, boxes))
        else:
            outputs = [run(b) for b in boxes]
        acc = np.zeros_like(img)
        hits = np.zeros_like(img)
        for (r, c), out in zip(boxes, outputs):
            th, tw = min(opts.tile, h - r), min(opts.tile, w - c)
            acc[r:r + th, c:c + tw] += out.estimate.reshape(th, tw)
            hits[r:r + th, c:c + tw] += 1
        est = acc / hits
    if opts.clamp is not None:
        est = np.clip(est, *opts.clamp)
    return DenoiseReport(est, outputs)


def denoise_image(noisy, sigma: float, opts: DenoiseOptions | None = None) -> np.ndarray:
    """Piecewise-planar BGAPN denoising with noise bound ``sigma * sqrt(h * w)``.

    Images larger than ``opts.tile_above`` on either side are processed in
    overlapping tiles whose estimates are averaged.
    """
    return denoise_image_report(noisy, sigma, opts).image


def default_grid() -> list[dict]:
    """Two threshold scales times two operator geometries."""
    return [{"epsilon_scale": s, "geometry": geo}
            for s in (0.5, 1.0) for geo in ("2D-hv", "2D-hv-diag")]


def ensemble_denoise_report(noisy, sigma: float, param_grid=None,
                            opts: DenoiseOptions | None = None) -> DenoiseReport:
    grid = default_grid() if param_grid is None else list(param_grid)
    if not grid:
        raise InvalidArgument("param_grid must be nonempty")
    base = opts or DenoiseOptions()
    reports = [denoise_image_report(noisy, sigma, replace(base, **g)) for g in grid]
    acc = np.zeros_like(reports[0].image)
    for rep in reports:
        acc += rep.image
    return DenoiseReport(acc / len(reports), [o for r in reports for o in r.outputs])


def ensemble_denoise(noisy, sigma: float, param_grid=None,
                     opts: DenoiseOptions | None = None) -> np.ndarray:
    """Pixelwise mean of :func:`denoise_image` over a grid of option overrides.

    Each grid entry is a dict of :class:`DenoiseOptions` fields; the default
    grid is :func:`default_grid`.
    """
    return ensemble_denoise_report(noisy, sigma, param_grid, opts).image


# ---------------------------------------------------------------------------
# Gradient maps and segmentation
# ---------------------------------------------------------------------------


def gradient_map(img) -> np.ndarray:
    """``|dh| + |dv|`` of forward differences, zero past the last row/column."""
    img = _check_image(img)
    out = np.zeros_like(img)
    out[:, :-1] += np.abs(img[:, 1:] - img[:, :-1])
    out[:-1, :] += np.abs(img[1:, :] - img[:-1, :])
    return out


@dataclass
class SegmentOptions:
    rel_threshold: float = 0.1
    abs_threshold: float = 1e-6      # floor so roundoff never counts as an edge
    min_region: int = 16
    sigma: float = 0.0
    param_grid: list[dict] | None = None
    denoise: DenoiseOptions = field(default_factory=DenoiseOptions)


@dataclass
class SegmentationResult:
    boundary_map: np.ndarray
    labels: np.ndarray
    piecewise_version: np.ndarray
    threshold_used: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_regions(self) -> int:
        return int(self.labels.max())


_FOUR = ndimage.generate_binary_structure(2, 1)


def merge_small_regions(labels: np.ndarray, image: np.ndarray, min_region: int) -> np.ndarray:
    """Merge regions below ``min_region`` pixels into the most similar neighbour.

    Neighbours are regions reachable across a single band of boundary
    pixels (label 0) or directly adjacent. Similarity is the absolute
    difference of mean intensity. Regions are relabelled ``1..R``.
    """
    labels = labels.copy()
    while True:
        ids, counts = np.unique(labels[labels > 0], return_counts=True)
        if ids.size <= 1:
            break
        small = ids[counts < min_region]
        if small.size == 0:
            break
        means = dict(zip(ids, ndimage.mean(image, labels, ids)))
        # smallest region first, ties broken by id
        order = np.lexsort((small, counts[np.isin(ids, small)]))
        rid = small[order[0]]
        mask = labels == rid
        ring = ndimage.binary_dilation(mask, _FOUR, iterations=3) & ~mask
        neigh = np.unique(labels[ring])
        neigh = neigh[(neigh > 0) & (neigh != rid)]
        if neigh.size == 0:
            neigh = ids[ids != rid]
        target = min(neigh, key=lambda j: (abs(means[j] - means[rid]), j))
        labels[mask] = target
    out = np.zeros_like(labels)
    for new, old in enumerate(np.unique(labels[labels > 0]), start=1):
        out[labels == old] = new
    return out


def segment_image(img, opts: SegmentOptions | None = None) -> SegmentationResult:
    """Boundary map and region labels from the piecewise-planar estimate.

    Boundary pixels are those whose gradient magnitude exceeds
    ``rel_threshold`` times the maximum; the rest is split into 4-connected
    components, and small components are merged. Boundary pixels get
    label 0.
    """
    opts = opts or SegmentOptions()
    img = _check_image(img)
    piece = ensemble_denoise(img, opts.sigma, opts.param_grid, opts.denoise)
    grad = gradient_map(piece)
    tau = max(opts.rel_threshold * float(grad.max()), opts.abs_threshold)
    boundary = grad > tau
    labels, _ = ndimage.label(~boundary, structure=_FOUR)
    labels = merge_small_regions(labels, piece, opts.min_region)
    meta = {"rel_threshold": opts.rel_threshold, "abs_threshold": opts.abs_threshold,
            "min_region": opts.min_region,
            "connectivity": 4, "merge_rule": "nearest mean intensity"}
    return SegmentationResult(boundary, labels, piece, tau, meta)


def boundary_fscore(pred: np.ndarray, truth: np.ndarray, tol: int = 1) -> float:
    """F-score of boundary maps, counting matches within ``tol`` pixels (Chebyshev)."""
    pred, truth = np.asarray(pred, bool), np.asarray(truth, bool)
    if not pred.any() and not truth.any():
        return 1.0
    if not pred.any() or not truth.any():
        return 0.0
    square = np.ones((2 * tol + 1, 2 * tol + 1), dtype=bool)
    precision = float((pred & ndimage.binary_dilation(truth, square)).sum() / pred.sum())
    recall = float((truth & ndimage.binary_dilation(pred, square)).sum() / truth.sum())
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Synthetic test images
# ---------------------------------------------------------------------------


def planar_regions(labels: np.ndarray, planes) -> np.ndarray:
    """Image whose region ``i`` (label ``i``) is ``a + b * col + c * row``."""
    h, w = labels.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    out = np.zeros((h, w))
    for i, (a, b, c) in enumerate(planes):
        m = labels == i
        out[m] = a + b * cols[m] + c * rows[m]
    return out


def label_boundary(labels: np.ndarray) -> np.ndarray:
    """Pixels whose right or lower neighbour carries a different label."""
    out = np.zeros(labels.shape, dtype=bool)
    out[:, :-1] |= labels[:, 1:] != labels[:, :-1]
    out[:-1, :] |= labels[1:, :] != labels[:-1, :]
    return out


def two_region_image(h: int = 64, w: int = 64):
    """Two planar half-planes split by an oblique line; returns ``(image, labels)``."""
    rows, cols = np.mgrid[0:h, 0:w]
    labels = (cols + 0.5 * rows > 0.6 * w).astype(int)
    img = planar_regions(labels, [(60.0, 0.8, 0.5), (200.0, -0.6, 0.3)])
    return img, labels


def three_region_image(h: int = 64, w: int = 64):
    """Three planar regions: a disc on top of two half-planes."""
    rows, cols = np.mgrid[0:h, 0:w]
    labels = (cols > 0.45 * w + 0.2 * rows).astype(int)
    disc = (rows - 0.35 * h) ** 2 + (cols - 0.3 * w) ** 2 < (0.2 * min(h, w)) ** 2
    labels[disc] = 2
    img = planar_regions(labels, [(40.0, 0.3, 0.2), (220.0, -0.3, -0.2), (130.0, 0.3, -0.3)])
    return img, labels


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int, start: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, i = [], start
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise PGMError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Read a P2 (plain) or P5 (binary) PGM into a float array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"bad magic {magic!r}; expected P2 or P5")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PGMError(f"malformed PGM header: {exc}") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise PGMError(f"invalid PGM dimensions {w}x{h} or maxval {maxval}")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = data[pos + 1:]
        need = w * h * dtype.itemsize
        if len(body) < need:
            raise PGMError(f"P5 body has {len(body)} bytes, expected {need}")
        pix = np.frombuffer(body[:need], dtype=dtype).astype(float)
    else:
        try:
            pix = np.array(data[pos:].split(), dtype=float)
        except ValueError as exc:
            raise PGMError(f"non-numeric P2 pixel data: {exc}") from None
        if pix.size != w * h:
            raise PGMError(f"P2 body has {pix.size} values, expected {w * h}")
    if pix.max(initial=0) > maxval:
        raise PGMError("pixel value exceeds maxval")
    return pix.reshape(h, w)


def quantize(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=float)), 0, 255).astype(np.uint8)


def write_pgm(path, img, plain: bool = False, maxval: int = 255) -> None:
    """Write an image as P5 (default) or P2; values are rounded and clipped.

    Label images with more than 255 ids can be written as P2 with a larger
    ``maxval``.
    """
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgument("expected a 2D image")
    h, w = arr.shape
    q = np.clip(np.rint(arr), 0, maxval).astype(np.int64)
    header = f"{'P2' if plain else 'P5'}\n{w} {h}\n{maxval}\n".encode()
    if plain:
        body = "\n".join(" ".join(str(v) for v in row) for row in q).encode() + b"\n"
    else:
        if maxval > 255:
            raise InvalidArgument("binary PGM output supports maxval <= 255")
        body = q.astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)
