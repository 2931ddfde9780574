"""Weighted Gaussian KDE on a grid, contour tracing, and containment tests.

The density of a sample subset over the 2-D embedding is accumulated on a
regular grid (unnormalized sum of Gaussian kernels) and its level set at a
fraction of the grid maximum is traced into closed polygons. Samples are
assigned to regions by an even-odd point-in-polygon test with boundary
points counting as inside.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

GRID_PADDING_SIGMAS = 3.0
# Internal oversampling keeps the bilinear-binning error of the FFT path
# below ~1e-3 of the grid maximum (error scales with (cell / sigma)^2).
_OVERSAMPLE = 20
_MAX_INTERNAL_NODES = 2048
_KERNEL_RADIUS_SIGMAS = 6.5


class DegenerateEmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class DensityGrid:
    """Unnormalized kernel density sampled on a regular grid.

    `values[iy, ix]` is the density at (x[ix], y[iy]). `method` records
    whether the FFT-convolution path or the exact direct path produced it.
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    sigma: float
    method: str = "fft"

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return float(self.x[0]), float(self.x[-1]), float(self.y[0]), float(self.y[-1])


@dataclass(frozen=True)
class Polygon:
    """A simple closed ring (CCW) with optional hole rings (CW).

    Rings are (V, 2) arrays; closure is implicit (last vertex connects back
    to the first).
    """

    exterior: np.ndarray
    holes: tuple[np.ndarray, ...] = ()


@dataclass
class RegionShape:
    """Traced contour polygons plus the samples they enclose."""

    polygons: list[Polygon]
    member_mask: np.ndarray

    @property
    def member_indices(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.member_mask))

    @property
    def member_count(self) -> int:
        return int(np.count_nonzero(self.member_mask))


def adaptive_bandwidth(coords: np.ndarray) -> float:
    """Median distance of each point to its ceil(sqrt(N))-th nearest neighbor.

    The neighbor rank excludes the point itself. Scale-adaptive: grows with
    the embedding extent and shrinks with local point density.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n < 2:
        raise ValueError("bandwidth selection needs at least 2 points")
    k = min(math.ceil(math.sqrt(n)), n - 1)
    tree = cKDTree(coords)
    dists, _ = tree.query(coords, k=k + 1)  # column 0 is the point itself
    sigma = float(np.median(dists[:, k]))
    if sigma <= 0.0:
        raise DegenerateEmbeddingError("degenerate embedding: coincident points")
    return sigma


def _bin_linear(
    px: np.ndarray,
    py: np.ndarray,
    w: np.ndarray,
    x0: float,
    y0: float,
    step_x: float,
    step_y: float,
    nx: int,
    ny: int,
) -> np.ndarray:
    """Spread point weights onto grid nodes with bilinear (linear binning) weights."""
    fx = (px - x0) / step_x
    fy = (py - y0) / step_y
    ix = np.clip(np.floor(fx).astype(np.intp), 0, nx - 2)
    iy = np.clip(np.floor(fy).astype(np.intp), 0, ny - 2)
    rx = fx - ix
    ry = fy - iy
    grid = np.zeros(ny * nx, dtype=float)
    base = iy * nx + ix
    np.add.at(grid, base, w * (1 - rx) * (1 - ry))
    np.add.at(grid, base + 1, w * rx * (1 - ry))
    np.add.at(grid, base + nx, w * (1 - rx) * ry)
    np.add.at(grid, base + nx + 1, w * rx * ry)
    return grid.reshape(ny, nx)


def kde_grid(
    coords: np.ndarray,
    truth: np.ndarray,
    sigma: float,
    resolution: int = 128,
    weights: Optional[np.ndarray] = None,
) -> DensityGrid:
    """Sum of Gaussian kernels of the truth-selected samples on a grid.

    Grid bounds enclose *all* embedding points padded by 3 sigma. Uses
    linear binning on an oversampled internal grid plus separable FFT
    convolution; falls back to exact direct evaluation when the kernel is
    too narrow for the internal grid to resolve.
    """
    coords = np.asarray(coords, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if not truth.any():
        raise ValueError("empty indicator: no supporting samples")
    if weights is None:
        w = np.ones(int(truth.sum()), dtype=float)
    else:
        w = np.asarray(weights, dtype=float)[truth]

    pad = GRID_PADDING_SIGMAS * sigma
    x0, x1 = coords[:, 0].min() - pad, coords[:, 0].max() + pad
    y0, y1 = coords[:, 1].min() - pad, coords[:, 1].max() + pad
    gx = np.linspace(x0, x1, resolution)
    gy = np.linspace(y0, y1, resolution)
    step_x = (x1 - x0) / (resolution - 1)
    step_y = (y1 - y0) / (resolution - 1)

    px = coords[truth, 0]
    py = coords[truth, 1]

    s_needed = max(1, math.ceil(max(step_x, step_y) * _OVERSAMPLE / sigma))
    s_max = max(1, (_MAX_INTERNAL_NODES - 1) // (resolution - 1))
    if s_needed > s_max:
        values = _kde_direct(px, py, w, gx, gy, sigma)
        return DensityGrid(x=gx, y=gy, values=values, sigma=sigma, method="direct")

    s = s_needed
    nx = (resolution - 1) * s + 1
    ny = nx
    sx = (x1 - x0) / (nx - 1)
    sy = (y1 - y0) / (ny - 1)
    binned = _bin_linear(px, py, w, x0, y0, sx, sy, nx, ny)

    rx = min(nx - 1, math.ceil(_KERNEL_RADIUS_SIGMAS * sigma / sx))
    ry = min(ny - 1, math.ceil(_KERNEL_RADIUS_SIGMAS * sigma / sy))
    kx = np.exp(-((np.arange(-rx, rx + 1) * sx) ** 2) / (2.0 * sigma * sigma))
    ky = np.exp(-((np.arange(-ry, ry + 1) * sy) ** 2) / (2.0 * sigma * sigma))
    # Separable kernel: two 1-D FFT convolutions instead of one 2-D pass.
    values = fftconvolve(binned, kx[None, :], mode="same", axes=1)
    values = fftconvolve(values, ky[:, None], mode="same", axes=0)
    values = np.maximum(values[::s, ::s], 0.0)
    return DensityGrid(x=gx, y=gy, values=values, sigma=sigma, method="fft")


def _kde_direct(
    px: np.ndarray,
    py: np.ndarray,
    w: np.ndarray,
    gx: np.ndarray,
    gy: np.ndarray,
    sigma: float,
    chunk: int = 4096,
) -> np.ndarray:
    """Exact separable evaluation: the Gaussian factorizes over x and y."""
    inv = 1.0 / (2.0 * sigma * sigma)
    out = np.zeros((len(gy), len(gx)))
    for start in range(0, len(px), chunk):
        sl = slice(start, start + chunk)
        ax = np.exp(-((gx[None, :] - px[sl, None]) ** 2) * inv)
        ay = np.exp(-((gy[None, :] - py[sl, None]) ** 2) * inv)
        out += (ay * w[sl, None]).T @ ax
    return out


# ---------------------------------------------------------------------------
# Marching squares

# Segment table keyed by the 4-bit corner code (bit0 = bottom-left, bit1 =
# bottom-right, bit2 = top-right, bit3 = top-left; a bit is set when the
# corner value >= level). Entries list pairs of crossed cell edges
# ('b'ottom, 'r'ight, 't'op, 'l'eft); saddle codes 5 and 10 are resolved at
# runtime from the cell mean.
_SEGMENTS = {
    0: [],
    1: [("l", "b")],
    2: [("b", "r")],
    3: [("l", "r")],
    4: [("r", "t")],
    6: [("b", "t")],
    7: [("l", "t")],
    8: [("l", "t")],
    9: [("b", "t")],
    11: [("r", "t")],
    12: [("l", "r")],
    13: [("b", "r")],
    14: [("l", "b")],
    15: [],
}


def _cell_edge(kind: str, i: int, j: int) -> tuple[str, int, int]:
    return (kind, i, j)


def _trace_rings(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, level: float) -> list[np.ndarray]:
    """Trace all closed level-set rings of a padded grid.

    `values` must be padded with a ring of below-level nodes so that every
    contour closes; returns rings as (V, 2) coordinate arrays.
    """
    above = values >= level
    ny, nx = values.shape

    # Active cells: at least one corner above and one below.
    a00 = above[:-1, :-1]
    a10 = above[:-1, 1:]
    a11 = above[1:, 1:]
    a01 = above[1:, :-1]
    any_above = a00 | a10 | a11 | a01
    all_above = a00 & a10 & a11 & a01
    active = np.argwhere(any_above & ~all_above)

    adjacency: dict[tuple, list[tuple]] = {}
    for i, j in active:
        code = (
            (1 if a00[i, j] else 0)
            | (2 if a10[i, j] else 0)
            | (4 if a11[i, j] else 0)
            | (8 if a01[i, j] else 0)
        )
        if code in (5, 10):
            center = (
                values[i, j] + values[i, j + 1] + values[i + 1, j] + values[i + 1, j + 1]
            ) / 4.0
            connected = center >= level
            if code == 5:
                segs = [("b", "r"), ("l", "t")] if connected else [("l", "b"), ("r", "t")]
            else:
                segs = [("l", "b"), ("r", "t")] if connected else [("b", "r"), ("l", "t")]
        else:
            segs = _SEGMENTS[code]
        edge_ids = {
            "b": _cell_edge("h", i, j),
            "t": _cell_edge("h", i + 1, j),
            "l": _cell_edge("v", i, j),
            "r": _cell_edge("v", i, j + 1),
        }
        for ea, eb in segs:
            a, b = edge_ids[ea], edge_ids[eb]
            adjacency.setdefault(a, []).append(b)
            adjacency.setdefault(b, []).append(a)

    def crossing(edge: tuple) -> tuple[float, float]:
        kind, i, j = edge
        if kind == "h":
            va, vb = values[i, j], values[i, j + 1]
            t = (level - va) / (vb - va)
            return (xs[j] + t * (xs[j + 1] - xs[j]), ys[i])
        va, vb = values[i, j], values[i + 1, j]
        t = (level - va) / (vb - va)
        return (xs[j], ys[i] + t * (ys[i + 1] - ys[i]))

    rings: list[np.ndarray] = []
    visited: set[tuple] = set()
    for start in sorted(adjacency):
        if start in visited:
            continue
        neighbors = adjacency[start]
        if len(neighbors) != 2:
            # Dangling chain; cannot occur on a padded grid, skip defensively.
            visited.add(start)
            continue
        ring_edges = [start]
        visited.add(start)
        prev, cur = start, neighbors[0]
        while cur != start:
            ring_edges.append(cur)
            visited.add(cur)
            nbrs = adjacency[cur]
            nxt = nbrs[0] if nbrs[0] != prev else nbrs[1]
            prev, cur = cur, nxt
        rings.append(np.array([crossing(e) for e in ring_edges]))
    return rings


def _ring_area(ring: np.ndarray) -> float:
    """Signed area (positive = counterclockwise)."""
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ring_centroid(ring: np.ndarray) -> tuple[float, float]:
    """Area centroid of a closed ring; falls back to the vertex mean for
    degenerate (zero-area) rings."""
    x = ring[:, 0]
    y = ring[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = cross.sum() / 2.0
    if abs(area) < 1e-30:
        return float(x.mean()), float(y.mean())
    cx = float(((x + np.roll(x, -1)) * cross).sum() / (6.0 * area))
    cy = float(((y + np.roll(y, -1)) * cross).sum() / (6.0 * area))
    return cx, cy


def polygon_area(poly: Polygon) -> float:
    """Enclosed area of a polygon: exterior minus holes."""
    area = abs(_ring_area(poly.exterior))
    for hole in poly.holes:
        area -= abs(_ring_area(hole))
    return area


def _dedupe_ring(ring: np.ndarray) -> np.ndarray:
    keep = np.any(ring != np.roll(ring, 1, axis=0), axis=1)
    return ring[keep]


def _ring_crossing_parity(ring: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Even-odd ray-cast parity of points against one ring (vectorized)."""
    x1 = ring[:, 0]
    y1 = ring[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    inside = np.zeros(len(px), dtype=bool)
    # Chunk over edges to bound the (points x edges) temporary.
    step = max(1, int(4e6 / max(1, len(px))))
    for s in range(0, len(x1), step):
        e = slice(s, s + step)
        a_y1 = y1[e][None, :]
        a_y2 = y2[e][None, :]
        a_x1 = x1[e][None, :]
        a_x2 = x2[e][None, :]
        cond = (a_y1 > py[:, None]) != (a_y2 > py[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = (a_x2 - a_x1) * (py[:, None] - a_y1) / (a_y2 - a_y1) + a_x1
        hits = cond & (px[:, None] < x_int)
        inside ^= (hits.sum(axis=1) % 2).astype(bool)
    return inside


def _ring_boundary_hits(
    ring: np.ndarray, px: np.ndarray, py: np.ndarray, tol: float
) -> np.ndarray:
    """Points within `tol` of any ring segment."""
    x1 = ring[:, 0]
    y1 = ring[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    dx = x2 - x1
    dy = y2 - y1
    seg_len2 = dx * dx + dy * dy
    seg_len2 = np.where(seg_len2 == 0.0, 1.0, seg_len2)
    hit = np.zeros(len(px), dtype=bool)
    step = max(1, int(4e6 / max(1, len(px))))
    for s in range(0, len(x1), step):
        e = slice(s, s + step)
        wx = px[:, None] - x1[e][None, :]
        wy = py[:, None] - y1[e][None, :]
        t = np.clip((wx * dx[e][None, :] + wy * dy[e][None, :]) / seg_len2[e][None, :], 0.0, 1.0)
        ex = wx - t * dx[e][None, :]
        ey = wy - t * dy[e][None, :]
        hit |= np.any(ex * ex + ey * ey <= tol * tol, axis=1)
    return hit


def _all_rings(shape: RegionShape) -> list[np.ndarray]:
    rings = []
    for poly in shape.polygons:
        rings.append(poly.exterior)
        rings.extend(poly.holes)
    return rings


def points_in_shape(shape: RegionShape, coords: np.ndarray) -> np.ndarray:
    """Even-odd containment over all rings; boundary points count as inside."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[None, :]
    px = coords[:, 0]
    py = coords[:, 1]
    inside = np.zeros(len(coords), dtype=bool)
    rings = _all_rings(shape)
    if not rings:
        return inside
    extent = max(
        max(float(np.ptp(r[:, 0])) for r in rings),
        max(float(np.ptp(r[:, 1])) for r in rings),
        1e-30,
    )
    tol = 1e-9 * extent
    for ring in rings:
        bx0, bx1 = ring[:, 0].min(), ring[:, 0].max()
        by0, by1 = ring[:, 1].min(), ring[:, 1].max()
        # Points outside the bounding box contribute an even crossing count.
        m = (px >= bx0 - tol) & (px <= bx1 + tol) & (py >= by0 - tol) & (py <= by1 + tol)
        if not m.any():
            continue
        idx = np.flatnonzero(m)
        inside[idx] ^= _ring_crossing_parity(ring, px[idx], py[idx])
    for ring in rings:
        bx0, bx1 = ring[:, 0].min(), ring[:, 0].max()
        by0, by1 = ring[:, 1].min(), ring[:, 1].max()
        m = (px >= bx0 - tol) & (px <= bx1 + tol) & (py >= by0 - tol) & (py <= by1 + tol)
        m &= ~inside
        if not m.any():
            continue
        idx = np.flatnonzero(m)
        inside[idx] |= _ring_boundary_hits(ring, px[idx], py[idx], tol)
    return inside


def point_in_region(shape: RegionShape, point) -> bool:
    """Containment test for a single point (boundary counts as inside)."""
    return bool(points_in_shape(shape, np.asarray(point, dtype=float))[0])


def extract_contours(
    grid: DensityGrid, level_fraction: float, coords: np.ndarray
) -> RegionShape:
    """Trace the level set at level_fraction * max(grid) into a RegionShape.

    Contours touching the grid border are closed along the border. Member
    samples are resolved by point-in-polygon over all embedding points.
    """
    if not 0.0 < level_fraction < 1.0:
        raise ValueError("level_fraction must lie in (0, 1)")
    vmax = float(grid.values.max())
    if vmax <= 0.0:
        raise ValueError("grid maximum must be positive")
    level = level_fraction * vmax
    if level >= vmax:
        raise ValueError("contour level at or above grid maximum")

    # Pad with a below-level ring so border-touching regions close; the
    # resulting vertices are clamped back onto the border afterwards.
    pad_val = min(float(grid.values.min()), level) - 1.0
    values = np.pad(grid.values, 1, constant_values=pad_val)
    sx = grid.x[1] - grid.x[0]
    sy = grid.y[1] - grid.y[0]
    xs = np.concatenate(([grid.x[0] - sx], grid.x, [grid.x[-1] + sx]))
    ys = np.concatenate(([grid.y[0] - sy], grid.y, [grid.y[-1] + sy]))

    raw_rings = _trace_rings(values, xs, ys, level)
    rings = []
    for ring in raw_rings:
        ring = ring.copy()
        ring[:, 0] = np.clip(ring[:, 0], grid.x[0], grid.x[-1])
        ring[:, 1] = np.clip(ring[:, 1], grid.y[0], grid.y[-1])
        ring = _dedupe_ring(ring)
        if len(ring) < 3:
            log.warning("dropping degenerate contour ring with %d vertices", len(ring))
            continue
        rings.append(ring)

    polygons = _assemble_polygons(rings)
    shape = RegionShape(polygons=polygons, member_mask=np.zeros(len(coords), dtype=bool))
    shape.member_mask = points_in_shape(shape, coords)
    return shape


def _ring_contains_ring(outer: np.ndarray, inner: np.ndarray) -> bool:
    """Whether `inner` lies inside `outer`; rings are disjoint by construction."""
    pt = inner[0]
    return bool(
        _ring_crossing_parity(outer, np.array([pt[0]]), np.array([pt[1]]))[0]
    )


def _assemble_polygons(rings: list[np.ndarray]) -> list[Polygon]:
    """Nest rings into polygons: even containment depth = exterior, odd = hole
    of its immediate container. Exteriors oriented CCW, holes CW."""
    n = len(rings)
    if n == 0:
        return []
    containers: list[list[int]] = [[] for _ in range(n)]
    areas = [abs(_ring_area(r)) for r in rings]
    for i in range(n):
        for j in range(n):
            if i != j and areas[j] >= areas[i] and _ring_contains_ring(rings[j], rings[i]):
                containers[i].append(j)
    polygons: dict[int, list[np.ndarray]] = {}
    order: list[int] = []
    for i in range(n):
        depth = len(containers[i])
        ring = rings[i]
        if depth % 2 == 0:
            if _ring_area(ring) < 0:
                ring = ring[::-1]
            polygons[i] = [ring]
            order.append(i)
    for i in range(n):
        depth = len(containers[i])
        if depth % 2 == 1:
            parent = min(containers[i], key=lambda j: areas[j])
            ring = rings[i]
            if _ring_area(ring) > 0:
                ring = ring[::-1]
            if parent in polygons:
                polygons[parent].append(ring)
    return [Polygon(exterior=polygons[i][0], holes=tuple(polygons[i][1:])) for i in order]
