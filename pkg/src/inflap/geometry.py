"""Discretized planar domains, distance to the boundary and inradius.

A domain is described by a :class:`DomainSpec` and discretized on a uniform
lattice by :func:`build_domain`.  Lattice nodes strictly inside the domain carry
unknowns; every other node is treated as zero (Dirichlet condition by zero
extension).  The boundary is sampled independently at spacing ``h / 2`` so that
nearest-point ties can be resolved below grid resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import DegenerateSpec, FeatureTooFine, NotInterior

SHAPES = ("disk", "rectangle", "l_shape", "annulus", "polygon")

# fewest cells allowed across the narrowest feature of a shape
MIN_CELLS_ACROSS = 4

_CHUNK = 4_000_000


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of a planar domain.

    Only the parameters relevant to ``shape`` are read:

    ========== ==========================================
    disk       ``center``, ``radius``
    rectangle  ``corner_min``, ``corner_max``
    l_shape    ``outer_side``, ``notch_side``
    annulus    ``center``, ``r_in``, ``r_out``
    polygon    ``vertices`` (counter-clockwise or not)
    ========== ==========================================

    The L-shape is ``[0, outer]^2`` with the square ``(outer - notch, outer]^2``
    removed, so the reentrant corner sits at ``(outer - notch, outer - notch)``.
    """

    shape: str
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    corner_min: tuple[float, float] = (0.0, 0.0)
    corner_max: tuple[float, float] = (1.0, 1.0)
    outer_side: float = 2.0
    notch_side: float = 1.0
    r_in: float = 0.5
    r_out: float = 1.0
    vertices: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.shape not in SHAPES:
            raise DegenerateSpec(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.shape == "disk" and not self.radius > 0:
            raise DegenerateSpec("disk radius must be positive")
        if self.shape == "rectangle":
            ext = np.subtract(self.corner_max, self.corner_min)
            if not np.all(ext > 0):
                raise DegenerateSpec("rectangle extents must be strictly positive")
        if self.shape == "l_shape":
            if not 0 < self.notch_side < self.outer_side:
                raise DegenerateSpec("l_shape needs 0 < notch_side < outer_side")
        if self.shape == "annulus" and not 0 < self.r_in < self.r_out:
            raise DegenerateSpec("annulus needs 0 < r_in < r_out")
        if self.shape == "polygon":
            _check_simple_polygon(np.asarray(self.vertices, dtype=float))

    # -- analytic geometry -------------------------------------------------

    def polygon_loops(self) -> list[np.ndarray]:
        """Vertex loops of polygonal shapes (empty for curved shapes)."""
        if self.shape == "rectangle":
            (x0, y0), (x1, y1) = self.corner_min, self.corner_max
            return [np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float)]
        if self.shape == "l_shape":
            a, b = self.outer_side, self.outer_side - self.notch_side
            return [np.array([(0, 0), (a, 0), (a, b), (b, b), (b, a), (0, a)], dtype=float)]
        if self.shape == "polygon":
            return [np.asarray(self.vertices, dtype=float)]
        return []

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape in ("disk", "annulus"):
            r = self.radius if self.shape == "disk" else self.r_out
            c = np.asarray(self.center, dtype=float)
            return c - r, c + r
        pts = self.polygon_loops()[0]
        return pts.min(axis=0), pts.max(axis=0)

    def narrowest_feature(self) -> float:
        if self.shape == "disk":
            return 2 * self.radius
        if self.shape == "annulus":
            return self.r_out - self.r_in
        if self.shape == "l_shape":
            return min(self.notch_side, self.outer_side - self.notch_side)
        if self.shape == "rectangle":
            return float(np.min(np.subtract(self.corner_max, self.corner_min)))
        pts = self.polygon_loops()[0]
        return float(np.min(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))

    def perimeter(self) -> float:
        if self.shape == "disk":
            return 2 * math.pi * self.radius
        if self.shape == "annulus":
            return 2 * math.pi * (self.r_in + self.r_out)
        pts = self.polygon_loops()[0]
        return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))

    def area(self) -> float:
        if self.shape == "disk":
            return math.pi * self.radius**2
        if self.shape == "annulus":
            return math.pi * (self.r_out**2 - self.r_in**2)
        pts = self.polygon_loops()[0]
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Strict interior test (points on the boundary are outside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.shape in ("disk", "annulus"):
            r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            if self.shape == "disk":
                return r < self.radius
            return (r > self.r_in) & (r < self.r_out)
        loop = self.polygon_loops()[0]
        inside = _even_odd(pts, loop)
        scale = float(np.max(np.ptp(loop, axis=0)))
        on_edge = _segments_distance(pts, loop) <= 1e-12 * scale
        return inside & ~on_edge


def _even_odd(pts, loop):
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    a = loop[None, :, :]
    b = np.roll(loop, -1, axis=0)[None, :, :]
    ya, yb = a[..., 1], b[..., 1]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[..., 0] + (y - ya) * (b[..., 0] - a[..., 0]) / (yb - ya)
    return np.count_nonzero(crosses & (x < xint), axis=1) % 2 == 1


def _segments_distance(pts, loop):
    a = loop
    b = np.roll(loop, -1, axis=0)
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nkd,kd->nk", ap, ab) / np.einsum("kd,kd->k", ab, ab), 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(pts[:, None, :] - proj, axis=2), axis=1)


def _check_simple_polygon(v):
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise DegenerateSpec("polygon needs at least 3 vertices in the plane")
    n = len(v)
    seg = [(v[i], v[(i + 1) % n]) for i in range(n)]
    if any(np.allclose(p, q) for p, q in seg):
        raise DegenerateSpec("polygon has a zero-length edge")

    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            p1, p2 = seg[i]
            q1, q2 = seg[j]
            if (orient(p1, p2, q1) * orient(p1, p2, q2) <= 0
                    and orient(q1, q2, p1) * orient(q1, q2, p2) <= 0):
                raise DegenerateSpec("polygon is not simple (edges intersect)")
    area = 0.5 * (np.dot(v[:, 0], np.roll(v[:, 1], -1)) - np.dot(v[:, 1], np.roll(v[:, 0], -1)))
    if abs(area) == 0:
        raise DegenerateSpec("polygon has zero area")


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Masked uniform lattice plus a fine boundary sample.

    Node ``(i, j)`` sits at ``origin + h * (i, j)``; ``interior_mask`` has shape
    ``(nx, ny)`` and interior nodes are numbered in C order of the mask.
    ``boundary_loop`` labels which closed boundary curve each boundary point
    belongs to; points within a loop are stored in traversal order.
    ``stencil`` and ``cut_edges`` select the gradient discretization (see
    ``inflap.operators``).
    """

    spec: DomainSpec
    h: float
    origin: np.ndarray
    interior_mask: np.ndarray
    boundary_points: np.ndarray
    boundary_loop: np.ndarray
    _index: np.ndarray = field(repr=False, default=None)
    stencil: str = "forward"
    cut_edges: bool = False

    @property
    def nx(self) -> int:
        return self.interior_mask.shape[0]

    @property
    def ny(self) -> int:
        return self.interior_mask.shape[1]

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior_mask))

    @property
    def interior_ij(self) -> np.ndarray:
        return np.argwhere(self.interior_mask)

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates of the interior nodes, shape ``(n_interior, 2)``."""
        return self.origin + self.h * self.interior_ij

    @property
    def node_index(self) -> np.ndarray:
        """Lattice array mapping ``(i, j)`` to an interior index or ``-1``."""
        return self._index

    def index_of(self, x) -> int:
        """Interior index of the lattice node at point ``x`` (``NotInterior`` if none)."""
        ij = np.rint((np.asarray(x, dtype=float) - self.origin) / self.h).astype(int)
        i, j = ij
        at_node = np.allclose(self.origin + self.h * ij, x, atol=1e-9 * self.h)
        if not at_node or not (0 <= i < self.nx and 0 <= j < self.ny) or self._index[i, j] < 0:
            raise NotInterior(f"point {tuple(np.asarray(x).tolist())} is not an interior node")
        return int(self._index[i, j])

    def scatter(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Place per-node ``values`` on the full lattice (zero extension)."""
        out = np.full(self.interior_mask.shape, fill, dtype=float)
        out[self.interior_mask] = values
        return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values on the interior nodes of ``grid``; implicitly zero elsewhere."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_interior,):
            raise ValueError(f"field has {v.shape} values, grid has {self.grid.n_interior} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)


class DistanceField(ScalarField):
    """Distance to the sampled boundary, one value per interior node."""


def build_domain(spec: DomainSpec, h: float, stencil: str = "forward",
                 cut_edges: bool = False) -> DomainGrid:
    """Discretize ``spec`` on a lattice of spacing ``h``.

    Curved shapes are anchored at their center so the center is a node;
    polygonal shapes are anchored at the lower-left corner of their bounding box.
    """
    spec.validate()
    if stencil not in ("corners", "forward"):
        raise ValueError(f"unknown stencil {stencil!r}")
    if not h > 0:
        raise FeatureTooFine(f"cell size must be positive, got {h}")
    feature = spec.narrowest_feature()
    if feature / h < MIN_CELLS_ACROSS - 1e-9:
        raise FeatureTooFine(
            f"h={h:g} leaves {feature / h:.2f} cells across the narrowest feature "
            f"({feature:g}); at least {MIN_CELLS_ACROSS} are required"
        )
    lo, hi = spec.bounding_box()
    anchor = np.asarray(spec.center, dtype=float) if spec.shape in ("disk", "annulus") else lo
    kmin = np.floor((lo - anchor) / h + 1e-9).astype(int) - 1
    kmax = np.ceil((hi - anchor) / h - 1e-9).astype(int) + 1
    origin = anchor + h * kmin
    nx, ny = (kmax - kmin + 1).tolist()
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    pts = origin + h * np.stack([ii.ravel(), jj.ravel()], axis=1)
    mask = spec.contains(pts).reshape(nx, ny)

    labels, count = ndimage.label(mask)
    if count != 1:
        raise FeatureTooFine(f"h={h:g} splits the domain into {count} lattice components")

    bpts, bloop = sample_boundary(spec, h / 2)
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    mask.setflags(write=False)
    index.setflags(write=False)
    bpts.setflags(write=False)
    return DomainGrid(spec, float(h), origin, mask, bpts, bloop, index, stencil,
                      bool(cut_edges))


def sample_boundary(spec: DomainSpec, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points on the boundary of ``spec`` at spacing at most ``spacing``.

    Returns ``(points, loop_id)``; each loop is listed in traversal order.
    """
    if spec.shape in ("disk", "annulus"):
        radii = [spec.radius] if spec.shape == "disk" else [spec.r_out, spec.r_in]
        chunks, ids = [], []
        for k, r in enumerate(radii):
            n = int(math.ceil(2 * math.pi * r / spacing))
            t = 2 * math.pi * np.arange(n) / n
            chunks.append(np.column_stack([spec.center[0] + r * np.cos(t),
                                           spec.center[1] + r * np.sin(t)]))
            ids.append(np.full(n, k))
        return np.concatenate(chunks), np.concatenate(ids)
    chunks = []
    loop = spec.polygon_loops()[0]
    for a, b in zip(loop, np.roll(loop, -1, axis=0)):
        n = int(math.ceil(np.linalg.norm(b - a) / spacing))
        t = np.arange(n)[:, None] / n
        chunks.append(a + t * (b - a))
    pts = np.concatenate(chunks)
    return pts, np.zeros(len(pts), dtype=int)


def _pairwise_min(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    out = np.empty(len(nodes))
    step = max(1, _CHUNK // max(1, len(targets)))
    for s in range(0, len(nodes), step):
        blk = nodes[s:s + step]
        d2 = ((blk[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
        out[s:s + step] = np.sqrt(d2.min(axis=1))
    return out


def distance_to_boundary(grid: DomainGrid) -> DistanceField:
    """Exhaustive nearest-boundary-sample distance for every interior node."""
    return DistanceField(grid, _pairwise_min(grid.nodes, grid.boundary_points))


def inradius(d: DistanceField, tol_factor: float = 2.0) -> tuple[float, np.ndarray]:
    """Discrete inradius and the indices of nodes within ``tol_factor * h`` of it."""
    r1 = float(d.values.max())
    return r1, np.flatnonzero(d.values >= r1 - tol_factor * d.grid.h)


def boundary_projection(grid: DomainGrid, x, d: DistanceField | None = None,
                        tie_tol: float | None = None) -> np.ndarray:
    """Nearest boundary points of the interior node ``x``.

    Every boundary sample within ``d(x) + tie_tol`` is a candidate.  Candidates
    that are contiguous along a boundary loop describe one nearest point seen
    through the sampling, so each such run is reduced to its closest samples
    (exact ties within a run are all kept).  The result is sorted by the angle
    of ``y - x``.  Returns an array of indices into ``grid.boundary_points``.
    """
    k = grid.index_of(x)
    x = grid.nodes[k]
    tie_tol = grid.h / 2 if tie_tol is None else tie_tol
    dist = np.linalg.norm(grid.boundary_points - x, axis=1)
    dx = float(dist.min()) if d is None else float(d.values[k])
    cand = dist <= dx + tie_tol
    keep = np.zeros_like(cand)
    exact = 1e-9 * grid.h
    for loop in np.unique(grid.boundary_loop):
        idx = np.flatnonzero(grid.boundary_loop == loop)
        c = cand[idx]
        if not c.any():
            continue
        if c.all():
            runs = [idx]
        else:
            # rotate so the loop starts outside a run, then split at gaps
            start = int(np.flatnonzero(~c)[0])
            order = np.roll(idx, -start)
            flags = np.roll(c, -start)
            edges = np.flatnonzero(np.diff(np.concatenate([[0], flags.astype(int), [0]])))
            runs = [order[a:b] for a, b in zip(edges[::2], edges[1::2])]
        for run in runs:
            keep[run[dist[run] <= dist[run].min() + exact]] = True
    sel = np.flatnonzero(keep)
    rel = grid.boundary_points[sel] - x
    return sel[np.lexsort((sel, np.arctan2(rel[:, 1], rel[:, 0])))]
