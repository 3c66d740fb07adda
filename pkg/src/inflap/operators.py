"""One-sided difference gradients and their exact negative adjoint.

A gradient sample pairs one horizontal lattice edge with one vertical edge that
share a node.  ``"forward"`` takes, at every node, the edges leaving it in +x and
+y (one sample of area ``h^2`` per node).  ``"corners"`` takes all four corners of
every lattice square, each with area ``h^2 / 4``; it has the same p = 2 energy
(the 5-point Laplacian) but no preferred direction.

Values outside the mask are zero, which imposes the Dirichlet condition in the
energy.  With ``cut_edges`` an edge leaving the domain is shortened to its
boundary crossing, so the zero sits on the true boundary instead of on the
exterior node.  The divergence is defined by ``<grad u, w> = <u, -div w>`` with the
sample areas on the left and the node area ``h^2`` on the right.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import sparse

from .geometry import DomainGrid

STENCILS = ("corners", "forward")
# shortest cut edge, relative to h; keeps the stiffness well conditioned
MIN_EDGE_FRACTION = 0.05
_BISECT_STEPS = 40

# (x-edge start, y-edge start) offsets relative to the square's lower-left node
_CORNERS = (
    ((0, 0), (0, 0)),
    ((0, 0), (1, 0)),
    ((0, 1), (0, 0)),
    ((0, 1), (1, 0)),
)


class GridOperators:
    """Sparse ``Dx``, ``Dy`` of shape ``(n_samples, n_interior)``.

    ``Dx_full``/``Dy_full`` act on the whole lattice (exterior nodes included) and
    are used to read off the flux leaving the domain.
    """

    def __init__(self, grid: DomainGrid):
        self.grid = grid
        h = grid.h
        m = grid.interior_mask
        nx, ny = m.shape
        base = np.argwhere(np.ones((nx - 1, ny - 1), dtype=bool))
        if grid.stencil == "forward":
            offsets, share = _CORNERS[:1], 1.0
        else:
            offsets, share = _CORNERS, 0.25
        xs, ys, anchors = [], [], []
        for (xo, yo) in offsets:
            xs.append(base + xo)
            ys.append(base + yo)
            # corner node where the two edges meet
            anchors.append(base + np.array([yo[0], xo[1]]))
        xe = np.concatenate(xs)
        ye = np.concatenate(ys)
        anchor = np.concatenate(anchors)
        flat = lambda ij: ij[:, 0] * ny + ij[:, 1]  # noqa: E731
        xa, xb = flat(xe), flat(xe + [1, 0])
        ya, yb = flat(ye), flat(ye + [0, 1])
        inside = m.ravel()
        touch = inside[xa] | inside[xb] | inside[ya] | inside[yb]
        xa, xb, ya, yb, anchor = xa[touch], xb[touch], ya[touch], yb[touch], anchor[touch]
        n = len(xa)
        rows = np.arange(n)
        full = nx * ny
        if grid.cut_edges:
            lx = h * _edge_fractions(grid, xa, xb, inside)
            ly = h * _edge_fractions(grid, ya, yb, inside)
        else:
            lx = ly = np.full(n, h)
        self.Dx_full = sparse.csr_matrix(
            (np.concatenate([1 / lx, -1 / lx]), (np.concatenate([rows, rows]), np.concatenate([xb, xa]))),
            shape=(n, full))
        self.Dy_full = sparse.csr_matrix(
            (np.concatenate([1 / ly, -1 / ly]), (np.concatenate([rows, rows]), np.concatenate([yb, ya]))),
            shape=(n, full))
        cols = np.flatnonzero(inside)
        self.Dx = self.Dx_full[:, cols].tocsr()
        self.Dy = self.Dy_full[:, cols].tocsr()
        self.DxT = self.Dx.T.tocsr()
        self.DyT = self.Dy.T.tocsr()
        self.area = np.full(n, share * h * h)
        self.sample_ij = anchor
        # mean of the two edge midpoints represents the sample
        self._points = grid.origin + h * 0.5 * (xe[touch] + ye[touch] + 0.5)

    @property
    def n_cells(self) -> int:
        return len(self.area)

    @property
    def cell_points(self) -> np.ndarray:
        return self._points

    def grad(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.Dx @ u, self.Dy @ u

    def div(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        """Discrete divergence on interior nodes, adjoint to :meth:`grad`."""
        s = self.area / self.grid.cell_area
        return -(self.DxT @ (s * wx) + self.DyT @ (s * wy))

    def div_full(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        """Divergence on every lattice node, reshaped to the lattice."""
        s = self.area / self.grid.cell_area
        out = -(self.Dx_full.T @ (s * wx) + self.Dy_full.T @ (s * wy))
        return out.reshape(self.grid.interior_mask.shape)


def _edge_fractions(grid, a, b, inside) -> np.ndarray:
    """Length of each edge as a fraction of ``h``.

    An edge from an interior node to an exterior one ends where it leaves the
    domain, so the zero value sits on the true boundary rather than on the
    exterior node.  The crossing is located by bisection on the shape's
    membership test.
    """
    frac = np.ones(len(a))
    cut = inside[a] != inside[b]
    if not cut.any():
        return frac
    pts = grid.origin + grid.h * np.argwhere(np.ones(grid.interior_mask.shape, dtype=bool))
    ia = np.where(inside[a[cut]], a[cut], b[cut])
    ob = np.where(inside[a[cut]], b[cut], a[cut])
    p0, p1 = pts[ia], pts[ob]
    lo = np.zeros(len(ia))
    hi = np.ones(len(ia))
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        ok = grid.spec.contains(p0 + mid[:, None] * (p1 - p0))
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    frac[cut] = np.maximum(hi, MIN_EDGE_FRACTION)
    return frac


@lru_cache(maxsize=16)
def operators_for(grid: DomainGrid) -> GridOperators:
    return GridOperators(grid)
