"""Transport of an interior measure to the boundary.

Two independent routes compute the same number: the closed form
``sum_x f(x) d(x)`` (each unit of mass goes to a nearest boundary point) and a
network-simplex solve of the discrete Kantorovich problem whose dual
potentials certify optimality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyRaySet, InfeasibleMarginals
from .geometry import DistanceField, DomainGrid, boundary_projection, inradius
from .measures import DiscreteMeasure
from .network_simplex import min_cost_flow

MAX_COST_ENTRIES = 1_000_000
_CHUNK = 2_000_000


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse plan; ``entries`` rows are ``(source index, target index, mass)``."""

    sources: np.ndarray
    targets: np.ndarray
    masses: np.ndarray
    source_marginal: DiscreteMeasure
    target_points: np.ndarray
    target_marginal: np.ndarray
    cost: float
    source_potential: np.ndarray | None = None
    target_potential: np.ndarray | None = None
    certificate: dict = field(default_factory=dict)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(m)) for i, j, m in
                zip(self.sources, self.targets, self.masses)]

    def recomputed_cost(self) -> float:
        x = self.source_marginal.points[self.sources]
        y = self.target_points[self.targets]
        return math.fsum(self.masses * np.linalg.norm(x - y, axis=1))


@dataclass(frozen=True)
class Ray:
    source: int
    target: int
    nodes: np.ndarray


@dataclass(frozen=True, eq=False)
class RaySet:
    grid: DomainGrid
    rays: tuple[Ray, ...]

    def __len__(self):
        return len(self.rays)


def nearest_boundary_points(points: np.ndarray, targets: np.ndarray):
    """Nearest target per point; exact ties resolved by the smallest angle."""
    idx = np.empty(len(points), dtype=np.int64)
    dmin = np.empty(len(points))
    step = max(1, _CHUNK // max(1, len(targets)))
    for s in range(0, len(points), step):
        blk = points[s:s + step]
        rel = targets[None, :, :] - blk[:, None, :]
        dist = np.hypot(rel[..., 0], rel[..., 1])
        best = dist.min(axis=1)
        tie = dist <= best[:, None] * (1 + 1e-12)
        ang = np.where(tie, np.arctan2(rel[..., 1], rel[..., 0]), np.inf)
        idx[s:s + step] = np.argmin(ang, axis=1)
        dmin[s:s + step] = dist[np.arange(len(blk)), idx[s:s + step]]
    return idx, dmin


def closed_form_cost(f: DiscreteMeasure, targets: np.ndarray) -> float:
    """Cost of sending every point of ``f`` to its nearest target."""
    _, dist = nearest_boundary_points(f.points, np.asarray(targets, dtype=float).reshape(-1, 2))
    return math.fsum(f.weights * dist)


def w1_to_boundary(f: DiscreteMeasure, d: DistanceField | None, grid: DomainGrid):
    """Closed-form transport cost to the boundary and the nearest-point plan.

    The value is ``sum f(x) * d(x)``; ``d`` defaults to the exact distance to the
    boundary sample at each point of ``f``.
    """
    if not f.total_mass > 0:
        raise ValueError("source measure has no mass")
    bpts = grid.boundary_points
    tgt, dist = nearest_boundary_points(f.points, bpts)
    if d is not None and f.nodes is not None:
        dvals = d.values[f.nodes]
    else:
        dvals = dist
    value = math.fsum(f.weights * dvals)
    keep = f.weights > 0
    tm = np.bincount(tgt[keep], weights=f.weights[keep], minlength=len(bpts))
    plan = TransportPlan(
        sources=np.flatnonzero(keep), targets=tgt[keep], masses=f.weights[keep],
        source_marginal=f, target_points=bpts, target_marginal=tm,
        cost=math.fsum(f.weights[keep] * dist[keep]),
    )
    return value, plan


def solve_discrete_ot(source: DiscreteMeasure, targets: np.ndarray,
                      target_marginal: np.ndarray | None = None, *,
                      max_pivots: int | None = None) -> TransportPlan:
    """Exact discrete Kantorovich plan by network simplex.

    Without ``target_marginal`` the target side is free: every target feeds a
    zero-cost arc into one sink that absorbs the whole mass.  The returned plan
    carries dual potentials ``(u, v)`` with ``u_i + v_j <= |x_i - y_j|`` and a
    ``certificate`` dict recording the checks.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    a = source.weights
    m, n = len(a), len(targets)
    if m * n > MAX_COST_ENTRIES:
        raise ValueError(f"{m}x{n} cost matrix exceeds {MAX_COST_ENTRIES} entries; "
                         "subsample the boundary points")
    total = math.fsum(a)
    C = np.linalg.norm(source.points[:, None, :] - targets[None, :, :], axis=2)
    src = np.repeat(np.arange(m), n)
    dst = m + np.tile(np.arange(n), m)
    cost = C.ravel()
    if target_marginal is None:
        sink = m + n
        src = np.concatenate([src, m + np.arange(n)])
        dst = np.concatenate([dst, np.full(n, sink)])
        cost = np.concatenate([cost, np.zeros(n)])
        supply = np.concatenate([a, np.zeros(n), [-total]])
        n_nodes = m + n + 1
    else:
        b = np.asarray(target_marginal, dtype=float)
        if b.shape != (n,) or np.any(b < 0):
            raise InfeasibleMarginals("target marginal must be nonnegative, one weight per target")
        if abs(math.fsum(b) - total) > 1e-9 * max(total, 1e-300):
            raise InfeasibleMarginals(
                f"source mass {total:.12g} differs from target mass {math.fsum(b):.12g}")
        supply = np.concatenate([a, -b])
        n_nodes = m + n

    sol = min_cost_flow(n_nodes, src, dst, cost, supply, max_pivots=max_pivots)
    x = sol.flow[: m * n].reshape(m, n)
    pi = sol.potential
    if target_marginal is None:
        u = pi[:m] - pi[m + n]
        v = pi[m + n] - pi[m:m + n]
    else:
        u = pi[:m]
        v = -pi[m:m + n]
    ii, jj = np.nonzero(x > 0)
    masses = x[ii, jj]
    plan_cost = math.fsum(masses * C[ii, jj])
    tm = x.sum(axis=0)
    cert = certify(C, x, u, v, a, tm, free=target_marginal is None)
    return TransportPlan(ii, jj, masses, source, targets, tm, plan_cost, u, v, cert)


def certify(C, x, u, v, a, b, *, free: bool) -> dict:
    """Dual feasibility, complementary slackness and duality gap of a plan."""
    scale = max(float(C.max()), 1e-300)
    slack = C - u[:, None] - v[None, :]
    support = x > 0
    dual_value = math.fsum(a * u) + math.fsum(b * v)
    primal = math.fsum((x * C).ravel())
    out = {
        "dual_violation": float(max(0.0, -slack.min())) / scale,
        "slackness_violation": float(np.abs(slack[support]).max() if support.any() else 0.0) / scale,
        "duality_gap": abs(primal - dual_value) / max(abs(primal), 1e-300),
        "row_error": float(np.max(np.abs(x.sum(axis=1) - a)) / max(a.max(), 1e-300)),
    }
    if free:
        # target potentials of a free marginal must be nonnegative
        out["dual_violation"] = max(out["dual_violation"], float(max(0.0, -v.min())) / scale)
    out["ok"] = (out["dual_violation"] <= 1e-9 and out["slackness_violation"] <= 1e-9
                 and out["duality_gap"] <= 1e-9 and out["row_error"] <= 1e-9)
    return out


def max_w1_over_sources(grid: DomainGrid, d: DistanceField):
    """Largest transport cost to the boundary over probability measures.

    A linear functional on the simplex peaks at a vertex, so the value is the
    largest distance; the returned maximizer spreads unit mass uniformly over the
    argmax band of ``d``.
    """
    r1, band = inradius(d)
    k = int(np.argmax(d.values))
    value = float(d.values[k])
    maximizer = DiscreteMeasure.on_nodes(grid, np.full(len(band), 1.0 / len(band)), band)
    if value != r1:
        raise AssertionError("vertex value disagrees with the inradius")
    return value, maximizer


def _segment_nodes(grid: DomainGrid, x: np.ndarray, y: np.ndarray, width: float) -> np.ndarray:
    lo = np.minimum(x, y) - width
    hi = np.maximum(x, y) + width
    i0, j0 = np.maximum(np.floor((lo - grid.origin) / grid.h).astype(int), 0)
    i1, j1 = np.minimum(np.ceil((hi - grid.origin) / grid.h).astype(int),
                        [grid.nx - 1, grid.ny - 1])
    sub = grid.node_index[i0:i1 + 1, j0:j1 + 1]
    idx = sub[sub >= 0]
    if idx.size == 0:
        return idx
    pts = grid.nodes[idx]
    seg = y - x
    t = np.clip((pts - x) @ seg / max(seg @ seg, 1e-300), 0.0, 1.0)
    dist = np.linalg.norm(pts - (x + t[:, None] * seg), axis=1)
    near = dist <= width + 1e-12 * grid.h
    # order along the segment, source first
    return idx[near][np.argsort(t[near], kind="stable")]


def transport_rays(f: DiscreteMeasure, grid: DomainGrid, mass_threshold: float = 1e-3,
                   d: DistanceField | None = None) -> RaySet:
    """Segments from every heavy source node to each of its boundary projections."""
    if f.nodes is None or len(f.weights) == 0:
        raise ValueError("rays need a measure on grid nodes")
    heavy = np.flatnonzero(f.weights >= mass_threshold * f.weights.max())
    rays = []
    for k in heavy:
        node = int(f.nodes[k])
        x = grid.nodes[node]
        for j in boundary_projection(grid, x, d):
            y = grid.boundary_points[j]
            rays.append(Ray(node, int(j), _segment_nodes(grid, x, y, grid.h / 2)))
    return RaySet(grid, tuple(rays))


def ray_profile_check(u: np.ndarray, rays: RaySet, lambda_inf: float,
                      grid: DomainGrid | None = None) -> float:
    """Largest ``|u(z) - lambda_inf |z - y||`` over ray nodes ``z`` with endpoint ``y``."""
    if len(rays) == 0:
        raise EmptyRaySet("no transport rays to check")
    grid = grid or rays.grid
    u = np.asarray(getattr(u, "values", u), dtype=float)
    worst = 0.0
    for ray in rays.rays:
        if ray.nodes.size == 0:
            continue
        y = grid.boundary_points[ray.target]
        z = grid.nodes[ray.nodes]
        dev = np.abs(u[ray.nodes] - lambda_inf * np.linalg.norm(z - y, axis=1))
        worst = max(worst, float(dev.max()))
    return worst


def ray_monotonicity_violation(u: np.ndarray, rays: RaySet) -> float:
    """Largest increase of ``u`` when stepping along a ray toward the boundary."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    worst = 0.0
    grid = rays.grid
    for ray in rays.rays:
        if ray.nodes.size < 2:
            continue
        y = grid.boundary_points[ray.target]
        dist = np.linalg.norm(grid.nodes[ray.nodes] - y, axis=1)
        order = np.argsort(-dist, kind="stable")
        worst = max(worst, float(np.max(np.diff(u[ray.nodes][order]), initial=0.0)))
    return worst


def eigen_potential_gap(u: np.ndarray, root: float, f: DiscreteMeasure, w1: float,
                        grid: DomainGrid) -> dict:
    """Feasibility of ``u / lambda^(1/p)`` for the dual transport problem.

    Reports the discrete Lipschitz constant (largest forward-difference gradient
    norm) of the rescaled potential and the gap ``<f, u>/root - W1(f)``.
    """
    from .operators import operators_for

    u = np.asarray(getattr(u, "values", u), dtype=float)
    gx, gy = operators_for(grid).grad(u / root)
    pairing = math.fsum(f.weights * u[f.nodes]) / root
    return {"lipschitz": float(np.hypot(gx, gy).max()), "pairing_over_root": pairing,
            "w1": w1, "gap": pairing - w1}
