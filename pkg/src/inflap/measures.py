"""Measures derived from an eigenpair and the primal/dual values they certify.

For a converged pair ``(lambda, u)`` with unit p-norm:

* ``f``     = u^(p-1) dx                       on nodes,
* ``sigma`` = |grad u|^(p-2) grad u / lambda dx  on gradient samples,
* ``mu``    = |grad u|^(p-2) / lambda dx          on gradient samples.

``-div sigma = f`` holds node by node exactly when ``u`` solves the discrete
eigen-equation, because the discrete divergence is the adjoint of the gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolver import EigenPair, _log_abs, log_pnorm_p, pde_residual
from .exceptions import DegenerateMeasure
from .geometry import DomainGrid
from .operators import operators_for

DIRECTION_FLOOR = 1e-30


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative point masses at ``points``.

    ``nodes`` indexes the interior nodes (or cells, for measures living on
    cells) of the grid the measure came from; it is ``None`` for free-standing
    point clouds.
    """

    points: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if w.shape != (len(pts),):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def normalized(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, self.weights / self.total_mass, self.nodes)

    def restrict(self, keep: np.ndarray) -> "DiscreteMeasure":
        nodes = None if self.nodes is None else self.nodes[keep]
        return DiscreteMeasure(self.points[keep], self.weights[keep], nodes)

    @classmethod
    def on_nodes(cls, grid: DomainGrid, weights: np.ndarray, nodes=None) -> "DiscreteMeasure":
        nodes = np.arange(grid.n_interior) if nodes is None else np.asarray(nodes)
        return cls(grid.nodes[nodes], np.asarray(weights, dtype=float), nodes)


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """Vector masses (already multiplied by the cell area) on grid cells."""

    points: np.ndarray
    vectors: np.ndarray
    cells: np.ndarray

    @property
    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.vectors[:, 0], self.vectors[:, 1])

    @property
    def total_variation(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.points, self.magnitudes, self.cells)

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit directions where the magnitude exceeds the floor, and that mask."""
        m = self.magnitudes
        ok = m > DIRECTION_FLOOR
        xi = np.zeros_like(self.vectors)
        xi[ok] = self.vectors[ok] / m[ok, None]
        return xi, ok


@dataclass(frozen=True)
class MeasureTriple:
    f: DiscreteMeasure
    sigma: VectorMeasure
    mu: DiscreteMeasure
    log_lambda: float
    p: float


@dataclass(frozen=True)
class DualityReport:
    p: float
    primal_value: float
    dual_value: float
    analytic_value: float
    div_residual: float
    pairing: float
    boundary_mass: float

    @property
    def gap(self) -> float:
        return abs(self.primal_value + self.dual_value)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "analytic_value": self.analytic_value,
            "div_residual": self.div_residual,
            "pairing": self.pairing,
            "boundary_mass": self.boundary_mass,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class GradientConcentrationReport:
    mean_grad: float
    std_grad: float
    target: float
    relative_deviation: float
    alignment: float
    mu_mass: float


def derived_measures(pair: EigenPair, grid: DomainGrid | None = None) -> MeasureTriple:
    grid = grid or pair.grid
    p, ll = pair.p, pair.log_lambda
    ops = operators_for(grid)
    u = pair.u.values
    with np.errstate(divide="ignore"):
        lu = np.log(np.where(u > 0, u, 1.0))
    fw = np.where(u > 0, np.exp((p - 1) * lu), 0.0) * grid.cell_area
    gx, gy = ops.grad(u)
    lg = _log_abs(np.hypot(gx, gy))
    live = np.isfinite(lg)
    if p == 2:
        mw = np.full(len(gx), math.exp(-ll)) * ops.area
    else:
        mw = np.where(live, np.exp(np.where(live, (p - 2) * lg, 0.0) - ll), 0.0) * ops.area
    cells = np.arange(ops.n_cells)
    pts = ops.cell_points
    return MeasureTriple(
        f=DiscreteMeasure.on_nodes(grid, fw),
        sigma=VectorMeasure(pts, np.column_stack([mw * gx, mw * gy]), cells),
        mu=DiscreteMeasure(pts, mw, cells),
        log_lambda=ll,
        p=p,
    )


def _full_lattice_neg_div(grid: DomainGrid, sigma: VectorMeasure) -> np.ndarray:
    """``-div`` of the vector masses as node masses on the whole lattice."""
    ops = operators_for(grid)
    out = ops.Dx_full.T @ sigma.vectors[:, 0] + ops.Dy_full.T @ sigma.vectors[:, 1]
    return out.reshape(grid.interior_mask.shape)


def divergence_residual(sigma: VectorMeasure, f: DiscreteMeasure, grid: DomainGrid) -> float:
    """``sum_nodes |-div sigma - f|`` with both sides as masses."""
    ops = operators_for(grid)
    negdiv = ops.DxT @ sigma.vectors[:, 0] + ops.DyT @ sigma.vectors[:, 1]
    fw = np.zeros(grid.n_interior)
    fw[f.nodes] = f.weights
    return float(np.sum(np.abs(negdiv - fw)))


def boundary_measure(sigma: VectorMeasure, grid: DomainGrid) -> DiscreteMeasure:
    """Divergence imbalance collected on the exterior nodes next to the domain.

    Summing ``div sigma`` over the whole lattice telescopes to zero, so the
    total of this measure equals the interior total of ``-div sigma``.
    """
    negdiv = _full_lattice_neg_div(grid, sigma)
    negdiv[grid.interior_mask] = 0.0
    ij = np.argwhere(negdiv != 0)
    w = -negdiv[ij[:, 0], ij[:, 1]]
    return DiscreteMeasure(grid.origin + grid.h * ij, np.maximum(w, 0.0))


def boundary_mass(sigma: VectorMeasure, grid: DomainGrid) -> float:
    negdiv = _full_lattice_neg_div(grid, sigma)
    return float(-np.sum(negdiv[~grid.interior_mask]))


def primal_dual_values(pair: EigenPair, triple: MeasureTriple,
                       grid: DomainGrid | None = None) -> DualityReport:
    grid = grid or pair.grid
    p = pair.p
    q = p / (p - 1)
    ll = pair.log_lambda
    u = pair.u.values
    ops = operators_for(grid)
    gx, gy = ops.grad(u)
    log_e = log_pnorm_p(np.hypot(gx, gy), p, ops.area)
    fw = np.zeros(grid.n_interior)
    fw[triple.f.nodes] = triple.f.weights
    pairing = math.fsum(fw * u)
    primal = math.exp(log_e - ll) / p - pairing
    # |sigma density|^q with density = vector mass / sample area
    log_int = log_pnorm_p(triple.sigma.magnitudes / ops.area, q, ops.area)
    dual = math.exp((q - 1) * ll + log_int) / q
    return DualityReport(
        p=p,
        primal_value=primal,
        dual_value=dual,
        analytic_value=-1.0 / q,
        div_residual=divergence_residual(triple.sigma, triple.f, grid),
        pairing=pairing,
        boundary_mass=boundary_mass(triple.sigma, grid),
    )


def optimality_surrogate(pair: EigenPair, triple: MeasureTriple) -> GradientConcentrationReport:
    """mu-weighted statistics of |grad u| and of the alignment of sigma with grad u."""
    grid = pair.grid
    ops = operators_for(grid)
    gx, gy = ops.grad(pair.u.values)
    gn = np.hypot(gx, gy)
    xi, ok = triple.sigma.directions()
    w = triple.mu.weights * ok
    mass = float(w.sum())
    if not mass > 0:
        raise DegenerateMeasure("mu carries no mass on cells with a direction")
    w = w / mass
    unit = np.zeros_like(xi)
    unit[ok] = np.column_stack([gx[ok], gy[ok]]) / gn[ok, None]
    align = float(np.sum(w * np.einsum("ij,ij->i", xi, unit)))
    mean = float(np.sum(w * gn))
    std = float(math.sqrt(max(np.sum(w * (gn - mean) ** 2), 0.0)))
    target = pair.root
    dev = float(math.sqrt(np.sum(w * (gn - target) ** 2))) / target
    return GradientConcentrationReport(mean, std, target, dev, align, triple.mu.total_mass)


def mass_bounds(triple: MeasureTriple, area: float) -> dict:
    """Masses of f, mu, |sigma| next to the area bounds they must respect."""
    p = triple.p
    return {
        "f_mass": triple.f.total_mass,
        "f_bound": area ** (1 / p),
        "mu_mass": triple.mu.total_mass,
        "mu_bound": area ** (2 / p),
        "sigma_mass": triple.sigma.total_variation.total_mass,
        "sigma_bound": area ** (1 / p),
    }


def check_pde_consistency(pair: EigenPair, triple: MeasureTriple) -> float:
    """Absolute difference between the two residual evaluations."""
    return abs(divergence_residual(triple.sigma, triple.f, pair.grid) - pde_residual(pair))
