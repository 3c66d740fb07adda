import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from inflap import DomainSpec, build_domain
from inflap.operators import operators_for
from oracles import five_point_energy

GRIDS = [
    (shape, h, stencil, cut)
    for shape, h in (("disk", 1 / 16), ("l_shape", 1 / 8), ("annulus", 1 / 16))
    for stencil in ("forward", "corners")
    for cut in (False, True)
]


def _pairing_gap(grid, u, wx, wy):
    ops = operators_for(grid)
    gx, gy = ops.grad(u)
    lhs = np.sum(ops.area * (gx * wx + gy * wy))
    rhs = grid.cell_area * np.sum(u * -ops.div(wx, wy))
    scale = np.sum(np.abs(ops.area * (gx * wx + gy * wy))) + 1e-300
    return abs(lhs - rhs) / scale


@pytest.mark.parametrize("shape,h,stencil,cut", GRIDS)
def test_divergence_is_negative_adjoint(shape, h, stencil, cut, rng):
    grid = build_domain(DomainSpec(shape), h, stencil, cut)
    n, m = grid.n_interior, operators_for(grid).n_cells
    worst = max(_pairing_gap(grid, rng.standard_normal(n), rng.standard_normal(m),
                             rng.standard_normal(m)) for _ in range(100))
    assert worst <= 1e-13


@given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
def test_adjoint_under_scaling(coef):
    grid = build_domain(DomainSpec("disk"), 1 / 8)
    ops = operators_for(grid)
    x = grid.nodes
    u = coef[0] + coef[1] * x[:, 0] + coef[2] * x[:, 1] ** 2
    wx = np.cos(ops.cell_points[:, 0]) * coef[1]
    wy = np.sin(ops.cell_points[:, 1]) * coef[2]
    if not np.any(u) or not (np.any(wx) or np.any(wy)):
        return
    assert _pairing_gap(grid, u, wx, wy) <= 1e-12


@pytest.mark.parametrize("stencil", ["forward", "corners"])
@pytest.mark.parametrize("shape,h", [("disk", 1 / 8), ("l_shape", 1 / 8), ("rectangle", 1 / 8)])
def test_quadratic_energy_is_five_point(stencil, shape, h, rng):
    grid = build_domain(DomainSpec(shape), h, stencil)
    ops = operators_for(grid)
    u = rng.standard_normal(grid.n_interior)
    gx, gy = ops.grad(u)
    energy = np.sum(ops.area * (gx ** 2 + gy ** 2))
    assert energy == pytest.approx(five_point_energy(grid.interior_mask, h, u), rel=1e-12)


def test_forward_gradient_by_hand():
    grid = build_domain(DomainSpec("rectangle"), 0.25)
    ops = operators_for(grid)
    u = np.zeros(9)
    u[grid.index_of((0.5, 0.5))] = 1.0
    gx, gy = ops.grad(u)
    at = {tuple(grid.origin + grid.h * ij): (a, b) for ij, a, b in zip(ops.sample_ij, gx, gy)}
    assert at[(0.5, 0.5)] == (-4.0, -4.0)
    assert at[(0.25, 0.5)] == (4.0, 0.0)
    assert at[(0.5, 0.25)] == (0.0, 4.0)
    assert np.count_nonzero(np.hypot(gx, gy)) == 3


def test_cut_edges_shorten_boundary_edges():
    plain = operators_for(build_domain(DomainSpec("disk"), 1 / 8))
    cut = operators_for(build_domain(DomainSpec("disk"), 1 / 8, cut_edges=True))
    assert abs(plain.Dx).max() == pytest.approx(8.0)
    assert abs(cut.Dx).max() > 8.0
    assert abs(cut.Dx).max() <= 8.0 / 0.05 + 1e-9


def test_unknown_stencil():
    with pytest.raises(ValueError):
        build_domain(DomainSpec("disk"), 1 / 8, "centered")
