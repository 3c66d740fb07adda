import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from inflap import (
    DomainSpec, MaxItersExceeded, ScalarField, SolverConfig, ZeroField, build_domain,
    continuation_sweep, distance_to_boundary, pde_residual, rayleigh_quotient, seed_field,
    solve_first_eigenpair,
)
from inflap.eigensolver import log_pnorm_p, with_field
from oracles import smallest_laplacian_eigenvalue


def _pnorm(pair):
    return math.exp(log_pnorm_p(pair.u.values, pair.p, pair.grid.cell_area) / pair.p)


@pytest.mark.parametrize("p,exact", [(2, 6.0), (4, 15.0)])
def test_cone_quotient_on_disk(p, exact):
    # (p+1)(p+2)/2 for the cone 1 - |x| on the unit disk
    assert (p + 1) * (p + 2) / 2 == exact
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = build_domain(DomainSpec("disk"), h)
        v = np.maximum(1 - np.linalg.norm(g.nodes, axis=1), 0)
        errs.append(abs(rayleigh_quotient(v, p, g) - exact))
        assert errs[-1] <= 4 * exact * h
    assert errs[0] > errs[1] > errs[2]


@given(st.floats(-6, 6), st.sampled_from([2.0, 3.5, 16.0, 128.0, 256.0]))
def test_quotient_scale_invariance(log_c, p):
    g = build_domain(DomainSpec("l_shape"), 1 / 8)
    u = distance_to_boundary(g).values ** 1.5
    c = 10.0 ** log_c
    assert rayleigh_quotient(c * u, p, g) == pytest.approx(rayleigh_quotient(u, p, g), rel=1e-12)


def test_quotient_scaling_by_thousand(disk32):
    u = seed_field(disk32, "cone")
    assert rayleigh_quotient(1e3 * u.values, 8, disk32) == pytest.approx(
        rayleigh_quotient(u, 8), rel=1e-12)


def test_quotient_at_largest_p_is_finite(disk32):
    u = seed_field(disk32).values * 1e-30
    q = rayleigh_quotient(u, 256, disk32)
    assert math.isfinite(q) and q > 0


def test_zero_field(disk32):
    with pytest.raises(ZeroField):
        rayleigh_quotient(np.zeros(disk32.n_interior), 2, disk32)


@pytest.mark.parametrize("shape,h", [("rectangle", 1 / 32), ("disk", 1 / 16), ("l_shape", 1 / 8)])
def test_p2_matches_linear_eigensolve(shape, h):
    g = build_domain(DomainSpec(shape), h)
    pair = solve_first_eigenpair(g, 2)
    assert pair.converged
    assert pair.lambda_p == pytest.approx(smallest_laplacian_eigenvalue(g.interior_mask, h),
                                          rel=1e-9)
    assert pde_residual(pair) <= 1e-6


def test_pair_invariants(disk_sweep32):
    for pair in disk_sweep32:
        assert pair.converged
        assert _pnorm(pair) == pytest.approx(1.0, abs=1e-10)
        assert np.all(pair.u.values > 0)
        assert pair.rayleigh_value == pytest.approx(pair.lambda_p, rel=1e-10)
        assert rayleigh_quotient(pair.u, pair.p) == pytest.approx(pair.lambda_p, rel=1e-10)
        assert pair.root == pytest.approx(pair.lambda_p ** (1 / pair.p), rel=1e-12)
        assert pair.residual_norm <= SolverConfig().tol_for(pair.p)


@pytest.mark.parametrize("profile", ["distance_field", "cone", "ones"])
def test_rayleigh_value_never_increases(profile):
    g = build_domain(DomainSpec("l_shape"), 1 / 16)
    pair = solve_first_eigenpair(g, 6, None, SolverConfig(seed_profile=profile))
    hist = np.array(pair.history)
    assert pair.converged
    assert np.all(np.diff(hist) <= 1e-12 * hist[:-1])


def test_seed_profiles_reach_the_same_pair():
    g = build_domain(DomainSpec("rectangle"), 1 / 16)
    lams = [solve_first_eigenpair(g, 8, None, SolverConfig(seed_profile=s)).lambda_p
            for s in ("distance_field", "cone", "ones")]
    assert max(lams) == pytest.approx(min(lams), rel=1e-8)


def test_fixed_step_rule():
    g = build_domain(DomainSpec("rectangle"), 1 / 16)
    a = solve_first_eigenpair(g, 4)
    b = solve_first_eigenpair(g, 4, None, SolverConfig(step_rule="fixed", step=0.5))
    assert b.converged and b.lambda_p == pytest.approx(a.lambda_p, rel=1e-9)


def test_unconverged_pair_has_large_residual(square16):
    cfg = SolverConfig(max_iters=1)
    pair = solve_first_eigenpair(square16, 4, ScalarField(square16, np.ones(square16.n_interior)),
                                 cfg, init_p=4)
    assert not pair.converged
    assert pair.residual_norm > cfg.tol_for(4)
    with pytest.raises(MaxItersExceeded) as info:
        solve_first_eigenpair(square16, 4, ScalarField(square16, np.ones(square16.n_interior)),
                              cfg, init_p=4, raise_on_maxiter=True)
    assert info.value.pair is not None


def test_residual_grows_with_perturbation(square16, rng):
    pair = solve_first_eigenpair(square16, 2)
    bump = rng.standard_normal((20, square16.n_interior))
    means = []
    for delta in (1e-6, 1e-4, 1e-2):
        vals = [pde_residual(with_field(pair, np.abs(pair.u.values + delta * b))) for b in bump]
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def test_single_entry_sweep_equals_direct_solve(square16):
    (a,) = continuation_sweep(square16, [2])
    b = solve_first_eigenpair(square16, 2)
    assert a.lambda_p == b.lambda_p
    assert np.array_equal(a.u.values, b.u.values)


def test_warm_and_cold_starts_agree(disk32, disk_sweep32):
    for warm in disk_sweep32:
        cold = solve_first_eigenpair(disk32, warm.p)
        assert cold.rayleigh_value == pytest.approx(warm.rayleigh_value, rel=1e-6)


def test_sweep_is_reproducible(disk32, disk_sweep32):
    again = continuation_sweep(disk32, [2, 4, 8, 10, 16, 32, 64, 128])
    assert [p.lambda_p for p in again] == [p.lambda_p for p in disk_sweep32]


def test_disk_roots_near_inverse_inradius(disk_sweep32):
    roots = {p.p: p.root for p in disk_sweep32}
    assert roots[128] < roots[64] < roots[32]
    assert 1.0 <= roots[128] <= 1.1


@pytest.mark.parametrize("p", [1.5, 300.0])
def test_exponent_range(square16, p):
    with pytest.raises(ValueError, match=r"p out of supported range \[2,256\]"):
        solve_first_eigenpair(square16, p)


def test_sweep_rejects_unsorted(square16):
    with pytest.raises(ValueError):
        continuation_sweep(square16, [4, 2])


def test_bad_init(square16):
    with pytest.raises(ValueError):
        solve_first_eigenpair(square16, 2, np.zeros(square16.n_interior))
    with pytest.raises(ValueError):
        solve_first_eigenpair(square16, 2, -np.ones(square16.n_interior))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(seed_profile="random")
    assert SolverConfig().tol_for(16) == 1e-8 and SolverConfig().tol_for(17) == 1e-6
