"""First eigenpair of the discrete p-Laplacian.

The eigenpair minimizes the Rayleigh quotient ``E_p(u) / N_p(u)`` with

    E_p(u) = sum_samples |grad u|^p a_s,     N_p(u) = sum_nodes |u|^p h^2,

where the gradient samples and their areas ``a_s`` come from ``inflap.operators``.

Every p-power is handled in the log domain.  Iterates are kept nonnegative
with sup-norm one; the unit p-norm scaling is applied once at the end from the
stored ``log N_p``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .exceptions import MaxItersExceeded, ZeroField
from .geometry import DomainGrid, ScalarField, distance_to_boundary
from .operators import operators_for

log = logging.getLogger(__name__)

P_MIN, P_MAX = 2.0, 256.0
SEED_PROFILES = ("distance_field", "cone", "ones")
_EXP_CAP = 700.0


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    ``grad_tol=None`` picks 1e-8 for p <= 16 and 1e-6 above.  ``step_rule`` is
    ``"backtracking"`` (Armijo constant ``armijo_c``, factor ``shrink``) or
    ``"fixed"`` (unit multiple ``step`` of the search direction, falling back to
    backtracking whenever the fixed step would raise the Rayleigh value).
    ``p_ratio`` caps the exponent ratio of one warm-start stage: a solve
    started from a field belonging to a much smaller exponent walks up through
    intermediate exponents first.
    """

    max_iters: int = 200
    grad_tol: float | None = None
    step_rule: str = "backtracking"
    armijo_c: float = 1e-4
    shrink: float = 0.5
    step: float = 1.0
    seed_profile: str = "distance_field"
    p_ratio: float = 2 ** 0.25
    reproducible: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step_rule {self.step_rule!r}")
        if not 0 < self.shrink < 1 or not 0 < self.armijo_c < 1 or not self.step > 0:
            raise ValueError("need 0 < shrink < 1, 0 < armijo_c < 1, step > 0")
        if self.seed_profile not in SEED_PROFILES:
            raise ValueError(f"unknown seed_profile {self.seed_profile!r}")
        if not self.p_ratio > 1:
            raise ValueError("p_ratio must exceed 1")

    def tol_for(self, p: float) -> float:
        if self.grad_tol is not None:
            return self.grad_tol
        return 1e-8 if p <= 16 else 1e-6


@dataclass(frozen=True, eq=False)
class EigenPair:
    """A computed first eigenpair; ``u`` has unit discrete p-norm."""

    p: float
    lambda_p: float
    u: ScalarField
    iterations: int
    residual_norm: float
    rayleigh_value: float
    converged: bool = True
    log_lambda: float = field(default=float("nan"))
    history: tuple = field(default=(), repr=False)

    @property
    def root(self) -> float:
        """``lambda_p ** (1/p)``, computed from the log."""
        return math.exp(self.log_lambda / self.p)

    @property
    def grid(self) -> DomainGrid:
        return self.u.grid


def check_exponent(p: float) -> float:
    p = float(p)
    if not P_MIN <= p <= P_MAX:
        raise ValueError(f"p out of supported range [{P_MIN:g},{P_MAX:g}]: {p:g}")
    return p


# -- log-domain building blocks -------------------------------------------

def _log_abs(x):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x))


def log_pnorm_p(values: np.ndarray, p: float, weight) -> float:
    """``log(sum |v|^p * weight)`` without forming ``|v|^p``.

    ``weight`` is a positive scalar or one positive weight per value.
    """
    lv = _log_abs(values)
    live = np.isfinite(lv)
    if not live.any():
        return -math.inf
    if np.ndim(weight) == 0:
        return float(logsumexp(p * lv[live])) + math.log(weight)
    return float(logsumexp(p * lv[live] + np.log(np.asarray(weight)[live])))


def log_energy(u: np.ndarray, p: float, grid: DomainGrid) -> float:
    ops = operators_for(grid)
    gx, gy = ops.grad(u)
    return log_pnorm_p(np.hypot(gx, gy), p, ops.area)


def log_rayleigh(u: np.ndarray, p: float, grid: DomainGrid) -> float:
    ln = log_pnorm_p(u, p, grid.cell_area)
    if not np.isfinite(ln):
        raise ZeroField("field has zero p-norm")
    return log_energy(u, p, grid) - ln


def rayleigh_quotient(u: ScalarField | np.ndarray, p: float, grid: DomainGrid | None = None) -> float:
    """``||grad u||_p^p / ||u||_p^p``; exact under positive rescaling of ``u``."""
    if isinstance(u, ScalarField):
        grid = grid or u.grid
        u = u.values
    if p <= 1:
        raise ValueError("p must exceed 1")
    u = np.asarray(u, dtype=float)
    scale = np.max(np.abs(u))
    if scale == 0:
        raise ZeroField("field is identically zero")
    # the quotient is 0-homogeneous; dividing by a power of two is exact
    u = u / 2.0 ** math.frexp(scale)[1]
    return math.exp(log_rayleigh(u, p, grid))


def _flux_weights(gx, gy, p, log_lambda):
    """``|g|^(p-2) / lambda`` per cell, zero where ``g = 0``."""
    lg = _log_abs(np.hypot(gx, gy))
    with np.errstate(invalid="ignore"):
        e = np.minimum((p - 2) * lg - log_lambda, _EXP_CAP)
    w = np.exp(e)
    if p == 2:
        w = np.full_like(w, math.exp(-log_lambda))
    return np.where(np.isfinite(lg) | (p == 2), w, 0.0), lg


def scaled_residual(u: np.ndarray, p: float, grid: DomainGrid, log_lambda: float) -> np.ndarray:
    """``h^2 * (-div(|g|^(p-2) g) - lambda u^(p-1)) / lambda`` per node."""
    ops = operators_for(grid)
    gx, gy = ops.grad(u)
    w, _ = _flux_weights(gx, gy, p, log_lambda)
    flux = -ops.div(w * gx, w * gy)
    return grid.cell_area * (flux - _pow(u, p - 1))


def _pow(u, q):
    with np.errstate(divide="ignore"):
        return np.where(u > 0, np.exp(q * np.log(np.where(u > 0, u, 1.0))), 0.0)


def _relative_residual(u, p, grid, log_lambda, log_n):
    """L1 residual of the unit-p-norm rescaling of ``u``, divided by lambda."""
    r = scaled_residual(u, p, grid, log_lambda)
    return float(np.sum(np.abs(r)) * math.exp(-(p - 1) / p * log_n))


def pde_residual(pair: EigenPair, grid: DomainGrid | None = None) -> float:
    """``||-div(|grad u|^(p-2) grad u) - lambda u^(p-1)||_1 / lambda``."""
    grid = grid or pair.grid
    u = pair.u.values
    return _relative_residual(u, pair.p, grid, pair.log_lambda,
                              log_pnorm_p(u, pair.p, grid.cell_area))


# -- solver ---------------------------------------------------------------

def seed_field(grid: DomainGrid, profile: str = "distance_field") -> ScalarField:
    if profile == "distance_field":
        d = distance_to_boundary(grid).values
        return ScalarField(grid, d / d.max())
    if profile == "cone":
        d = distance_to_boundary(grid).values
        c = grid.nodes[np.argmax(d)]
        r = np.linalg.norm(grid.nodes - c, axis=1)
        v = np.maximum(d.max() - r, 0.0) + 1e-3 * d / d.max()
        return ScalarField(grid, v / v.max())
    if profile == "ones":
        return ScalarField(grid, np.ones(grid.n_interior))
    raise ValueError(f"unknown seed profile {profile!r}")


class _Problem:
    """Cached evaluation of one iterate for fixed ``(grid, p)``."""

    def __init__(self, grid, p):
        self.grid, self.p = grid, p
        self.ops = operators_for(grid)
        self.a = grid.cell_area

    def state(self, u):
        p, a = self.p, self.a
        gx, gy = self.ops.grad(u)
        ln = log_pnorm_p(u, p, a)
        le = log_pnorm_p(np.hypot(gx, gy), p, self.ops.area)
        ll = le - ln
        w, lg = _flux_weights(gx, gy, p, ll)
        res = a * (-self.ops.div(w * gx, w * gy) - _pow(u, p - 1))
        return dict(u=u, gx=gx, gy=gy, w=w, lg=lg, log_n=ln, log_r=ll, res=res)

    def relative_residual(self, s):
        return float(np.sum(np.abs(s["res"])) * math.exp(-(self.p - 1) / self.p * s["log_n"]))

    def _stiffness(self, s):
        p, ops = self.p, self.ops
        gx, gy, w = s["gx"], s["gy"], s["w"]
        g2 = gx * gx + gy * gy
        with np.errstate(invalid="ignore", divide="ignore"):
            nx_ = np.where(g2 > 0, gx * gx / g2, 0.0)
            ny_ = np.where(g2 > 0, gy * gy / g2, 0.0)
            nxy = np.where(g2 > 0, gx * gy / g2, 0.0)
        kxx = w * (1 + (p - 2) * nx_)
        kyy = w * (1 + (p - 2) * ny_)
        kxy = w * (p - 2) * nxy
        Dx, Dy, ar = ops.Dx, ops.Dy, ops.area
        return (ops.DxT @ sparse.diags(ar * kxx) @ Dx + ops.DyT @ sparse.diags(ar * kyy) @ Dy
                + ops.DxT @ sparse.diags(ar * kxy) @ Dy + ops.DyT @ sparse.diags(ar * kxy) @ Dx)

    def directions(self, s):
        """Newton direction on the constraint surface plus an SPD fallback."""
        p, a = self.p, self.a
        u = s["u"]
        K = self._stiffness(s)
        mass = a * (p - 1) * _pow(u, p - 2)
        b = a * _pow(u, p - 1)
        A = (K - sparse.diags(mass)).tocsr()
        n = len(u)
        reg = 1e-13 * max(float(np.max(np.abs(K.diagonal()))), float(mass.max()), 1e-300)
        A = A + sparse.identity(n) * reg
        bord = sparse.bmat([[A, -b[:, None]], [b[None, :], None]], format="csc")
        rhs = np.concatenate([-s["res"], [0.0]])
        with np.errstate(all="ignore"):
            sol = spsolve(bord, rhs)
        newton = sol[:n] if np.all(np.isfinite(sol)) else None

        M = (K + sparse.diags(mass) + sparse.identity(n) * reg).tocsc()
        grad_dir = -spsolve(M, s["res"])
        # remove the radial component, which cannot change the quotient
        grad_dir -= (grad_dir @ b) / (b @ b) * u if b @ b > 0 else 0.0
        return newton, grad_dir

    def slope(self, s, d):
        """Directional derivative of ``log R`` along ``d``."""
        return self.p * float(s["res"] @ d) / math.exp(s["log_n"])


def _normalize_sup(u):
    m = float(np.max(u))
    if not m > 0:
        raise ZeroField("iterate collapsed to zero")
    return u / m


def _descend(prob: _Problem, u: np.ndarray, tol: float, cfg: SolverConfig, max_iters: int):
    """Monotone projected descent; returns ``(state, iterations, converged, history)``."""
    s = prob.state(_normalize_sup(np.maximum(u, 0.0)))
    hist = [s["log_r"]]
    rel = prob.relative_residual(s)
    it = 0
    while rel > tol and it < max_iters:
        it += 1
        newton, gdir = prob.directions(s)
        accepted = None
        for d in (newton, gdir):
            if d is None:
                continue
            slope = prob.slope(s, d)
            if not slope < 0:
                continue
            accepted = _line_search(prob, s, d, slope, cfg)
            if accepted is not None:
                break
        if accepted is None:
            log.debug("p=%g: no descent direction at iteration %d (residual %.3e)",
                      prob.p, it, rel)
            break
        s = accepted
        hist.append(s["log_r"])
        rel = prob.relative_residual(s)
    return s, it, rel <= tol, hist


def _line_search(prob, s, d, slope, cfg):
    u = s["u"]
    alpha = cfg.step if cfg.step_rule == "fixed" else 1.0
    # a cap keeps the trial inside the nonnegative cone for most of the step
    for _ in range(60):
        trial = np.maximum(u + alpha * d, 0.0)
        if trial.max() > 0:
            t = prob.state(_normalize_sup(trial))
            if cfg.step_rule == "fixed" and t["log_r"] <= s["log_r"] and alpha == cfg.step:
                return t
            if t["log_r"] <= s["log_r"] + cfg.armijo_c * alpha * slope:
                return t
            # accept a non-increasing step once the Armijo slope falls below rounding
            if abs(alpha * slope) < 1e-15 and t["log_r"] <= s["log_r"]:
                return t
        alpha *= cfg.shrink
    return None


def _finish(prob, s, iterations, converged, hist):
    grid, p = prob.grid, prob.p
    u = s["u"] * math.exp(-s["log_n"] / p)
    # one more pass makes the stored norm exact to rounding
    u = u * math.exp(-log_pnorm_p(u, p, grid.cell_area) / p)
    ll = log_rayleigh(u, p, grid)
    lam = math.exp(ll)
    rel = _relative_residual(u, p, grid, ll, log_pnorm_p(u, p, grid.cell_area))
    return EigenPair(p=p, lambda_p=lam, u=ScalarField(grid, u), iterations=iterations,
                     residual_norm=rel, rayleigh_value=lam, converged=converged,
                     log_lambda=ll, history=tuple(math.exp(h) for h in hist))


def solve_first_eigenpair(grid: DomainGrid, p: float, init: ScalarField | None = None,
                          cfg: SolverConfig | None = None, *, init_p: float | None = None,
                          raise_on_maxiter: bool = False) -> EigenPair:
    """Minimize the Rayleigh quotient from ``init`` down to ``cfg.tol_for(p)``.

    The solve walks from ``init_p`` (the exponent ``init`` was computed for) up
    to ``p`` through intermediate exponents spaced by ``cfg.p_ratio``.  A seed
    profile counts as a p = 2 field, so a cold start at large ``p`` follows the
    same path as a warm-started sweep; started directly at large ``p`` the
    descent can settle in a different positive critical point.
    """
    cfg = cfg or SolverConfig()
    p = check_exponent(p)
    if init is None:
        init = seed_field(grid, cfg.seed_profile)
    u0 = np.asarray(init.values if isinstance(init, ScalarField) else init, dtype=float)
    if np.any(u0 < 0) or not np.any(u0 > 0):
        raise ValueError("init must be nonnegative and not identically zero")

    stages = _stages(P_MIN if init_p is None else init_p, p, cfg.p_ratio)
    u, total = u0, 0
    for q in stages[:-1]:
        prob = _Problem(grid, q)
        s, it, _, _ = _descend(prob, u, cfg.tol_for(q) * 100, cfg, cfg.max_iters)
        u, total = s["u"], total + it
    prob = _Problem(grid, p)
    s, it, ok, hist = _descend(prob, u, cfg.tol_for(p), cfg, cfg.max_iters)
    pair = _finish(prob, s, total + it, ok, hist)
    if not ok:
        log.warning("p=%g: stopped after %d iterations with residual %.3e",
                    p, pair.iterations, pair.residual_norm)
        if raise_on_maxiter:
            raise MaxItersExceeded(f"p={p:g} not converged after {pair.iterations} iterations",
                                   pair)
    return pair


def _stages(p_from, p_to, ratio):
    if p_from is None or p_from >= p_to:
        return [p_to]
    n = max(1, math.ceil(math.log(p_to / p_from) / math.log(ratio) - 1e-9))
    return [p_from * (p_to / p_from) ** (k / n) for k in range(1, n + 1)]


def continuation_sweep(grid: DomainGrid, p_list, cfg: SolverConfig | None = None,
                       init: ScalarField | None = None) -> list[EigenPair]:
    """Solve each exponent in ascending ``p_list``, warm-starting from the previous one."""
    cfg = cfg or SolverConfig()
    p_list = [check_exponent(p) for p in p_list]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be strictly ascending")
    pairs = []
    u, prev_p = init, None
    for p in p_list:
        pair = solve_first_eigenpair(grid, p, u, cfg, init_p=prev_p)
        pairs.append(pair)
        if pair.converged or u is None:
            u, prev_p = pair.u, p
    return pairs


def with_field(pair: EigenPair, values: np.ndarray) -> EigenPair:
    """Copy of ``pair`` carrying different field values (for diagnostics)."""
    return replace(pair, u=ScalarField(pair.grid, values))
