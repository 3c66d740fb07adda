"""Estimator-style wrappers around the solvers.

These follow the scikit-learn conventions that make sense here: constructor
arguments are hyperparameters (``get_params``/``set_params``), ``fit`` stores
results in attributes with a trailing underscore, and inputs are validated on
entry.  The data passed to ``fit`` is a domain rather than a sample matrix, so
these are not meant for sklearn pipelines or cross-validation.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .asymptotics import DEFAULT_P_LIST, build_verdict, run_asymptotic_study
from .eigensolver import SolverConfig, check_exponent, solve_first_eigenpair
from .geometry import DomainGrid, DomainSpec, build_domain
from .measures import DiscreteMeasure, derived_measures
from .transport import nearest_boundary_points, solve_discrete_ot, w1_to_boundary


def _as_grid(X, h, stencil="forward") -> DomainGrid:
    if isinstance(X, DomainGrid):
        return X
    if isinstance(X, DomainSpec):
        if h is None:
            raise ValueError("h is required when fitting on a DomainSpec")
        return build_domain(X, h, stencil)
    raise TypeError(f"expected DomainGrid or DomainSpec, got {type(X).__name__}")


class PLaplacianEigensolver(BaseEstimator):
    """First eigenpair of the discrete p-Laplacian.

    >>> est = PLaplacianEigensolver(p=2, h=1/16).fit(DomainSpec("rectangle"))
    >>> round(est.lambda_, 1)
    19.7
    """

    def __init__(self, p=2.0, h=None, max_iters=200, grad_tol=None,
                 seed_profile="distance_field", stencil="forward"):
        self.p = p
        self.h = h
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.seed_profile = seed_profile
        self.stencil = stencil

    def _config(self) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, grad_tol=self.grad_tol,
                            seed_profile=self.seed_profile)

    def fit(self, X, y=None, init=None):
        check_exponent(self.p)
        grid = _as_grid(X, self.h, self.stencil)
        pair = solve_first_eigenpair(grid, self.p, init, self._config())
        self.grid_ = grid
        self.pair_ = pair
        self.lambda_ = pair.lambda_p
        self.root_ = pair.root
        self.u_ = pair.u.values
        self.n_iter_ = pair.iterations
        self.converged_ = pair.converged
        self.residual_ = pair.residual_norm
        return self

    def transform(self, X=None):
        """Source measure ``u^(p-1) dx`` of the fitted pair as node weights."""
        check_is_fitted(self, "pair_")
        return derived_measures(self.pair_, self.grid_).f.weights


class AsymptoticStudy(BaseEstimator):
    """Sweep over exponents plus the verdict of the large-p checks."""

    def __init__(self, h=None, p_list=DEFAULT_P_LIST, max_iters=200, grad_tol=None,
                 bound_constant=None):
        self.h = h
        self.p_list = p_list
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.bound_constant = bound_constant

    def fit(self, X, y=None):
        if not isinstance(X, DomainSpec):
            raise TypeError(f"expected DomainSpec, got {type(X).__name__}")
        if self.h is None:
            raise ValueError("h is required")
        cfg = SolverConfig(max_iters=self.max_iters, grad_tol=self.grad_tol)
        self.sweep_ = run_asymptotic_study(X, self.h, list(self.p_list), cfg)
        self.verdict_ = build_verdict(self.sweep_, self.bound_constant)
        self.records_ = self.sweep_.records
        return self

    def score(self, X=None, y=None):
        """Fraction of verdict checks that pass."""
        check_is_fitted(self, "verdict_")
        checks = self.verdict_["checks"]
        return sum(c["passed"] for c in checks) / len(checks)


class BoundaryTransport(BaseEstimator):
    """Optimal transport of weighted points to the boundary of a fitted grid.

    ``fit(X, sample_weight)`` computes the closed-form cost and, with
    ``method="both"``, the network-simplex plan used to cross-check it.
    ``predict`` returns the boundary point each row of ``X`` is sent to.
    """

    def __init__(self, grid=None, method="closed_form"):
        self.grid = grid
        self.method = method

    def fit(self, X, y=None, sample_weight=None):
        if not isinstance(self.grid, DomainGrid):
            raise TypeError("grid must be a DomainGrid")
        if self.method not in ("closed_form", "both"):
            raise ValueError(f"unknown method {self.method!r}")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns")
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        f = DiscreteMeasure(X, w)
        self.cost_, self.plan_ = w1_to_boundary(f, None, self.grid)
        if self.method == "both":
            self.lp_plan_ = solve_discrete_ot(f, self.grid.boundary_points)
            self.agreement_ = abs(self.lp_plan_.cost - self.cost_) / max(self.cost_, 1e-300)
        return self

    def predict(self, X):
        check_is_fitted(self, "cost_")
        X = check_array(X, dtype=float)
        idx, _ = nearest_boundary_points(X, self.grid.boundary_points)
        return self.grid.boundary_points[idx]
