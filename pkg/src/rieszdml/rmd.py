"""Regularized minimum distance problems: min ||t||_1 s.t. ||G t - M||_inf <= lambda.

The residual convention is g(t) = G_hat t - M_hat, so the sup-norm constraint
reads ``|(G_hat t - M_hat)_j| <= lambda`` for every j, with an optional
l1-budget ||t||_1 <= B (B = inf drops it).  Two instantiations are exposed:

* ``estimate_blp``   -- G_hat = E_A[b b'],  M_hat = E_A[Y b]   (sparse regression)
* ``estimate_riesz`` -- G_hat = E_A[b b'],  M_hat = E_A[m(X, b)] (sparse Riesz representer)

The default backend turns the problem into the LP

    min sum(t+ + t-)  s.t.  -lambda <= G (t+ - t-) - M <= lambda,  t+- >= 0,
                            sum(t+ + t-) <= B,

and solves it exactly with a dense two-phase simplex.  A first-order
primal-dual backend is available for large p where a vertex method is
impractical; it certifies near-optimality through a dual lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import lp
from .dictionaries import design_matrix
from .functional import m_hat_vector

OPTIMAL = lp.OPTIMAL
INFEASIBLE = lp.INFEASIBLE
ITERATION_LIMIT = lp.ITERATION_LIMIT


class RmdInfeasibleError(RuntimeError):
    """Raised when an RMD fit required by a pipeline is certified infeasible."""


@dataclass
class RmdProblem:
    """Data of one RMD instance; G_hat is symmetrized on construction."""

    G_hat: np.ndarray
    M_hat: np.ndarray
    lam: float
    l1_bound: float = np.inf

    def __post_init__(self):
        G = np.asarray(self.G_hat, dtype=float)
        M = np.asarray(self.M_hat, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("G_hat must be square")
        if M.shape != (G.shape[0],):
            raise ValueError("M_hat length must match G_hat")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(M))):
            raise ValueError("non-finite entries in RMD problem")
        asym = np.abs(G - G.T).max() if G.size else 0.0
        if asym > 1e-10 * (1.0 + np.abs(G).max()):
            raise ValueError("G_hat is not symmetric")
        self.G_hat = 0.5 * (G + G.T)
        self.M_hat = M
        self.lam = float(self.lam)
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise ValueError("lambda must be finite and >= 0")
        self.l1_bound = float(self.l1_bound)
        if not self.l1_bound > 0.0:
            raise ValueError("l1_bound must be positive (inf drops the constraint)")

    @property
    def p(self):
        return self.M_hat.shape[0]


@dataclass
class RmdSolution:
    t_hat: np.ndarray
    l1_norm: float
    max_residual: float
    status: str
    iterations: int


@dataclass
class SolverOptions:
    max_iters: int = 100_000
    feas_tol: float = 1e-7
    backend: str = "simplex"  # "simplex" | "first_order"
    # first-order controls
    fo_tol: float = 1e-8
    fo_max_iters: int = 200_000


@dataclass(frozen=True)
class LambdaRule:
    """How lambda is picked from the fitting sample.

    ``fixed(value)`` uses the value as-is.  ``gaussian_quantile(c, alpha)``
    sets lambda = c * PhiInv(1 - alpha / (2 p)) / sqrt(|A|), the usual
    moderate-deviation surrogate scaling like 1/sqrt(n).
    """

    method: str = "gaussian_quantile"
    value: float = 0.0
    c: float = 1.1
    alpha: float = 0.05

    @classmethod
    def fixed(cls, value):
        return cls(method="fixed", value=float(value))

    @classmethod
    def gaussian_quantile(cls, c=1.1, alpha=0.05):
        return cls(method="gaussian_quantile", c=float(c), alpha=float(alpha))

    def lam(self, n_rows, p):
        if self.method == "fixed":
            out = float(self.value)
        elif self.method == "gaussian_quantile":
            out = self.c * norm.ppf(1.0 - self.alpha / (2.0 * p)) / np.sqrt(n_rows)
        else:
            raise ValueError(f"unknown lambda rule {self.method!r}")
        if not np.isfinite(out) or out < 0.0:
            raise ValueError("lambda rule produced an invalid value")
        return out


def _build_lp(prob):
    """LP standard form for the RMD instance (variables t+, t-, slacks)."""
    G, M, lam = prob.G_hat, prob.M_hat, prob.lam
    p = prob.p
    bounded = np.isfinite(prob.l1_bound)
    m_rows = 2 * p + (1 if bounded else 0)
    n_cols = 4 * p + (1 if bounded else 0)
    A = np.zeros((m_rows, n_cols))
    A[:p, :p] = G
    A[:p, p:2 * p] = -G
    A[:p, 2 * p:3 * p] = np.eye(p)
    A[p:2 * p, :p] = -G
    A[p:2 * p, p:2 * p] = G
    A[p:2 * p, 3 * p:4 * p] = np.eye(p)
    b = np.concatenate([M + lam, lam - M])
    if bounded:
        A[2 * p, :2 * p] = 1.0
        A[2 * p, 4 * p] = 1.0
        b = np.append(b, prob.l1_bound)
    c = np.zeros(n_cols)
    c[:2 * p] = 1.0
    return A, b, c


def _solve_simplex(prob, opts):
    A, b, c = _build_lp(prob)
    res = lp.solve_standard_form(A, b, c, max_iters=opts.max_iters)
    p = prob.p
    t = res.z[:p] - res.z[p:2 * p]
    return t, res.status, res.iterations


def _solve_first_order(prob, opts):
    """Chambolle-Pock primal-dual iteration on min ||t||_1 + I{||Gt - M||_inf <= lam}.

    Returns a point whose optimality is certified (when possible) by the
    dual lower bound M'y - lam ||y||_1 over ||G y||_inf <= 1; the caller
    downgrades the status when feasibility or the gap fails its tolerance.
    """
    G, M, lam = prob.G_hat, prob.M_hat, prob.lam
    p = prob.p
    Lnorm = np.linalg.norm(G, 2)
    if Lnorm == 0.0:
        t = np.zeros(p)
        status = OPTIMAL if np.abs(M).max() <= lam + opts.feas_tol else INFEASIBLE
        return t, status, 0
    tau = 0.95 / Lnorm
    sigma = 0.95 / Lnorm
    t = np.zeros(p)
    t_bar = t.copy()
    y = np.zeros(p)
    it = 0
    check_every = 200
    for it in range(1, opts.fo_max_iters + 1):
        # dual prox: argmax over y of <y, G t_bar> - M'y - lam||y||_1 - ||y - y0||^2/(2 sigma)
        y = y + sigma * (G @ t_bar - M)
        y = np.sign(y) * np.maximum(np.abs(y) - sigma * lam, 0.0)
        t_new = t - tau * (G @ y)
        t_new = np.sign(t_new) * np.maximum(np.abs(t_new) - tau, 0.0)
        if np.isfinite(prob.l1_bound):
            l1 = np.abs(t_new).sum()
            if l1 > prob.l1_bound:
                t_new *= prob.l1_bound / l1
        t_bar = 2.0 * t_new - t
        t = t_new
        if it % check_every == 0:
            resid = np.abs(G @ t - M).max()
            # scale y into the dual-feasible set {||G y||_inf <= 1} to get a
            # valid lower bound -M'y - lam ||y||_1 on the optimal value
            gy = np.abs(G @ y).max()
            y_feas = y / max(1.0, gy)
            lower = -(M @ y_feas) - lam * np.abs(y_feas).sum()
            gap = np.abs(t).sum() - lower
            if resid <= lam + 0.1 * opts.feas_tol and gap <= opts.fo_tol * (1.0 + np.abs(t).sum()):
                return t, OPTIMAL, it
    return t, ITERATION_LIMIT, it


def solve_rmd(prob, opts=None):
    """Solve one RMD instance; feasibility of the answer is re-checked directly.

    ``status`` is "optimal" only when the returned point passes an
    independent residual check; "infeasible" only when the LP is certified
    infeasible (possible when l1_bound is below the minimal feasible l1
    norm, or when M_hat is unreachable within lambda for a singular G_hat).
    """
    if opts is None:
        opts = SolverOptions()
    if opts.backend == "simplex":
        t, status, iters = _solve_simplex(prob, opts)
    elif opts.backend == "first_order":
        t, status, iters = _solve_first_order(prob, opts)
    else:
        raise ValueError(f"unknown backend {opts.backend!r}")

    max_resid = float(np.abs(prob.G_hat @ t - prob.M_hat).max()) if prob.p else 0.0
    l1 = float(np.abs(t).sum())
    if status == OPTIMAL:
        feasible = max_resid <= prob.lam + opts.feas_tol and l1 <= prob.l1_bound + opts.feas_tol
        if not feasible:
            # A finished simplex run always returns a feasible vertex; treat
            # numerical dust beyond the tolerance as a failed run.
            status = ITERATION_LIMIT
    if status == INFEASIBLE:
        t = np.zeros(prob.p)
        l1 = 0.0
        max_resid = float(np.abs(prob.M_hat).max())
    return RmdSolution(t_hat=t, l1_norm=l1, max_residual=max_resid,
                       status=status, iterations=iters)


def gram_and_moments(dictionary, data, rows, outcome=True):
    """G_hat = E_A[b b'] and, optionally, M_hat = E_A[Y b] over the rows."""
    rows = np.asarray(rows, dtype=int)
    B = design_matrix(dictionary, data, rows)
    n = B.shape[0]
    G = B.T @ B / n
    if not outcome:
        return G, None
    M = B.T @ data.outcome[rows] / n
    return G, M


def estimate_blp(data, rows, dictionary, rule, l1_bound=np.inf, opts=None):
    """Sparse best-linear-predictor fit on the given rows.

    Returns (beta_hat, RmdSolution); the solution's max_residual equals
    ||E_A[b (Y - b'beta_hat)]||_inf.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size < 2:
        raise ValueError("need at least 2 rows to fit")
    G, M = gram_and_moments(dictionary, data, rows)
    lam = rule.lam(rows.size, dictionary.output_dim)
    sol = solve_rmd(RmdProblem(G, M, lam, l1_bound), opts)
    return sol.t_hat, sol


def estimate_riesz(data, rows, dictionary, functional, rule, l1_bound=np.inf, opts=None):
    """Sparse Riesz-representer fit on the given rows.

    Returns (rho_hat, RmdSolution); the solution's max_residual equals
    ||E_A[m(X, b)] - G_hat rho_hat||_inf.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size < 2:
        raise ValueError("need at least 2 rows to fit")
    functional.check_compatible(dictionary, data)
    G, _ = gram_and_moments(dictionary, data, rows, outcome=False)
    M = m_hat_vector(functional, dictionary, data, rows)
    lam = rule.lam(rows.size, dictionary.output_dim)
    sol = solve_rmd(RmdProblem(G, M, lam, l1_bound), opts)
    return sol.t_hat, sol
