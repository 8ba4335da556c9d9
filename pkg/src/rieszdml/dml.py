"""Cross-fitted debiased estimation of E m(X, gamma) with a regularized Riesz representer.

The orthogonal score is

    psi(W; theta, beta, rho) = theta - m(X, b)'beta - rho'b(X) (Y - b(X)'beta),

whose root over a fold is available in closed form because psi is linear in
theta.  Nuisances (beta, rho) are fitted by RMD on the complement of each
fold; the estimator is the unweighted average of the per-fold roots, with a
cross-fitted plug-in variance and Gaussian confidence interval.

Per-fold pipelines are pure and independent, so they could run concurrently;
they are executed in fold order here, which keeps results bit-reproducible.
Replication-level parallelism lives in the simulation module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .dictionaries import design_matrix
from .rmd import (
    INFEASIBLE,
    ITERATION_LIMIT,
    LambdaRule,
    RmdInfeasibleError,
    estimate_blp,
    estimate_riesz,
)


@dataclass(frozen=True)
class FoldPlan:
    """Partition of {0..n-1} into K folds whose sizes differ by at most one."""

    K: int
    assignments: np.ndarray  # fold ids in 1..K
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        if self.K < 2:
            raise ValueError("need K >= 2 folds")
        sizes = np.bincount(a, minlength=self.K + 1)[1:]
        if np.any(sizes == 0):
            raise ValueError("every fold must be non-empty")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes must differ by at most one")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    @property
    def n(self):
        return self.assignments.shape[0]

    def fold_rows(self, k):
        return np.flatnonzero(self.assignments == k)

    def complement_rows(self, k):
        return np.flatnonzero(self.assignments != k)


def make_fold_plan(n, K, seed):
    """Seeded balanced partition; deterministic given (n, K, seed)."""
    if n < 2 * K:
        raise ValueError("need n >= 2K observations")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=int)
    edges = np.linspace(0, n, K + 1).astype(int)
    for k in range(K):
        assignments[perm[edges[k]:edges[k + 1]]] = k + 1
    return FoldPlan(K=K, assignments=assignments, seed=seed)


# -- score function and derivatives -----------------------------------------

def score_psi(w, theta, beta, rho, dictionary, functional):
    """psi at one observation w = (y, x)."""
    y, x = w
    b = dictionary.evaluate(x)
    m = functional.m_of_basis(dictionary, x)
    return float(theta - m @ beta - (rho @ b) * (y - b @ beta))


def score_derivatives(w, theta, beta, rho, dictionary, functional):
    """(d psi / d beta, d psi / d rho) at one observation.

    d_beta psi = -m(x, b) + (rho'b) b  and  d_rho psi = -b (y - b'beta);
    these are the calculus derivatives of psi as written above, used for
    diagnostics and finite-difference checks.
    """
    y, x = w
    b = dictionary.evaluate(x)
    m = functional.m_of_basis(dictionary, x)
    d_beta = -m + (rho @ b) * b
    d_rho = -b * (y - b @ beta)
    return d_beta, d_rho


def fold_theta(data, rows, beta, rho, dictionary, functional):
    """Closed-form root of E_{rows} psi = 0 in theta."""
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ValueError("empty fold")
    return float(np.mean(_fold_contributions(data, rows, beta, rho, dictionary, functional)))


def _fold_contributions(data, rows, beta, rho, dictionary, functional):
    """Per-observation m'beta + rho'b (y - b'beta) over the rows."""
    B = design_matrix(dictionary, data, rows)
    m = functional.m_rows(dictionary, data.covariates[rows])
    y = data.outcome[rows]
    resid = y - B @ beta
    return m @ beta + (B @ rho) * resid


@dataclass
class FoldRecord:
    fold: int
    n_eval: int
    n_train: int
    theta: float
    lambda_blp: float
    lambda_riesz: float
    beta: np.ndarray
    rho: np.ndarray
    blp_l1: float
    blp_residual: float
    blp_iterations: int
    riesz_l1: float
    riesz_residual: float
    riesz_iterations: int

    def summary(self):
        return {
            "fold": self.fold,
            "n_eval": self.n_eval,
            "n_train": self.n_train,
            "theta": self.theta,
            "lambda_blp": self.lambda_blp,
            "lambda_riesz": self.lambda_riesz,
            "blp_l1": self.blp_l1,
            "blp_residual": self.blp_residual,
            "riesz_l1": self.riesz_l1,
            "riesz_residual": self.riesz_residual,
        }


@dataclass
class DmlResult:
    theta_hat: float
    sigma_hat: float
    ci: tuple
    alpha: float
    K: int
    n: int
    per_fold_theta: np.ndarray
    per_fold: list
    orthogonality: tuple  # (sup|E_n d_beta psi|, sup|E_n d_rho psi|)
    lambda_used: dict  # {"blp": ..., "riesz": ...} (per-fold means)
    seed: int
    warnings: list = field(default_factory=list)

    def summary(self):
        return {
            "theta_hat": self.theta_hat,
            "sigma_hat": self.sigma_hat,
            "ci": [self.ci[0], self.ci[1]],
            "alpha": self.alpha,
            "K": self.K,
            "n": self.n,
            "per_fold": [rec.summary() for rec in self.per_fold],
            "orthogonality": {
                "d_beta_sup": self.orthogonality[0],
                "d_rho_sup": self.orthogonality[1],
            },
            "lambda_used": dict(self.lambda_used),
            "seed": self.seed,
            "warnings": list(self.warnings),
        }


def fit_and_score_fold(data, dictionary, functional, eval_rows, train_rows,
                       blp_rule, riesz_rule, l1_bound=np.inf, opts=None,
                       plugin_only=False, fold_id=0):
    """Fit nuisances on train_rows, evaluate the fold estimate on eval_rows.

    The two index sets must be disjoint; cross-fitting hygiene is enforced
    here, so no caller can leak evaluation rows into nuisance fitting.
    """
    eval_rows = np.asarray(eval_rows, dtype=int)
    train_rows = np.asarray(train_rows, dtype=int)
    if np.intersect1d(eval_rows, train_rows).size > 0:
        raise ValueError("evaluation rows and nuisance-fitting rows overlap")
    if eval_rows.size == 0:
        raise ValueError("empty fold")

    p = dictionary.output_dim
    beta, blp_sol = estimate_blp(data, train_rows, dictionary, blp_rule, l1_bound, opts)
    _require_solved(blp_sol, "BLP", fold_id)
    if plugin_only:
        rho = np.zeros(p)
        riesz_sol = None
    else:
        rho, riesz_sol = estimate_riesz(data, train_rows, dictionary, functional,
                                        riesz_rule, l1_bound, opts)
        _require_solved(riesz_sol, "Riesz", fold_id)

    contrib = _fold_contributions(data, eval_rows, beta, rho, dictionary, functional)
    record = FoldRecord(
        fold=fold_id,
        n_eval=int(eval_rows.size),
        n_train=int(train_rows.size),
        theta=float(contrib.mean()),
        lambda_blp=blp_rule.lam(train_rows.size, p),
        lambda_riesz=0.0 if plugin_only else riesz_rule.lam(train_rows.size, p),
        beta=beta,
        rho=rho,
        blp_l1=blp_sol.l1_norm,
        blp_residual=blp_sol.max_residual,
        blp_iterations=blp_sol.iterations,
        riesz_l1=0.0 if plugin_only else riesz_sol.l1_norm,
        riesz_residual=0.0 if plugin_only else riesz_sol.max_residual,
        riesz_iterations=0 if plugin_only else riesz_sol.iterations,
    )
    return record, contrib


def _require_solved(sol, which, fold_id):
    if sol.status == INFEASIBLE:
        raise RmdInfeasibleError(f"{which} RMD fit certified infeasible in fold {fold_id}")
    if sol.status == ITERATION_LIMIT:
        raise RuntimeError(f"{which} RMD fit hit the iteration limit in fold {fold_id}")


def dml_estimate(data, dictionary, functional, K=5, rule=None, riesz_rule=None,
                 l1_bound=np.inf, alpha=0.05, seed=0, opts=None, plugin_only=False,
                 plan=None):
    """Cross-fitted estimate with standard error and Gaussian confidence interval.

    ``rule`` drives the BLP lambda and, unless ``riesz_rule`` is given, the
    Riesz lambda as well.  ``plugin_only`` forces rho_hat = 0 (no debiasing
    term); it exists as a comparison baseline for simulation studies.
    An explicit ``plan`` overrides the seeded fold construction.
    Deterministic given (data, config, seed).
    """
    functional.check_compatible(dictionary, data)
    if rule is None:
        rule = LambdaRule.gaussian_quantile()
    if riesz_rule is None:
        riesz_rule = rule
    n = data.n
    if plan is None:
        plan = make_fold_plan(n, K, seed)
    else:
        if plan.n != n:
            raise ValueError("fold plan length does not match the dataset")
        K = plan.K

    records = []
    contribs = np.empty(n)
    d_beta_sum = np.zeros(dictionary.output_dim)
    d_rho_sum = np.zeros(dictionary.output_dim)
    for k in range(1, K + 1):
        eval_rows = plan.fold_rows(k)
        record, contrib = fit_and_score_fold(
            data, dictionary, functional, eval_rows, plan.complement_rows(k),
            rule, riesz_rule, l1_bound, opts, plugin_only, fold_id=k,
        )
        records.append(record)
        contribs[eval_rows] = contrib
        # cross-fitted score-derivative averages on the evaluation fold
        B = design_matrix(dictionary, data, eval_rows)
        m = functional.m_rows(dictionary, data.covariates[eval_rows])
        resid = data.outcome[eval_rows] - B @ record.beta
        d_beta_sum += B.T @ (B @ record.rho) - m.sum(axis=0)
        d_rho_sum += -B.T @ resid

    per_fold_theta = np.array([rec.theta for rec in records])
    theta_hat = float(per_fold_theta.mean())
    psi = theta_hat - contribs
    sigma_hat = float(np.sqrt(np.mean(psi ** 2)))

    warn_list = []
    if sigma_hat == 0.0:
        warn_list.append("degenerate score: psi is constant across observations; zero-width CI")
    z = norm.ppf(1.0 - alpha / 2.0)
    half = z * sigma_hat / np.sqrt(n)
    ci = (theta_hat - half, theta_hat + half)

    orthogonality = (
        float(np.abs(d_beta_sum / n).max()),
        float(np.abs(d_rho_sum / n).max()),
    )
    lambda_used = {
        "blp": float(np.mean([rec.lambda_blp for rec in records])),
        "riesz": float(np.mean([rec.lambda_riesz for rec in records])),
    }
    return DmlResult(
        theta_hat=theta_hat,
        sigma_hat=sigma_hat,
        ci=ci,
        alpha=alpha,
        K=K,
        n=n,
        per_fold_theta=per_fold_theta,
        per_fold=records,
        orthogonality=orthogonality,
        lambda_used=lambda_used,
        seed=seed,
        warnings=warn_list,
    )


def orthogonality_report(data, dictionary, functional, beta_hat, rho_hat,
                         rows=None, lambda_blp=None, lambda_riesz=None):
    """Sup-norms of the averaged score derivatives at (beta_hat, rho_hat).

    Returns (||E_n d_beta psi||_inf, ||E_n d_rho psi||_inf) over the given
    rows (all rows by default).  When the lambdas used in the RMD fits are
    supplied, a diagnostic warning (not an error) is emitted if a sup-norm
    exceeds its lambda plus a 2-lambda sampling slack.
    """
    if rows is None:
        rows = np.arange(data.n)
    rows = np.asarray(rows, dtype=int)
    B = design_matrix(dictionary, data, rows)
    m = functional.m_rows(dictionary, data.covariates[rows])
    n = rows.size
    resid = data.outcome[rows] - B @ beta_hat
    d_beta = B.T @ (B @ rho_hat) / n - m.mean(axis=0)
    d_rho = -B.T @ resid / n
    d_beta_sup = float(np.abs(d_beta).max())
    d_rho_sup = float(np.abs(d_rho).max())
    if lambda_riesz is not None and d_beta_sup > 3.0 * lambda_riesz + 1e-7:
        warnings.warn(
            f"averaged d_beta psi sup-norm {d_beta_sup:.3g} exceeds lambda + slack "
            f"({lambda_riesz:.3g} + {2 * lambda_riesz:.3g})",
            stacklevel=2,
        )
    if lambda_blp is not None and d_rho_sup > 3.0 * lambda_blp + 1e-7:
        warnings.warn(
            f"averaged d_rho psi sup-norm {d_rho_sup:.3g} exceeds lambda + slack "
            f"({lambda_blp:.3g} + {2 * lambda_blp:.3g})",
            stacklevel=2,
        )
    return d_beta_sup, d_rho_sup
