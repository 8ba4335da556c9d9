"""Data-generating processes with known functionals and a Monte Carlo harness.

Three DGP families:

* ``SparseLinearDgp``  -- Y = b(X)'beta_star + noise on a polynomial or
  identity dictionary, X iid standard normal or uniform[-1, 1].
* ``AteLogisticDgp``   -- binary treatment with logistic propensity (index
  clipped so the propensity stays inside [0.05, 0.95]) and additive effect:
  Y = tau D + Z'outcome_coefs + noise.
* ``DenseDecayDgp``    -- dense regression: coefficients j^(-decay) over all
  non-constant elements of a degree-2 polynomial dictionary, X standard
  normal.  The Riesz representer of a coordinate average derivative stays
  sparse here (the Gaussian score direction is a basis element), which is
  the dense-regression / sparse-representer regime.

``true_theta`` is analytic where possible and otherwise falls back to
quadrature (d = 1) or a large Monte Carlo oracle with a reported standard
error; ``true_theta_info`` says which path produced the number.

Replications of ``run_monte_carlo`` are independent; per-replication seeds
are derived as SeedSequence([seed, rep]), so results do not depend on
execution order and the harness may run replications across processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dictionaries import Dataset, IdentityDictionary, PolynomialDictionary
from .dml import dml_estimate
from .functional import AverageDerivative, AverageTreatmentEffect, PolicyShift
from .rmd import LambdaRule


class NoClosedFormError(ValueError):
    """No closed-form Riesz representer (or target) for this (dgp, functional)."""


_LOGIT_BOUND = float(np.log(0.95 / 0.05))  # propensity clipped to [0.05, 0.95]


def _draw_x(rng, n, d, x_dist):
    if x_dist == "normal":
        return rng.standard_normal((n, d))
    if x_dist == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, d))
    raise ValueError(f"unknown x_dist {x_dist!r}")


@dataclass(frozen=True)
class SparseLinearDgp:
    """Exact linear model on a dictionary: Y = b(X)'beta_star + sd * N(0,1)."""

    dictionary: object
    beta_star: np.ndarray
    x_dist: str = "normal"
    noise_sd: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float)
        if beta.shape != (self.dictionary.output_dim,):
            raise ValueError("beta_star length must equal the dictionary output_dim")
        if self.x_dist not in ("normal", "uniform"):
            raise ValueError(f"unknown x_dist {self.x_dist!r}")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be >= 0")
        beta.setflags(write=False)
        object.__setattr__(self, "beta_star", beta)

    @property
    def d(self):
        return self.dictionary.input_dim

    def gamma_values(self, X):
        return self.dictionary.evaluate_rows(X) @ self.beta_star

    def generate(self, n, seed):
        if n < 2:
            raise ValueError("need n >= 2")
        rng = np.random.default_rng(seed)
        X = _draw_x(rng, n, self.d, self.x_dist)
        y = self.gamma_values(X) + self.noise_sd * rng.standard_normal(n)
        return Dataset(y, X)


@dataclass(frozen=True)
class AteLogisticDgp:
    """Binary treatment, logistic propensity with enforced overlap, additive effect."""

    d_z: int
    outcome_coefs: np.ndarray
    tau: float
    propensity_coefs: np.ndarray
    noise_sd: float = 1.0

    def __post_init__(self):
        oc = np.asarray(self.outcome_coefs, dtype=float)
        pc = np.asarray(self.propensity_coefs, dtype=float)
        if oc.shape != (self.d_z,) or pc.shape != (self.d_z,):
            raise ValueError("coefficient lengths must equal d_z")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be >= 0")
        oc.setflags(write=False)
        pc.setflags(write=False)
        object.__setattr__(self, "outcome_coefs", oc)
        object.__setattr__(self, "propensity_coefs", pc)

    def propensity(self, Z):
        index = np.clip(Z @ self.propensity_coefs, -_LOGIT_BOUND, _LOGIT_BOUND)
        return 1.0 / (1.0 + np.exp(-index))

    def gamma_values(self, X):
        # covariate layout: (D, Z)
        return self.tau * X[:, 0] + X[:, 1:] @ self.outcome_coefs

    def generate(self, n, seed):
        if n < 2:
            raise ValueError("need n >= 2")
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((n, self.d_z))
        pi = self.propensity(Z)
        D = (rng.random(n) < pi).astype(float)
        y = self.tau * D + Z @ self.outcome_coefs + self.noise_sd * rng.standard_normal(n)
        X = np.hstack([D[:, np.newaxis], Z])
        return Dataset(y, X, treatment_col=0)


def dense_decay_dgp(d, decay, noise_sd=1.0, scale=1.0):
    """Dense-coefficient regression on a degree-2 polynomial dictionary.

    Coefficient j (over the non-constant basis elements, in basis order) is
    scale * j^(-decay); the constant gets 0.
    """
    dictionary = PolynomialDictionary(d, degree=2)
    p = dictionary.output_dim
    beta = np.zeros(p)
    beta[1:] = scale * np.arange(1, p, dtype=float) ** (-float(decay))
    return SparseLinearDgp(dictionary, beta, "normal", noise_sd)


# -- true target values ------------------------------------------------------

@dataclass(frozen=True)
class TrueTheta:
    value: float
    se: float
    method: str  # "analytic" | "quadrature" | "monte_carlo"


def _moment(x_dist, g):
    """E[X^g] for a single coordinate of the covariate distribution."""
    if g == 0:
        return 1.0
    if g % 2 == 1:
        return 0.0
    if x_dist == "normal":
        # (g-1)!! for even g
        out = 1.0
        for k in range(g - 1, 0, -2):
            out *= k
        return out
    if x_dist == "uniform":
        return 1.0 / (g + 1.0)
    raise ValueError(f"unknown x_dist {x_dist!r}")


def _mean_directional_derivative(dictionary, x_dist, a):
    """E[grad b(X) a] per basis element for polynomial/identity dictionaries."""
    a = np.asarray(a, dtype=float)
    if isinstance(dictionary, IdentityDictionary):
        return a.copy()
    if isinstance(dictionary, PolynomialDictionary):
        out = np.zeros(dictionary.output_dim)
        for col, term in enumerate(dictionary.terms):
            if term[0] == "pow":
                _, k, g = term
                out[col] = a[k] * g * _moment(x_dist, g - 1)
            elif term[0] == "pair":
                _, j, k = term
                out[col] = a[j] * _moment(x_dist, 1) + a[k] * _moment(x_dist, 1)
        return out
    raise NoClosedFormError("analytic mean derivative needs a polynomial or identity dictionary")


def true_theta_info(dgp, functional, mc_draws=10_000_000, mc_seed=202_406):
    """The target E m(X, gamma*) with its provenance.

    Analytic where available, Gauss quadrature for one-dimensional policy
    shifts, otherwise a Monte Carlo oracle over ``mc_draws`` fresh covariate
    draws with the reported standard error.
    """
    if isinstance(dgp, AteLogisticDgp):
        if isinstance(functional, AverageTreatmentEffect):
            # gamma(1, z) - gamma(0, z) = tau for the additive outcome
            return TrueTheta(float(dgp.tau), 0.0, "analytic")
        raise ValueError("AteLogisticDgp only pairs with the ATE functional")
    if not isinstance(dgp, SparseLinearDgp):
        raise ValueError(f"unsupported dgp {type(dgp).__name__}")

    if isinstance(functional, AverageDerivative):
        mean_dd = _mean_directional_derivative(dgp.dictionary, dgp.x_dist, functional.direction)
        return TrueTheta(float(mean_dd @ dgp.beta_star), 0.0, "analytic")

    if isinstance(functional, PolicyShift):
        S, c = functional.transport_matrix, functional.shift
        if np.array_equal(S, np.eye(S.shape[0])) and not np.any(c):
            return TrueTheta(0.0, 0.0, "analytic")
        if dgp.d == 1:
            return TrueTheta(_policy_shift_quadrature(dgp, functional), 0.0, "quadrature")
        rng = np.random.default_rng(mc_seed)
        total = 0.0
        total_sq = 0.0
        done = 0
        chunk = 500_000
        while done < mc_draws:
            size = min(chunk, mc_draws - done)
            X = _draw_x(rng, size, dgp.d, dgp.x_dist)
            vals = functional.m_rows(dgp.dictionary, X) @ dgp.beta_star
            total += vals.sum()
            total_sq += (vals ** 2).sum()
            done += size
        mean = total / mc_draws
        var = total_sq / mc_draws - mean ** 2
        return TrueTheta(float(mean), float(np.sqrt(max(var, 0.0) / mc_draws)), "monte_carlo")

    raise ValueError(f"unsupported functional {type(functional).__name__} for this dgp")


def _policy_shift_quadrature(dgp, functional, nodes=120):
    if dgp.x_dist == "normal":
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / np.sqrt(2.0 * np.pi)
    else:
        x, w = np.polynomial.legendre.leggauss(nodes)
        w = w / 2.0
    vals = functional.m_rows(dgp.dictionary, x[:, np.newaxis]) @ dgp.beta_star
    return float(w @ vals)


def true_theta(dgp, functional):
    return true_theta_info(dgp, functional).value


# -- closed-form Riesz representers (simulation oracles) ---------------------

def true_riesz_rows(dgp, functional, X):
    """alpha*(x_i) per row, for the (dgp, functional) pairs with closed forms."""
    X = np.asarray(X, dtype=float)
    if isinstance(dgp, AteLogisticDgp) and isinstance(functional, AverageTreatmentEffect):
        D = X[:, 0]
        pi = dgp.propensity(X[:, 1:])
        return D / pi - (1.0 - D) / (1.0 - pi)
    if isinstance(dgp, SparseLinearDgp) and isinstance(functional, AverageDerivative):
        if dgp.x_dist != "normal":
            raise NoClosedFormError("score-based Riesz representer requires normal covariates")
        return X @ functional.direction
    if isinstance(dgp, SparseLinearDgp) and isinstance(functional, PolicyShift):
        S, c = functional.transport_matrix, functional.shift
        if np.array_equal(S, np.eye(S.shape[0])) and not np.any(c):
            return np.zeros(X.shape[0])
        if dgp.x_dist != "normal":
            raise NoClosedFormError("density-ratio representer requires normal covariates")
        return _gaussian_shift_density_ratio(X, S, c) - 1.0
    raise NoClosedFormError(
        f"no closed-form Riesz representer for ({type(dgp).__name__}, {type(functional).__name__})"
    )


def true_riesz(dgp, functional, x):
    return float(true_riesz_rows(dgp, functional, np.asarray(x, dtype=float)[np.newaxis, :])[0])


def _gaussian_shift_density_ratio(X, S, c):
    """density of N(c, SS') over density of N(0, I), evaluated row-wise."""
    cov = S @ S.T
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NoClosedFormError("transport matrix must be nonsingular for the density ratio")
    diff = X - c
    sol = np.linalg.solve(cov, diff.T).T
    log_num = -0.5 * np.einsum("ij,ij->i", diff, sol) - 0.5 * logdet
    log_den = -0.5 * np.einsum("ij,ij->i", X, X)
    return np.exp(log_num - log_den)


# -- Monte Carlo harness -----------------------------------------------------

@dataclass(frozen=True)
class EstimatorConfig:
    """Everything dml_estimate needs besides the data."""

    dictionary: object
    functional: object
    K: int = 5
    rule: LambdaRule = field(default_factory=LambdaRule.gaussian_quantile)
    riesz_rule: LambdaRule | None = None
    l1_bound: float = np.inf
    alpha: float = 0.05
    plugin_only: bool = False


@dataclass
class MonteCarloReport:
    R: int
    n: int
    theta_star: float
    theta_star_se: float
    theta_star_method: str
    bias: float
    rmse: float
    coverage: float
    mean_ci_length: float
    mean_sigma: float
    failures: int
    per_rep: list
    config: dict
    seed: int

    def summary(self):
        return {
            "R": self.R,
            "n": self.n,
            "theta_star": self.theta_star,
            "theta_star_se": self.theta_star_se,
            "theta_star_method": self.theta_star_method,
            "bias": self.bias,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "mean_ci_length": self.mean_ci_length,
            "mean_sigma": self.mean_sigma,
            "failures": self.failures,
            "config": dict(self.config),
            "seed": self.seed,
            "per_rep": [dict(r) for r in self.per_rep],
        }

    def write_csv(self, path):
        cols = ["rep", "status", "theta_hat", "sigma_hat", "ci_lo", "ci_hi", "covered", "error"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.per_rep:
                cells = []
                for col in cols:
                    v = r.get(col)
                    if v is None:
                        cells.append("")
                    elif isinstance(v, float):
                        cells.append(format(v, ".17g"))
                    elif isinstance(v, str):
                        cells.append('"' + v.replace('"', '""') + '"' if "," in v or '"' in v else v)
                    else:
                        cells.append(str(v))
                fh.write(",".join(cells) + "\n")


def rep_seeds(seed, rep):
    """Documented splitting rule: data and fold-plan seeds for one replication."""
    data_seed, fold_seed = np.random.SeedSequence([int(seed), int(rep)]).generate_state(2)
    return int(data_seed), int(fold_seed)


def _replicate(task):
    dgp, est, n, seed, rep, theta_star = task
    data_seed, fold_seed = rep_seeds(seed, rep)
    out = {"rep": rep, "status": "ok", "theta_hat": None, "sigma_hat": None,
           "ci_lo": None, "ci_hi": None, "covered": None, "error": None}
    try:
        data = dgp.generate(n, data_seed)
        result = dml_estimate(
            data, est.dictionary, est.functional, K=est.K, rule=est.rule,
            riesz_rule=est.riesz_rule, l1_bound=est.l1_bound, alpha=est.alpha,
            seed=fold_seed, plugin_only=est.plugin_only,
        )
        out.update(
            theta_hat=result.theta_hat,
            sigma_hat=result.sigma_hat,
            ci_lo=result.ci[0],
            ci_hi=result.ci[1],
            covered=bool(result.ci[0] <= theta_star <= result.ci[1]),
        )
    except Exception as exc:  # recorded per-rep, not fatal
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def resolve_workers(requested=None):
    """Worker count, capped by RIESZ_DML_THREADS (default: available parallelism)."""
    env = os.environ.get("RIESZ_DML_THREADS")
    cap = int(env) if env is not None else (os.cpu_count() or 1)
    cap = max(1, cap)
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))


def run_monte_carlo(dgp, est, R, n, seed, workers=None, config_echo=None):
    """R independent replications of generate -> dml_estimate, aggregated.

    Replication r draws its data and fold-plan seeds from
    SeedSequence([seed, r]), so the report is bit-identical for a given
    (config, seed) regardless of ``workers``.
    """
    if R < 1:
        raise ValueError("need R >= 1")
    info = true_theta_info(dgp, est.functional)
    tasks = [(dgp, est, n, seed, rep, info.value) for rep in range(R)]
    workers = resolve_workers(workers)
    if workers > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_replicate, tasks, chunksize=max(1, R // (workers * 8))))
    else:
        per_rep = [_replicate(t) for t in tasks]

    ok = [r for r in per_rep if r["status"] == "ok"]
    failures = R - len(ok)
    if ok:
        thetas = np.array([r["theta_hat"] for r in ok])
        lengths = np.array([r["ci_hi"] - r["ci_lo"] for r in ok])
        sigmas = np.array([r["sigma_hat"] for r in ok])
        covered = np.array([r["covered"] for r in ok])
        bias = float(thetas.mean() - info.value)
        rmse = float(np.sqrt(np.mean((thetas - info.value) ** 2)))
        coverage = float(covered.mean())
        mean_len = float(lengths.mean())
        mean_sigma = float(sigmas.mean())
    else:
        bias = rmse = coverage = mean_len = mean_sigma = float("nan")
    return MonteCarloReport(
        R=R,
        n=n,
        theta_star=info.value,
        theta_star_se=info.se,
        theta_star_method=info.method,
        bias=bias,
        rmse=rmse,
        coverage=coverage,
        mean_ci_length=mean_len,
        mean_sigma=mean_sigma,
        failures=failures,
        per_rep=per_rep,
        config=dict(config_echo or {}),
        seed=seed,
    )
