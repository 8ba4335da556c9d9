"""Command-line interface: estimate | simulate | rmd-solve.

Configuration lives in a flat key-value file::

    # comments run to end of line
    dictionary.kind = identity
    functional.type = average_derivative
    functional.direction = 1, 0, 0
    estimator.k_folds = 5
    seed = 7

Values are scalars, comma-separated vectors, or semicolon-separated matrix
rows.  Unknown keys are rejected, and every key is echoed back under
``config`` in the JSON output.  Exit codes: 0 success, 2 configuration
error (the message names the offending key), 3 RMD infeasibility.  Errors
are printed as single-line JSON on stderr.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import jsonio
from .dictionaries import load_csv, make_dictionary
from .dml import dml_estimate
from .functional import AverageDerivative, AverageTreatmentEffect, PolicyShift
from .rmd import LambdaRule, RmdInfeasibleError, RmdProblem, solve_rmd
from .simulation import (
    AteLogisticDgp,
    EstimatorConfig,
    SparseLinearDgp,
    dense_decay_dgp,
    run_monte_carlo,
)


class ConfigError(Exception):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


_KNOWN_KEYS = {
    "dictionary.kind", "dictionary.degree", "dictionary.order",
    "dictionary.with_interactions",
    "dictionary.inner.kind", "dictionary.inner.degree", "dictionary.inner.order",
    "dictionary.inner.with_interactions",
    "functional.type", "functional.direction",
    "functional.transport_s", "functional.transport_c",
    "data.outcome", "data.treatment", "data.standardize",
    "estimator.k_folds", "estimator.alpha",
    "estimator.lambda_method", "estimator.lambda_c", "estimator.lambda_alpha",
    "estimator.lambda_value",
    "estimator.riesz_lambda_method", "estimator.riesz_lambda_c",
    "estimator.riesz_lambda_alpha", "estimator.riesz_lambda_value",
    "estimator.l1_bound", "estimator.plugin_only",
    "seed",
    "simulation.dgp", "simulation.n", "simulation.replications",
    "simulation.noise_sd", "simulation.x_dist", "simulation.beta_star",
    "simulation.d", "simulation.d_z", "simulation.tau",
    "simulation.outcome_coefs", "simulation.propensity_coefs",
    "simulation.decay", "simulation.scale", "simulation.workers",
}


class Config:
    """Flat key-value config with typed accessors that name the key on failure."""

    def __init__(self, entries):
        self.entries = dict(entries)

    @classmethod
    def load(cls, path):
        entries = {}
        try:
            with open(path) as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        for lineno, line in enumerate(lines, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = body.split("=", 1)
            key = key.strip()
            value = value.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}", key=key)
            if key in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}", key=key)
            entries[key] = value
        return cls(entries)

    def has(self, key):
        return key in self.entries

    def raw(self, key, default=None, required=False):
        if key not in self.entries:
            if required:
                raise ConfigError(f"missing required config key {key!r}", key=key)
            return default
        return self.entries[key]

    def get_str(self, key, default=None, required=False, choices=None):
        v = self.raw(key, default, required)
        if v is not None and choices is not None and v not in choices:
            raise ConfigError(f"config key {key!r} must be one of {sorted(choices)}, got {v!r}", key=key)
        return v

    def get_int(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be an integer, got {v!r}", key=key) from None

    def get_float(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be a number, got {v!r}", key=key) from None

    def get_bool(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        low = v.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"config key {key!r} must be true/false, got {v!r}", key=key)

    def get_vector(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return np.array([float(tok) for tok in v.split(",")])
        except ValueError:
            raise ConfigError(f"config key {key!r} must be comma-separated numbers", key=key) from None

    def get_matrix(self, key, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return None
        try:
            rows = [[float(tok) for tok in row.split(",")] for row in v.split(";")]
            mat = np.array(rows)
        except ValueError:
            raise ConfigError(
                f"config key {key!r} must be semicolon-separated rows of numbers", key=key
            ) from None
        if mat.ndim != 2:
            raise ConfigError(f"config key {key!r} rows have inconsistent lengths", key=key)
        return mat

    def echo(self):
        return dict(self.entries)


# -- builders -----------------------------------------------------------------

def build_dictionary(cfg, input_dim, prefix="dictionary", treatment_index=0):
    kind = cfg.get_str(f"{prefix}.kind", required=True,
                       choices={"polynomial", "fourier", "identity", "treatment_interacted"})
    try:
        if kind == "treatment_interacted":
            inner = build_dictionary(cfg, input_dim - 1, prefix=f"{prefix}.inner")
            return make_dictionary(kind, input_dim, inner=inner, treatment_index=treatment_index)
        return make_dictionary(
            kind, input_dim,
            degree=cfg.get_int(f"{prefix}.degree"),
            order=cfg.get_int(f"{prefix}.order"),
            with_interactions=cfg.get_bool(f"{prefix}.with_interactions", default=False),
        )
    except ValueError as exc:
        raise ConfigError(f"{prefix}.*: {exc}", key=f"{prefix}.kind") from None


def build_functional(cfg, input_dim, treatment_col=None):
    kind = cfg.get_str("functional.type", required=True,
                       choices={"average_derivative", "policy_shift", "ate"})
    try:
        if kind == "average_derivative":
            a = cfg.get_vector("functional.direction", required=True)
            return AverageDerivative(a)
        if kind == "policy_shift":
            S = cfg.get_matrix("functional.transport_s")
            if S is None:
                S = np.eye(input_dim)
            c = cfg.get_vector("functional.transport_c")
            if c is None:
                c = np.zeros(input_dim)
            return PolicyShift(S, c)
        if treatment_col is None:
            raise ConfigError("functional.type = ate requires data.treatment", key="data.treatment")
        return AverageTreatmentEffect(treatment_col)
    except ValueError as exc:
        raise ConfigError(f"functional.*: {exc}", key="functional.type") from None


def build_lambda_rule(cfg, prefix="estimator.lambda"):
    method = cfg.get_str(f"{prefix}_method", default="gaussian_quantile",
                         choices={"gaussian_quantile", "fixed"})
    if method == "fixed":
        value = cfg.get_float(f"{prefix}_value", required=True)
        return LambdaRule.fixed(value)
    return LambdaRule.gaussian_quantile(
        c=cfg.get_float(f"{prefix}_c", default=1.1),
        alpha=cfg.get_float(f"{prefix}_alpha", default=0.05),
    )


def build_estimator(cfg, dictionary, functional):
    K = cfg.get_int("estimator.k_folds", default=5)
    if K < 2:
        raise ConfigError("estimator.k_folds must be >= 2", key="estimator.k_folds")
    alpha = cfg.get_float("estimator.alpha", default=0.05)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("estimator.alpha must lie in (0, 1)", key="estimator.alpha")
    rule = build_lambda_rule(cfg)
    riesz_rule = None
    if any(cfg.has(f"estimator.riesz_lambda_{s}") for s in ("method", "c", "alpha", "value")):
        riesz_rule = build_lambda_rule(cfg, prefix="estimator.riesz_lambda")
    l1_bound = cfg.get_float("estimator.l1_bound", default=np.inf)
    if not l1_bound > 0:
        raise ConfigError("estimator.l1_bound must be positive", key="estimator.l1_bound")
    return EstimatorConfig(
        dictionary=dictionary,
        functional=functional,
        K=K,
        rule=rule,
        riesz_rule=riesz_rule,
        l1_bound=l1_bound,
        alpha=alpha,
        plugin_only=cfg.get_bool("estimator.plugin_only", default=False),
    )


def build_dgp(cfg):
    kind = cfg.get_str("simulation.dgp", required=True,
                       choices={"sparse_linear", "ate_logistic", "dense_decay"})
    noise_sd = cfg.get_float("simulation.noise_sd", default=1.0)
    try:
        if kind == "sparse_linear":
            d = cfg.get_int("simulation.d", required=True)
            dictionary = build_dictionary(cfg, d)
            beta = cfg.get_vector("simulation.beta_star", required=True)
            return SparseLinearDgp(
                dictionary, beta,
                x_dist=cfg.get_str("simulation.x_dist", default="normal",
                                   choices={"normal", "uniform"}),
                noise_sd=noise_sd,
            )
        if kind == "dense_decay":
            return dense_decay_dgp(
                d=cfg.get_int("simulation.d", required=True),
                decay=cfg.get_float("simulation.decay", required=True),
                noise_sd=noise_sd,
                scale=cfg.get_float("simulation.scale", default=1.0),
            )
        d_z = cfg.get_int("simulation.d_z", required=True)
        return AteLogisticDgp(
            d_z=d_z,
            outcome_coefs=cfg.get_vector("simulation.outcome_coefs", required=True),
            tau=cfg.get_float("simulation.tau", required=True),
            propensity_coefs=cfg.get_vector("simulation.propensity_coefs", required=True),
            noise_sd=noise_sd,
        )
    except ValueError as exc:
        raise ConfigError(f"simulation.*: {exc}", key="simulation.dgp") from None


# -- subcommands ----------------------------------------------------------------

def _emit(payload, output=None):
    text = jsonio.dumps(payload) + "\n"
    sys.stdout.write(text)
    if output:
        with open(output, "w") as fh:
            fh.write(text)


def cmd_estimate(args):
    cfg = Config.load(args.config)
    outcome = cfg.get_str("data.outcome", required=True)
    treatment = cfg.get_str("data.treatment")
    standardize = cfg.get_bool("data.standardize", default=False)
    try:
        data = load_csv(args.data, outcome, treatment, standardize)
    except KeyError as exc:
        key = "data.outcome" if outcome in str(exc) else "data.treatment"
        raise ConfigError(str(exc.args[0]), key=key) from None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load data file {args.data}: {exc}") from None

    dictionary = build_dictionary(cfg, data.d,
                                  treatment_index=data.treatment_col or 0)
    functional = build_functional(cfg, data.d, treatment_col=data.treatment_col)
    est = build_estimator(cfg, dictionary, functional)
    seed = cfg.get_int("seed", default=0)
    try:
        result = dml_estimate(
            data, dictionary, functional, K=est.K, rule=est.rule,
            riesz_rule=est.riesz_rule, l1_bound=est.l1_bound, alpha=est.alpha,
            seed=seed, plugin_only=est.plugin_only,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    payload = result.summary()
    payload["config"] = cfg.echo()
    _emit(payload, args.output)
    return 0


def cmd_simulate(args):
    cfg = Config.load(args.config)
    dgp = build_dgp(cfg)
    if isinstance(dgp, AteLogisticDgp):
        # estimation is well-specified by construction: the estimator sees a
        # treatment-interacted dictionary over (D, Z) and targets the ATE
        dictionary = build_dictionary(cfg, dgp.d_z + 1, treatment_index=0)
        functional = AverageTreatmentEffect(0)
    else:
        dictionary = dgp.dictionary
        functional = build_functional(cfg, dictionary.input_dim)
    est = build_estimator(cfg, dictionary, functional)
    try:
        functional.check_compatible(dictionary)
    except ValueError as exc:
        raise ConfigError(str(exc), key="functional.type") from None

    R = cfg.get_int("simulation.replications", required=True)
    n = cfg.get_int("simulation.n", required=True)
    seed = cfg.get_int("seed", default=0)
    workers = cfg.get_int("simulation.workers")
    report = run_monte_carlo(dgp, est, R=R, n=n, seed=seed, workers=workers,
                             config_echo=cfg.echo())
    _emit(report.summary(), args.output)
    if args.csv:
        report.write_csv(args.csv)
    return 0


def cmd_rmd_solve(args):
    try:
        G = np.loadtxt(args.g_matrix, ndmin=2)
        M = np.loadtxt(args.m_vector, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix/vector input: {exc}") from None
    try:
        prob = RmdProblem(G, M, args.lambda_, args.l1_bound)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sol = solve_rmd(prob)
    payload = {
        "t_hat": sol.t_hat,
        "l1_norm": sol.l1_norm,
        "max_residual": sol.max_residual,
        "status": sol.status,
        "iterations": sol.iterations,
        "lambda": prob.lam,
        "l1_bound": prob.l1_bound,
        "p": prob.p,
    }
    _emit(payload, args.output)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rieszdml",
        description="Debiased estimation of linear functionals with regularized Riesz representers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="cross-fitted estimate from a CSV dataset")
    p_est.add_argument("--data", required=True, help="CSV file with a header row")
    p_est.add_argument("--config", required=True, help="flat key-value config file")
    p_est.add_argument("--output", help="also write the JSON result to this path")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study on a known DGP")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--output", help="also write the JSON report to this path")
    p_sim.add_argument("--csv", help="write per-replication rows to this CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_rmd = sub.add_parser("rmd-solve", help="solve one RMD problem from text files")
    p_rmd.add_argument("--g-matrix", required=True, help="dense row-major text matrix")
    p_rmd.add_argument("--m-vector", required=True, help="text vector")
    p_rmd.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p_rmd.add_argument("--l1-bound", dest="l1_bound", type=float, default=np.inf)
    p_rmd.add_argument("--output", help="also write the JSON solution to this path")
    p_rmd.set_defaults(func=cmd_rmd_solve)
    return parser


def run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        err = {"error": str(exc)}
        if exc.key:
            err["key"] = exc.key
        sys.stderr.write(jsonio.dumps(err) + "\n")
        return 2
    except RmdInfeasibleError as exc:
        sys.stderr.write(jsonio.dumps({"error": str(exc)}) + "\n")
        return 3


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
