"""Linear maps m(x, .) applied componentwise to a dictionary.

Three variants: the average derivative in a fixed direction, the policy
effect of an affine covariate shift x -> S x + c, and the average treatment
effect on a treatment-interacted dictionary.  Everything downstream only
relies on the componentwise vector m(x, b) = (m(x, b_1), ..., m(x, b_p)) and
on linearity: m(x, b'beta) = m(x, b)'beta.
"""

from __future__ import annotations

import numpy as np

from .dictionaries import TreatmentInteractedDictionary, _check_point, _check_rows


class Functional:
    kind = "abstract"

    def check_compatible(self, dictionary, data=None):
        """Raise ValueError when the (functional, dictionary, data) combination is invalid."""

    def m_rows(self, dictionary, X):
        """m(x_i, b) for each row: (n, d) -> (n, p)."""
        raise NotImplementedError

    def m_of_basis(self, dictionary, x):
        x = _check_point(x, dictionary.input_dim)
        return self.m_rows(dictionary, x[np.newaxis, :])[0]


class AverageDerivative(Functional):
    """m(x, g) = a' grad g(x)."""

    kind = "average_derivative"

    def __init__(self, direction):
        a = np.asarray(direction, dtype=float)
        if a.ndim != 1 or not np.all(np.isfinite(a)):
            raise ValueError("direction must be a finite vector")
        if np.linalg.norm(a) == 0.0:
            raise ValueError("direction must be nonzero")
        self.direction = a

    def check_compatible(self, dictionary, data=None):
        if self.direction.shape[0] != dictionary.input_dim:
            raise ValueError("direction length does not match dictionary input_dim")
        if isinstance(dictionary, TreatmentInteractedDictionary):
            if self.direction[dictionary.treatment_index] != 0.0:
                raise ValueError(
                    "derivative direction touches the treatment coordinate of a "
                    "treatment-interacted dictionary"
                )

    def m_rows(self, dictionary, X):
        self.check_compatible(dictionary)
        return dictionary.directional_gradient_rows(X, self.direction)


class PolicyShift(Functional):
    """m(x, g) = g(S x + c) - g(x) for the affine transport x -> S x + c.

    The transport must map the data into the dictionary's valid domain;
    that is the caller's responsibility (relevant for Fourier dictionaries,
    which assume inputs in [-1, 1]).
    """

    kind = "policy_shift"

    def __init__(self, transport_matrix, shift):
        S = np.asarray(transport_matrix, dtype=float)
        c = np.asarray(shift, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("transport matrix must be square")
        if c.ndim != 1 or c.shape[0] != S.shape[0]:
            raise ValueError("shift length must match transport matrix")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(c))):
            raise ValueError("non-finite transport")
        self.transport_matrix = S
        self.shift = c

    def check_compatible(self, dictionary, data=None):
        if self.transport_matrix.shape[0] != dictionary.input_dim:
            raise ValueError("transport dimension does not match dictionary input_dim")

    def m_rows(self, dictionary, X):
        self.check_compatible(dictionary)
        X = _check_rows(X, dictionary.input_dim)
        shifted = X @ self.transport_matrix.T + self.shift
        return dictionary.evaluate_rows(shifted) - dictionary.evaluate_rows(X)


class AverageTreatmentEffect(Functional):
    """m((t, z), g) = g(1, z) - g(0, z) on a treatment-interacted dictionary."""

    kind = "ate"

    def __init__(self, treatment_col=0):
        self.treatment_col = int(treatment_col)

    def check_compatible(self, dictionary, data=None):
        if not isinstance(dictionary, TreatmentInteractedDictionary):
            raise ValueError("ATE functional requires a treatment-interacted dictionary")
        if dictionary.treatment_index != self.treatment_col:
            raise ValueError(
                "ATE treatment_col does not match the dictionary's treatment coordinate"
            )
        if data is not None:
            if data.treatment_col is None:
                raise ValueError("ATE functional requires the dataset's treatment_col to be set")
            if data.treatment_col != self.treatment_col:
                raise ValueError("ATE treatment_col does not match the dataset's treatment_col")

    def m_rows(self, dictionary, X):
        self.check_compatible(dictionary)
        X = _check_rows(X, dictionary.input_dim)
        X1 = np.array(X)
        X1[:, dictionary.treatment_index] = 1.0
        X0 = np.array(X)
        X0[:, dictionary.treatment_index] = 0.0
        return dictionary.evaluate_rows(X1) - dictionary.evaluate_rows(X0)


def m_of_basis(functional, dictionary, x):
    """The p-vector (m(x, b_j))_j."""
    return functional.m_of_basis(dictionary, x)


def m_hat_vector(functional, dictionary, data, rows):
    """Sample average of m(X_i, b) over i in rows."""
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ValueError("empty row index set")
    return functional.m_rows(dictionary, data.covariates[rows]).mean(axis=0)


def m_of_gamma(functional, dictionary, x, beta):
    """m(x, b'beta) via linearity: m(x, b)'beta."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (dictionary.output_dim,):
        raise ValueError("beta length does not match dictionary output_dim")
    return float(functional.m_of_basis(dictionary, x) @ beta)
