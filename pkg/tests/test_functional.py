import numpy as np
import pytest

from rieszdml import (
    AverageDerivative,
    AverageTreatmentEffect,
    Dataset,
    FourierDictionary,
    IdentityDictionary,
    PolicyShift,
    PolynomialDictionary,
    TreatmentInteractedDictionary,
    m_hat_vector,
    m_of_basis,
    m_of_gamma,
)


def ate_dictionary():
    return TreatmentInteractedDictionary(PolynomialDictionary(1, degree=1))


def test_average_derivative_equals_gradient_column():
    dic = PolynomialDictionary(1, degree=2)
    f = AverageDerivative(np.array([1.0]))
    np.testing.assert_allclose(m_of_basis(f, dic, np.array([2.0])), [0.0, 1.0, 4.0])


def test_policy_shift_identity_is_zero():
    for dic in [PolynomialDictionary(2, 2), FourierDictionary(2, 1), IdentityDictionary(2)]:
        f = PolicyShift(np.eye(2), np.zeros(2))
        x = np.array([0.3, -0.4])
        np.testing.assert_allclose(m_of_basis(f, dic, x), 0.0)


def test_ate_componentwise_difference():
    dic = ate_dictionary()  # b(t, z) = (1, z, t, tz)
    f = AverageTreatmentEffect(0)
    np.testing.assert_allclose(
        m_of_basis(f, dic, np.array([1.0, 0.5])), [0.0, 0.0, 1.0, 0.5]
    )


def test_ate_matches_direct_evaluation():
    dic = TreatmentInteractedDictionary(PolynomialDictionary(2, degree=2))
    f = AverageTreatmentEffect(0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = rng.standard_normal(2)
        x = np.concatenate([[1.0], z])
        direct = dic.evaluate(np.concatenate([[1.0], z])) - dic.evaluate(np.concatenate([[0.0], z]))
        np.testing.assert_allclose(m_of_basis(f, dic, x), direct)


def test_m_hat_vector_single_row():
    dic = PolynomialDictionary(1, degree=2)
    f = AverageDerivative(np.array([1.0]))
    data = Dataset(np.zeros(2), np.array([[2.0], [0.0]]))
    np.testing.assert_allclose(
        m_hat_vector(f, dic, data, [0]), m_of_basis(f, dic, np.array([2.0]))
    )


def test_m_hat_vector_policy_identity_zero():
    dic = PolynomialDictionary(2, degree=2)
    f = PolicyShift(np.eye(2), np.zeros(2))
    data = Dataset(np.zeros(5), np.random.default_rng(0).standard_normal((5, 2)))
    np.testing.assert_allclose(m_hat_vector(f, dic, data, np.arange(5)), 0.0)


def test_m_hat_vector_average():
    dic = PolynomialDictionary(1, degree=2)
    f = AverageDerivative(np.array([1.0]))
    data = Dataset(np.zeros(2), np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(m_hat_vector(f, dic, data, [0, 1]), [0.0, 1.0, 2.0])


def test_m_hat_vector_empty_rows():
    dic = PolynomialDictionary(1, degree=1)
    f = AverageDerivative(np.array([1.0]))
    data = Dataset(np.zeros(2), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        m_hat_vector(f, dic, data, [])


def test_m_of_gamma_zero_beta():
    dic = PolynomialDictionary(2, degree=2)
    f = PolicyShift(np.eye(2), np.array([0.5, 0.0]))
    assert m_of_gamma(f, dic, np.array([0.1, 0.2]), np.zeros(dic.output_dim)) == 0.0


def test_m_of_gamma_ate_reads_tau():
    dic = ate_dictionary()
    f = AverageTreatmentEffect(0)
    tau = 2.5
    beta = np.array([0.0, 0.0, tau, 0.0])
    assert m_of_gamma(f, dic, np.array([0.0, 0.5]), beta) == pytest.approx(tau)


def test_m_of_gamma_derivative_of_square():
    dic = PolynomialDictionary(1, degree=2)
    f = AverageDerivative(np.array([1.0]))
    beta = np.array([0.0, 0.0, 1.0])  # gamma(x) = x^2
    assert m_of_gamma(f, dic, np.array([2.0]), beta) == pytest.approx(4.0)


def test_linearity_in_beta():
    rng = np.random.default_rng(7)
    dic = PolynomialDictionary(3, degree=2, with_interactions=True)
    fs = [
        AverageDerivative(np.array([1.0, -2.0, 0.5])),
        PolicyShift(0.9 * np.eye(3), np.array([0.1, 0.0, -0.2])),
    ]
    for f in fs:
        for _ in range(10):
            x = rng.standard_normal(3)
            b1, b2 = rng.standard_normal((2, dic.output_dim))
            c1, c2 = rng.standard_normal(2)
            lhs = m_of_basis(f, dic, x) @ (c1 * b1 + c2 * b2)
            rhs = c1 * m_of_gamma(f, dic, x, b1) + c2 * m_of_gamma(f, dic, x, b2)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("dic", [PolynomialDictionary(2, 3), FourierDictionary(2, 2)],
                         ids=["poly", "fourier"])
def test_average_derivative_is_policy_shift_limit(dic):
    rng = np.random.default_rng(11)
    a = np.array([0.7, -0.4])
    eps = 1e-4
    f_deriv = AverageDerivative(a)
    f_shift = PolicyShift(np.eye(2), eps * a)
    for _ in range(5):
        x = rng.uniform(-0.8, 0.8, size=2)
        m_d = m_of_basis(f_deriv, dic, x)
        m_s = m_of_basis(f_shift, dic, x) / eps
        scale = 1.0 + np.abs(m_d).max()
        assert np.abs(m_s - m_d).max() <= 1e-2 * scale


def test_compatibility_errors():
    with pytest.raises(ValueError):
        AverageDerivative(np.zeros(2))  # zero direction
    dic = ate_dictionary()
    f = AverageDerivative(np.array([1.0, 0.0]))  # touches treatment coordinate
    with pytest.raises(ValueError):
        f.m_rows(dic, np.array([[1.0, 0.5]]))
    f_ok = AverageDerivative(np.array([0.0, 1.0]))
    f_ok.m_rows(dic, np.array([[1.0, 0.5]]))  # z-direction is fine
    with pytest.raises(ValueError):
        AverageTreatmentEffect(0).check_compatible(PolynomialDictionary(2, 1))
    data = Dataset(np.zeros(2), np.array([[1.0, 0.1], [0.0, 0.2]]))  # no treatment_col
    with pytest.raises(ValueError):
        AverageTreatmentEffect(0).check_compatible(dic, data)
    with pytest.raises(ValueError):
        PolicyShift(np.eye(3), np.zeros(3)).check_compatible(PolynomialDictionary(2, 1))
    with pytest.raises(ValueError):
        AverageDerivative(np.ones(3)).check_compatible(PolynomialDictionary(2, 1))
