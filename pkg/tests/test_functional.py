import numpy as np
import pytest

from infdelay import HistoryFunction, LinearFunctionalSpec, SpecError, apply, char_matrix, char_matrix_derivative
from infdelay.functional import DiscreteTerm, KernelTerm, delta_matrix
from infdelay.history import geometric_grid

from conftest import discrete_spec, erlang_spec, kernel_spec, random_spec


def fine_grid(eta):
    return geometric_grid(30.0 / eta, 2048, 0.002)


def test_zero_functional_apply_and_delta(rng):
    L = LinearFunctionalSpec(2, 0.5)
    phi = HistoryFunction.from_function(lambda t: np.stack([np.cos(t), t], 1), 0.5, dim=2)
    assert np.all(apply(L, phi) == 0)
    lam = 0.3 - 1.2j
    np.testing.assert_array_equal(char_matrix(L, lam).matrix, lam * np.eye(2))
    np.testing.assert_array_equal(char_matrix_derivative(L, lam, 1).matrix, np.eye(2))
    assert char_matrix_derivative(L, lam, 1).derivative_order == 1


def test_discrete_apply_on_exponential():
    a, tau, lam = 1.3, 0.7, 0.4 + 1.1j
    L = discrete_spec(a, tau, 0.5)
    phi = HistoryFunction.exponential(lam, [1.0], 0.5, fine_grid(0.5))
    assert abs(apply(L, phi)[0] - (-a * np.exp(-lam * tau))) < 1e-10


def test_kernel_apply_on_constant():
    a, delta = 1.5, 2.0
    L = LinearFunctionalSpec(1, 0.5, (), (KernelTerm([[-a]], delta, 0),))
    phi = HistoryFunction.constant([2.0], 0.5, fine_grid(0.5))
    assert abs(apply(L, phi)[0] - (-(a / delta) * 2.0)) < 1e-8


def test_char_matrix_closed_forms():
    lam = 0.2 + 0.9j
    a, tau = 1.1, 1.4
    assert char_matrix(discrete_spec(a, tau), lam).matrix[0, 0] == pytest.approx(lam + a * np.exp(-lam * tau),
                                                                                  rel=1e-15)
    a, d = 1.7, 1.3
    assert char_matrix(erlang_spec(a, d), lam).matrix[0, 0] == pytest.approx(lam + a * d * d / (lam + d) ** 2,
                                                                              rel=1e-15)
    assert char_matrix(kernel_spec(a, d), lam).matrix[0, 0] == pytest.approx(lam + a * d / (lam + d), rel=1e-15)


def test_discrete_derivative_closed_form():
    a, tau, lam = 0.9, 1.2, -0.1 + 2j
    got = char_matrix_derivative(discrete_spec(a, tau), lam, 1).matrix[0, 0]
    assert got == pytest.approx(1 - a * tau * np.exp(-lam * tau), rel=1e-15)


def test_derivatives_vs_finite_differences(rng):
    for _ in range(20):
        L = random_spec(rng)
        lam = complex(rng.uniform(-0.1, 1.5), rng.uniform(-2, 2))
        for i in range(1, 5):
            h = 1e-6
            fd = (delta_matrix(L, lam + h, i - 1) - delta_matrix(L, lam - h, i - 1)) / (2 * h)
            exact = delta_matrix(L, lam, i)
            assert np.linalg.norm(fd - exact) <= 1e-6 * max(1.0, np.linalg.norm(exact))


def test_cauchy_riemann(rng):
    for _ in range(20):
        L = random_spec(rng)
        lam = complex(rng.uniform(-0.1, 1.5), rng.uniform(-2, 2))
        h = 1e-6
        dx = (delta_matrix(L, lam + h) - delta_matrix(L, lam - h)) / (2 * h)
        dy = (delta_matrix(L, lam + 1j * h) - delta_matrix(L, lam - 1j * h)) / (2 * h)
        assert np.linalg.norm(dy - 1j * dx) <= 1e-7 * max(1.0, np.linalg.norm(dx))


def test_conjugate_symmetry(rng):
    for _ in range(20):
        L = random_spec(rng)
        lam = complex(rng.uniform(-0.1, 1.5), rng.uniform(-2, 2))
        np.testing.assert_allclose(delta_matrix(L, lam.conjugate()), delta_matrix(L, lam).conj(), rtol=1e-14)


def test_apply_consistent_with_delta(rng):
    """L(e^{lambda .} v) = lambda v - Delta(lambda) v."""
    for _ in range(10):
        L = random_spec(rng)
        lam = complex(rng.uniform(-0.5 * L.eta, 1.0), rng.uniform(-2, 2))
        v = rng.normal(size=L.dim)
        phi = HistoryFunction.exponential(lam, v, L.eta, fine_grid(L.eta))
        want = lam * v - delta_matrix(L, lam) @ v
        assert np.linalg.norm(apply(L, phi) - want) <= 1e-8 * (1 + np.linalg.norm(want))


def test_validation():
    with pytest.raises(SpecError):
        LinearFunctionalSpec(1, 1.0, (), (KernelTerm([[1.0]], 0.9, 0),))
    with pytest.raises(SpecError):
        LinearFunctionalSpec(2, 0.5, (DiscreteTerm([[1.0]], 0.0),))
    with pytest.raises(ValueError):
        char_matrix(kernel_spec(1.0, 2.0), -2.0 + 0j)
    phi = HistoryFunction.constant([1.0], 0.7)
    with pytest.raises(ValueError):
        apply(kernel_spec(eta=0.5), phi)


def test_json_round_trip(rng):
    L = random_spec(rng, dim=2)
    back = LinearFunctionalSpec.from_json(L.to_json())
    lam = 0.3 + 0.4j
    np.testing.assert_array_equal(delta_matrix(back, lam), delta_matrix(L, lam))
    with pytest.raises(SpecError):
        LinearFunctionalSpec.from_dict({"dim": 1, "eta": 0.5, "bogus": 1})


def test_continuation_past_kernel_pole():
    L = erlang_spec(2.0, 1.0)
    with pytest.raises(SpecError):
        char_matrix(L, -2.0)
    D = char_matrix(L, -2.0, continued=True).matrix[0, 0]
    assert D == pytest.approx(-2 + 2 / 1.0, abs=1e-15)
    with pytest.raises(SpecError):
        char_matrix(L, -1.0, continued=True)
