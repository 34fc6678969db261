import numpy as np
import pytest
from scipy.special import lambertw

from infdelay import (BoundaryAugmentedState, HistoryFunction, LinearFunctionalSpec, ScanRegion, contour_projector,
                      count_roots, find_roots, laurent_coeffs, pole_order, projector_general, projector_simple)
from infdelay.functional import delta_matrix
from infdelay.spectral import (SpectralError, analyse_root, block_residual, det_delta, normalization_defect,
                               null_vectors, projector)
from infdelay.verify import random_history

from conftest import discrete_spec, erlang_spec, jordan_spec, kernel_spec, random_spec


def weighted_rel(a, b, eta):
    """Relative eta-weighted sup distance between two histories at the nodes of ``a``."""
    w = np.exp(eta * a.grid)[:, None]
    diff = np.abs(a.values - b.evaluate(a.grid)) * w
    return float(np.max(diff) / max(np.max(np.abs(a.values) * w), 1e-300))


def complex_state(rng, eta, dim):
    h = random_history(rng, eta, dim)
    return BoundaryAugmentedState(rng.normal(size=dim), h)


def test_count_zero_functional():
    assert count_roots(LinearFunctionalSpec(1, 0.5), ScanRegion(-0.4, 1, -1, 1)) == 1


def test_count_kernel_and_erlang():
    assert count_roots(kernel_spec(), ScanRegion(-1.5, 0, -2, 2)) == 2
    assert count_roots(erlang_spec(), ScanRegion(-0.4, 0.5, -1.5, 1.5)) == 2
    assert count_roots(erlang_spec(), ScanRegion(-0.4, 0.5, 0.5, 1.5)) == 1


def test_roots_of_kernel_model():
    roots = find_roots(kernel_spec(), ScanRegion(-1.5, 0, -2, 2))
    z = sorted((r.lambda0 for r in roots), key=lambda c: c.imag)
    assert len(z) == 2
    assert abs(z[0] - (-1 - 1j)) < 1e-10 and abs(z[1] - (-1 + 1j)) < 1e-10
    assert all(r.pole_order == 1 and r.is_simple for r in roots)
    # outside Omega for eta = 0.5
    assert not any(r.meta["in_omega"] for r in roots)


def test_roots_of_discrete_model_on_axis():
    roots = find_roots(discrete_spec(np.pi / 2, 1.0, 0.3), ScanRegion(-0.25, 0.5, -3, 3))
    z = sorted((r.lambda0 for r in roots), key=lambda c: c.imag)
    assert len(z) == 2
    np.testing.assert_allclose(z, [-1j * np.pi / 2, 1j * np.pi / 2], atol=1e-12)
    assert z[0] == z[1].conjugate()


def test_roots_match_lambert_w():
    """lambda + a e^{-lambda tau} = 0 has roots W_k(-a tau) / tau."""
    a, tau = 1.0, 1.0
    L = discrete_spec(a, tau, 2.0)
    roots = find_roots(L, ScanRegion(-1.9, 0.5, -12, 12))
    want = [lambertw(-a * tau, k) / tau for k in range(-3, 3)]
    want = sorted((w for w in want if w.real > -1.9 and abs(w.imag) < 12), key=lambda c: c.imag)
    got = sorted((r.lambda0 for r in roots), key=lambda c: c.imag)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_zero_functional_root():
    (r,) = find_roots(LinearFunctionalSpec(1, 0.5), ScanRegion(-0.4, 1, -1, 1))
    assert r.lambda0 == 0 and r.pole_order == 1
    np.testing.assert_allclose(r.delta_minus_1, np.eye(1), atol=1e-14)


def test_jordan_pole_order_and_laurent():
    L = jordan_spec()
    (r,) = find_roots(L, ScanRegion(-0.4, 0.5, -0.5, 0.5))
    assert abs(r.lambda0) < 1e-12
    assert r.pole_order == 2 and r.multiplicity == 2 and not r.is_simple
    assert pole_order(L, 0.0) == 2
    D1, D2 = laurent_coeffs(L, 0.0, 2)
    np.testing.assert_allclose(D1, np.eye(2), atol=1e-9)
    np.testing.assert_allclose(D2, [[0, 1], [0, 0]], atol=1e-9)
    assert block_residual(L, 0.0, [D1, D2]) < 1e-6


def test_simple_scalar_residue():
    L = erlang_spec()
    lam0 = 1j
    (D1,) = laurent_coeffs(L, lam0, 1)
    h = 1e-6
    dprime = (det_delta(L, lam0 + h) - det_delta(L, lam0 - h)) / (2 * h)
    assert abs(D1[0, 0] - 1 / dprime) < 1e-8


def test_null_vectors_and_normalization(rng):
    L = kernel_spec(eta=1.5)
    r = analyse_root(L, -1 + 1j)
    D = delta_matrix(L, r.lambda0)
    assert np.linalg.norm(D @ r.V) < 1e-12
    assert np.linalg.norm(r.W @ D) < 1e-12 * np.linalg.norm(r.W)
    D1 = r.delta_minus_1
    Dp = delta_matrix(L, r.lambda0, 1)
    np.testing.assert_allclose(D1 @ Dp @ D1, D1, atol=1e-12)
    assert normalization_defect(L, r) < 1e-7


def test_root_count_conservation(rng):
    for _ in range(6):
        L = random_spec(rng)
        re0 = rng.uniform(-0.9 * L.eta, 0.3)
        reg = ScanRegion(re0, re0 + rng.uniform(0.5, 2), rng.uniform(-3, 0), rng.uniform(0.2, 3))
        n = count_roots(L, reg)
        assert n == sum(r.multiplicity for r in find_roots(L, reg, analyse=False))


def test_conjugate_pairs(rng):
    roots = find_roots(erlang_spec(a=1.5), ScanRegion(-0.45, 1, -3, 3))
    z = [r.lambda0 for r in roots]
    for w in z:
        assert min(abs(w.conjugate() - u) for u in z) < 1e-14


def test_projector_zero_functional():
    L = LinearFunctionalSpec(2, 0.5)
    (r,) = [x for x in find_roots(L, ScanRegion(-0.4, 1, -1, 1)) if True]
    phi = HistoryFunction.constant(np.zeros(2), 0.5)
    with pytest.raises(SpectralError):
        projector_simple(L, r, BoundaryAugmentedState(np.array([1.0, 0.0]), phi))
    psi = projector_general(L, r, BoundaryAugmentedState(np.array([1.0, 0.0]), phi))
    np.testing.assert_allclose(psi.values, np.tile([1.0, 0.0], (psi.grid.size, 1)), atol=1e-12)


def test_projector_simple_scalar_constant():
    L = LinearFunctionalSpec(1, 0.5)
    (r,) = find_roots(L, ScanRegion(-0.4, 1, -1, 1))
    phi = HistoryFunction.constant([0.0], 0.5)
    psi = projector_simple(L, r, BoundaryAugmentedState(np.array([1.0]), phi))
    np.testing.assert_allclose(psi.values, 1.0, atol=1e-14)


def test_projector_idempotent_and_proportional(rng):
    L = kernel_spec(eta=1.5)
    r = analyse_root(L, -1 + 1j)
    for _ in range(5):
        st = complex_state(rng, L.eta, 1)
        p1 = projector_simple(L, r, st)
        p2 = projector_simple(L, r, BoundaryAugmentedState(np.zeros(1), p1))
        assert weighted_rel(p1, p2, L.eta) < 1e-8
        ratio = p1.values / np.exp(r.lambda0 * p1.grid)[:, None] / r.V
        assert np.max(np.abs(ratio - ratio[-1])) / abs(ratio[-1, 0]) < 1e-8


def test_projector_requires_omega():
    L = kernel_spec(eta=0.5)
    r = analyse_root(L, -1 + 1j)
    st = BoundaryAugmentedState(np.ones(1), HistoryFunction.constant([0.0], 0.5))
    with pytest.raises(SpectralError):
        projector(L, r, st)


def test_general_reduces_to_simple(rng):
    L = erlang_spec()
    r = analyse_root(L, 1j)
    st = complex_state(rng, L.eta, 1)
    a = projector_simple(L, r, st)
    b = projector_general(L, r, st)
    assert weighted_rel(a, b, L.eta) < 1e-9


def test_jordan_generalized_eigenfunction(rng):
    L = jordan_spec()
    r = analyse_root(L, 0.0)
    phi = HistoryFunction.constant(np.zeros(2), 0.5)
    psi = projector_general(L, r, BoundaryAugmentedState(np.array([0.0, 1.0]), phi))
    th = psi.grid
    np.testing.assert_allclose(psi.values, np.stack([th, np.ones_like(th)], 1), atol=1e-8)
    for _ in range(5):
        st = complex_state(rng, L.eta, 2)
        p1 = projector_general(L, r, st)
        p2 = projector_general(L, r, BoundaryAugmentedState(np.zeros(2), p1))
        assert weighted_rel(p1, p2, L.eta) < 1e-7


def test_contour_oracle(rng):
    L = kernel_spec(eta=1.5)
    r = analyse_root(L, -1 + 1j)
    st = complex_state(rng, L.eta, 1)
    a = projector_simple(L, r, st)
    b = contour_projector(L, r.lambda0, st, radius=0.1, n_points=64)
    assert weighted_rel(a, b, L.eta) < 1e-6
    L = jordan_spec()
    r = analyse_root(L, 0.0)
    st = complex_state(rng, L.eta, 2)
    a = projector_general(L, r, st)
    b = contour_projector(L, 0.0, st, radius=0.1, n_points=64)
    assert weighted_rel(a, b, L.eta) < 1e-6


def test_region_validation():
    with pytest.raises(ValueError):
        ScanRegion(0, 0, -1, 1)
    with pytest.raises(ValueError):
        ScanRegion(-0.6, 0, -1, 1).validate(0.5)
    ScanRegion(-0.45, 0, -1, 1).validate(0.5)


def test_null_space_dimension():
    L = LinearFunctionalSpec(2, 0.5)
    V, W, dim = null_vectors(L, 0.0)
    assert dim == 2


def test_roots_left_of_kernel_pole():
    """Delta of the Erlang kernel is meromorphic with a single pole at -delta."""
    L = erlang_spec()
    (r,) = find_roots(L, ScanRegion(-2.5, -1.5, -0.5, 0.5))
    assert abs(r.lambda0 + 2) < 1e-12 and not r.meta["in_omega"]
    with pytest.raises(ValueError):
        count_roots(L, ScanRegion(-2.5, 0.5, -1.5, 1.5))
    assert count_roots(L, ScanRegion(-2.5, 0.5, 0.2, 1.5)) == 1
