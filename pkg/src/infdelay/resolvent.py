"""Explicit resolvents, the translation semigroup and the integrated semigroup.

States of ``X = R^n x BUC_eta`` are :class:`BoundaryAugmentedState`; the
range of every resolvent lies in ``{0} x BUC_eta`` and is returned as a
history.
"""
from __future__ import annotations

from math import comb

import numpy as np

from .exppoly import ExpPoly
from .functional import LinearFunctionalSpec, apply, bound_constants, char_matrix
from .history import GAUSS_POINTS, BoundaryAugmentedState, HistoryFunction
from .trace import SimulationTrace

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)


class EigenvalueProximityError(ArithmeticError):
    """``Delta(lambda)`` is numerically singular at the requested point."""

    def __init__(self, lam, det, scale):
        super().__init__(f"Delta({lam}) is near-singular: |det| = {abs(det):.3e} (scale {scale:.3e})")
        self.lam = lam
        self.det = det


def exp_convolution(phi: HistoryFunction, lam: complex, order: int = 0) -> list[HistoryFunction]:
    """Histories ``chi_i(theta) = int_theta^0 (theta-s)^i e^{lam(theta-s)} phi(s) ds``.

    Returned for ``i = 0..order`` on ``phi``'s grid. Window values come from a
    backward recursion over grid intervals with Gauss-Legendre quadrature of
    the interpolant; the tail is propagated exactly.
    """
    lam = complex(lam)
    grid = phi.grid
    n = phi.dim
    N = grid.size
    chis = [np.zeros((N, n), dtype=complex) for _ in range(order + 1)]
    if N > 1:
        a, b = grid[:-1], grid[1:]
        d = a - b
        sub = max(1, int(np.ceil(abs(lam) * np.max(-d) / 1.5)))
        edges = a[:, None] + (b - a)[:, None] * np.linspace(0, 1, sub + 1)[None, :]
        lo, hi = edges[:, :-1], edges[:, 1:]
        half = 0.5 * (hi - lo)
        s = (0.5 * (hi + lo))[..., None] + half[..., None] * _GL_X
        w = half[..., None] * _GL_W
        s = s.reshape(N - 1, -1)
        w = w.reshape(N - 1, -1)
        vals = phi.evaluate(s.ravel()).reshape(N - 1, -1, n)
        lag = a[:, None] - s
        base = w * np.exp(lam * lag)
        local = [np.einsum("jq,jqk->jk", base * lag**i, vals) for i in range(order + 1)]
        growth = np.exp(lam * d)
        binom = [[comb(i, k) for k in range(i + 1)] for i in range(order + 1)]
        for j in range(N - 2, -1, -1):
            for i in range(order, -1, -1):
                acc = chis[0][j + 1] * (binom[i][0] * d[j] ** i)
                for k in range(1, i + 1):
                    acc = acc + binom[i][k] * d[j] ** (i - k) * chis[k][j + 1]
                chis[i][j] = growth[j] * acc + local[i][j]
    out = []
    real = not np.iscomplexobj(phi.values) and phi.tail.is_real and lam.imag == 0
    for i in range(order + 1):
        tail = phi.tail.exp_convolution(lam, i, [chis[k][0] for k in range(i + 1)])
        vals = chis[i].real if real else chis[i]
        out.append(HistoryFunction(phi.eta, grid, vals, tail, phi.interp_order, phi.breaks))
    return out


def add_exponential(psi: HistoryFunction, rate: complex, vector) -> HistoryFunction:
    """``psi + e^{rate theta} vector`` with the tail kept exact."""
    vec = np.asarray(vector)
    ep = ExpPoly.exponential(rate, vec)
    vals = psi.values + ep.evaluate(psi.grid)
    if not np.iscomplexobj(psi.values) and ep.is_real:
        vals = vals.real
    return psi.replace(values=vals, tail=psi.tail + ep.shift(psi.window_start))


def resolvent_A(lam: float, state: BoundaryAugmentedState) -> HistoryFunction:
    """``(lambda I - A)^{-1} (alpha, phi)`` for real ``lambda > 0``."""
    if not np.isreal(lam) or np.real(lam) <= 0:
        raise ValueError("resolvent of A is evaluated for real lambda > 0 only")
    lam = float(np.real(lam))
    phi = state.history
    chi = exp_convolution(phi, lam)[0]
    return add_exponential(chi, lam, (state.alpha + phi.head) / lam)


def resolvent_AL(L: LinearFunctionalSpec, lam: complex, state: BoundaryAugmentedState,
                 rel_tol: float = 1e-12) -> HistoryFunction:
    """``(lambda I - (A + L))^{-1} (alpha, phi)`` via the characteristic matrix."""
    lam = complex(lam)
    phi = state.history
    if lam.real <= -phi.eta:
        raise ValueError("lambda must satisfy Re(lambda) > -eta")
    D = char_matrix(L, lam).matrix
    det = np.linalg.det(D)
    # size of the individual terms, so a cancellation to zero is detected
    scale = (abs(lam) + bound_constants(L, lam.real)) ** L.dim
    if abs(det) <= rel_tol * scale:
        raise EigenvalueProximityError(lam, det, scale)
    chi = exp_convolution(phi, lam)[0]
    rhs = state.alpha + phi.head + apply(L, chi)
    return add_exponential(chi, lam, np.linalg.solve(D, rhs))


def apply_T_A0(t: float, phi: HistoryFunction) -> HistoryFunction:
    """Translation semigroup: ``phi(t + theta)`` frozen at ``phi(0)`` on ``[-t, 0]``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return phi
    shifted = phi.grid - t
    frozen = phi.grid[phi.grid > -t]
    grid = np.concatenate([shifted, frozen])
    vals = np.concatenate([phi.values, np.tile(phi.head, (frozen.size, 1))])
    breaks = (*phi.breaks, phi.grid.size - 1)
    return HistoryFunction(phi.eta, grid, vals, phi.tail, phi.interp_order, breaks)


def decay_decomposition(t: float, phi: HistoryFunction):
    """Split ``T_A0(t) phi = phi(0) + S(t) phi`` with ``S(t) phi`` vanishing on ``[-t, 0]``."""
    shifted = apply_T_A0(t, phi)
    head = phi.head.copy()
    tail = shifted.tail + ExpPoly.exponential(0.0, -head)
    S = shifted.replace(values=shifted.values - head, tail=tail)
    return head, S


def apply_S_A(t: float, state: BoundaryAugmentedState) -> HistoryFunction:
    """Integrated semigroup ``S_A(t)(alpha, phi) = int_0^t T(l) phi dl`` plus the alpha ramp."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    phi = state.history
    prim = exp_convolution(phi, 0.0)[0]  # int_theta^0 phi
    if t == 0:
        return phi.replace(values=np.zeros_like(phi.values), tail=ExpPoly.zero(phi.dim))
    grid = np.union1d(phi.grid, phi.grid - t)
    recent = grid >= -t
    vals = np.empty((grid.size, phi.dim), dtype=prim.values.dtype)
    g = grid[recent]
    vals[recent] = prim.evaluate(g) + (t + g)[:, None] * (phi.head + state.alpha)
    g = grid[~recent]
    vals[~recent] = prim.evaluate(g) - prim.evaluate(g + t)
    tail = prim.tail.shift(-t) - prim.tail
    brk = int(np.searchsorted(grid, -t))
    return HistoryFunction(phi.eta, grid, vals, tail, phi.interp_order, (brk,))


def integrate_forced(h, phi: HistoryFunction, T: float, n_steps: int = 1000) -> SimulationTrace:
    """Mild solution with forcing: ``x(t) = phi(0) + int_0^t h(s) ds``.

    ``h`` is either a callable (vectorized in ``s``) or a pair
    ``(times, values)`` of samples covering ``[0, T]``.
    """
    if T <= 0:
        raise ValueError("horizon must be positive")
    n = phi.dim
    if callable(h):
        times = np.linspace(0.0, T, n_steps + 1)

        def hv(s):
            return np.asarray(h(s), dtype=float).reshape(np.size(s), n)

        a, b = times[:-1], times[1:]
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X
        w = half[:, None] * _GL_W
        local = np.einsum("jq,jqk->jk", w, hv(nodes.ravel()).reshape(n_steps, -1, n))
        derivs = hv(times)
    else:
        from scipy.integrate import cumulative_simpson

        times, samples = np.asarray(h[0], dtype=float), np.asarray(h[1], dtype=float).reshape(len(h[0]), n)
        if times[0] != 0 or times[-1] < T:
            raise ValueError("forcing samples must cover [0, T]")
        keep = times <= T
        times, samples = times[keep], samples[keep]
        cum = cumulative_simpson(samples, x=times, axis=0, initial=0)
        local = np.diff(cum, axis=0)
        derivs = samples
    states = phi.head + np.concatenate([np.zeros((1, n)), np.cumsum(local, axis=0)])
    return SimulationTrace(times, states, derivs, phi, float(times[1] - times[0]))
