"""Bounded linear functionals on ``BUC_eta`` and their characteristic matrices.

A functional is a finite sum of point evaluations ``A_k phi(-tau_k)`` and
kernel terms ``int C_j (-theta)^m_j e^{delta_j theta} phi(theta) d theta``.
For this class ``L(e^{lambda .} I)`` has a closed form, so the characteristic
matrix ``Delta(lambda) = lambda I - L(e^{lambda .} I)`` is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
from scipy import integrate

from .history import HistoryFunction


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteTerm:
    A: np.ndarray
    tau: float


@dataclass(frozen=True)
class KernelTerm:
    C: np.ndarray
    delta: float
    power: int = 0


@dataclass(frozen=True)
class GeneralKernelTerm:
    """``phi -> int_0^inf C k(s) phi(-s) ds`` for a user kernel ``k``.

    Only quadrature is available for these, so a spec holding one is flagged
    approximate. ``decay`` must bound ``|k(s)| <= K e^{-decay s}``.
    """

    C: np.ndarray
    kernel: Callable[[np.ndarray], np.ndarray]
    decay: float


@dataclass(frozen=True)
class LinearFunctionalSpec:
    dim: int
    eta: float
    discrete: tuple = ()
    kernels: tuple = ()
    general: tuple = field(default=())

    def __post_init__(self):
        n = self.dim
        disc = []
        for t in self.discrete:
            t = t if isinstance(t, DiscreteTerm) else DiscreteTerm(*t)
            A = np.atleast_2d(np.asarray(t.A, dtype=float))
            if A.shape != (n, n):
                raise SpecError(f"discrete matrix shape {A.shape} != {(n, n)}")
            if not (0 <= t.tau < np.inf):
                raise SpecError("lags must be finite and nonnegative")
            disc.append(DiscreteTerm(A, float(t.tau)))
        kern = []
        for t in self.kernels:
            t = t if isinstance(t, KernelTerm) else KernelTerm(*t)
            C = np.atleast_2d(np.asarray(t.C, dtype=float))
            if C.shape != (n, n):
                raise SpecError(f"kernel matrix shape {C.shape} != {(n, n)}")
            if not t.delta > self.eta:
                raise SpecError(f"kernel rate {t.delta} must exceed eta = {self.eta}")
            if int(t.power) != t.power or t.power < 0:
                raise SpecError("kernel power must be a nonnegative integer")
            kern.append(KernelTerm(C, float(t.delta), int(t.power)))
        gen = []
        for t in self.general:
            t = t if isinstance(t, GeneralKernelTerm) else GeneralKernelTerm(*t)
            if not t.decay > self.eta:
                raise SpecError("general kernel decay must exceed eta")
            gen.append(GeneralKernelTerm(np.atleast_2d(np.asarray(t.C, dtype=float)), t.kernel, float(t.decay)))
        object.__setattr__(self, "discrete", tuple(disc))
        object.__setattr__(self, "kernels", tuple(kern))
        object.__setattr__(self, "general", tuple(gen))

    @property
    def approximate(self) -> bool:
        """True when Delta is only available through quadrature."""
        return bool(self.general)

    @property
    def pole_bound(self) -> float:
        """Delta is analytic for ``Re lambda`` above this value."""
        rates = [t.delta for t in self.kernels] + [t.decay for t in self.general]
        return -min(rates) if rates else -np.inf

    def is_zero(self) -> bool:
        return not (self.discrete or self.kernels or self.general)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        if self.general:
            raise SpecError("general kernels are not serializable")
        return {
            "dim": self.dim,
            "eta": self.eta,
            "discrete": [{"A": t.A.tolist(), "tau": t.tau} for t in self.discrete],
            "kernels": [{"C": t.C.tolist(), "delta": t.delta, "power": t.power} for t in self.kernels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearFunctionalSpec":
        unknown = set(d) - {"dim", "eta", "discrete", "kernels"}
        if unknown:
            raise SpecError(f"unknown functional keys: {sorted(unknown)}")
        disc = []
        for t in d.get("discrete", []):
            if set(t) - {"A", "tau"}:
                raise SpecError(f"unknown discrete-term keys: {sorted(set(t) - {'A', 'tau'})}")
            disc.append(DiscreteTerm(t["A"], t["tau"]))
        kern = []
        for t in d.get("kernels", []):
            if set(t) - {"C", "delta", "power"}:
                raise SpecError(f"unknown kernel-term keys: {sorted(set(t) - {'C', 'delta', 'power'})}")
            kern.append(KernelTerm(t["C"], t["delta"], t.get("power", 0)))
        return cls(int(d["dim"]), float(d["eta"]), tuple(disc), tuple(kern))

    @classmethod
    def from_json(cls, text: str) -> "LinearFunctionalSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CharMatrix:
    lam: complex
    matrix: np.ndarray
    derivative_order: int = 0


def apply(L: LinearFunctionalSpec, phi) -> np.ndarray:
    """Evaluate ``L(phi)`` for a history (or any object with the history protocol)."""
    if phi.dim != L.dim:
        raise SpecError(f"dimension mismatch: functional {L.dim}, history {phi.dim}")
    if abs(phi.eta - L.eta) > 1e-12:
        raise SpecError(f"eta mismatch: functional {L.eta}, history {phi.eta}")
    out = np.zeros(L.dim, dtype=complex)
    for t in L.discrete:
        out += t.A @ phi.evaluate(-t.tau)
    for t in L.kernels:
        out += t.C @ phi.kernel_integral(t.delta, t.power)
    for t in L.general:
        out += t.C @ _general_apply(t, phi)
    if not getattr(phi, "is_complex", False) and not np.any(out.imag):
        return out.real
    return out


def _general_apply(term: GeneralKernelTerm, phi) -> np.ndarray:
    # truncate where the kernel bound drops below 1e-14 of its mass
    s_max = 35.0 / (term.decay - phi.eta)
    s = np.concatenate([np.linspace(0, 1, 401)[:-1], np.geomspace(1, max(s_max, 2), 2000)])
    vals = phi.evaluate(-s) * np.asarray(term.kernel(s))[:, None]
    return integrate.simpson(vals, x=s, axis=0)


def _check_lambda(L: LinearFunctionalSpec, lam: complex, continued: bool = False):
    if not np.isfinite(lam):
        raise SpecError("lambda must be finite")
    if continued and not L.general:
        # the closed form is meromorphic with poles only at -delta_j
        if any(lam == -t.delta for t in L.kernels):
            raise SpecError(f"lambda = {lam} is a kernel pole")
        return
    if lam.real <= L.pole_bound:
        raise SpecError(f"Re(lambda) = {lam.real} is at or beyond a kernel pole ({L.pole_bound})")


def char_matrix(L: LinearFunctionalSpec, lam: complex, continued: bool = False) -> CharMatrix:
    """``Delta(lambda) = lambda I - L(e^{lambda .} I)`` in closed form.

    The defining integrals converge for ``Re lambda > -min delta_j``; with
    ``continued=True`` the closed form is used as the meromorphic continuation
    everywhere except at the poles themselves.
    """
    lam = complex(lam)
    _check_lambda(L, lam, continued)
    M = lam * np.eye(L.dim, dtype=complex)
    for t in L.discrete:
        M -= t.A * np.exp(-lam * t.tau)
    for t in L.kernels:
        M -= t.C * (factorial(t.power) / (lam + t.delta) ** (t.power + 1))
    for t in L.general:
        M -= t.C * _laplace(t.kernel, lam, t.decay, 0)
    return CharMatrix(lam, M, 0)


def char_matrix_derivative(L: LinearFunctionalSpec, lam: complex, i: int, continued: bool = False) -> CharMatrix:
    """Exact ``d^i Delta / d lambda^i`` for ``1 <= i <= 6``."""
    if i == 0:
        return char_matrix(L, lam, continued)
    if not 1 <= i <= 6:
        raise SpecError("derivative order must be between 1 and 6")
    lam = complex(lam)
    _check_lambda(L, lam, continued)
    M = np.eye(L.dim, dtype=complex) if i == 1 else np.zeros((L.dim, L.dim), dtype=complex)
    for t in L.discrete:
        M -= t.A * (-t.tau) ** i * np.exp(-lam * t.tau)
    for t in L.kernels:
        M -= t.C * ((-1) ** i * factorial(t.power + i) / (lam + t.delta) ** (t.power + 1 + i))
    for t in L.general:
        M -= t.C * _laplace(t.kernel, lam, t.decay, i)
    return CharMatrix(lam, M, i)


def delta_matrix(L: LinearFunctionalSpec, lam: complex, i: int = 0) -> np.ndarray:
    """``Delta^{(i)}(lambda)`` as a plain array, continued past the kernel poles' half-plane."""
    return char_matrix_derivative(L, lam, i, continued=True).matrix


def poles(L: LinearFunctionalSpec) -> list[float]:
    """Poles of the closed-form ``Delta`` (all on the real axis)."""
    return sorted({-t.delta for t in L.kernels})


def _laplace(kernel, lam, decay, i):
    # d^i/dlam^i int_0^inf k(s) e^{-lam s} ds
    upper = 40.0 / max(decay + lam.real, 1e-3)

    def part(f):
        return integrate.quad(f, 0, upper, limit=400, epsabs=1e-13, epsrel=1e-12)[0]

    re = part(lambda s: float(kernel(np.array([s]))[0]) * (-s) ** i * np.exp(-lam.real * s) * np.cos(lam.imag * s))
    im = part(lambda s: -float(kernel(np.array([s]))[0]) * (-s) ** i * np.exp(-lam.real * s) * np.sin(lam.imag * s))
    return re + 1j * im


def apply_columns(L: LinearFunctionalSpec, columns) -> np.ndarray:
    """``L`` applied to a matrix-valued history given as its list of columns."""
    return np.column_stack([apply(L, c) for c in columns])


def eigen_history(lam: complex, vector, eta: float, grid=None) -> HistoryFunction:
    return HistoryFunction.exponential(lam, vector, eta, grid)


def bound_constants(L: LinearFunctionalSpec, re_floor: float) -> float:
    """Upper bound on ``|L(e^{lambda .} I)|`` (spectral norm) for ``Re lambda >= re_floor``."""
    total = 0.0
    for t in L.discrete:
        total += np.linalg.norm(t.A, 2) * np.exp(-re_floor * t.tau)
    for t in L.kernels:
        total += np.linalg.norm(t.C, 2) * factorial(t.power) / (t.delta + re_floor) ** (t.power + 1)
    for t in L.general:
        mass = integrate.quad(lambda s: abs(float(t.kernel(np.array([s]))[0])) * np.exp(-re_floor * s), 0, np.inf)[0]
        total += np.linalg.norm(t.C, 2) * mass
    return float(total)
