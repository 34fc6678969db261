"""Vector-valued exponential polynomials ``v -> sum_r exp(rho_r v) P_r(v)``.

Used as the closed-form tail of a sampled history beyond its grid window, so
that kernel integrals, convolutions and shifts over the infinite past stay
exact instead of being truncated.
"""
from __future__ import annotations

from math import comb, factorial

import numpy as np

_RATE_TOL = 1e-12
# Below this |beta| the primitive of w^k e^{beta w} is taken as the beta = 0 case.
_SMALL_BETA = 1e-9


def _key(rate: complex) -> complex:
    return complex(rate)


class ExpPoly:
    """Sum of ``exp(rate * v) * sum_k coeff[k] * v**k`` with vector coefficients.

    Parameters
    ----------
    terms : dict
        Maps a complex rate to an array of shape ``(deg + 1, n)``.
    dim : int
        Vector dimension ``n``.
    """

    __slots__ = ("terms", "dim")

    def __init__(self, terms: dict | None, dim: int):
        self.dim = int(dim)
        self.terms: dict[complex, np.ndarray] = {}
        for rate, coeff in (terms or {}).items():
            self._accumulate(rate, np.asarray(coeff, dtype=complex).reshape(-1, self.dim))

    def _accumulate(self, rate, coeff):
        rate = _key(rate)
        for existing in self.terms:
            if abs(existing - rate) <= _RATE_TOL * (1.0 + abs(rate)):
                rate = existing
                break
        old = self.terms.get(rate)
        if old is None:
            self.terms[rate] = coeff.copy()
            return
        deg = max(len(old), len(coeff))
        merged = np.zeros((deg, self.dim), dtype=complex)
        merged[: len(old)] += old
        merged[: len(coeff)] += coeff
        self.terms[rate] = merged

    @classmethod
    def zero(cls, dim: int) -> "ExpPoly":
        return cls({}, dim)

    @classmethod
    def exponential(cls, rate: complex, vector) -> "ExpPoly":
        vec = np.atleast_1d(np.asarray(vector, dtype=complex))
        return cls({rate: vec[None, :]}, vec.size)

    @property
    def is_zero(self) -> bool:
        return all(not np.any(c) for c in self.terms.values())

    @property
    def is_real(self) -> bool:
        return all(abs(r.imag) == 0 and not np.any(c.imag) for r, c in self.terms.items())

    def __repr__(self):
        parts = [f"{r}:deg{len(c) - 1}" for r, c in self.terms.items()]
        return f"ExpPoly(dim={self.dim}, terms=[{', '.join(parts)}])"

    def __call__(self, v):
        return self.evaluate(v)

    def evaluate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        scalar = v.ndim == 0
        v = np.atleast_1d(v)
        out = np.zeros((v.size, self.dim), dtype=complex)
        for rate, coeff in self.terms.items():
            poly = np.zeros((v.size, self.dim), dtype=complex)
            for c in coeff[::-1]:
                poly = poly * v[:, None] + c
            out += np.exp(rate * v)[:, None] * poly
        return out[0] if scalar else out

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        out = ExpPoly(self.terms, self.dim)
        for rate, coeff in other.terms.items():
            out._accumulate(rate, coeff)
        return out

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def scale(self, factor: complex) -> "ExpPoly":
        return ExpPoly({r: factor * c for r, c in self.terms.items()}, self.dim)

    def matmul(self, matrix) -> "ExpPoly":
        """Left-multiply every coefficient vector by ``matrix``."""
        m = np.asarray(matrix, dtype=complex)
        return ExpPoly({r: c @ m.T for r, c in self.terms.items()}, m.shape[0])

    def times_exp(self, beta: complex) -> "ExpPoly":
        return ExpPoly({r + beta: c for r, c in self.terms.items()}, self.dim)

    def times_power(self, k: int, factor: complex = 1.0) -> "ExpPoly":
        """Multiply by ``factor * v**k``."""
        out = {}
        for r, c in self.terms.items():
            new = np.zeros((len(c) + k, self.dim), dtype=complex)
            new[k:] = factor * c
            out[r] = new
        return ExpPoly(out, self.dim)

    def shift(self, s: float) -> "ExpPoly":
        """Return ``v -> self(v + s)``."""
        out = {}
        for r, c in self.terms.items():
            deg = len(c)
            new = np.zeros_like(c)
            for k in range(deg):
                for j in range(k + 1):
                    new[j] += comb(k, j) * s ** (k - j) * c[k]
            out[r] = np.exp(r * s) * new
        return ExpPoly(out, self.dim)

    def primitive_to_zero(self) -> "ExpPoly":
        """Return ``v -> integral_v^0 self(w) dw``."""
        out = ExpPoly.zero(self.dim)
        for beta, coeff in self.terms.items():
            for k, c in enumerate(coeff):
                if not np.any(c):
                    continue
                if abs(beta) < _SMALL_BETA:
                    poly = np.zeros((k + 2, self.dim), dtype=complex)
                    poly[k + 1] = -c / (k + 1)
                    out._accumulate(0.0, poly)
                    continue
                const = (-1) ** k * factorial(k) / beta ** (k + 1)
                out._accumulate(0.0, (const * c)[None, :])
                # e^{beta w} sum_j (-1)^j k!/(k-j)! w^{k-j} / beta^{j+1}
                poly = np.zeros((k + 1, self.dim), dtype=complex)
                for j in range(k + 1):
                    poly[k - j] = -((-1) ** j) * factorial(k) / factorial(k - j) / beta ** (j + 1) * c
                out._accumulate(beta, poly)
        return out

    def kernel_integral(self, delta: float, power: int, depth: float) -> np.ndarray:
        """``integral_{-inf}^0 (depth - v)^m exp(-delta (depth - v)) self(v) dv``.

        ``depth`` is the distance of the tail origin below zero, so this is the
        tail piece of ``integral (-theta)^m exp(delta theta) phi(theta)``.
        """
        total = np.zeros(self.dim, dtype=complex)
        pref = np.exp(-delta * depth)
        for rate, coeff in self.terms.items():
            kappa = delta + rate
            if kappa.real <= 0:
                raise ValueError(f"kernel rate {delta} does not dominate tail rate {rate}")
            for k, c in enumerate(coeff):
                acc = 0.0
                for i in range(power + 1):
                    acc += comb(power, i) * depth ** (power - i) * factorial(i + k) / kappa ** (i + k + 1)
                total += (-1) ** k * acc * c
        return pref * total

    def exp_convolution(self, lam: complex, order: int, heads) -> "ExpPoly":
        """Tail of ``chi(theta) = int_theta^0 (theta-s)^i e^{lam(theta-s)} phi(s) ds``.

        ``self`` is the tail of ``phi`` (in ``v = theta - theta_m``) and
        ``heads[a]`` is the window part ``chi_a(theta_m)`` for ``a <= order``.
        """
        out = ExpPoly.zero(self.dim)
        for a in range(order + 1):
            c = comb(order, a)
            inner = self.times_power(a, (-1.0) ** a).times_exp(-lam).primitive_to_zero()
            head = ExpPoly({0.0: np.asarray(heads[a], dtype=complex)[None, :]}, self.dim)
            out = out + (inner + head).times_exp(lam).times_power(order - a, c)
        return out

    def weighted_sup(self, eta: float, origin: float, n_samples: int = 400) -> float:
        """Sampled ``sup_{v<=0} exp(eta (origin + v)) |self(v)|``."""
        if self.is_zero:
            return 0.0
        slowest = min((eta + r.real for r in self.terms), default=1.0)
        span = 60.0 / max(slowest, 1e-3)
        v = -np.concatenate(([0.0], np.geomspace(1e-6, span, n_samples)))
        vals = np.linalg.norm(self.evaluate(v), axis=1) * np.exp(eta * (origin + v))
        return float(np.max(vals))
