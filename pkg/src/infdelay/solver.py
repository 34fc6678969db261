"""Fixed-step RK4 integration of ``x'(t) = f(x_t)`` with functional right-hand sides.

The right-hand side receives a history view of ``x_t`` supporting
``evaluate(theta)`` and ``kernel_integral(delta, power, observable)``. Kernel
integrals are carried along the integration by exact exponential recursions,
so each step costs O(1) regardless of the elapsed time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .functional import LinearFunctionalSpec, apply
from .history import GAUSS_POINTS, HistoryFunction
from .trace import SimulationTrace, hermite

log = logging.getLogger(__name__)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)
# nodes on [0, 1]
_U = 0.5 * (_GL_X + 1.0)
_UW = 0.5 * _GL_W

BLOW_UP_THRESHOLD = 1e12


class NumericalFailure(ArithmeticError):
    """Non-finite right-hand side; ``snapshot`` holds the trace up to the failure."""

    def __init__(self, msg, snapshot: SimulationTrace | None = None):
        super().__init__(msg)
        self.snapshot = snapshot


@dataclass(frozen=True)
class ModelSpec:
    """Autonomous functional differential equation ``x'(t) = f(x_t)`` on ``BUC_eta``."""

    dim: int
    rhs: Callable
    eta: float
    params: dict = field(default_factory=dict)
    linearization: Callable | None = None
    name: str = "model"


def linear_model(L: LinearFunctionalSpec, name: str = "linear") -> ModelSpec:
    """The linear equation ``x'(t) = L(x_t)``."""
    return ModelSpec(L.dim, lambda h: apply(L, h), L.eta, {}, lambda xbar: L, name)


class _Integrator:
    def __init__(self, model: ModelSpec, phi: HistoryFunction, h: float, capacity: int):
        self.model = model
        self.phi = phi
        self.h = h
        n = model.dim
        self.times = np.empty(capacity)
        self.states = np.empty((capacity, n))
        self.derivs = np.empty((capacity, n))
        self.count = 0
        self.acc: dict = {}

    # trace storage -----------------------------------------------------------
    def push(self, t, x, f):
        self.times[self.count] = t
        self.states[self.count] = x
        self.derivs[self.count] = f
        self.count += 1

    @property
    def t_last(self):
        return self.times[self.count - 1]

    def trace(self, termination="completed", **kw) -> SimulationTrace:
        k = self.count
        derivs = self.derivs[:k].copy()
        return SimulationTrace(self.times[:k].copy(), self.states[:k].copy(), derivs, self.phi, self.h,
                               termination, **kw)

    # past values -------------------------------------------------------------
    def past(self, s):
        """x(s) for ``s <= t_last`` from the initial history or the stored steps."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size, self.model.dim))
        neg = s <= 0
        if np.any(neg):
            out[neg] = self.phi.evaluate(s[neg])
        pos = ~neg
        if np.any(pos):
            T = self.times[: self.count]
            k = np.clip(np.searchsorted(T, s[pos], side="right") - 1, 0, max(self.count - 2, 0))
            if self.count == 1:
                out[pos] = self.states[0]
            else:
                hk = T[k + 1] - T[k]
                out[pos] = hermite((s[pos] - T[k]) / hk, hk[:, None], self.states[k], self.states[k + 1],
                                   self.derivs[k], self.derivs[k + 1])
        return out

    def extrapolator(self):
        """Interpolant used inside the current step before its end values are known."""
        k = self.count - 1
        t0, x0, f0 = self.times[k], self.states[k], self.derivs[k]
        if k == 0:
            return lambda u: x0 + np.asarray(u)[:, None] * f0
        tp, xp, fp = self.times[k - 1], self.states[k - 1], self.derivs[k - 1]
        hp = t0 - tp
        return lambda u: hermite((t0 + np.asarray(u) - tp) / hp, hp, xp, x0, fp, f0)

    # kernel accumulators --------------------------------------------------------
    def register(self, key, delta, power, observable):
        """Start an accumulator of ``int (t-s)^k e^{-delta(t-s)} g(x(s)) ds`` for ``k <= power``."""
        t = self.t_last
        if t == 0:
            seg = self.phi
        else:
            from .trace import segment

            seg = segment(self.trace(), t)
        values = [np.asarray(seg.kernel_integral(delta, k, observable), dtype=float) for k in range(power + 1)]
        self.acc[key] = [delta, observable, values]

    @staticmethod
    def _obs(observable, X):
        return X if observable is None else np.asarray(observable(X), dtype=float).reshape(X.shape[0], -1)

    def local_integrals(self, delta, power, observable, c, interp):
        """``int_0^c (c-u)^k e^{-delta(c-u)} g(interp(u)) du`` for ``k <= power``."""
        u = c * _U
        g = self._obs(observable, interp(u))
        lag = c - u
        base = c * _UW * np.exp(-delta * lag)
        return [np.tensordot(base * lag**k, g, axes=(0, 0)) for k in range(power + 1)]

    @staticmethod
    def advance(values, delta, c, local):
        # shift the accumulators by c and add the local contribution
        decay = np.exp(-delta * c)
        out = []
        for m in range(len(values)):
            acc = sum(comb(m, k) * c ** (m - k) * values[k] for k in range(m + 1))
            out.append(decay * acc + local[m])
        return out

    def commit(self, h, interp):
        for key, entry in self.acc.items():
            delta, observable, values = entry
            local = self.local_integrals(delta, len(values) - 1, observable, h, interp)
            entry[2] = self.advance(values, delta, h, local)


class StageHistory:
    """History view of ``x_{t_n + c}`` during a step of length ``c`` past the last knot."""

    def __init__(self, integ: _Integrator, c: float, x_end: np.ndarray, interp):
        self._integ = integ
        self._c = c
        self._x = x_end
        self._interp = interp
        self.eta = integ.model.eta
        self.dim = integ.model.dim
        self.is_complex = False

    @property
    def head(self) -> np.ndarray:
        return self._x

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        scalar = theta.ndim == 0
        th = np.atleast_1d(theta)
        if np.any(th > 0):
            raise ValueError("history evaluated at theta > 0")
        out = np.empty((th.size, self.dim))
        c = self._c
        at_end = th == 0
        inside = (th > -c) & ~at_end
        old = ~(inside | at_end)
        out[at_end] = self._x
        if np.any(inside):
            out[inside] = self._interp(c + th[inside])
        if np.any(old):
            out[old] = self._integ.past(self._integ.t_last + c + th[old])
        return out[0] if scalar else out

    def kernel_integral(self, delta: float, power: int = 0, observable=None) -> np.ndarray:
        integ = self._integ
        key = (observable, float(delta))
        entry = integ.acc.get(key)
        if entry is None or len(entry[2]) <= power:
            integ.register(key, delta, power, observable)
            entry = integ.acc[key]
        values = entry[2][: power + 1]
        if self._c == 0:
            return values[power]
        local = integ.local_integrals(delta, power, observable, self._c, self._interp)
        return integ.advance(values, delta, self._c, local)[power]


def _finite(f, integ, t):
    if not np.all(np.isfinite(f)):
        snap = integ.trace("failed", t_star=float(t))
        raise NumericalFailure(f"non-finite right-hand side at t = {t}", snap)
    return f


def integrate(model: ModelSpec, phi: HistoryFunction, T_end: float, h: float,
              blow_up_threshold: float = BLOW_UP_THRESHOLD, first_step_corrections: int = 2) -> SimulationTrace:
    """RK4 with Hermite dense output on ``[0, T_end]`` at fixed step ``h``."""
    if not (T_end > 0 and h > 0):
        raise ValueError("T_end and h must be positive")
    if phi.dim != model.dim:
        raise ValueError(f"history dimension {phi.dim} != model dimension {model.dim}")
    if abs(phi.eta - model.eta) > 1e-12:
        raise ValueError(f"history eta {phi.eta} != model eta {model.eta}")
    if np.iscomplexobj(phi.values):
        raise ValueError("initial history must be real")
    n_steps = int(np.ceil(T_end / h - 1e-9))
    # knots at exact multiples of h, the last one exactly at T_end
    knots = np.arange(n_steps + 1) * h
    knots[-1] = T_end
    integ = _Integrator(model, phi, h, n_steps + 1)
    rhs = model.rhs

    def f_at(c, x, interp):
        val = np.asarray(rhs(StageHistory(integ, c, x, interp)), dtype=float).reshape(model.dim)
        return _finite(val, integ, integ.t_last + c)

    x0 = np.asarray(phi.head, dtype=float)
    integ.push(0.0, x0, np.zeros(model.dim))
    integ.derivs[0] = f_at(0.0, x0, None)
    for i in range(n_steps):
        hi = knots[i + 1] - knots[i]
        t, x, k1 = integ.t_last, integ.states[integ.count - 1], integ.derivs[integ.count - 1]
        interp = integ.extrapolator()
        passes = 1 + (first_step_corrections if i == 0 else 0)
        for _ in range(passes):
            k2 = f_at(hi / 2, x + hi / 2 * k1, interp)
            k3 = f_at(hi / 2, x + hi / 2 * k2, interp)
            k4 = f_at(hi, x + hi * k3, interp)
            x_new = x + hi / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            f_new = f_at(hi, x_new, interp)
            if passes > 1:
                # first step: redo with the step's own Hermite interpolant
                interp = (lambda xa, xb, fa, fb, hh: lambda u: hermite(np.asarray(u) / hh, hh, xa, xb, fa, fb))(
                    x, x_new, k1, f_new, hi)
        step_interp = (lambda xa, xb, fa, fb, hh: lambda u: hermite(np.asarray(u) / hh, hh, xa, xb, fa, fb))(
            x, x_new, k1, f_new, hi)
        integ.commit(hi, step_interp)
        t_next = knots[i + 1]
        integ.push(t_next, x_new, f_new)
        if np.max(np.abs(x_new)) > blow_up_threshold:
            log.info("blow-up at t = %g", t_next)
            return integ.trace("blow_up", t_star=float(t_next), threshold=blow_up_threshold)
    return integ.trace()


# solver checks -------------------------------------------------------------------
@dataclass
class SemiflowReport:
    s: float
    t: float
    discrepancy: float


def semiflow_property_check(model: ModelSpec, phi: HistoryFunction, t: float, s: float, h: float = 1e-3,
                            ) -> SemiflowReport:
    """``U(t-s) U(s) phi`` against ``U(t) phi`` at the common knots on ``[s, t]``."""
    if not t >= s >= 0:
        raise ValueError("need t >= s >= 0")
    direct = integrate(model, phi, t, h) if t > 0 else None
    if direct is None or s == t:
        return SemiflowReport(s, t, 0.0)
    if s == 0:
        first_seg = phi
    else:
        first = integrate(model, phi, s, h)
        first_seg = first.segment(s)
    spliced = integrate(model, first_seg, t - s, h)
    tt = spliced.times + s
    ref = direct.evaluate(np.minimum(tt, direct.t_end))
    scale = max(1.0, float(np.max(np.abs(ref))))
    return SemiflowReport(s, t, float(np.max(np.abs(spliced.states - ref)) / scale))


def _const(x, eta):
    return HistoryFunction.constant(np.asarray(x, dtype=float), eta)


def find_equilibrium(model: ModelSpec, guess, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Newton on ``F(x) = f(const x)`` with a finite-difference Jacobian."""
    x = np.array(guess, dtype=float).reshape(model.dim)

    def F(y):
        return np.asarray(model.rhs(_const(y, model.eta)), dtype=float).reshape(model.dim)

    for _ in range(max_iter):
        Fx = F(x)
        if np.linalg.norm(Fx) < tol:
            return x
        J = np.empty((model.dim, model.dim))
        for j in range(model.dim):
            e = np.zeros(model.dim)
            e[j] = 1e-7 * max(1.0, abs(x[j]))
            J[:, j] = (F(x + e) - F(x - e)) / (2 * e[j])
        x = x - np.linalg.lstsq(J, Fx, rcond=None)[0]
    if np.linalg.norm(F(x)) < tol:
        return x
    raise ArithmeticError(f"equilibrium Newton did not converge in {max_iter} iterations")


def linearize(model: ModelSpec, xbar) -> LinearFunctionalSpec:
    xbar = np.asarray(xbar, dtype=float)
    if model.linearization is None:
        raise NotImplementedError("analytic linearization required")
    res = np.asarray(model.rhs(_const(xbar, model.eta)), dtype=float)
    if np.linalg.norm(res) >= 1e-8:
        raise ValueError(f"not an equilibrium: |f(xbar)| = {np.linalg.norm(res):.3e}")
    return model.linearization(xbar)


@dataclass
class PositivityReport:
    minimum: float
    tolerance: float
    passed: bool
    t_min: float


def positivity_check(model: ModelSpec, trace: SimulationTrace, error_bound: float | None = None) -> PositivityReport:
    """Minimum component over the trace against a discretization-undershoot allowance."""
    if error_bound is None:
        # RK4 local error scale from the size of the derivatives
        error_bound = trace.h**4 * max(1.0, float(np.max(np.abs(trace.derivs))))
    tol = -10 * trace.h * error_bound
    mins = trace.states.min(axis=1)
    k = int(np.argmin(mins))
    m = float(mins[k])
    return PositivityReport(m, tol, m >= tol, float(trace.times[k]))
