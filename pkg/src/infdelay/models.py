"""Built-in models: a chemostat, a fishery, and scalar families with closed-form spectra."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functional import DiscreteTerm, KernelTerm, LinearFunctionalSpec
from .solver import ModelSpec, linear_model


class UnknownModelError(KeyError):
    pass


def _merge(defaults: dict, overrides: dict) -> dict:
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise UnknownModelError(f"unknown parameters: {sorted(unknown)}")
    out = dict(defaults)
    out.update({k: float(v) for k, v in overrides.items()})
    return out


# chemostat ---------------------------------------------------------------------
CHEMOSTAT_DEFAULTS = {"S0": 2.0, "D": 0.5, "D1": 0.4, "a": 1.0, "k": 1.0, "delta": 2.0, "eta": 0.5}


def chemostat(**params) -> ModelSpec:
    """Nutrient ``S`` and biomass ``x`` with Michaelis-Menten uptake ``p(S) = S/(k+S)``.

    ``S' = (S0 - S) D - a x p(S)``, ``x' = x (-D1 + int delta e^{delta theta} p(S(t+theta)) d theta)``.
    """
    P = _merge(CHEMOSTAT_DEFAULTS, params)
    S0, D, D1, a, k, delta, eta = (P[n] for n in ("S0", "D", "D1", "a", "k", "delta", "eta"))
    if min(S0, D, D1, a, k, delta) <= 0:
        raise ValueError("chemostat rates must be positive")
    if delta <= eta:
        raise ValueError(f"kernel rate delta = {delta} must exceed eta = {eta}")

    def p(S):
        return S / (k + S)

    def uptake(X):
        return p(X[:, :1])

    def rhs(hist):
        S, x = hist.head
        conv = float(np.ravel(hist.kernel_integral(delta, 0, uptake))[0]) * delta
        return np.array([(S0 - S) * D - a * x * p(S), x * (-D1 + conv)])

    def linearization(xbar):
        S, x = xbar
        dp = k / (k + S) ** 2
        A = [[-D - a * x * dp, -a * p(S)], [0.0, -D1 + p(S)]]
        C = [[0.0, 0.0], [x * dp * delta, 0.0]]
        return LinearFunctionalSpec(2, eta, (DiscreteTerm(A, 0.0),), (KernelTerm(C, delta, 0),))

    return ModelSpec(2, rhs, eta, P, linearization, "chemostat")


def chemostat_equilibria(**params) -> dict:
    """Washout and (when it exists) interior constant states."""
    P = _merge(CHEMOSTAT_DEFAULTS, params)
    out = {"washout": np.array([P["S0"], 0.0])}
    if P["D1"] < 1:
        S = P["k"] * P["D1"] / (1 - P["D1"])
        if S < P["S0"]:
            out["interior"] = np.array([S, (P["S0"] - S) * P["D"] / (P["a"] * P["D1"])])
    return out


# fishery -----------------------------------------------------------------------
FISHERY_DEFAULTS = {"r": 1.0, "p": 1.0, "eta_share": 0.5, "delta": 2.0, "c": 0.5, "q": 1.0, "eta": 0.5}


def fishery(**params) -> ModelSpec:
    """Resource ``n`` and effort ``E`` with catch ``q n E``; a share of the revenue acts with delay.

    ``eta_share`` is the delayed share of the revenue, distinct from the space weight ``eta``.
    """
    P = _merge(FISHERY_DEFAULTS, params)
    r, pr, s, delta, c, q, eta = (P[n] for n in ("r", "p", "eta_share", "delta", "c", "q", "eta"))
    if min(r, pr, delta, c, q) <= 0 or not 0 <= s <= 1:
        raise ValueError("fishery rates must be positive and 0 <= eta_share <= 1")
    if delta <= eta:
        raise ValueError(f"kernel rate delta = {delta} must exceed eta = {eta}")

    def catch(X):
        return q * X[:, :1] * X[:, 1:2]

    def rhs(hist):
        n, E = hist.head
        phi = q * n * E
        conv = float(np.ravel(hist.kernel_integral(delta, 0, catch))[0]) * delta
        return np.array([r * n * (1 - n) - phi, pr * (1 - s) * phi + s * pr * conv - c * E])

    def linearization(xbar):
        n, E = xbar
        J0 = [[r * (1 - 2 * n) - q * E, -q * n], [pr * (1 - s) * q * E, pr * (1 - s) * q * n - c]]
        C = s * pr * delta * np.array([[0.0, 0.0], [q * E, q * n]])
        return LinearFunctionalSpec(2, eta, (DiscreteTerm(J0, 0.0),), (KernelTerm(C, delta, 0),))

    return ModelSpec(2, rhs, eta, P, linearization, "fishery")


def fishery_equilibrium(**params) -> np.ndarray:
    P = _merge(FISHERY_DEFAULTS, params)
    n = P["c"] / (P["p"] * P["q"])
    return np.array([n, P["r"] * (1 - n) / P["q"]])


# scalar families -----------------------------------------------------------------
@dataclass(frozen=True)
class Family:
    """One-parameter family of functionals with a nonlinear ``tanh`` companion.

    ``linear(**p)`` builds the functional and ``model(**p)`` the linear
    equation; ``nonlinear(**p)`` is ``x' = f(x_t)`` whose linearization at 0
    is that functional. ``parameter`` names the continuation parameter.
    """

    name: str
    defaults: dict
    parameter: str
    _linear: Callable = field(repr=False)
    _model: Callable | None = field(default=None, repr=False)
    description: str = ""

    def params(self, **overrides) -> dict:
        return _merge(self.defaults, overrides)

    def linear(self, **overrides) -> LinearFunctionalSpec:
        return self._linear(self.params(**overrides))

    def at(self, mu: float, **overrides) -> LinearFunctionalSpec:
        return self.linear(**{**overrides, self.parameter: mu})

    def model(self, **overrides) -> ModelSpec:
        """The linear equation ``x' = L x_t``."""
        return linear_model(self.linear(**overrides), self.name)

    def nonlinear(self, **overrides) -> ModelSpec:
        """The ``tanh`` companion (falls back to the linear model)."""
        P = self.params(**overrides)
        if self._model is None:
            return linear_model(self._linear(P), self.name)
        return self._model(P)

    def nonlinear_at(self, mu: float, **overrides) -> ModelSpec:
        return self.nonlinear(**{**overrides, self.parameter: mu})


def _tanh_obs(X):
    return np.tanh(X)


def _discrete_linear(P):
    return LinearFunctionalSpec(1, P["eta"], (DiscreteTerm([[-P["a"]]], P["tau"]),))


def _discrete_model(P):
    a, tau = P["a"], P["tau"]
    L = _discrete_linear(P)
    return ModelSpec(1, lambda h: -a * np.tanh(h.evaluate(-tau)), P["eta"], P, lambda xbar: L, "discrete")


def _exp_linear(P):
    return LinearFunctionalSpec(1, P["eta"], (), (KernelTerm([[-P["a"] * P["delta"]]], P["delta"], 0),))


def _exp_model(P):
    a, d = P["a"], P["delta"]
    L = _exp_linear(P)
    return ModelSpec(1, lambda h: -a * d * np.ravel(h.kernel_integral(d, 0, _tanh_obs)), P["eta"], P,
                     lambda xbar: L, "exp_kernel")


def _erlang_linear(P):
    d = P["delta"]
    return LinearFunctionalSpec(1, P["eta"], (), (KernelTerm([[-P["a"] * d * d]], d, 1),))


def _erlang_model(P):
    a, d = P["a"], P["delta"]
    L = _erlang_linear(P)
    return ModelSpec(1, lambda h: -a * d * d * np.ravel(h.kernel_integral(d, 1, _tanh_obs)), P["eta"], P,
                     lambda xbar: L, "erlang2")


def _jordan_linear(P):
    return LinearFunctionalSpec(2, P["eta"], (DiscreteTerm([[0.0, P["a"]], [0.0, 0.0]], 0.0),))


def _shift_linear(P):
    return LinearFunctionalSpec(1, P["eta"], (DiscreteTerm([[P["mu"]]], 0.0),))


def _shift_model(P):
    mu = P["mu"]
    L = _shift_linear(P)
    return ModelSpec(1, lambda h: mu * np.tanh(h.head), P["eta"], P, lambda xbar: L, "scalar_shift")


_FAMILIES = {
    "discrete": Family("discrete", {"a": 1.0, "tau": 1.0, "eta": 0.3}, "a", _discrete_linear, _discrete_model,
                       "x' = -a tanh(x(t - tau)); Delta = lambda + a e^{-lambda tau}"),
    "exp_kernel": Family("exp_kernel", {"a": 1.0, "delta": 2.0, "eta": 0.5}, "a", _exp_linear, _exp_model,
                         "x' = -a int delta e^{delta theta} tanh x(t+theta); Delta = lambda + a delta/(lambda+delta)"),
    "erlang2": Family("erlang2", {"a": 2.0, "delta": 1.0, "eta": 0.5}, "a", _erlang_linear, _erlang_model,
                      "x' = -a int delta^2 (-theta) e^{delta theta} tanh x(t+theta); "
                      "Delta = lambda + a delta^2/(lambda+delta)^2"),
    "jordan": Family("jordan", {"a": 1.0, "eta": 0.5}, "a", _jordan_linear, None,
                     "x' = A x(t) with A = [[0, a], [0, 0]]; det Delta = lambda^2"),
    "scalar_shift": Family("scalar_shift", {"mu": 0.0, "eta": 0.5}, "mu", _shift_linear, _shift_model,
                           "x' = mu tanh x(t); Delta = lambda - mu"),
}


def scalar_families() -> dict:
    """Registry of named one-parameter families."""
    return dict(_FAMILIES)


def get_family(name: str) -> Family:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise UnknownModelError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}") from None


MODELS = {"chemostat": chemostat, "fishery": fishery}


def get_model(name: str, **params) -> ModelSpec:
    """Named model with parameter overrides.

    ``chemostat`` and ``fishery``, a family name for its linear equation, or
    ``<family>-tanh`` for the nonlinear companion.
    """
    if name in MODELS:
        return MODELS[name](**params)
    if name.endswith("-tanh"):
        return get_family(name[: -len("-tanh")]).nonlinear(**params)
    return get_family(name).model(**params)
