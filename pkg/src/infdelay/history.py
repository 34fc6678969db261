"""Sampled elements of the weighted history space ``BUC_eta``.

A history is stored as values on a finite window ``[theta_m, 0]`` plus an
exponential-polynomial tail for ``theta < theta_m``. Interpolation inside the
window is a not-a-knot cubic spline (or piecewise linear), split at declared
break nodes where the function is only continuous.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .exppoly import ExpPoly

# ln(1e12): window depth making exp(-eta * depth) < 1e-12
TRUNCATION_LOG = 27.631021115928547
GAUSS_POINTS = 6
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)
_LAG_X, _LAG_W = np.polynomial.laguerre.laggauss(48)


def default_depth(eta: float) -> float:
    return TRUNCATION_LOG / eta if eta > 0 else 60.0


def geometric_grid(depth: float, n_nodes: int = 512, first_step: float | None = None) -> np.ndarray:
    """Increasing nodes on ``[-depth, 0]`` with spacing growing away from zero."""
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    if first_step is None:
        first_step = min(0.01, depth / (n_nodes - 1))
    intervals = n_nodes - 1
    if first_step * intervals >= depth:
        return np.linspace(-depth, 0.0, n_nodes)
    # solve first_step * (r**intervals - 1) / (r - 1) = depth for r > 1
    def total(r):
        with np.errstate(over="ignore"):
            return first_step * np.expm1(intervals * np.log(r)) / (r - 1)

    lo, hi = 1.0 + 1e-12, 2.0
    while total(hi) < depth:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < depth:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    steps = first_step * r ** np.arange(intervals)
    nodes = -np.concatenate(([0.0], np.cumsum(steps)))
    nodes[-1] = -depth
    return nodes[::-1].copy()


def default_grid(eta: float, n_nodes: int = 512) -> np.ndarray:
    return geometric_grid(default_depth(eta), n_nodes)


@dataclass(frozen=True, eq=False)
class HistoryFunction:
    """A sampled history ``phi`` on ``(-inf, 0]`` with decay weight ``eta``.

    ``values[i]`` is ``phi(grid[i])``; ``tail`` gives ``phi(grid[0] + v)`` for
    ``v < 0``. ``breaks`` lists node indices where only continuity holds.
    """

    eta: float
    grid: np.ndarray
    values: np.ndarray
    tail: ExpPoly
    interp_order: int = 3
    breaks: tuple = field(default=())

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values[:, None]
        if not np.iscomplexobj(values):
            values = values.astype(float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a nonempty 1-d array")
        if grid[-1] != 0.0:
            raise ValueError("last grid node must be exactly 0")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if values.shape[0] != grid.size:
            raise ValueError("one value row per grid node required")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.interp_order not in (1, 3):
            raise ValueError("interp_order must be 1 or 3")
        if self.tail.dim != values.shape[1]:
            raise ValueError("tail dimension mismatch")
        for rate in self.tail.terms:
            if rate.real < -self.eta - 1e-12:
                raise ValueError(f"tail rate {rate} is not bounded in the eta-weighted norm")
        breaks = tuple(sorted({int(b) for b in self.breaks if 0 < int(b) < grid.size - 1}))
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "breaks", breaks)

    # construction -----------------------------------------------------
    @classmethod
    def from_function(
        cls,
        func: Callable,
        eta: float,
        grid=None,
        tail: str | ExpPoly = "constant-weighted",
        interp_order: int = 3,
        dim: int | None = None,
    ) -> "HistoryFunction":
        """Sample ``func`` (vectorized in theta) on ``grid``.

        ``tail`` is ``"constant-weighted"`` (``e^{-eta(theta-theta_m)} phi(theta_m)``),
        ``"zero"``, or an explicit :class:`ExpPoly` in ``v = theta - theta_m``.
        """
        grid = default_grid(eta) if grid is None else np.asarray(grid, dtype=float)
        vals = np.asarray(func(grid))
        if vals.ndim == 1 and (dim is None or dim == 1):
            vals = vals[:, None]
        elif vals.ndim == 1:
            raise ValueError("function returned scalars for a vector history")
        return cls(eta, grid, vals, _make_tail(tail, vals[0], eta), interp_order)

    @classmethod
    def constant(cls, value, eta: float, grid=None) -> "HistoryFunction":
        value = np.atleast_1d(np.asarray(value))
        grid = np.array([-1.0, 0.0]) if grid is None else np.asarray(grid, dtype=float)
        vals = np.tile(value, (grid.size, 1))
        return cls(eta, grid, vals, ExpPoly.exponential(0.0, value), 3)

    @classmethod
    def exponential(cls, rate: complex, vector, eta: float, grid=None) -> "HistoryFunction":
        """``theta -> e^{rate theta} vector``, exact in the tail."""
        vec = np.atleast_1d(np.asarray(vector))
        return cls.from_exppoly(ExpPoly.exponential(rate, vec), eta, grid)

    @classmethod
    def from_exppoly(cls, func: ExpPoly, eta: float, grid=None) -> "HistoryFunction":
        """Sample a global exponential polynomial ``theta -> func(theta)``."""
        grid = default_grid(eta) if grid is None else np.asarray(grid, dtype=float)
        vals = func.evaluate(grid)
        if func.is_real:
            vals = vals.real
        return cls(eta, grid, vals, func.shift(grid[0]), 3)

    def replace(self, **changes) -> "HistoryFunction":
        kw = dict(eta=self.eta, grid=self.grid, values=self.values, tail=self.tail,
                  interp_order=self.interp_order, breaks=self.breaks)
        kw.update(changes)
        return HistoryFunction(**kw)

    # basic properties -------------------------------------------------
    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def head(self) -> np.ndarray:
        """``phi(0)``."""
        return self.values[-1]

    @property
    def window_start(self) -> float:
        return float(self.grid[0])

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values) or not self.tail.is_real

    def _cast(self, arr):
        return arr if self.is_complex else arr.real

    @cached_property
    def _pieces(self):
        cuts = [0, *self.breaks, self.grid.size - 1]
        pieces = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            g = self.grid[a : b + 1]
            v = self.values[a : b + 1]
            if self.interp_order == 3 and g.size >= 3:
                pieces.append((g[0], g[-1], CubicSpline(g, v, axis=0, bc_type="not-a-knot")))
            else:
                pieces.append((g[0], g[-1], _Linear(g, v)))
        return pieces

    def evaluate(self, theta) -> np.ndarray:
        """Value(s) of the history at ``theta <= 0``; shape ``(n,)`` or ``(k, n)``."""
        th = np.asarray(theta, dtype=float)
        scalar = th.ndim == 0
        th = np.atleast_1d(th)
        if np.any(th > 0):
            raise ValueError("histories are defined for theta <= 0 only")
        dtype = complex if self.is_complex else float
        out = np.empty((th.size, self.dim), dtype=dtype)
        below = th < self.grid[0]
        if np.any(below):
            out[below] = self._cast(self.tail.evaluate(th[below] - self.grid[0]))
        inside = ~below
        if np.any(inside):
            if self.grid.size == 1:
                out[inside] = self.values[0]
            else:
                ti = th[inside]
                res = np.empty((ti.size, self.dim), dtype=dtype)
                starts = np.array([p[0] for p in self._pieces])
                idx = np.clip(np.searchsorted(starts, ti, side="right") - 1, 0, len(starts) - 1)
                for k, (_, _, interp) in enumerate(self._pieces):
                    sel = idx == k
                    if np.any(sel):
                        res[sel] = interp(ti[sel])
                # nodes are reproduced exactly
                exact = np.searchsorted(self.grid, ti)
                exact = np.clip(exact, 0, self.grid.size - 1)
                hit = self.grid[exact] == ti
                res[hit] = self.values[exact[hit]]
                out[inside] = res
        return out[0] if scalar else out

    __call__ = evaluate

    # quadrature -------------------------------------------------------
    @cached_property
    def quadrature(self):
        """Gauss-Legendre nodes/weights on every window interval."""
        if self.grid.size < 2:
            return np.zeros(0), np.zeros(0)
        a, b = self.grid[:-1], self.grid[1:]
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        weights = (half[:, None] * _GL_W[None, :]).ravel()
        return nodes, weights

    @cached_property
    def _quad_values(self):
        nodes, _ = self.quadrature
        return self.evaluate(nodes) if nodes.size else np.zeros((0, self.dim))

    def kernel_integral(self, delta: float, power: int = 0, observable: Callable | None = None) -> np.ndarray:
        """``int_{-inf}^0 (-theta)^power e^{delta theta} g(phi(theta)) d theta``.

        ``g`` defaults to the identity; otherwise it maps an ``(k, n)`` array of
        states to ``(k, p)``. The tail piece is exact for the identity and uses
        Gauss-Laguerre quadrature for a nonlinear observable.
        """
        nodes, weights = self.quadrature
        kern = weights * (-nodes) ** power * np.exp(delta * nodes)
        vals = self._quad_values if observable is None else np.asarray(observable(self._quad_values))
        window = kern @ vals if nodes.size else 0.0
        depth = -self.window_start
        if observable is None:
            tail = self._cast(self.tail.kernel_integral(delta, power, depth))
        else:
            kappa = delta - self.eta if delta > self.eta else delta
            u = _LAG_X / kappa
            w = _LAG_W / kappa * np.exp(-(delta - kappa) * u)
            tvals = self._cast(self.tail.evaluate(-u))
            g = np.asarray(observable(tvals))
            tail = np.exp(-delta * depth) * (((depth + u) ** power * w) @ g)
        return np.asarray(window + tail)

    # norm / transforms --------------------------------------------------
    def eta_norm(self) -> float:
        return eta_norm(self)

    def gauge(self) -> "HistoryFunction":
        return gauge_transform(self)

    def to_csv(self, path) -> None:
        write_history_csv(self, path)


@dataclass(frozen=True)
class BoundaryAugmentedState:
    """An element ``(alpha, phi)`` of ``X = R^n x BUC_eta``."""

    alpha: np.ndarray
    history: HistoryFunction

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha))
        if alpha.shape != (self.history.dim,):
            raise ValueError("alpha and history dimensions disagree")
        object.__setattr__(self, "alpha", alpha)

    def norm(self) -> float:
        return float(np.linalg.norm(self.alpha)) + eta_norm(self.history)


class _Linear:
    def __init__(self, grid, values):
        self.grid = grid
        self.values = values

    def __call__(self, x):
        x = np.asarray(x)
        if self.grid.size == 1:
            return np.repeat(self.values[:1], x.size, axis=0)
        i = np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, self.grid.size - 2)
        t = ((x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]))[:, None]
        return (1 - t) * self.values[i] + t * self.values[i + 1]


def _make_tail(tail, first_value, eta) -> ExpPoly:
    if isinstance(tail, ExpPoly):
        return tail
    if tail == "constant-weighted":
        return ExpPoly.exponential(-eta, first_value)
    if tail == "zero":
        return ExpPoly.zero(np.size(first_value))
    if tail == "constant":
        return ExpPoly.exponential(0.0, first_value)
    raise ValueError(f"unknown tail model {tail!r}")


def eta_norm(phi: HistoryFunction) -> float:
    """``sup_{theta<=0} e^{eta theta} |phi(theta)|`` over nodes plus the tail."""
    node = float(np.max(np.exp(phi.eta * phi.grid) * np.linalg.norm(phi.values, axis=1)))
    terms = phi.tail.terms
    if not terms:
        return node
    if len(terms) == 1:
        (rate, coeff), = terms.items()
        # single exponential with Re(rate) >= -eta peaks at the window start
        if len(coeff) == 1 and rate.real >= -phi.eta - 1e-12:
            return node
    return max(node, phi.tail.weighted_sup(phi.eta, phi.window_start))


def evaluate(phi: HistoryFunction, theta):
    return phi.evaluate(theta)


def gauge_transform(phi: HistoryFunction) -> HistoryFunction:
    """Isometry ``BUC_eta -> BUC_0``: multiply by ``e^{eta theta}``."""
    w = np.exp(phi.eta * phi.grid)[:, None]
    tail = phi.tail.times_exp(phi.eta).scale(np.exp(phi.eta * phi.window_start))
    return phi.replace(eta=0.0, values=phi.values * w, tail=tail)


def inverse_gauge_transform(phi: HistoryFunction, eta: float) -> HistoryFunction:
    if phi.eta != 0:
        raise ValueError("inverse gauge expects an eta = 0 history")
    w = np.exp(-eta * phi.grid)[:, None]
    tail = phi.tail.times_exp(-eta).scale(np.exp(-eta * phi.window_start))
    return phi.replace(eta=eta, values=phi.values * w, tail=tail)


# serialization -------------------------------------------------------------
def write_history_csv(phi: HistoryFunction, path) -> None:
    with open(path, "w", newline="") as fh:
        write_history_rows(phi, fh)


def write_history_rows(phi: HistoryFunction, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    cols = []
    for i in range(phi.dim):
        if np.iscomplexobj(phi.values):
            cols += [f"x_{i + 1}_re", f"x_{i + 1}_im"]
        else:
            cols.append(f"x_{i + 1}")
    writer.writerow(["theta", *cols])
    for th, row in zip(phi.grid, phi.values):
        if np.iscomplexobj(row):
            flat = [v for z in row for v in (z.real, z.imag)]
        else:
            flat = list(row)
        writer.writerow([fmt(th), *(fmt(v) for v in flat)])


def read_history_csv(path, eta: float, tail: str = "constant-weighted", interp_order: int = 3) -> HistoryFunction:
    """Read a ``theta, x_1..x_n`` CSV (``_re``/``_im`` column pairs for complex)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "theta":
        raise ValueError("first column must be theta")
    data = np.array([[float(x) for x in r] for r in body if r])
    grid, cols = data[:, 0], data[:, 1:]
    if header[1].endswith("_re"):
        cols = cols[:, 0::2] + 1j * cols[:, 1::2]
    return HistoryFunction(eta, grid, cols, _make_tail(tail, cols[0], eta), interp_order)


def fmt(x: float) -> str:
    """Fixed 17-significant-digit formatting for byte-stable output."""
    return format(float(x), ".17g")


_PRESETS = {
    "constant": lambda p: (lambda th: np.outer(np.ones_like(th), np.atleast_1d(p.get("value", 1.0)))),
    "exponential": lambda p: (
        lambda th: np.outer(np.exp(p.get("rate", 0.0) * th), np.atleast_1d(p.get("value", 1.0)))
    ),
    "sine": lambda p: (
        lambda th: np.outer(
            p.get("offset", 0.0) + p.get("amplitude", 1.0) * np.sin(p.get("frequency", 1.0) * th + p.get("phase", 0.0)),
            np.atleast_1d(p.get("value", 1.0)),
        )
    ),
    "lorentzian": lambda p: (lambda th: np.outer(1.0 / (1.0 + th**2), np.atleast_1d(p.get("value", 1.0)))),
}


def history_from_descriptor(desc: dict, eta: float) -> HistoryFunction:
    """Build a history from a JSON descriptor ``{"preset": ..., "params": {...}}``.

    Optional keys: ``n_nodes``, ``depth``, ``tail``, ``csv`` (path, overrides preset).
    """
    allowed = {"preset", "params", "n_nodes", "depth", "tail", "csv", "interp_order"}
    unknown = set(desc) - allowed
    if unknown:
        raise ValueError(f"unknown history keys: {sorted(unknown)}")
    if "csv" in desc:
        return read_history_csv(desc["csv"], eta, desc.get("tail", "constant-weighted"), desc.get("interp_order", 3))
    preset = desc.get("preset", "constant")
    if preset not in _PRESETS:
        raise ValueError(f"unknown history preset {preset!r}")
    params = desc.get("params", {})
    depth = desc.get("depth", default_depth(eta))
    grid = geometric_grid(depth, desc.get("n_nodes", 512))
    func = _PRESETS[preset](params)
    dim = np.atleast_1d(params.get("value", 1.0)).size
    tail = desc.get("tail", "constant" if preset == "constant" else "constant-weighted")
    if preset == "exponential" and "tail" not in desc:
        tail = ExpPoly.exponential(params.get("rate", 0.0), np.atleast_1d(params.get("value", 1.0))).shift(grid[0])
    return HistoryFunction.from_function(func, eta, grid, tail=tail, interp_order=desc.get("interp_order", 3), dim=dim)


def load_history(path: str | Path, eta: float) -> HistoryFunction:
    path = Path(path)
    if path.suffix == ".json":
        return history_from_descriptor(json.loads(path.read_text()), eta)
    return read_history_csv(path, eta)
