"""Solution traces with cubic Hermite dense output, and history segments."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .history import HistoryFunction, fmt


def hermite(s, h, x0, x1, f0, f1):
    """Cubic Hermite on one step; ``s`` in ``[0, 1]`` (may exceed 1 to extrapolate)."""
    s = np.asarray(s)[..., None]
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


@dataclass
class SimulationTrace:
    """Solution ``x`` on ``(-inf, t_N]``: initial history plus stepped samples.

    ``derivs[i]`` is ``x'(times[i])`` and, with ``states``, defines the
    piecewise cubic Hermite dense output between consecutive knots.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    initial: HistoryFunction
    h: float
    termination: str = "completed"
    t_star: float | None = None
    threshold: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def completed(self) -> bool:
        return self.termination == "completed"

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t > self.t_end * (1 + 1e-14) + 1e-14):
            raise ValueError("time beyond the end of the trace")
        out = np.empty((t.size, self.dim), dtype=self.states.dtype)
        past = t <= 0
        if np.any(past):
            out[past] = self.initial.evaluate(t[past])
        fut = ~past
        if np.any(fut):
            tf = np.minimum(t[fut], self.t_end)
            k = np.clip(np.searchsorted(self.times, tf, side="right") - 1, 0, len(self.times) - 2)
            hk = self.times[k + 1] - self.times[k]
            s = (tf - self.times[k]) / hk
            out[fut] = hermite(s, hk[:, None], self.states[k], self.states[k + 1], self.derivs[k], self.derivs[k + 1])
        return out[0] if scalar else out

    def segment(self, t: float) -> HistoryFunction:
        return segment(self, t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_trace_rows(self, fh)


def write_trace_rows(trace: SimulationTrace, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", *[f"x_{i + 1}" for i in range(trace.dim)]])
    for t, row in zip(trace.times, trace.states):
        writer.writerow([fmt(t), *(fmt(v) for v in np.real(row))])


def segment(trace: SimulationTrace, t: float) -> HistoryFunction:
    """History segment ``x_t(theta) = x(t + theta)`` as a sampled history."""
    if t < 0 or t > trace.t_end * (1 + 1e-14) + 1e-14:
        raise ValueError(f"t = {t} outside the trace domain [0, {trace.t_end}]")
    t = min(float(t), trace.t_end)
    phi = trace.initial
    if t == 0:
        return phi
    past = phi.grid - t
    inside = trace.times[(trace.times > 0) & (trace.times < t)]
    future_nodes = np.concatenate([inside - t, [0.0]])
    future_vals = np.concatenate([trace.evaluate(inside), trace.evaluate(t)[None, :]])
    grid = np.concatenate([past, future_nodes])
    values = np.concatenate([phi.values.astype(future_vals.dtype), future_vals])
    breaks = [b for b in phi.breaks] + [phi.grid.size - 1]
    return HistoryFunction(phi.eta, grid, values, phi.tail, phi.interp_order, tuple(breaks))
