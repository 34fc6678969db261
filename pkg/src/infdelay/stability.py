"""Stability from the rightmost characteristic root, branch continuation and Hopf points."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .functional import LinearFunctionalSpec, bound_constants, delta_matrix
from .history import HistoryFunction
from .solver import ModelSpec, integrate, linear_model
from .spectral import (ScanRegion, SpectralError, SpectralRoot, analyse_root, det_multiplicity, find_roots,
                       newton_root, null_vectors)

log = logging.getLogger(__name__)


# stability -------------------------------------------------------------------------
@dataclass
class StabilityVerdict:
    stable: bool
    rightmost: SpectralRoot | None
    region: ScanRegion
    decay_estimate: float | None
    roots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        r = self.rightmost
        return {
            "stable": self.stable,
            "rightmost": None if r is None else {"re": r.lambda0.real, "im": r.lambda0.imag,
                                                  "pole_order": r.pole_order},
            "decay_estimate": self.decay_estimate,
            "region": [self.region.re_min, self.region.re_max, self.region.im_min, self.region.im_max],
            "n_roots": len(self.roots),
        }


def root_modulus_bound(L: LinearFunctionalSpec, margin: float = 1e-3) -> float:
    """Every root with ``Re lambda >= -eta + margin`` satisfies ``|lambda| <= R``."""
    return bound_constants(L, -L.eta + margin)


def certified_region(L: LinearFunctionalSpec, region: ScanRegion | None = None, margin: float = 1e-3) -> ScanRegion:
    """Enlarge ``region`` until it contains every root of ``Re lambda >= -eta + margin``."""
    R = root_modulus_bound(L, margin) + 1.0
    re_min = -L.eta + margin
    if region is None:
        return ScanRegion(re_min, R, -R, R, margin=margin)
    return ScanRegion(max(region.re_min, re_min), max(region.re_max, R), min(region.im_min, -R),
                      max(region.im_max, R), region.max_depth, region.margin)


def assess_stability(L: LinearFunctionalSpec, region: ScanRegion | None = None, margin: float = 1e-3,
                     tol: float = 1e-12) -> StabilityVerdict:
    """Stable iff every root in ``Re lambda > -eta`` has negative real part."""
    reg = certified_region(L, region, margin)
    reg.validate(L.eta)
    roots = find_roots(L, reg, tol)
    if not roots:
        return StabilityVerdict(True, None, reg, L.eta - margin, roots)
    rightmost = max(roots, key=lambda r: (r.lambda0.real, abs(r.lambda0.imag), r.lambda0.imag))
    stable = all(r.lambda0.real < 0 for r in roots)
    decay = -rightmost.lambda0.real if stable else None
    return StabilityVerdict(stable, rightmost, reg, decay, roots)


def state_norms(trace, times, norm: str = "envelope", window: float | None = None) -> np.ndarray:
    """Norm of the segments ``x_t`` at ``times``.

    ``"eta"`` is the weighted sup over the whole past, which can never decay
    faster than ``e^{-eta t}`` because the initial data stays in view.
    ``"envelope"`` takes the sup over the last ``window`` time units, which
    tracks the decay of the solution itself.
    """
    times = np.asarray(times, dtype=float)
    knots, vals = trace.times, np.max(np.abs(trace.states), axis=1)
    out = np.empty(times.size)
    if norm == "envelope":
        w = window if window is not None else 0.25 * trace.t_end
        for i, t in enumerate(times):
            sel = (knots >= t - w) & (knots <= t)
            out[i] = vals[sel].max()
    elif norm == "eta":
        eta = trace.initial.eta
        past = trace.initial.eta_norm()
        for i, t in enumerate(times):
            sel = knots <= t
            out[i] = max(np.max(np.exp(eta * (knots[sel] - t)) * vals[sel]), np.exp(-eta * t) * past)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return out


def decay_rate_empirical(system, phi: HistoryFunction, T: float, h: float = 1e-2, norm: str = "envelope",
                         window: float | None = None, n_samples: int = 200) -> float:
    """Least-squares slope of ``log |x_t|`` over ``[T/2, T]``.

    ``system`` is a linear functional (simulated as ``x' = L x_t``) or a model.
    """
    model = linear_model(system) if isinstance(system, LinearFunctionalSpec) else system
    trace = integrate(model, phi, T, h)
    times = np.linspace(T / 2, T, n_samples)
    logs = np.log(state_norms(trace, times, norm, window))
    return float(np.polyfit(times, logs, 1)[0])


# branch continuation ------------------------------------------------------------------
@dataclass
class BranchSample:
    mu: float
    lam: complex
    dlambda_dmu: complex
    condition: float
    residual: float


def _slope(family, mu, lam, dmu=None):
    """``d lambda / d mu`` at a simple root from the null vectors."""
    L = family(mu)
    V, W, _ = null_vectors(L, lam)
    dmu = dmu if dmu is not None else 1e-6 * max(1.0, abs(mu))
    dD = (delta_matrix(family(mu + dmu), lam) - delta_matrix(family(mu - dmu), lam)) / (2 * dmu)
    den = W @ delta_matrix(L, lam, 1) @ V
    return complex(-(W @ dD @ V) / den), float(abs(den))


def _residual(L, lam):
    D = delta_matrix(L, lam)
    return float(abs(np.linalg.det(D)))


def continue_branch(family: Callable[[float], LinearFunctionalSpec], mu_range, seed, step: float,
                    tol: float = 1e-13, min_step: float | None = None) -> list[BranchSample]:
    """Follow ``lambda(mu)`` from ``seed = (mu0, lambda0)`` across ``mu_range``.

    Secant (first step: tangent) predictor, Newton corrector, step halving
    when the corrector fails or lands on a neighbouring root.
    """
    mu0, lam0 = float(seed[0]), complex(seed[1])
    lo, hi = sorted(map(float, mu_range))
    direction = 1.0 if hi > mu0 else -1.0
    end = hi if direction > 0 else lo
    min_step = min_step if min_step is not None else 1e-9 * max(1.0, abs(hi - lo))
    lam0 = newton_root(family(mu0), lam0, tol)
    s0, c0 = _slope(family, mu0, lam0)
    samples = [BranchSample(mu0, lam0, s0, c0, _residual(family(mu0), lam0))]
    h = abs(step)
    while direction * (end - samples[-1].mu) > 1e-14 * max(1.0, abs(end)):
        prev = samples[-1]
        dmu = direction * min(h, abs(end - prev.mu))
        mu = prev.mu + dmu
        if len(samples) > 1:
            pp = samples[-2]
            pred = prev.lam + (prev.lam - pp.lam) * dmu / (prev.mu - pp.mu)
        else:
            pred = prev.lam + prev.dlambda_dmu * dmu
        ok = True
        try:
            L = family(mu)
            lam = newton_root(L, pred, tol)
            jump = abs(lam - pred)
            expected = abs(prev.dlambda_dmu * dmu) + 1e-12
            if jump > max(0.5 * expected, 1e-10) and jump > 1e-6:
                ok = False
            elif jump > 1e-9 and det_multiplicity(L, lam, radius=max(2 * jump, 1e-6)) != 1:
                ok = False  # two roots inside the corrector basin
        except (SpectralError, np.linalg.LinAlgError):
            ok = False
        if not ok:
            h /= 2
            if h < min_step:
                raise SpectralError(f"branch continuation stalled at mu = {prev.mu}")
            continue
        s, c = _slope(family, mu, lam)
        samples.append(BranchSample(mu, lam, s, c, _residual(L, lam)))
        h = min(abs(step), 1.5 * h)
    return samples


# Hopf points ---------------------------------------------------------------------------
@dataclass
class HopfRow:
    offset: float
    mu: float
    period: float | None
    amplitude: float | None
    flagged: bool = False
    reason: str = ""


@dataclass
class HopfRecord:
    mu_star: float
    omega: float
    transversality: float
    simple: bool
    nonresonant: bool
    lambda_star: complex
    residual: float
    rows: list = field(default_factory=list)
    criticality: str = "undetermined"
    fit_slope: float | None = None
    fit_r2: float | None = None

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def to_dict(self) -> dict:
        return {
            "mu_star": self.mu_star,
            "omega": self.omega,
            "transversality": self.transversality,
            "simple": self.simple,
            "nonresonant": self.nonresonant,
            "residual": self.residual,
            "criticality": self.criticality,
            "amplitude2_slope": self.fit_slope,
            "amplitude2_r2": self.fit_r2,
            "rows": [vars(r) for r in self.rows],
        }


def nonresonance_strip(L: LinearFunctionalSpec, omega: float, half_width: float = 1e-6,
                       harmonics: int = 8) -> list[SpectralRoot]:
    """Roots in ``|Re lambda| <= half_width``, ``|Im lambda| <= harmonics * omega``."""
    top = harmonics * omega
    return find_roots(L, ScanRegion(-half_width, half_width, -top, top, margin=0.0), analyse=False)


def detect_hopf(branch: list[BranchSample], family: Callable[[float], LinearFunctionalSpec],
                tol: float = 1e-10, return_reason: bool = False):
    """Locate the first crossing of the imaginary axis along ``branch`` and check the Hopf conditions."""

    def done(rec, reason=""):
        if reason:
            log.info("no Hopf point: %s", reason)
        return (rec, reason) if return_reason else rec

    re = np.array([s.lam.real for s in branch])
    idx = np.where(np.sign(re[:-1]) * np.sign(re[1:]) <= 0)[0]
    if idx.size == 0:
        return done(None, "branch does not cross the imaginary axis")
    i = int(idx[0])
    a, b = branch[i], branch[i + 1]

    def lam_at(mu):
        t = (mu - a.mu) / (b.mu - a.mu)
        guess = a.lam + t * (b.lam - a.lam)
        return newton_root(family(mu), guess, 1e-15)

    fa, fb = lam_at(a.mu).real, lam_at(b.mu).real
    if fa * fb > 0 or fa == 0 or fb == 0:
        # a sample already sits on the axis to rounding level
        mu_star = a.mu if abs(fa) <= abs(fb) else b.mu
    else:
        mu_star = brentq(lambda m: lam_at(m).real, a.mu, b.mu, xtol=1e-15, rtol=1e-15, maxiter=200)
    lam_star = lam_at(mu_star)
    L = family(mu_star)
    omega = abs(lam_star.imag)
    if abs(lam_star.real) > tol:
        return done(None, f"bisection stalled with Re lambda = {lam_star.real:.3e}")
    if omega < 1e-8:
        return done(None, "real root crosses the axis (steady-state bifurcation)")
    lam_star = complex(lam_star.real, omega)
    root = analyse_root(L, lam_star)
    slope, _ = _slope(family, mu_star, lam_star)
    strip = nonresonance_strip(L, omega)
    found = sorted(r.lambda0.imag for r in strip)
    nonres = (sum(r.multiplicity for r in strip) == 2 and len(found) == 2
              and abs(found[0] + omega) < 1e-6 * (1 + omega) and abs(found[1] - omega) < 1e-6 * (1 + omega))
    rec = HopfRecord(float(mu_star), float(omega), float(slope.real), bool(root.is_simple), bool(nonres),
                     lam_star, float(abs(np.linalg.det(delta_matrix(L, complex(0.0, omega))))))
    if not rec.simple:
        return done(None, "critical root is not simple")
    if not nonres:
        return done(None, f"resonance: axis roots {found}")
    if abs(rec.transversality) < 1e-8:
        return done(None, "transversality below tolerance")
    return done(rec)


def measure_oscillation(times, signal, discard: float = 0.6):
    """Half peak-to-peak amplitude and mean zero-crossing period of the tail of ``signal``."""
    keep = times >= times[0] + discard * (times[-1] - times[0])
    t, x = times[keep], signal[keep]
    x = x - x.mean()
    amp = float(0.5 * (x.max() - x.min()))
    s = np.sign(x)
    k = np.where((s[:-1] < 0) & (s[1:] >= 0))[0]
    if k.size < 3:
        return amp, None
    # linear interpolation of the upward crossings
    tc = t[k] - x[k] * (t[k + 1] - t[k]) / (x[k + 1] - x[k])
    return amp, float(np.mean(np.diff(tc)))


def _simulate_cycle(model: ModelSpec, xbar, perturbation, T, h):
    n = model.dim
    start = np.asarray(xbar, dtype=float) + perturbation * np.eye(n)[0]
    phi = HistoryFunction.constant(start, model.eta)
    trace = integrate(model, phi, T, h)
    if not trace.completed:
        return None, None, "blow-up"
    x = trace.states[:, 0] - xbar[0]
    amp, period = measure_oscillation(trace.times, x)
    # compare the two halves of the kept window: a decaying signal is not a cycle
    half = trace.times >= trace.times[0] + 0.8 * T
    mid = (trace.times >= 0.6 * T) & ~half
    late, early = np.ptp(x[half]), np.ptp(x[mid])
    if period is None or amp < 1e-6 or late < 0.9 * early:
        return amp, period, "no limit cycle (decay)"
    if late > 1.1 * early:
        return amp, period, "no limit cycle (growth)"
    return amp, period, ""


def verify_hopf_by_simulation(model_family: Callable[[float], ModelSpec], record: HopfRecord, offsets,
                              equilibrium: Callable[[float], np.ndarray] | None = None,
                              T: float | None = None, h: float | None = None,
                              perturbation: float | None = None) -> HopfRecord:
    """Simulate past ``mu*`` and measure the emerging cycle's period and amplitude.

    Offsets are taken on the linearly unstable side first; if no cycle
    appears there the other side is probed (subcritical case).
    """
    offsets = sorted(float(o) for o in offsets)
    if h is None:
        h = record.period / 200
    side = 1.0 if record.transversality > 0 else -1.0

    def run(sign):
        rows = []
        for off in offsets:
            mu = record.mu_star + sign * off
            model = model_family(mu)
            xbar = np.zeros(model.dim) if equilibrium is None else np.asarray(equilibrium(mu), dtype=float)
            rate = abs(record.transversality) * off
            horizon = T if T is not None else max(40 * record.period, 12.0 / (2 * rate) / 0.6)
            p0 = perturbation if perturbation is not None else np.sqrt(off)
            amp, period, reason = _simulate_cycle(model, xbar, p0, horizon, h)
            if not reason and rate * horizon < 1.0:
                # the cycle cannot form within the horizon; indistinguishable from neutral
                reason = "no limit cycle (neutral at this offset)"
            rows.append(HopfRow(sign * off, mu, period, amp, bool(reason), reason))
        return rows

    rows = run(side)
    crit = "supercritical"
    if all(r.flagged for r in rows):
        other = run(-side)
        if any(not r.flagged for r in other):
            rows, crit = other, "subcritical"
        else:
            rows, crit = rows + other, "undetermined"
    good = [r for r in rows if not r.flagged]
    slope = r2 = None
    if good:
        o = np.array([abs(r.offset) for r in good])
        a2 = np.array([r.amplitude**2 for r in good])
        slope = float(o @ a2 / (o @ o))
        ss_tot = float(a2 @ a2)
        r2 = 1.0 - float(np.sum((a2 - slope * o) ** 2)) / ss_tot if ss_tot > 0 else None
    return replace(record, rows=record.rows + rows, criticality=crit, fit_slope=slope, fit_r2=r2)


def hopf_scan(family: Callable[[float], LinearFunctionalSpec], mu_range, seed_region: ScanRegion | None = None,
              step: float | None = None):
    """Continue the rightmost root over ``mu_range`` and detect the first Hopf point."""
    lo, hi = sorted(map(float, mu_range))
    L0 = family(lo)
    verdict = assess_stability(L0, seed_region)
    if verdict.rightmost is None:
        raise SpectralError("no characteristic root at the start of the range")
    lam0 = verdict.rightmost.lambda0
    if lam0.imag < 0:
        lam0 = lam0.conjugate()
    step = step if step is not None else (hi - lo) / 20
    branch = continue_branch(family, (lo, hi), (lo, lam0), step)
    return branch, detect_hopf(branch, family, return_reason=True)
