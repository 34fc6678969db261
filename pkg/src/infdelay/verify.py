"""Randomized invariant checks behind the ``verify`` command."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .functional import LinearFunctionalSpec, apply, delta_matrix
from .history import BoundaryAugmentedState, HistoryFunction, default_depth, eta_norm, gauge_transform, geometric_grid
from .resolvent import EigenvalueProximityError, resolvent_A, resolvent_AL
from .solver import ModelSpec, semiflow_property_check
from .spectral import ScanRegion, count_roots, find_roots, projector


def random_history(rng: np.random.Generator, eta: float, dim: int, n_nodes: int = 512, scale: float = 1.0,
                   ) -> HistoryFunction:
    """Smooth random history: a few damped sinusoids with a constant tail."""
    k = 3
    amp = rng.normal(size=(k, dim)) * scale
    freq = rng.uniform(0.2, 3.0, size=k)
    phase = rng.uniform(0, 2 * np.pi, size=k)
    damp = rng.uniform(0.0, 0.5, size=k)
    offset = rng.normal(size=dim) * scale

    def f(th):
        th = np.asarray(th)[:, None]
        return offset + (np.cos(freq * th + phase) * np.exp(damp * th)) @ amp

    grid = geometric_grid(default_depth(eta), n_nodes)
    return HistoryFunction.from_function(f, eta, grid, tail="constant", dim=dim)


def _check(name, value, tol, detail=""):
    return {"name": name, "value": float(value), "tolerance": float(tol), "passed": bool(value <= tol),
            "detail": detail}


def check_char_matrix(L: LinearFunctionalSpec, rng) -> dict:
    grid = geometric_grid(default_depth(L.eta), 1024, 0.005)
    worst = 0.0
    for _ in range(5):
        lam = complex(rng.uniform(-0.8 * L.eta, 2.0), rng.uniform(-3, 3))
        cols = [apply(L, HistoryFunction.exponential(lam, np.eye(L.dim)[j], L.eta, grid)) for j in range(L.dim)]
        quad = lam * np.eye(L.dim) - np.column_stack(cols)
        D = delta_matrix(L, lam)
        worst = max(worst, np.linalg.norm(D - quad) / (1 + np.linalg.norm(D)))
    return _check("char_matrix_vs_quadrature", worst, 1e-8)


def check_hille_yosida(L: LinearFunctionalSpec, rng) -> dict:
    worst = 0.0
    for _ in range(40):
        lam = rng.uniform(0.1, 50.0)
        st = BoundaryAugmentedState(rng.normal(size=L.dim), random_history(rng, L.eta, L.dim))
        psi = resolvent_A(lam, st)
        bound = (np.linalg.norm(st.alpha) + eta_norm(st.history)) / lam
        worst = max(worst, eta_norm(psi) / bound)
    return _check("hille_yosida_ratio", worst, 1 + 1e-6)


def check_resolvent_boundary(L: LinearFunctionalSpec, rng) -> dict:
    worst = 0.0
    done = 0
    while done < 5:
        lam = complex(rng.uniform(0.2, 3.0), rng.uniform(-2, 2))
        st = BoundaryAugmentedState(rng.normal(size=L.dim), random_history(rng, L.eta, L.dim))
        try:
            psi = resolvent_AL(L, lam, st)
        except EigenvalueProximityError:
            continue
        # psi'(0) from the defining equation lambda psi - psi' = phi at theta = 0
        dpsi0 = lam * psi.head - st.history.head
        res = np.linalg.norm(dpsi0 - apply(L, psi) - st.alpha)
        worst = max(worst, res / (1 + np.linalg.norm(dpsi0)))
        done += 1
    return _check("resolvent_boundary_condition", worst, 1e-5)


def check_root_count(L: LinearFunctionalSpec, rng) -> dict:
    bad = 0
    for _ in range(4):
        re0 = rng.uniform(-0.9 * L.eta, 0.5)
        im0 = rng.uniform(-3, 2)
        reg = ScanRegion(re0, re0 + rng.uniform(0.3, 2.0), im0, im0 + rng.uniform(0.3, 3.0))
        n = count_roots(L, reg)
        roots = find_roots(L, reg, analyse=False)
        bad += int(n != sum(r.multiplicity for r in roots))
    return _check("root_count_conservation", bad, 0)


def check_projector(L: LinearFunctionalSpec, rng) -> dict:
    reg = ScanRegion(-0.9 * L.eta, 3.0, -4.0, 4.0)
    roots = [r for r in find_roots(L, reg) if r.pole_order <= 4]
    if not roots:
        return _check("projector_idempotency", 0.0, 1e-7, "no root in the scan region")
    root = max(roots, key=lambda r: r.lambda0.real)
    st = BoundaryAugmentedState(rng.normal(size=L.dim), random_history(rng, L.eta, L.dim))
    p1 = projector(L, root, st)
    p2 = projector(L, root, BoundaryAugmentedState(np.zeros(L.dim), p1))
    w = np.exp(L.eta * p1.grid)[:, None]
    err = np.max(np.abs(p2.values - p1.values) * w) / max(np.max(np.abs(p1.values) * w), 1e-300)
    return _check("projector_idempotency", err, 1e-7, f"root {root.lambda0}")


def check_semiflow(model: ModelSpec, xbar, rng) -> dict:
    s = rng.uniform(0.2, 1.5)
    t = s + rng.uniform(0.2, 1.5)
    pert = random_history(rng, model.eta, model.dim, scale=0.05)
    phi = pert.replace(values=pert.values + xbar, tail=pert.tail + _const_tail(xbar))
    rep = semiflow_property_check(model, phi, t, s, h=1e-2)
    return _check("semiflow_law", rep.discrepancy, 1e-5, f"s={s:.3f}, t={t:.3f}")


def _const_tail(x):
    from .exppoly import ExpPoly

    return ExpPoly.exponential(0.0, np.asarray(x, dtype=float))


def check_gauge(L: LinearFunctionalSpec, rng) -> dict:
    worst = 0.0
    for _ in range(20):
        phi = random_history(rng, L.eta, L.dim)
        worst = max(worst, abs(eta_norm(gauge_transform(phi)) - eta_norm(phi)) / eta_norm(phi))
    return _check("gauge_isometry", worst, 1e-12)


def run_suite(L: LinearFunctionalSpec, model: ModelSpec, xbar, seed: int = 0, threads: int = 1) -> list[dict]:
    """Run every check with an independent child seed; order of results is fixed."""
    seeds = np.random.SeedSequence(seed).spawn(7)
    tasks = [
        lambda r: check_char_matrix(L, r),
        lambda r: check_hille_yosida(L, r),
        lambda r: check_resolvent_boundary(L, r),
        lambda r: check_root_count(L, r),
        lambda r: check_projector(L, r),
        lambda r: check_semiflow(model, np.asarray(xbar, dtype=float), r),
        lambda r: check_gauge(L, r),
    ]
    rngs = [np.random.default_rng(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(lambda pair: pair[0](pair[1]), zip(tasks, rngs)))
