"""Characteristic roots, pole orders, Laurent coefficients and spectral projectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .exppoly import ExpPoly
from .functional import LinearFunctionalSpec, apply, char_matrix, delta_matrix, poles
from .history import BoundaryAugmentedState, HistoryFunction
from .resolvent import exp_convolution, resolvent_AL


class SpectralError(ArithmeticError):
    pass


class ContourProximityError(SpectralError):
    pass


class IllConditionedPoleError(SpectralError):
    pass


@dataclass(frozen=True)
class ScanRegion:
    """Rectangle ``[re_min, re_max] x [im_min, im_max]`` inside ``Re lambda > -eta``."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    max_depth: int = 14
    margin: float = 1e-3

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("degenerate scan region")

    def validate(self, eta: float) -> None:
        """Require the rectangle to sit inside ``Re lambda > -eta + margin``."""
        if not self.in_omega(eta):
            raise ValueError(f"re_min = {self.re_min} too close to -eta = {-eta}")

    def in_omega(self, eta: float) -> bool:
        return self.re_min > -eta + self.margin * 0.999999

    @property
    def corners(self):
        return (complex(self.re_min, self.im_min), complex(self.re_max, self.im_min),
                complex(self.re_max, self.im_max), complex(self.re_min, self.im_max))

    @property
    def size(self) -> float:
        return max(self.re_max - self.re_min, self.im_max - self.im_min)

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= z.real <= self.re_max + slack
                and self.im_min - slack <= z.imag <= self.im_max + slack)

    def split(self, fr: float = 0.4987, fi: float = 0.5013):
        # slightly off-centre so split lines avoid symmetric roots (real axis)
        rm = self.re_min + fr * (self.re_max - self.re_min)
        im = self.im_min + fi * (self.im_max - self.im_min)
        kw = dict(max_depth=self.max_depth, margin=self.margin)
        return [ScanRegion(self.re_min, rm, self.im_min, im, **kw), ScanRegion(rm, self.re_max, self.im_min, im, **kw),
                ScanRegion(self.re_min, rm, im, self.im_max, **kw), ScanRegion(rm, self.re_max, im, self.im_max, **kw)]


@dataclass
class SpectralRoot:
    lambda0: complex
    pole_order: int
    laurent: list
    V: np.ndarray | None
    W: np.ndarray | None
    residual: float
    is_simple: bool
    multiplicity: int = 1
    null_dim: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def delta_minus_1(self) -> np.ndarray:
        return self.laurent[0]


# characteristic determinant -------------------------------------------------
def delta_batch(L: LinearFunctionalSpec, lams) -> np.ndarray:
    """``Delta`` at many points at once, shape ``(k, n, n)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if L.general:
        return np.array([char_matrix(L, z).matrix for z in lams])
    n = L.dim
    M = lams[:, None, None] * np.eye(n)[None]
    for t in L.discrete:
        M = M - np.exp(-lams * t.tau)[:, None, None] * t.A
    for t in L.kernels:
        M = M - (factorial(t.power) / (lams + t.delta) ** (t.power + 1))[:, None, None] * t.C
    return M


def det_delta(L: LinearFunctionalSpec, lam) -> complex:
    return complex(np.linalg.det(delta_matrix(L, lam)))


def _log_derivative(L, lam) -> complex:
    # d'(lam)/d(lam) = tr(Delta^{-1} Delta')
    D = delta_matrix(L, lam)
    D1 = delta_matrix(L, lam, 1)
    return complex(np.trace(np.linalg.solve(D, D1)))


# argument principle -----------------------------------------------------------
def delta_derivative_batch(L: LinearFunctionalSpec, lams) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if L.general:
        return np.array([delta_matrix(L, z, 1) for z in lams])
    M = np.broadcast_to(np.eye(L.dim, dtype=complex), (lams.size, L.dim, L.dim)).copy()
    for t in L.discrete:
        M = M + (t.tau * np.exp(-lams * t.tau))[:, None, None] * t.A
    for t in L.kernels:
        M = M + (factorial(t.power + 1) / (lams + t.delta) ** (t.power + 2))[:, None, None] * t.C
    return M


def _samples(L, z):
    D = delta_batch(L, z)
    d = np.linalg.det(D)
    scale = np.linalg.norm(D, axis=(1, 2)) ** L.dim
    with np.errstate(all="ignore"):
        try:
            ld = np.trace(np.linalg.solve(D, delta_derivative_batch(L, z)), axis1=1, axis2=2)
        except np.linalg.LinAlgError:
            ld = np.full(z.size, np.inf)
        # Newton step length: a local estimate of the distance to the nearest root
        dist = 1.0 / np.abs(ld)
    return d, scale, np.where(np.isfinite(dist), dist, 0.0)


def _contour_winding(L, corners, max_points=200000):
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        pts.append(a + (b - a) * np.linspace(0, 1, 65)[:-1])
    z = np.concatenate(pts + [np.array([corners[0]])])
    d, scale, dist = _samples(L, z)
    min_len = 1e-13 * max(abs(c) for c in corners) + 1e-300
    while True:
        if np.any(np.abs(d) <= 1e-13 * scale):
            raise ContourProximityError("characteristic determinant vanishes on the contour")
        jumps = np.abs(np.angle(d[1:] / d[:-1]))
        h = np.abs(np.diff(z))
        bad = np.where((jumps > np.pi / 4) | (h > 0.5 * np.minimum(dist[1:], dist[:-1])))[0]
        if bad.size == 0:
            break
        if np.min(h[bad]) < min_len or z.size + bad.size > max_points:
            raise ContourProximityError("phase increments do not resolve near the contour")
        mids = 0.5 * (z[bad] + z[bad + 1])
        dm, sm, distm = _samples(L, mids)
        z = np.insert(z, bad + 1, mids)
        d = np.insert(d, bad + 1, dm)
        scale = np.insert(scale, bad + 1, sm)
        dist = np.insert(dist, bad + 1, distm)
    total = np.sum(np.angle(d[1:] / d[:-1])) / (2 * np.pi)
    w = int(round(total))
    if abs(total - w) > 1e-3:
        raise ContourProximityError(f"winding number {total} not integral")
    return w, z, d


def count_roots(L: LinearFunctionalSpec, region: ScanRegion, max_attempts: int = 6) -> int:
    """Roots of ``det Delta`` inside ``region``, counted with multiplicity.

    The closed-form ``Delta`` is meromorphic with real poles ``-delta_j``, so
    the rectangle only has to avoid those points (quadrature-backed kernels
    need the whole half-plane ``Re lambda > -decay``). Roots left of ``-eta``
    are roots of ``det Delta`` but not eigenvalues on ``BUC_eta``.
    """
    check_region(L, region)
    corners = list(region.corners)
    size = region.size
    for attempt in range(max_attempts):
        try:
            return _contour_winding(L, corners)[0]
        except ContourProximityError:
            # left edge moves inward (keeps re_min > -eta), the other three outward
            eps = 1e-7 * size * 3.0**attempt
            corners = [c + d * eps for c, d in zip(corners, (1 - 1j, 1 - 1j, 1 + 1j, 1 + 1j))]
    raise ContourProximityError(f"contour stays too close to a root after {max_attempts} perturbations")


def check_region(L: LinearFunctionalSpec, region: ScanRegion) -> None:
    """Reject rectangles on which ``Delta`` fails to be analytic."""
    m = region.margin
    if L.general:
        if region.re_min <= L.pole_bound + m:
            raise ValueError(f"scan region reaches the kernel half-plane boundary Re = {L.pole_bound}")
        return
    for p in poles(L):
        if (region.re_min - m <= p <= region.re_max + m) and region.im_min - m <= 0 <= region.im_max + m:
            raise ValueError(f"scan region contains the kernel pole {p}")


def _region_count(L, region):
    try:
        return count_roots(L, region)
    except ContourProximityError:
        return None


# Newton -----------------------------------------------------------------------
def newton_root(L: LinearFunctionalSpec, z0: complex, tol: float = 1e-13, multiplicity: int = 1,
                max_iter: int = 60, radius: float | None = None) -> complex:
    """Multiplicity-aware Newton on ``det Delta``; ``radius`` bounds the excursion from ``z0``."""
    z = complex(z0)
    for _ in range(max_iter):
        try:
            ld = _log_derivative(L, z)
        except np.linalg.LinAlgError:
            return z  # Delta(z) exactly singular
        if not np.isfinite(ld) or ld == 0:
            if det_delta(L, z) == 0:
                return z
            raise SpectralError(f"Newton stalled at {z} (log-derivative {ld})")
        step = -multiplicity / ld
        z = z + step
        if L.general and z.real <= L.pole_bound:
            raise SpectralError("Newton iterate crossed the kernel half-plane boundary")
        if any(z == p for p in poles(L)):
            raise SpectralError("Newton iterate hit a kernel pole")
        if radius is not None and abs(z - z0) > radius:
            raise SpectralError(f"Newton left the neighbourhood of {z0}")
        if abs(step) <= tol * (1 + abs(z)):
            return z
    raise SpectralError(f"Newton did not converge from {z0}")


def find_roots(L: LinearFunctionalSpec, region: ScanRegion, tol: float = 1e-12,
               analyse: bool = True) -> list[SpectralRoot]:
    """All roots in ``region`` by quadtree subdivision plus Newton polishing."""
    total = count_roots(L, region)
    found: list[tuple[complex, int]] = []
    flagged: list[ScanRegion] = []

    def visit(cell: ScanRegion, count: int, depth: int):
        if count == 0:
            return
        if count == 1 or depth >= region.max_depth:
            z0 = complex(0.5 * (cell.re_min + cell.re_max), 0.5 * (cell.im_min + cell.im_max))
            try:
                z = newton_root(L, z0, tol=tol * 1e-1, multiplicity=count, radius=2 * cell.size)
            except SpectralError:
                z = None
            if z is not None and cell.contains(z, slack=1e-9 * region.size):
                found.append((z, count))
                return
            if depth >= region.max_depth:
                flagged.append(cell)
                return
        kids = cell.split()
        counts = [_region_count(L, k) for k in kids]
        if any(c is None for c in counts) or sum(counts) != count:
            # a root sits on an internal edge: retry with an off-centre split
            kids = _offset_split(cell)
            counts = [_region_count(L, k) for k in kids]
            if any(c is None for c in counts) or sum(counts) != count:
                flagged.append(cell)
                return
        for k, c in zip(kids, counts):
            visit(k, c, depth + 1)

    visit(region, total, 0)
    if flagged:
        raise SpectralError(f"{len(flagged)} cell(s) unresolved (depth limit or Newton divergence)")
    roots = _dedupe(found)
    if sum(m for _, m in roots) != total:
        raise SpectralError("root multiplicities do not add up to the winding number")
    if _is_real(L):
        roots = _symmetrize(roots, tol)
    roots.sort(key=lambda r: (round(r[0].real, 10), round(r[0].imag, 10)))
    if not analyse:
        return [SpectralRoot(z, m, [], None, None, abs(det_delta(L, z)), m == 1, m) for z, m in roots]
    return [analyse_root(L, z, multiplicity=m) for z, m in roots]


def _offset_split(cell: ScanRegion):
    return cell.split(0.4731, 0.5317)


def _dedupe(found):
    out: list[tuple[complex, int]] = []
    for z, m in found:
        for i, (w, k) in enumerate(out):
            if abs(z - w) <= 1e-8 * (1 + abs(z)):
                out[i] = (w, max(k, m))
                break
        else:
            out.append((z, m))
    return out


def _is_real(L: LinearFunctionalSpec) -> bool:
    return not L.general


def _symmetrize(roots, tol):
    out = []
    for z, m in roots:
        if abs(z.imag) <= max(tol, 1e-10) * (1 + abs(z)):
            z = complex(z.real, 0.0)
        out.append((z, m))
    for i, (z, m) in enumerate(out):
        if z.imag > 0:
            for j, (w, k) in enumerate(out):
                if abs(w - z.conjugate()) <= 1e-8 * (1 + abs(z)):
                    avg = 0.5 * (z + w.conjugate())
                    out[i] = (avg, m)
                    out[j] = (avg.conjugate(), k)
    return out


# local analysis at a root -------------------------------------------------------
def null_vectors(L: LinearFunctionalSpec, lam0: complex, rel_tol: float = 1e-8):
    """Right/left null vectors of ``Delta(lam0)`` and the numerical nullity."""
    D = delta_matrix(L, lam0)
    U, s, Vh = np.linalg.svd(D)
    scale = max(s[0], 1.0)
    null_dim = max(1, int(np.sum(s <= rel_tol * scale)))
    V = Vh[-1].conj()
    V = V / np.linalg.norm(V)
    k = int(np.argmax(np.abs(V)))
    V = V * (abs(V[k]) / V[k])
    W = U[:, -1].conj()
    return V, W, null_dim


def det_multiplicity(L: LinearFunctionalSpec, lam0: complex, radius: float = 1e-3) -> int:
    corners = [lam0 + radius * c for c in (-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j)]
    return _contour_winding(L, corners)[0]


def pole_order(L: LinearFunctionalSpec, lam0: complex, radii=(1e-3, 1e-4, 1e-5), n_ring: int = 8) -> int:
    """Order of ``lam0`` as a pole of ``Delta(lambda)^{-1}``.

    The growth of ``max_ring |Delta^{-1}|`` across shrinking rings gives the
    order; the two successive slope estimates must agree.
    """
    growth = []
    for r in radii:
        z = lam0 + r * np.exp(2j * np.pi * (np.arange(n_ring) + 0.25) / n_ring)
        s = np.linalg.svd(delta_batch(L, z), compute_uv=False)
        growth.append(np.max(1.0 / s[:, -1]))
    lr = np.log(np.asarray(radii))
    lg = np.log(np.asarray(growth))
    slopes = -np.diff(lg) / np.diff(lr)
    k = int(round(slopes[-1]))
    if k < 1 or np.any(np.abs(slopes - k) > 0.1):
        raise IllConditionedPoleError(f"inconsistent pole-order slopes {slopes} at {lam0}")
    return k


def taylor_on_ring(func, center: complex, radius: float, n_terms: int, n_points: int = 32):
    """Taylor coefficients ``c_p`` of an analytic matrix function via the ring DFT."""
    z = center + radius * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    vals = np.array([func(zz) for zz in z])
    coeffs = np.fft.fft(vals, axis=0) / n_points
    return [coeffs[p] / radius**p for p in range(n_terms)]


def laurent_coeffs(L: LinearFunctionalSpec, lam0: complex, k0: int, radius: float = 1e-3,
                   n_points: int = 32, tol: float = 1e-6):
    """``[Delta_{-1}, ..., Delta_{-k0}]`` from ``(lambda-lam0)^{k0} Delta(lambda)^{-1}``."""
    last = None
    for attempt in range(3):
        r = radius * 10.0 ** (-attempt)

        def g(z):
            return (z - lam0) ** k0 * np.linalg.inv(delta_matrix(L, z))

        c = taylor_on_ring(g, lam0, r, k0, n_points)
        coeffs = [c[k0 - j] for j in range(1, k0 + 1)]
        res = block_residual(L, lam0, coeffs)
        if res < tol:
            return coeffs
        last = res
    raise SpectralError(f"Laurent block-system residual {last:.3e} exceeds {tol}")


def block_matrix(L: LinearFunctionalSpec, lam0: complex, k0: int) -> np.ndarray:
    n = L.dim
    D = [delta_matrix(L, lam0, i) / factorial(i) for i in range(k0)]
    big = np.zeros((k0 * n, k0 * n), dtype=complex)
    for r in range(k0):
        for c in range(r, k0):
            big[r * n:(r + 1) * n, c * n:(c + 1) * n] = D[c - r]
    return big


def block_residual(L: LinearFunctionalSpec, lam0: complex, coeffs) -> float:
    """Relative residual of both block equations satisfied by the Laurent matrices."""
    k0 = len(coeffs)
    big = block_matrix(L, lam0, k0)
    col = np.vstack(coeffs)  # Delta_{-1} on top
    row = np.hstack(coeffs[::-1])  # Delta_{-k0} first
    # Delta(lam0) is singular, so scale by the first derivative as well
    scale = (np.linalg.norm(big) + np.linalg.norm(delta_matrix(L, lam0, 1))) * np.linalg.norm(col)
    if scale == 0:
        return 0.0
    return float(max(np.linalg.norm(big @ col), np.linalg.norm(row @ big)) / scale)


def analyse_root(L: LinearFunctionalSpec, lam0: complex, multiplicity: int | None = None) -> SpectralRoot:
    lam0 = complex(lam0)
    V, W, null_dim = null_vectors(L, lam0)
    k0 = pole_order(L, lam0)
    if multiplicity is None:
        multiplicity = det_multiplicity(L, lam0)
    if null_dim == 1 and k0 != multiplicity:
        raise IllConditionedPoleError(f"pole order {k0} disagrees with det multiplicity {multiplicity}")
    laurent = laurent_coeffs(L, lam0, k0)
    simple = k0 == 1 and null_dim == 1
    if simple:
        D1 = delta_matrix(L, lam0, 1)
        W = W / (W @ D1 @ V)
        laurent = [np.outer(V, W)]
    elif null_dim != 1:
        V = W = None
    return SpectralRoot(lam0, k0, laurent, V, W, abs(det_delta(L, lam0)), simple, multiplicity, null_dim,
                        {"in_omega": bool(lam0.real > -L.eta)})


# projectors ------------------------------------------------------------------------
def _g_terms(L: LinearFunctionalSpec, lam0: complex, state: BoundaryAugmentedState, order: int):
    phi = state.history
    if complex(lam0).real <= -phi.eta:
        raise SpectralError(f"root {lam0} lies outside Re lambda > -eta; its eigenfunction is not in BUC_eta")
    chis = exp_convolution(phi, lam0, order)
    terms = [state.alpha + phi.head + apply(L, chis[0])]
    terms += [apply(L, chis[i]) for i in range(1, order + 1)]
    return [np.asarray(t, dtype=complex) for t in terms]


def _as_history(func: ExpPoly, phi: HistoryFunction, lam0: complex) -> HistoryFunction:
    out = HistoryFunction.from_exppoly(func, phi.eta, phi.grid)
    if abs(complex(lam0).imag) == 0 and not np.iscomplexobj(phi.values):
        vals = out.values
        if np.max(np.abs(np.imag(vals)), initial=0) <= 1e-12 * (1 + np.max(np.abs(vals), initial=0)):
            out = out.replace(values=np.real(vals), tail=ExpPoly({r: c.real for r, c in out.tail.terms.items()}, out.dim))
    return out


def projector_simple(L: LinearFunctionalSpec, root: SpectralRoot, state: BoundaryAugmentedState) -> HistoryFunction:
    """Projection onto the eigenspace of a simple root: ``e^{lam0 theta} Delta_{-1} G``."""
    if not root.is_simple:
        raise SpectralError("projector_simple requires a simple root")
    G = _g_terms(L, root.lambda0, state, 0)[0]
    c = root.delta_minus_1 @ G
    return _as_history(ExpPoly.exponential(root.lambda0, c), state.history, root.lambda0)


def projector_general(L: LinearFunctionalSpec, root: SpectralRoot, state: BoundaryAugmentedState) -> HistoryFunction:
    """Projection onto the generalized eigenspace (pole order up to 4)."""
    k0 = root.pole_order
    if k0 > 4:
        raise SpectralError("pole orders above 4 are not supported")
    G = _g_terms(L, root.lambda0, state, k0 - 1)
    n = L.dim
    poly = np.zeros((k0, n), dtype=complex)  # coefficient of theta^k
    for j in range(k0):
        Dj = root.laurent[j]  # Delta_{-1-j}
        for k in range(j + 1):
            poly[k] += comb(j, k) / factorial(j) * (Dj @ G[j - k])
    return _as_history(ExpPoly({root.lambda0: poly}, n), state.history, root.lambda0)


def projector(L, root, state):
    return projector_simple(L, root, state) if root.is_simple else projector_general(L, root, state)


def normalization_defect(L: LinearFunctionalSpec, root: SpectralRoot, grid=None) -> float:
    """Relative defect of ``Delta_{-1} = Delta_{-1} [I + L(int e^{lam0 .})] Delta_{-1}``.

    The middle factor is built by quadrature from ``theta -> -theta e^{lam0 theta}``,
    independently of the closed-form ``Delta'``.
    """
    lam0 = root.lambda0
    n = L.dim
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        eig = HistoryFunction.exponential(lam0, e, L.eta, grid)
        chi = exp_convolution(eig, lam0)[0]
        cols.append(apply(L, chi))
    M = np.eye(n) + np.column_stack(cols)
    D = root.delta_minus_1
    return float(np.linalg.norm(D @ M @ D - D) / np.linalg.norm(D))


def contour_projector(L: LinearFunctionalSpec, lam0: complex, state: BoundaryAugmentedState,
                      radius: float = 0.1, n_points: int = 64) -> HistoryFunction:
    """Residue of the resolvent by the trapezoid rule on ``|lambda - lam0| = radius``."""
    phi = state.history
    acc_vals = None
    acc_tail = ExpPoly.zero(phi.dim)
    for k in range(n_points):
        w = radius * np.exp(2j * np.pi * k / n_points)
        psi = resolvent_AL(L, lam0 + w, state)
        vals = psi.values * (w / n_points)
        acc_vals = vals if acc_vals is None else acc_vals + vals
        acc_tail = acc_tail + psi.tail.scale(w / n_points)
    return HistoryFunction(phi.eta, phi.grid, acc_vals, acc_tail, phi.interp_order, phi.breaks)
