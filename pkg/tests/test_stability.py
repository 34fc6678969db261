import numpy as np
import pytest

from infdelay import HistoryFunction, LinearFunctionalSpec, ScanRegion, assess_stability, continue_branch
from infdelay import decay_rate_empirical, detect_hopf, verify_hopf_by_simulation
from infdelay.functional import DiscreteTerm
from infdelay.models import get_family
from infdelay.spectral import newton_root
from infdelay.stability import hopf_scan, measure_oscillation, root_modulus_bound

from conftest import erlang_spec, kernel_spec


def const(x, eta):
    return HistoryFunction.constant(np.atleast_1d(np.asarray(x, dtype=float)), eta)


def test_zero_functional_is_neutral():
    v = assess_stability(LinearFunctionalSpec(1, 0.5))
    assert not v.stable
    assert abs(v.rightmost.lambda0) < 1e-14


def test_kernel_model_stable():
    v = assess_stability(kernel_spec(eta=0.5))
    assert v.stable and v.decay_estimate <= 1.0
    v = assess_stability(kernel_spec(eta=1.5))
    assert v.stable
    assert abs(v.rightmost.lambda0 - (-1 + 1j)) < 1e-10
    assert v.decay_estimate == pytest.approx(1.0, abs=1e-10)
    assert v.to_dict()["stable"] is True


def test_erlang_unstable_beyond_crossing():
    v = assess_stability(erlang_spec(a=3.0))
    assert not v.stable and v.rightmost.lambda0.real > 0
    assert v.decay_estimate is None


def test_modulus_bound_certifies_region():
    L = erlang_spec(a=1.5)
    R = root_modulus_bound(L)
    for r in assess_stability(L).roots:
        assert abs(r.lambda0) <= R


def test_decay_rates():
    L = LinearFunctionalSpec(1, 0.5, (DiscreteTerm([[-1.0]], 0.0),))
    assert decay_rate_empirical(L, const(1.0, 0.5), 20.0, 1e-2) == pytest.approx(-1.0, rel=0.01)
    L = kernel_spec(eta=1.5)
    assert decay_rate_empirical(L, const(1.0, 1.5), 60.0, 1e-2) == pytest.approx(-1.0, rel=0.05)
    L = erlang_spec(a=1.0)
    re = assess_stability(L).rightmost.lambda0.real
    assert decay_rate_empirical(L, const(1.0, 0.5), 60.0, 1e-2) == pytest.approx(re, rel=0.05)


def test_eta_norm_cannot_beat_weight():
    L = kernel_spec(eta=0.5)
    slope = decay_rate_empirical(L, const(1.0, 0.5), 40.0, 2e-2, norm="eta")
    assert slope >= -0.5 - 1e-3


def test_branch_identity_family():
    fam = get_family("scalar_shift")
    br = continue_branch(fam.at, (-0.4, 0.4), (-0.4, -0.4 + 0j), 0.1)
    for s in br:
        assert abs(s.lam - s.mu) < 1e-12
        assert abs(s.dlambda_dmu - 1) < 1e-6
    assert br[-1].mu == pytest.approx(0.4)


def test_branch_slope_matches_finite_difference():
    fam = get_family("erlang2")
    br = continue_branch(fam.at, (1.5, 2.5), (1.5, newton_root(fam.at(1.5), 0.9j)), 0.1)
    for s in br:
        assert s.residual < 1e-10
    for a, b in zip(br[:-1], br[1:]):
        fd = (b.lam - a.lam) / (b.mu - a.mu)
        mid = 0.5 * (a.dlambda_dmu + b.dlambda_dmu)
        assert abs(fd - mid) <= 0.05 * abs(mid)
    at2 = min(br, key=lambda s: abs(s.mu - 2.0))
    assert at2.dlambda_dmu.real > 0


def test_hopf_erlang():
    fam = get_family("erlang2")
    br, (rec, reason) = hopf_scan(fam.at, (1.5, 2.5))
    assert rec is not None, reason
    assert abs(rec.mu_star - 2.0) < 1e-8 and abs(rec.omega - 1.0) < 1e-8
    assert rec.transversality > 0 and rec.simple and rec.nonresonant
    assert rec.residual < 1e-9


def test_hopf_discrete():
    fam = get_family("discrete")
    seed = newton_root(fam.at(1.3), 1.3j)
    br = continue_branch(fam.at, (1.3, 1.8), (1.3, seed), 0.05)
    rec = detect_hopf(br, fam.at)
    assert abs(rec.mu_star - np.pi / 2) < 1e-8 and abs(rec.omega - np.pi / 2) < 1e-8
    assert rec.transversality > 0


def test_real_crossing_is_not_hopf():
    fam = get_family("scalar_shift")
    br = continue_branch(fam.at, (-0.4, 0.4), (-0.4, -0.4 + 0j), 0.1)
    rec, reason = detect_hopf(br, fam.at, return_reason=True)
    assert rec is None and "real root" in reason


def test_no_crossing():
    fam = get_family("scalar_shift")
    br = continue_branch(fam.at, (-0.4, -0.1), (-0.4, -0.4 + 0j), 0.1)
    assert detect_hopf(br, fam.at) is None


def test_measure_oscillation():
    t = np.linspace(0, 100, 20001)
    amp, period = measure_oscillation(t, 0.3 * np.sin(2 * np.pi * t / 7.0) + 1.0)
    assert amp == pytest.approx(0.3, rel=1e-3)
    assert period == pytest.approx(7.0, rel=1e-4)


@pytest.mark.slow
def test_hopf_simulation_discrete():
    fam = get_family("discrete")
    seed = newton_root(fam.at(1.3), 1.3j)
    rec = detect_hopf(continue_branch(fam.at, (1.3, 1.8), (1.3, seed), 0.05), fam.at)
    out = verify_hopf_by_simulation(fam.nonlinear_at, rec, [0.05 * np.pi / 2])
    (row,) = out.rows
    assert not row.flagged
    assert abs(row.period - 4.0) < 0.02 * 4.0
    assert out.criticality == "supercritical"


def test_hopf_simulation_at_criticality_is_flagged():
    fam = get_family("discrete")
    seed = newton_root(fam.at(1.3), 1.3j)
    rec = detect_hopf(continue_branch(fam.at, (1.3, 1.8), (1.3, seed), 0.05), fam.at)
    out = verify_hopf_by_simulation(fam.nonlinear_at, rec, [1e-12], T=60.0, perturbation=1e-3)
    assert all(r.flagged for r in out.rows)
