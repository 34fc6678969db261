import numpy as np
import pytest

from infdelay import HistoryFunction, LinearFunctionalSpec
from infdelay.functional import DiscreteTerm, KernelTerm
from infdelay.verify import random_history


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def kernel_spec(a=1.0, delta=2.0, eta=0.5):
    """Delta(lambda) = lambda + a delta / (lambda + delta)."""
    return LinearFunctionalSpec(1, eta, (), (KernelTerm([[-a * delta]], delta, 0),))


def erlang_spec(a=2.0, delta=1.0, eta=0.5):
    """Delta(lambda) = lambda + a delta^2 / (lambda + delta)^2."""
    return LinearFunctionalSpec(1, eta, (), (KernelTerm([[-a * delta**2]], delta, 1),))


def discrete_spec(a=1.0, tau=1.0, eta=0.3):
    """Delta(lambda) = lambda + a e^{-lambda tau}."""
    return LinearFunctionalSpec(1, eta, (DiscreteTerm([[-a]], tau),))


def jordan_spec(eta=0.5):
    return LinearFunctionalSpec(2, eta, (DiscreteTerm([[0.0, 1.0], [0.0, 0.0]], 0.0),))


def random_spec(rng, dim=None, eta=None):
    """Mixed discrete and kernel functional with modest coefficients."""
    dim = dim or int(rng.integers(1, 3))
    eta = eta if eta is not None else float(rng.uniform(0.2, 1.0))
    disc = [DiscreteTerm(rng.normal(scale=0.5, size=(dim, dim)), float(rng.uniform(0, 2)))
            for _ in range(int(rng.integers(0, 3)))]
    kern = [KernelTerm(rng.normal(scale=0.5, size=(dim, dim)), eta + float(rng.uniform(0.2, 2.0)),
                       int(rng.integers(0, 3)))
            for _ in range(int(rng.integers(0, 3)))]
    return LinearFunctionalSpec(dim, eta, tuple(disc), tuple(kern))


__all__ = ["HistoryFunction", "random_history", "kernel_spec", "erlang_spec", "discrete_spec", "jordan_spec",
           "random_spec"]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
