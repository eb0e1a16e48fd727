import math

import pytest

from kppspread.dispersion import DispersionRelation
from kppspread.kernels import make_kernel


def bisect(f, lo, hi, tol=1e-14, maxit=400):
    """Plain bisection; independent of the package root finders."""
    flo = f(lo)
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def golden(f, a, b, tol=1e-10):
    """Golden-section minimiser of a unimodal function on [a, b]."""
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def delayed_lambda(p, r1=-0.5, r2=1.5, tau=1.0):
    """lam solving lam = p^2 + r1 + r2 exp(-lam tau), by bisection."""
    f = lambda lam: -lam + p * p + r1 + r2 * math.exp(-lam * tau)
    return bisect(f, p * p + r1 - 1.0, p * p + r1 + r2 + 1.0)


@pytest.fixture
def point_mass():
    return make_kernel({"type": "point_mass", "tau": 1.0, "y": 0.0})


@pytest.fixture
def delayed_rel(point_mass):
    return DispersionRelation(-0.5, 1.5, point_mass)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
