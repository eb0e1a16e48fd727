import csv
import math
import warnings

import numpy as np
import pytest

from kppspread.dispersion import DispersionRelation
from kppspread.environment import RayProfile
from kppspread.hj import (GridWarning, NonConvergenceError, RaySolution, free_boundary,
                          hj_solve, kink_locations, rho_closed_form, viscosity_residual)

R1, R2 = 0.25, 1.0
SHIFT_VALUE = 1.0350593358415423
HOMOG = RayProfile.constant(1.0)
SHIFT = RayProfile.single_shift(2.5, (R1, 0.0), (R2, 0.0))


def assert_ray_invariants(sol):
    """rho non-decreasing up to one cell; rho/s without interior bumps above its end values."""
    rho, h = sol.rho, sol.h
    slope = max(1.0, float(np.max(np.abs(np.diff(rho)))) / h)
    assert np.all(np.diff(rho) >= -h * slope * h)
    q = sol.rho_over_s()[1:]
    ends = max(q[0], q[-1])
    assert np.nanmax(q) <= ends + 10 * h
    # obstacle: rho >= 0
    assert np.all(rho >= 0)


@pytest.fixture(scope="module")
def homog_fine():
    return hj_solve(HOMOG, h=0.005)


@pytest.fixture(scope="module")
def shift_fine():
    return hj_solve(SHIFT, h=0.005)


@pytest.fixture(scope="module")
def refinement():
    return {h: hj_solve(HOMOG, h=h) for h in (0.02, 0.01, 0.005)}


# closed forms -------------------------------------------------------------------

def test_closed_form_homogeneous_tail():
    s = np.array([0.0, 2.5, 4.5])
    sol = rho_closed_form(s, DispersionRelation(1.0), 0.5)
    assert sol.rho.tolist() == [0.0, 0.0, 1.0]
    assert sol.s_hat == 2.5


def test_closed_form_homogeneous_compact():
    sol = rho_closed_form(np.array([0.0, 2.0, 4.0]), DispersionRelation(1.0))
    assert sol.rho.tolist() == [0.0, 0.0, 3.0]
    assert sol.s_hat == 2.0


def test_closed_form_single_shift_free_boundary():
    s = np.linspace(0, 8, 8001)
    sol = rho_closed_form(s, DispersionRelation(R2), math.inf, DispersionRelation(R1), 2.5)
    assert sol.s_hat == pytest.approx(SHIFT_VALUE, abs=1e-13)
    assert sol.meta["slope_below"] == pytest.approx(1.25 - math.sqrt(0.75), abs=1e-13)
    zero = s[sol.rho == 0]
    assert zero.max() == pytest.approx(SHIFT_VALUE, abs=1e-3)
    assert_ray_invariants(sol)


def test_closed_form_case_mismatch():
    with pytest.raises(ValueError):
        rho_closed_form(np.linspace(0, 4, 5), DispersionRelation(1.0), 0.5,
                        case="homogeneous-compact")


@pytest.mark.parametrize("mu,profile,rels", [
    (math.inf, HOMOG, (DispersionRelation(1.0), None, None)),
    (0.5, HOMOG, (DispersionRelation(1.0), None, None)),
    (math.inf, SHIFT, (DispersionRelation(R2), DispersionRelation(R1), 2.5)),
    (0.4, SHIFT, (DispersionRelation(R2), DispersionRelation(R1), 2.5)),
    (0.8, RayProfile.single_shift(3.0, (R1, 0.0), (R2, 0.0)),
     (DispersionRelation(R2), DispersionRelation(R1), 3.0)),
])
def test_closed_form_residual_vanishes(mu, profile, rels):
    s = np.linspace(0, 8, 1601)
    sol = rho_closed_form(s, rels[0], mu, rels[1], rels[2])
    res = viscosity_residual(sol, profile)
    assert res.max <= 1e-10
    assert res.n_used > 1000
    assert_ray_invariants(sol)


def test_corrupted_solution_flagged():
    s = np.linspace(0, 8, 1601)
    sol = rho_closed_form(s, DispersionRelation(1.0))
    sol.rho = sol.rho + 0.5 * np.exp(-((s - 5.0) / 0.3) ** 2)
    assert viscosity_residual(sol, HOMOG).max > 0.1


# numerical solver ---------------------------------------------------------------

def test_homogeneous_matches_closed_form(homog_fine):
    s = homog_fine.s_grid
    exact = np.maximum(s * s / 4 - 1, 0.0)
    m = s <= 6
    assert np.max(np.abs(homog_fine.rho[m] - exact[m])) <= 0.02
    assert abs(homog_fine.s_hat - 2.0) <= 0.01
    assert not homog_fine.flags
    assert_ray_invariants(homog_fine)


def test_homogeneous_tail_free_boundary():
    sol = hj_solve(HOMOG, mu=0.5, h=0.005)
    assert abs(sol.s_hat - 2.5) <= 2 * sol.h
    assert sol.mu_cap == 0.5
    assert_ray_invariants(sol)


def test_single_shift_free_boundary(shift_fine):
    assert abs(shift_fine.s_hat - SHIFT_VALUE) <= 0.02
    assert_ray_invariants(shift_fine)


def test_single_shift_finite_mu():
    sol = hj_solve(RayProfile.single_shift(3.0, (R1, 0.0), (R2, 0.0)), mu=0.4, h=0.01)
    assert abs(sol.s_hat - 2.6) <= 0.02
    assert_ray_invariants(sol)


def test_converges_to_closed_form(refinement):
    errs = []
    for h, sol in refinement.items():
        exact = np.maximum(sol.s_grid ** 2 / 4 - 1, 0.0)
        m = sol.s_grid <= 6
        errs.append(np.max(np.abs(sol.rho[m] - exact[m])))
        assert_ray_invariants(sol)
    assert errs[0] > errs[1] > errs[2]


def test_residual_refinement_rate(refinement):
    hs = sorted(refinement, reverse=True)
    l1 = [viscosity_residual(refinement[h], HOMOG).l1 for h in hs]
    rates = [math.log(a / b) / math.log(h0 / h1) for a, b, h0, h1 in zip(l1, l1[1:], hs, hs[1:])]
    assert min(rates) >= 0.8
    mx = [viscosity_residual(refinement[h], HOMOG).max for h in hs]
    assert mx[0] > mx[-1]


def test_mu_cap_insensitive():
    a = hj_solve(SHIFT, h=0.01)
    b = hj_solve(SHIFT, h=0.01, mu_cap=20.0)
    assert abs(a.s_hat - b.s_hat) <= 2 * a.h
    assert a.mu_cap == 10.0


def test_godunov_scheme_is_exact_on_kpp():
    sol = hj_solve(SHIFT, h=0.01, scheme="godunov")
    ref = rho_closed_form(sol.s_grid, DispersionRelation(R2), math.inf, DispersionRelation(R1), 2.5)
    assert np.max(np.abs(sol.rho - ref.rho)[sol.s_grid <= 6]) < 1e-5
    assert abs(sol.s_hat - SHIFT_VALUE) < 1e-4


def test_bad_arguments():
    with pytest.raises(ValueError):
        hj_solve(HOMOG, scheme="upwind")
    with pytest.raises(ValueError):
        hj_solve(HOMOG, cfl=0.9)
    with pytest.raises(ValueError):
        hj_solve(RayProfile.constant(-1.0))
    with pytest.raises(NonConvergenceError):
        hj_solve(HOMOG, h=0.02, tau_max=1.0)


def test_write_csv(tmp_path, homog_fine):
    path = tmp_path / "rho.csv"
    homog_fine.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["s", "rho", "rho_over_s"]
    assert len(rows) == homog_fine.s_grid.size + 1
    assert float(rows[401][0]) == pytest.approx(2.0)


# free boundary ----------------------------------------------------------------

@pytest.mark.parametrize("h", [0.1, 0.03, 0.007])
def test_free_boundary_linear(h):
    s = np.arange(0, 6 + h / 2, h)
    sol = RaySolution(s, np.maximum(s - 2.0, 0.0), math.nan, 1.0, h)
    assert abs(free_boundary(sol) - 2.0) <= h


def test_free_boundary_degenerate():
    s = np.linspace(0, 4, 401)
    sol = RaySolution(s, np.zeros_like(s), math.nan, 1.0, 0.01)
    with pytest.warns(GridWarning):
        assert free_boundary(sol) == 4.0
    sol = RaySolution(s, s.copy(), math.nan, 1.0, 0.01)
    with pytest.warns(GridWarning):
        assert free_boundary(sol) == 0.0


def test_kinks_located():
    s = np.linspace(0, 4, 401)
    k = kink_locations(s, np.maximum(s - 2.0, 0.0), 0.01)
    assert s[k].tolist() == pytest.approx([2.0])


@pytest.mark.parametrize("c1,c2", [(4.0, 1.6), (2.9, 1.9)])
def test_two_shift_table_assignment(c1, c2):
    from kppspread.speeds import speed_two_shift_kpp
    sol = hj_solve(RayProfile.piecewise([c2, c1], [0.25, 0.5, 1.0]), h=0.01, scheme="godunov")
    table = speed_two_shift_kpp(0.25, 0.5, c1, c2).s_hat
    swapped = speed_two_shift_kpp(0.25, 0.5, c1, c2, swapped_branches=True).s_hat
    assert abs(sol.s_hat - table) <= 2e-3
    assert abs(sol.s_hat - swapped) > 1e-2
