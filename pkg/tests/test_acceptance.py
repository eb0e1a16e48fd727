"""Acceptance criteria, one test per criterion, each reporting a single PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, bisect, delayed_lambda, golden
from kppspread.dispersion import DispersionRelation
from kppspread.environment import Profile, RayProfile, ShiftedEnvironment, ray_limit
from kppspread.hj import hj_solve, rho_closed_form, viscosity_residual
from kppspread.kernels import make_kernel
from kppspread.simulate import (InitialData, ModelSpec, Nonlinearity, estimate_speed, simulate,
                                tail_decay_rate)
from kppspread.speeds import (speed_from_profile, speed_homogeneous, speed_nonlocal_pulling,
                              speed_single_shift, speed_single_shift_kpp, speed_two_shift_kpp)

R1, R2 = 0.25, 1.0
SHIFT_VALUE = 1.0350593358415423     # p + r1/p with p = 1.25 - sqrt(0.75)
REFERENCE_SHIFT_VALUE = 1.0350590
TWO_SHIFT_VALUE = 1.665504
SOLUTIONS = []                       # every RaySolution produced here, for the invariant check


class Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.checks = number, title, []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def finish(self):
        ok = all(c[1] for c in self.checks)
        parts = "; ".join(f"{n} {'ok' if o else 'FAILED'} ({d})" if d else f"{n} {'ok' if o else 'FAILED'}"
                          for n, o, d in self.checks)
        line = f"criterion {self.number} [{self.title}]: {'PASS' if ok else 'FAIL'} :: {parts}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def solve(*a, **kw):
    sol, dt = timed(hj_solve, *a, **kw)
    SOLUTIONS.append(sol)
    return sol, dt


def shift_env():
    return ShiftedEnvironment(0.0, ((2.5, Profile("tanh", R1, R2, 2.0)),))


def delayed_model():
    return ModelSpec(Nonlinearity("linear_death", d=0.5),
                     Nonlinearity("ricker", ShiftedEnvironment(1.5)),
                     make_kernel({"type": "point_mass", "tau": 1.0, "y": 0.0}))


def three_branch(c1):
    if c1 <= 2 * math.sqrt(R2):
        return 2 * math.sqrt(R2)
    if c1 >= 2 * math.sqrt(R1) + 2 * math.sqrt(R2 - R1):
        return 2 * math.sqrt(R1)
    p = c1 / 2 - math.sqrt(R2 - R1)
    return p + R1 / p


def ray_invariants_hold(sol):
    rho, h = sol.rho, sol.h
    slope = max(1.0, float(np.max(np.abs(np.diff(rho)))) / h)
    mono = bool(np.all(np.diff(rho) >= -h * slope * h))
    q = sol.rho_over_s()[1:]
    bump = bool(np.nanmax(q) <= max(q[0], q[-1]) + 10 * h)
    return mono and bump and bool(np.all(rho >= 0))


@pytest.fixture(scope="module")
def hj_homog():
    return solve(RayProfile.constant(1.0), h=0.005)


@pytest.fixture(scope="module")
def hj_shift():
    return solve(ray_limit(shift_env()), h=0.005)


def test_criterion_1_homogeneous(hj_homog):
    c = Criterion(1, "homogeneous Fisher-KPP")
    worst = 0.0
    for r0 in (0.25, 1.0, 2.0, 3.7):
        rel = DispersionRelation(r0)
        for mu in np.linspace(0.05, 3.0, 60):
            want = mu + r0 / mu if mu < math.sqrt(r0) else 2 * math.sqrt(r0)
            worst = max(worst, abs(speed_homogeneous(rel, mu).s_hat - want) / want)
        worst = max(worst, abs(speed_homogeneous(rel).s_hat - 2 * math.sqrt(r0)) / (2 * math.sqrt(r0)))
    c.check("analytic", worst <= 4 * np.finfo(float).eps, f"max rel err {worst:.1e}")
    res, rt = timed(simulate, ModelSpec.fisher_kpp(1.0), InitialData("inf"),
                    x_lo=-50, x_hi=450, dx=0.2, T=200.0)
    speed, _ = estimate_speed(res.trace)
    c.check("simulation", abs(speed - 2) <= 0.05 * 2 and rt <= 60,
            f"c = {speed:.4f}, {rt:.1f} s")
    sol, rt = hj_homog
    c.check("HJ", abs(sol.s_hat - 2) <= 0.02, f"s_hat = {sol.s_hat:.5f} at h = 0.005, {rt:.1f} s")
    c.finish()


def test_criterion_2_single_shift(hj_shift):
    c = Criterion(2, "single shift Fisher-KPP")
    rm, rp = DispersionRelation(R1), DispersionRelation(R2)
    c1s = np.linspace(0.01, 6.0, 200)
    err = max(max(abs(speed_single_shift_kpp(R1, R2, x).s_hat - three_branch(x)),
                  abs(speed_single_shift(rm, rp, x).s_hat - three_branch(x))) for x in c1s)
    c.check("formula", err <= 1e-9, f"max diff {err:.1e} at 200 points")
    eps, jump = 1e-10, 0.0
    for b in (2.0, 1 + 2 * math.sqrt(0.75)):
        for f in (lambda x: speed_single_shift_kpp(R1, R2, x).s_hat,
                  lambda x: speed_single_shift(rm, rp, x).s_hat):
            jump = max(jump, abs(f(b - eps) - f(b + eps)))
    c.check("continuity", jump <= 1e-8, f"max jump {jump:.1e}")
    val = speed_single_shift_kpp(R1, R2, 2.5).s_hat
    p = 1.25 - math.sqrt(0.75)
    c.check("value", abs(val - (p + R1 / p)) <= 1e-12 and abs(val - REFERENCE_SHIFT_VALUE) <= 1e-6,
            f"{val:.10f}, reference 1.0350590 differs by {abs(val - REFERENCE_SHIFT_VALUE):.1e}")
    res, rt = timed(simulate, ModelSpec.fisher_kpp(shift_env()), InitialData("inf"),
                    x_hi=350.0, T=200.0)
    speed, _ = estimate_speed(res.trace)
    c.check("simulation", abs(speed - val) <= 0.10 * val,
            f"c = {speed:.4f} ({abs(speed - val) / val:.1%}), {rt:.1f} s")
    sol, rt = hj_shift
    c.check("HJ", abs(sol.s_hat - val) <= 0.02, f"s_hat = {sol.s_hat:.5f}, {rt:.1f} s")
    c.finish()


def test_criterion_3_nonlocal_pulling():
    c = Criterion(3, "nonlocal pulling formula")
    grid = np.linspace(0.0, 5.0, 1001)
    diff = max(abs(speed_nonlocal_pulling(R1, R2, x) - speed_single_shift_kpp(R1, R2, x).s_hat)
               for x in grid)
    c.check("agreement", diff <= 1e-12, f"max diff {diff:.1e} on 1001 points")
    c.finish()


def test_criterion_4_exponential_data():
    c = Criterion(4, "exponentially decaying initial data")
    res, rt = timed(simulate, ModelSpec.fisher_kpp(1.0), InitialData("mu", mu=0.5),
                    x_hi=500.0, T=150.0)
    speed, _ = estimate_speed(res.trace)
    c.check("speed", abs(speed - 2.5) <= 0.05 * 2.5, f"c = {speed:.4f}, {rt:.1f} s")
    rate = tail_decay_rate(res)
    c.check("decay rate", abs(rate - 0.5) <= 0.10 * 0.5, f"{rate:.4f}")
    c.finish()


def test_criterion_5_delayed():
    c = Criterion(5, "delayed model")
    p_star = golden(lambda p: delayed_lambda(p) / p, 0.05, 5.0, tol=1e-11)
    lam = delayed_lambda(p_star)
    resid = abs(-lam + p_star ** 2 - 0.5 + 1.5 * math.exp(-lam))
    oracle = lam / p_star
    k = make_kernel({"type": "point_mass", "tau": 1.0, "y": 0.0})
    analytic = speed_homogeneous(DispersionRelation(-0.5, 1.5, k)).s_hat
    c.check("analytic", resid <= 1e-10 and abs(analytic - oracle) <= 1e-9,
            f"{analytic:.8f} vs oracle {oracle:.8f}, residual {resid:.0e}")
    model = delayed_model()
    prof = ray_limit(ShiftedEnvironment(-0.5), ShiftedEnvironment(1.5))
    assert speed_from_profile(prof, model.kernel).s_hat == pytest.approx(analytic, abs=1e-12)
    res, rt = timed(simulate, model, InitialData("inf"), x_hi=300.0, T=200.0)
    speed, _ = estimate_speed(res.trace)
    c.check("simulation", abs(speed - analytic) <= 0.10 * analytic,
            f"c = {speed:.4f} ({abs(speed - analytic) / analytic:.1%}), {rt:.1f} s")
    sol, rt = solve(prof, model.kernel, h=0.01)
    c.check("HJ", abs(sol.s_hat - analytic) <= 0.03, f"s_hat = {sol.s_hat:.5f}, {rt:.1f} s")
    c.finish()


def test_criterion_6_two_shifts():
    c = Criterion(6, "two shifts")
    r1, r2 = 0.25, 0.5
    val = speed_two_shift_kpp(r1, r2, 2.2, 1.5).s_hat
    mu = 1.1 - math.sqrt(0.5)
    c.check("value", abs(val - (mu + r2 / mu)) <= 1e-12 and abs(val - TWO_SHIFT_VALUE) <= 1e-6,
            f"{val:.7f}")
    c.check("c1 <= 2", speed_two_shift_kpp(r1, r2, 1.8, 1.0).s_hat == 2.0)
    eps, jump = 1e-10, 0.0
    for c1 in np.linspace(1.0, 6.0, 51):
        m = c1 / 2 - math.sqrt(1 - r2)
        bps = [2 * math.sqrt(r2), 2 * m, 2 * (math.sqrt(r1) + math.sqrt(r2 - r1))]
        if m > 0:
            bps.append(m + r2 / m)
        if m != math.sqrt(r1):
            bps.append((m * m + r2 - 2 * r1) / (m - math.sqrt(r1)))
        for b in bps:
            if 1e-6 < b < c1 - 1e-6:
                jump = max(jump, abs(speed_two_shift_kpp(r1, r2, c1, b - eps).s_hat
                                     - speed_two_shift_kpp(r1, r2, c1, b + eps).s_hat))
    for c2 in np.linspace(0.1, 1.9, 19):
        jump = max(jump, abs(speed_two_shift_kpp(r1, r2, 2 - eps, c2).s_hat
                             - speed_two_shift_kpp(r1, r2, 2 + eps, c2).s_hat))
    c1_star = 2 * (math.sqrt(r2) + math.sqrt(1 - r2))
    for c2 in np.linspace(0.1, c1_star - 0.1, 25):
        jump = max(jump, abs(speed_two_shift_kpp(r1, r2, c1_star - eps, c2).s_hat
                             - speed_two_shift_kpp(r1, r2, c1_star + eps, c2).s_hat))
    c.check("continuity", jump <= 1e-8, f"max jump {jump:.1e}")
    env = ShiftedEnvironment(r1, ((1.5, Profile("tanh", 0.0, r2 - r1, 2.0)),
                                  (2.2, Profile("tanh", 0.0, 1.0 - r2, 2.0))))
    res, rt = timed(simulate, ModelSpec.fisher_kpp(env), InitialData("inf"), x_hi=450.0, T=200.0)
    speed, _ = estimate_speed(res.trace)
    c.check("simulation", abs(speed - val) <= 0.10 * val,
            f"c = {speed:.4f} ({abs(speed - val) / val:.1%}), {rt:.1f} s")
    c.finish()


def test_criterion_7_properties():
    c = Criterion(7, "property suites")
    rng = np.random.default_rng(7)
    kernels = [make_kernel({"type": "point_mass", "tau": 1.0, "y": 0.0}),
               make_kernel({"type": "uniform", "tau0": 1.0, "Y": 0.5, "n_tau": 5, "n_y": 9}),
               make_kernel({"type": "gauss_exp", "tau0": 1.0, "rate": 1.0, "sigma": 0.5,
                            "Y": 3.0, "n_tau": 5, "n_y": 17})]
    bad = 0
    for i in range(100):
        k = kernels[i % 3]
        r2 = rng.uniform(0.1, 2.0) if i % 4 else 0.0
        r1 = rng.uniform(-0.9 * r2, 2.0) if r2 else rng.uniform(0.05, 2.0)
        rel = DispersionRelation(r1, r2, k if r2 else make_kernel(None))
        plus = DispersionRelation(r1 + rng.uniform(0.05, 1.0), r2, rel.kernel)
        p = rng.uniform(-10, 10, 100)
        lam = rel.lambda_array(p)
        resid = max(abs(rel.delta(l, q)) for l, q in zip(lam, p))
        mid = rel.lambda_array(0.5 * (p[:50] + p[50:]))
        ok = (resid <= 1e-12 * max(1.0, np.abs(lam).max())
              and np.all(mid <= 0.5 * (lam[:50] + lam[50:]) + 1e-10)
              and np.allclose(rel.lambda_array(-p), lam, rtol=1e-12, atol=1e-12)
              and np.all(lam < plus.lambda_array(p))
              and rel.c_star < plus.c_star)
        bad += not ok
    c.check("dispersion", bad == 0, f"{100 - bad}/100 relations")
    hs = (0.02, 0.01, 0.005)
    sols = [solve(RayProfile.constant(1.0), h=h)[0] for h in hs]
    l1 = [viscosity_residual(s, RayProfile.constant(1.0)).l1 for s in sols]
    rate = min(math.log(a / b) / math.log(2) for a, b in zip(l1, l1[1:]))
    c.check("residual rate", rate >= 0.8, f"L1 rate {rate:.2f}")
    prof = ray_limit(shift_env())
    a = solve(prof, h=0.01)[0]
    b = solve(prof, h=0.01, mu_cap=20.0)[0]
    c.check("mu cap", abs(a.s_hat - b.s_hat) <= 2 * a.h, f"diff {abs(a.s_hat - b.s_hat):.1e}")
    lo, hi = math.inf, -math.inf
    for mu in np.linspace(0.05, 3.0, 50):
        for c1 in np.linspace(0.05, 6.0, 50):
            s = speed_single_shift(DispersionRelation(R1), DispersionRelation(R2), c1, mu).s_hat
            lo = min(lo, s - 2 * math.sqrt(R1))
            if mu >= math.sqrt(R2):
                hi = max(hi, s - 2 * math.sqrt(R2))
    c.check("sandwich", lo >= -1e-12 and hi <= 1e-12, "50x50 lattice")
    inv = [ray_invariants_hold(s) for s in SOLUTIONS]
    c.check("ray invariants", all(inv), f"{sum(inv)}/{len(inv)} solutions")
    c.finish()


def test_criterion_8_oracle_matches(hj_homog, hj_shift):
    c = Criterion(8, "closed-form and three-route agreement")
    errs = []
    for h in (0.02, 0.01, 0.005):
        sol = solve(RayProfile.constant(1.0), h=h)[0] if h != 0.005 else hj_homog[0]
        ref = rho_closed_form(sol.s_grid, DispersionRelation(1.0))
        m = sol.s_grid <= 6
        errs.append(np.max(np.abs(sol.rho - ref.rho)[m]))
    c.check("homogeneous rho", errs[0] > errs[1] > errs[2], "L-inf " + ", ".join(f"{e:.1e}" for e in errs))
    sol = hj_shift[0]
    ref = rho_closed_form(sol.s_grid, DispersionRelation(R2), math.inf, DispersionRelation(R1), 2.5)
    err = np.max(np.abs(sol.rho - ref.rho)[sol.s_grid <= 6])
    c.check("shift rho", err <= 0.02, f"L-inf {err:.1e}")
    two = RayProfile.piecewise([1.5, 2.2], [0.25, 0.5, 1.0])
    hj2 = solve(two, h=0.01)[0]
    val = speed_from_profile(two).s_hat
    c.check("two-shift HJ", abs(hj2.s_hat - val) <= 0.02, f"{hj2.s_hat:.5f} vs {val:.5f}")
    inv = [ray_invariants_hold(s) for s in SOLUTIONS]
    c.check("ray invariants", all(inv), f"{sum(inv)}/{len(inv)} solutions")
    c.finish()
