"""Reduced Hamilton-Jacobi obstacle problem along rays s = x/t.

The self-similar rate function rho(s) solves

    min{rho, H(s, rho - s rho', rho')} = 0,   rho(0) = 0,   rho(s)/s -> mu,

with H(s, q, p) = q + p**2 + R1(s) + R2(s) * mgf(p, q).  Writing
Htil(s, p) for the root lambda of the dispersion relation with rates
(R1(s), R2(s)), the non-obstacle part is rho - s rho' + Htil(s, rho') = 0.
The spreading speed is the free boundary sup{s : rho(s) = 0}.

Two routes are provided: closed-form profiles for homogeneous and
single-shift environments, and a monotone finite-difference solver for
arbitrary ray profiles.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .dispersion import DispersionRelation, relation_for
from .environment import RayProfile, check_hypotheses
from .kernels import DelayKernel, make_kernel
from .speeds import speed_homogeneous, speed_single_shift, bar_p, underline_p

log = logging.getLogger(__name__)

_ABSENT = make_kernel({"type": "none"})
SCHEMES = {"godunov": 0, "llf": 1}


class NonConvergenceError(RuntimeError):
    """Self-similarity defect stayed above tolerance."""


class GridWarning(UserWarning):
    """Free boundary is not resolved by the grid."""


@dataclass
class RaySolution:
    s_grid: np.ndarray
    rho: np.ndarray
    s_hat: float
    mu_cap: float
    h: float
    meta: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def s_max(self) -> float:
        return float(self.s_grid[-1])

    def rho_over_s(self) -> np.ndarray:
        out = np.full_like(self.rho, np.nan)
        pos = self.s_grid > 0
        out[pos] = self.rho[pos] / self.s_grid[pos]
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s", "rho", "rho_over_s"])
            for row in zip(self.s_grid, self.rho, self.rho_over_s()):
                wr.writerow([repr(float(v)) for v in row])

    def metadata(self) -> dict:
        return {"h": self.h, "s_max": self.s_max, "n": int(self.s_grid.size),
                "mu_cap": self.mu_cap, "s_hat": self.s_hat, "flags": list(self.flags),
                **self.meta}

    def write_meta(self, path) -> None:
        Path(path).write_text(json.dumps(_jsonable(self.metadata()), indent=2))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# closed forms -------------------------------------------------------------------

def _legendre_array(rel: DispersionRelation, s: np.ndarray) -> np.ndarray:
    if rel.kpp:
        return s * s / 4 - rel.r1
    return np.array([rel.legendre(float(si)) for si in s])


def rho_homogeneous(rel: DispersionRelation, mu: float, s) -> np.ndarray:
    """Rate function in a homogeneous environment for decay rate mu (inf allowed)."""
    s = np.asarray(s, dtype=float)
    mstar, cstar = rel.mu_star()
    if math.isfinite(mu) and mu <= mstar:
        return np.maximum(mu * s - rel.lambda_of(mu), 0.0)
    out = np.zeros_like(s)
    top = rel.lambda_prime(mu) if math.isfinite(mu) else math.inf
    lin = s >= top
    fan = (s >= cstar) & ~lin
    out[lin] = mu * s[lin] - rel.lambda_of(mu)
    if fan.any():
        out[fan] = np.maximum(_legendre_array(rel, s[fan]), 0.0)
    return out


def rho_single_shift(rel_minus: DispersionRelation, rel_plus: DispersionRelation,
                     c1: float, mu: float, s) -> tuple[np.ndarray, dict]:
    """Rate function for R = '-' rates on s < c1 and '+' rates on s > c1.

    Above c1 it is the homogeneous '+' profile; below c1 it is the homogeneous
    '-' profile whose decay rate is the matching slope (bar_p or underline_p).
    """
    s = np.asarray(s, dtype=float)
    mp, cp = rel_plus.mu_star()
    finite = math.isfinite(mu)
    if finite and mu <= mp:
        plus_only = c1 <= rel_plus.lambda_of(mu) / mu
    else:
        plus_only = c1 <= cp
    info = {"c1": c1, "slope_below": None, "slope_kind": None}
    upper = rho_homogeneous(rel_plus, mu, s)
    if plus_only:
        return upper, info
    if finite and c1 > rel_plus.lambda_prime(mu):
        p, kind = underline_p(rel_minus, rel_plus, c1, mu), "underline_p"
    else:
        p, kind = bar_p(rel_minus, rel_plus, c1), "bar_p"
    info.update(slope_below=p, slope_kind=kind)
    below = s < c1
    out = upper.copy()
    out[below] = rho_homogeneous(rel_minus, p, s[below])
    return out, info


def rho_closed_form(s_grid, rel_plus: DispersionRelation, mu: float = math.inf,
                    rel_minus: DispersionRelation | None = None, c1: float | None = None,
                    case: str | None = None) -> RaySolution:
    """Sample the closed-form rate function on ``s_grid``.

    Homogeneous when ``rel_minus`` is None, otherwise single shift at speed c1.
    ``case`` (a regime label) is checked against the speed dispatch.
    """
    s = np.asarray(s_grid, dtype=float)
    if rel_minus is None:
        res = speed_homogeneous(rel_plus, mu)
        rho = rho_homogeneous(rel_plus, mu, s)
        info = {}
    else:
        if c1 is None:
            raise ValueError("single-shift closed form needs c1")
        res = speed_single_shift(rel_minus, rel_plus, c1, mu)
        rho, info = rho_single_shift(rel_minus, rel_plus, c1, mu, s)
    if case is not None and case != res.regime:
        raise ValueError(f"requested case {case!r} but parameters fall in {res.regime!r}")
    h = float(s[1] - s[0]) if s.size > 1 else 0.0
    meta = {"source": "closed_form", "regime": res.regime, **info}
    return RaySolution(s, rho, res.s_hat, mu, h, meta)


# numerical solver ---------------------------------------------------------------

@numba.njit(cache=True, error_model="numpy")
def _lam(p, r1, r2, tau, y, w, x0):
    """Root lambda of -lambda + p^2 + r1 + r2 * sum w exp(p y - lambda tau) and its p-derivative."""
    base = p * p + r1
    if r2 == 0.0 or w.size == 0:
        return base, 2.0 * p
    x = x0 if np.isfinite(x0) else base
    mp = 0.0
    mq = 0.0
    # Delta is convex and decreasing in lambda, so Newton lands left of the root
    # after one step and then increases monotonically
    for _ in range(100):
        m = 0.0
        mp = 0.0
        mq = 0.0
        for j in range(w.size):
            e = w[j] * math.exp(p * y[j] - x * tau[j])
            m += e
            mp += e * y[j]
            mq += e * tau[j]
        f = base - x + r2 * m
        step = f / (1.0 + r2 * mq)
        x += step
        if abs(step) <= 1e-14 * (1.0 + abs(x)):
            break
    return x, (2.0 * p + r2 * mp) / (1.0 + r2 * mq)


@numba.njit(cache=True, error_model="numpy")
def _psi(s, r1, r2, tau, y, w):
    """p with lambda'(p) = s, by bisection (lambda' is increasing)."""
    lo, hi = -1.0, 1.0
    while _lam(lo, r1, r2, tau, y, w, np.nan)[1] > s:
        lo *= 2.0
    while _lam(hi, r1, r2, tau, y, w, np.nan)[1] < s:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _lam(mid, r1, r2, tau, y, w, np.nan)[1] < s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@numba.njit(cache=True, error_model="numpy")
def _precompute(s, r1, r2, tau, y, w):
    n = s.size
    psi = np.empty(n)
    leg = np.empty(n)
    for i in range(n):
        p = _psi(s[i], r1[i], r2[i], tau, y, w)
        psi[i] = p
        leg[i] = s[i] * p - _lam(p, r1[i], r2[i], tau, y, w, np.nan)[0]
    return psi, leg


@numba.njit(cache=True, error_model="numpy")
def _march(v, s, r1, r2, psi, leg, tau, y, w, h, ghost_slope, span, cfl, scheme,
           lam_m, lam_p, lam_c):
    """Advance v_tau + v - s v_s + Htil(s, v_s) = 0 with v >= 0 over a tau-interval."""
    n = v.size
    flux = np.zeros(n)
    t = 0.0
    steps = 0
    theta_max = 0.0
    while t < span:
        theta = 0.0
        for i in range(1, n):
            vp = v[i + 1] if i < n - 1 else v[i] + h * ghost_slope
            pm = (v[i] - v[i - 1]) / h
            pp = (vp - v[i]) / h
            # the KPP branch is inlined by hand; calling _lam costs ~20x here
            if r2[i] == 0.0:
                lm, dm = pm * pm + r1[i], 2.0 * pm
                lp, dp = pp * pp + r1[i], 2.0 * pp
            else:
                lm, dm = _lam(pm, r1[i], r2[i], tau, y, w, lam_m[i])
                lp, dp = _lam(pp, r1[i], r2[i], tau, y, w, lam_p[i])
                lam_m[i] = lm
                lam_p[i] = lp
            fm = v[i] - s[i] * pm + lm
            fp = v[i] - s[i] * pp + lp
            a = max(abs(dm - s[i]), abs(dp - s[i]))
            if a > theta:
                theta = a
            if scheme == 0:
                if pm <= pp:
                    if psi[i] <= pm:
                        flux[i] = fm
                    elif psi[i] >= pp:
                        flux[i] = fp
                    else:
                        flux[i] = v[i] - leg[i]
                else:
                    flux[i] = max(fm, fp)
            else:
                pc = 0.5 * (pm + pp)
                if r2[i] == 0.0:
                    lc = pc * pc + r1[i]
                else:
                    lc, _ = _lam(pc, r1[i], r2[i], tau, y, w, lam_c[i])
                    lam_c[i] = lc
                flux[i] = v[i] - s[i] * pc + lc - 0.5 * a * (pp - pm)
        dt = cfl * h / (h + theta)
        if t + dt > span:
            dt = span - t
        for i in range(1, n):
            nv = v[i] - dt * flux[i]
            v[i] = nv if nv > 0.0 else 0.0
        t += dt
        steps += 1
        if theta > theta_max:
            theta_max = theta
    return steps, theta_max


def _mu_star_plus(r1: np.ndarray, r2: np.ndarray, kernel: DelayKernel) -> float:
    pairs = np.unique(np.column_stack([r1, r2]), axis=0)
    if len(pairs) > 64:
        pairs = pairs[np.linspace(0, len(pairs) - 1, 64).astype(int)]
    best = 0.0
    for a, b in pairs:
        if a + b > 0:
            best = max(best, relation_for(a, b, kernel).mu_star()[0])
    return best


def default_zero_tol(h: float) -> float:
    return 10.0 * h * h


def hj_solve(profile: RayProfile, kernel: DelayKernel | None = None, mu: float = math.inf,
             h: float = 0.01, s_max: float = 8.0, mu_cap: float | None = None,
             scheme: str = "llf", cfl: float = 0.45, defect_tol: float = 1e-7,
             tau_max: float = 40.0, fail_tol: float = 1e-3, zero_tol: float | None = None,
             check: bool = True) -> RaySolution:
    """Solve the reduced obstacle problem by marching to a self-similar steady state.

    Writing w(t, x) = t v(ln t, x/t), the time-dependent obstacle problem
    min{w, w_t + Htil(x/t, w_x)} = 0 becomes v_tau + v - s v_s + Htil(s, v_s) = 0
    with v >= 0, which is marched from v = mu_cap * s at tau = 0 (t = 1) until
    the self-similarity defect max|v(tau) - v(tau - ln 2)| drops below
    ``defect_tol``.  The spatial discretisation is monotone: Godunov's flux
    (exact for convex Htil) or local Lax-Friedrichs.

    Parameters
    ----------
    profile, kernel
        Ray-limit rates and delay kernel.  Rates are sampled at the nodes
        s_i = i h using the upper envelope at breakpoints.
    mu
        Decay rate of the initial data; ``inf`` uses ``mu_cap``
        (default ``max(10, 5 mu_star_plus)``).
    h, s_max
        Grid spacing and right end of the computational interval.
    """
    kernel = kernel if kernel is not None else _ABSENT
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {sorted(SCHEMES)}")
    if not (0 < cfl <= 0.5):
        raise ValueError(f"CFL number {cfl} outside (0, 1/2]")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if check:
        rep = check_hypotheses(profile, kernel)
        if not rep.clauses["positivity"]:
            raise ValueError(f"profile fails positivity: {rep.notes.get('positivity')}")
    n = int(round(s_max / h)) + 1
    s = np.arange(n) * h
    r1, r2 = profile.values(s, "upper")
    if kernel.absent and np.any(r2 != 0):
        raise ValueError("R2 != 0 requires a delay kernel")
    tau_a = np.ascontiguousarray(kernel.tau, dtype=float)
    y_a = np.ascontiguousarray(kernel.y, dtype=float)
    w_a = np.ascontiguousarray(kernel.weight, dtype=float)

    if math.isfinite(mu):
        cap = float(mu)
    else:
        cap = float(mu_cap) if mu_cap is not None else max(10.0, 5.0 * _mu_star_plus(r1, r2, kernel))
    psi, leg = _precompute(s, r1, r2, tau_a, y_a, w_a)
    v = cap * s
    lam_m = np.full(n, np.nan)
    lam_p = np.full(n, np.nan)
    lam_c = np.full(n, np.nan)
    chunk = math.log(2.0)
    tau = 0.0
    steps = 0
    theta_max = 0.0
    history = []
    defect = math.inf
    while tau < tau_max - 1e-12:
        prev = v.copy()
        k, th = _march(v, s, r1, r2, psi, leg, tau_a, y_a, w_a, h, cap, chunk, cfl,
                       SCHEMES[scheme], lam_m, lam_p, lam_c)
        steps += k
        theta_max = max(theta_max, th)
        tau += chunk
        defect = float(np.max(np.abs(v - prev)))
        history.append(defect)
        if defect <= defect_tol:
            break
    flags = []
    if defect > defect_tol:
        if defect > fail_tol:
            raise NonConvergenceError(
                f"self-similarity defect {defect:.3g} > {fail_tol:.3g} after tau = {tau:.2f}")
        flags.append("defect_above_tol")
        log.warning("self-similarity defect %.3g above tolerance %.3g", defect, defect_tol)
    meta = {"source": "hj_solve", "scheme": scheme, "cfl": cfl, "tau_final": tau,
            "T": math.exp(tau), "steps": steps, "theta_max": theta_max,
            "defect": defect, "defect_tol": defect_tol, "defect_history": history,
            "mu": mu, "envelope": "upper"}
    sol = RaySolution(s, v, math.nan, cap, h, meta, flags)
    zt = default_zero_tol(h) if zero_tol is None else zero_tol
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol.s_hat = free_boundary(sol, zt)
    for c in caught:
        flags.append(str(c.message))
    sol.meta["zero_tol"] = zt
    return sol


def free_boundary(sol: RaySolution, zero_tol: float | None = None) -> float:
    """sup{s : rho(s) = 0}, located from the first node where rho exceeds ``zero_tol``.

    With i that node, the linear interpolant through (s_i, rho_i) and
    (s_{i+1}, rho_{i+1}) is continued down to zero and the crossing is clamped
    to [s_{i-1}, s_i].  This is exact when rho is zero up to a kink followed by
    a linear piece, and second-order accurate when the piece is smooth.

    Returns 0 if rho exceeds the tolerance already at the second node and
    ``s_max`` if it never does; both cases raise a :class:`GridWarning`.
    """
    s, rho = np.asarray(sol.s_grid), np.asarray(sol.rho)
    tol = default_zero_tol(sol.h) if zero_tol is None else zero_tol
    above = np.nonzero(rho > tol)[0]
    if above.size == 0:
        warnings.warn("rho vanishes on the whole grid; enlarge s_max", GridWarning, stacklevel=2)
        return float(s[-1])
    i = int(above[0])
    if i <= 1:
        warnings.warn("rho positive from the first cell; no zero region resolved",
                      GridWarning, stacklevel=2)
        return 0.0
    if i + 1 < s.size and rho[i + 1] > rho[i]:
        slope = (rho[i + 1] - rho[i]) / (s[i + 1] - s[i])
        est = s[i] - rho[i] / slope
    else:
        # fall back to the tolerance crossing on [s_{i-1}, s_i]
        r0, r1 = rho[i - 1], rho[i]
        est = s[i - 1] + (tol - r0) / (r1 - r0) * (s[i] - s[i - 1])
    return float(min(max(est, s[i - 1]), s[i]))


# residual -----------------------------------------------------------------------

@dataclass
class ResidualStats:
    max: float
    l1: float
    n_used: int
    kinks: np.ndarray

    def to_dict(self) -> dict:
        return {"max": self.max, "l1": self.l1, "n_used": self.n_used,
                "kinks": [float(k) for k in self.kinks]}


def kink_locations(s: np.ndarray, rho: np.ndarray, h: float, jump: float = 0.1) -> np.ndarray:
    """Nodes where the undivided second difference exceeds ``jump * h`` (a slope jump of ``jump``)."""
    d2 = np.abs(rho[2:] - 2 * rho[1:-1] + rho[:-2])
    return np.nonzero(d2 > jump * h)[0] + 1


def viscosity_residual(sol: RaySolution, profile: RayProfile, kernel: DelayKernel | None = None,
                       exclude: int = 3, jump: float = 0.1) -> ResidualStats:
    """Complementarity defect |min{rho, H(s, rho - s rho', rho')}| with centred differences.

    Kinks (see :func:`kink_locations`) and ``exclude`` cells around them are
    skipped, as are the two end nodes.  ``l1`` is h times the sum of defects.
    """
    kernel = kernel if kernel is not None else _ABSENT
    s, rho, h = np.asarray(sol.s_grid), np.asarray(sol.rho), sol.h
    n = s.size
    mask = np.zeros(n, dtype=bool)
    mask[exclude:n - exclude] = True
    kinks = kink_locations(s, rho, h, jump)
    for k in kinks:
        mask[max(0, k - exclude):k + exclude + 1] = False
    r1, r2 = profile.values(s, "upper")
    idx = np.nonzero(mask)[0]
    defect = np.zeros(idx.size)
    for j, i in enumerate(idx):
        p = (rho[i + 1] - rho[i - 1]) / (2 * h)
        q = rho[i] - s[i] * p
        m = kernel.mgf(p, q) if r2[i] != 0 else 0.0
        H = q + p * p + r1[i] + r2[i] * m
        defect[j] = abs(min(rho[i], H))
    mx = float(defect.max()) if defect.size else 0.0
    return ResidualStats(mx, float(h * defect.sum()), int(idx.size), s[kinks])
