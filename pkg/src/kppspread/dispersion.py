"""Implicit dispersion relation of the linearised delayed model.

For growth rates (r1, r2) and kernel Gamma,

    Delta(lam, p) = -lam + p**2 + r1 + r2 * mgf(p, -lam),

is strictly decreasing in ``lam`` (slope <= -1), so ``lam(p)`` is its unique
root.  ``lam`` is strictly convex; ``lam(p)/p`` is unimodal on p > 0 with
minimiser ``mu_star`` and minimum ``c_star``, the linear spreading speed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .environment import RayProfile, eval_R
from .kernels import DelayKernel, make_kernel
from .roots import BracketError, expand_bracket, safe_newton

log = logging.getLogger(__name__)

_ABSENT = make_kernel({"type": "none"})


@dataclass(eq=False)
class DispersionRelation:
    r1: float
    r2: float = 0.0
    kernel: DelayKernel = field(default_factory=lambda: _ABSENT)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.r1 = float(self.r1)
        self.r2 = float(self.r2)
        if self.kernel.absent and self.r2 != 0.0:
            raise ValueError("r2 != 0 requires a delay kernel")
        if self.r2 < 0:
            raise ValueError("r2 must be non-negative")
        self._mu_star = None

    @property
    def kpp(self) -> bool:
        return self.r2 == 0.0

    def delta(self, lam: float, p: float) -> float:
        if self.kpp:
            return -lam + p * p + self.r1
        return -lam + p * p + self.r1 + self.r2 * self.kernel.mgf(p, -lam)

    def delta_partials(self, lam: float, p: float) -> tuple[float, float, float]:
        """(Delta, d/dlam Delta, d/dp Delta)."""
        if self.kpp:
            return -lam + p * p + self.r1, -1.0, 2.0 * p
        m, mp, mq = self.kernel.mgf_derivs(p, -lam)
        return (-lam + p * p + self.r1 + self.r2 * m,
                -1.0 - self.r2 * mq,
                2.0 * p + self.r2 * mp)

    def lambda_of(self, p: float) -> float:
        p = float(p)
        key = round(p, 14)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.kpp:
            lam = p * p + self.r1
        else:
            lam = self._solve(p)
        if lam <= 0:
            log.warning("lambda(%g) = %g <= 0 for r1=%g, r2=%g", p, lam, self.r1, self.r2)
        self.cache[key] = lam
        return lam

    def _solve(self, p: float) -> float:
        base = p * p + self.r1
        # Delta(base - 1) >= 1 > 0 because r2 * mgf >= 0
        lo = base - 1.0
        hi = max(0.0, base + self.r2 * self.kernel.mgf(p, 0.0)) + 1.0
        f = lambda lam: self.delta(lam, p)
        lo, hi, flo, fhi = expand_bracket(f, lo, hi)

        def fdf(lam):
            d, dl, _ = self.delta_partials(lam, p)
            return d, dl
        return safe_newton(fdf, lo, hi, ftol=1e-14 * max(1.0, abs(base)), flo=flo, fhi=fhi)

    def lambda_prime(self, p: float) -> float:
        lam = self.lambda_of(p)
        _, dl, dp = self.delta_partials(lam, p)
        return -dp / dl

    def lambda_array(self, p) -> np.ndarray:
        return np.array([self.lambda_of(pi) for pi in np.atleast_1d(p)])

    def lambda_prime_array(self, p) -> np.ndarray:
        return np.array([self.lambda_prime(pi) for pi in np.atleast_1d(p)])

    def mu_star(self) -> tuple[float, float]:
        """Minimiser of lam(p)/p over p > 0 and the minimum c_star."""
        if self._mu_star is not None:
            return self._mu_star
        lam0 = self.lambda_of(0.0)
        if lam0 <= 0:
            raise ValueError(f"lambda(0) = {lam0} <= 0: relation has no positive linear speed")
        h = lambda p: self.lambda_of(p) / p
        a = 1e-3 * max(1.0, math.sqrt(lam0))
        b = 2 * a
        while h(b) >= h(a) and a > 1e-12:
            a, b = a / 2, a
        c = 2 * b
        n = 0
        while h(c) < h(b):
            b, c = c, 2 * c
            n += 1
            if n > 200:
                raise BracketError("lambda(p)/p is not eventually increasing")
        res = optimize.minimize_scalar(h, bracket=(a, b, c), method="golden", tol=1e-10)
        lo, hi = max(a, res.x - 2 * (c - a) * 1e-6), min(c, res.x + 2 * (c - a) * 1e-6)
        # polish on the stationarity condition lam'(p) p - lam(p) = 0 (increasing in p)
        g = lambda p: self.lambda_prime(p) * p - self.lambda_of(p)
        if g(lo) > 0 or g(hi) < 0:
            lo, hi = a, c
        mu = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        self._mu_star = (mu, self.lambda_of(mu) / mu)
        return self._mu_star

    @property
    def c_star(self) -> float:
        return self.mu_star()[1]

    def psi(self, s: float) -> float:
        """Inverse of lam': the unique p with lam'(p) = s."""
        if self.kpp:
            return 0.5 * s
        g = lambda p: self.lambda_prime(p) - s
        lo, hi, flo, fhi = expand_bracket(g, -1.0, 1.0)
        return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def legendre(self, s: float) -> float:
        """sup_p (s p - lam(p)) = s psi(s) - lam(psi(s))."""
        p = self.psi(s)
        return s * p - self.lambda_of(p)

    def tabulate(self, p) -> np.ndarray:
        """Columns (p, lam, lam') for export."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return np.column_stack([p, self.lambda_array(p), self.lambda_prime_array(p)])


_REL_CACHE: dict = {}


def relation_for(r1: float, r2: float, kernel: DelayKernel) -> DispersionRelation:
    """Shared relation per (r1, r2, kernel) so memoised solves are reused."""
    key = (float(r1), float(r2) if not kernel.absent else 0.0, id(kernel))
    rel = _REL_CACHE.get(key)
    if rel is None or rel.kernel is not kernel:
        rel = DispersionRelation(r1, key[1], kernel)
        _REL_CACHE[key] = rel
    return rel


def htilde(profile: RayProfile, kernel: DelayKernel, s: float, p: float,
           envelope: str = "upper") -> float:
    """Explicit Hamiltonian: the value -q solving q + p^2 + R1(s) + R2(s) mgf(p, q) = 0."""
    r1, r2 = eval_R(profile, s, envelope)
    if r2 == 0.0:
        return p * p + r1
    return relation_for(r1, r2, kernel).lambda_of(p)


def htilde_p(profile: RayProfile, kernel: DelayKernel, s: float, p: float) -> float:
    r1, r2 = eval_R(profile, s)
    if r2 == 0.0:
        return 2.0 * p
    return relation_for(r1, r2, kernel).lambda_prime(p)
