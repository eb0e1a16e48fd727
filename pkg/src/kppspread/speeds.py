"""Explicit spreading speeds for homogeneous, single-shift and two-shift environments.

``mu`` is the exponential decay rate of the initial data; ``math.inf`` stands
for compactly supported data.  Every function returns a :class:`SpeedResult`
carrying the regime label of the branch that fired, so sweeps can be checked
against the parameter-region picture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import optimize

from .dispersion import DispersionRelation

DISPATCH_RTOL = 1e-12
_XTOL = 1e-15


@dataclass
class SpeedResult:
    s_hat: float
    regime: str
    aux: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"s_hat": self.s_hat, "regime": self.regime, **self.aux}


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not mu > 0:
        raise ValueError(f"mu must be positive (got {mu})")
    return mu


def _le(a: float, b: float) -> bool:
    """a <= b, with ties within DISPATCH_RTOL counted as equal."""
    return a <= b + DISPATCH_RTOL * max(1.0, abs(a), abs(b))


def speed_homogeneous(rel: DispersionRelation, mu: float = math.inf) -> SpeedResult:
    mu = _check_mu(mu)
    if rel.r1 + rel.r2 <= 0:
        raise ValueError("r1 + r2 must be positive")
    mstar, cstar = rel.mu_star()
    aux = {"mu_star": mstar, "c_star": cstar}
    if math.isinf(mu):
        return SpeedResult(cstar, "homogeneous-compact", aux)
    if _le(mstar, mu):
        return SpeedResult(cstar, "homogeneous-minimal", aux)
    return SpeedResult(rel.lambda_of(mu) / mu, "homogeneous-tail", aux)


def _check_pair(rel_minus: DispersionRelation, rel_plus: DispersionRelation) -> None:
    if rel_minus.kernel is not rel_plus.kernel and not (rel_minus.kernel.absent and rel_plus.kernel.absent):
        raise ValueError("both regimes must share one kernel")
    sm = rel_minus.r1 + rel_minus.r2
    sp = rel_plus.r1 + rel_plus.r2
    if not (sp > sm > 0):
        raise ValueError(f"need R1+ + R2+ > R1- + R2- > 0 (got {sp} and {sm})")
    if rel_minus.r1 > rel_plus.r1 or rel_minus.r2 > rel_plus.r2:
        raise ValueError("need R_i,- <= R_i,+ for i = 1, 2")


def underline_p(rel_minus: DispersionRelation, rel_plus: DispersionRelation,
                c1: float, mu: float) -> float:
    """Smallest root of c1 p - lam_-(p) = c1 mu - lam_+(mu)."""
    rhs = c1 * mu - rel_plus.lambda_of(mu)
    f = lambda p: c1 * p - rel_minus.lambda_of(p) - rhs
    hi = min(mu, rel_minus.psi(c1))
    if not (f(0.0) < 0 < f(hi)):
        raise ValueError(f"no sign change for underline_p at c1={c1}, mu={mu}")
    return optimize.brentq(f, 0.0, hi, xtol=_XTOL)


def bar_p(rel_minus: DispersionRelation, rel_plus: DispersionRelation, c1: float) -> float:
    """Smallest root of c1 p - lam_-(p) = sup_q (c1 q - lam_+(q))."""
    rhs = rel_plus.legendre(c1)
    f = lambda p: c1 * p - rel_minus.lambda_of(p) - rhs
    hi = min(rel_plus.psi(c1), rel_minus.psi(c1))
    if not (f(0.0) < 0 < f(hi)):
        raise ValueError(f"no sign change for bar_p at c1={c1}")
    return optimize.brentq(f, 0.0, hi, xtol=_XTOL)


def bar_c1(rel_minus: DispersionRelation, rel_plus: DispersionRelation) -> float:
    """The shift speed at which bar_p equals mu_star of the '-' regime."""
    m_minus, c_minus = rel_minus.mu_star()
    c_plus = rel_plus.c_star
    g = lambda c: rel_plus.legendre(c) - m_minus * (c - c_minus)
    hi = 2 * c_plus + 1.0
    while g(hi) <= 0:
        hi *= 2
    return optimize.brentq(g, c_plus, hi, xtol=_XTOL)


def speed_single_shift(rel_minus: DispersionRelation, rel_plus: DispersionRelation,
                       c1: float, mu: float = math.inf) -> SpeedResult:
    """Speed for R = '-' regime below the shift speed c1 and '+' regime above it."""
    mu = _check_mu(mu)
    _check_pair(rel_minus, rel_plus)
    m_minus, c_minus = rel_minus.mu_star()
    m_plus, c_plus = rel_plus.mu_star()
    aux = {"mu_star_minus": m_minus, "mu_star_plus": m_plus,
           "c_star_minus": c_minus, "c_star_plus": c_plus,
           "underline_p": None, "bar_p": None}

    def res(s, regime):
        return SpeedResult(float(s), regime, aux)

    if math.isinf(mu):
        if _le(c1, c_plus):
            return res(c_plus, "plus")
        cbar = bar_c1(rel_minus, rel_plus)
        aux["bar_c1"] = cbar
        if c1 < cbar:
            pb = bar_p(rel_minus, rel_plus, c1)
            aux["bar_p"] = pb
            return res(rel_minus.lambda_of(pb) / pb, "pulled-bar")
        return res(c_minus, "minus")

    if _le(mu, m_plus):
        speed_plus = rel_plus.lambda_of(mu) / mu
        if _le(c1, speed_plus):
            return res(speed_plus, "plus-tail")
        pu = underline_p(rel_minus, rel_plus, c1, mu)
        aux["underline_p"] = pu
        if pu < m_minus:
            return res(rel_minus.lambda_of(pu) / pu, "pulled-underline")
        return res(c_minus, "minus")

    if _le(c1, c_plus):
        return res(c_plus, "plus")
    if _le(c1, rel_plus.lambda_prime(mu)):
        pb = bar_p(rel_minus, rel_plus, c1)
        aux["bar_p"] = pb
        if pb < m_minus:
            return res(rel_minus.lambda_of(pb) / pb, "pulled-bar")
        return res(c_minus, "minus")
    pu = underline_p(rel_minus, rel_plus, c1, mu)
    aux["underline_p"] = pu
    if pu < m_minus:
        return res(rel_minus.lambda_of(pu) / pu, "pulled-underline")
    return res(c_minus, "minus")


# Fisher-KPP closed forms --------------------------------------------------------

def _kpp_check(r1: float, r2: float) -> None:
    if not (r2 > r1 > 0):
        raise ValueError(f"need r2 > r1 > 0 (got r1={r1}, r2={r2})")


def _pulled(c1: float, mu: float, r1: float, r2: float) -> float:
    d = c1 - math.sqrt((c1 - 2 * mu) ** 2 + 4 * (r2 - r1))
    return d / 2 + 2 * r1 / d


def _bar_branch(c1: float, r1: float, r2: float) -> float:
    d = c1 / 2 - math.sqrt(r2 - r1)
    return d + r1 / d


def speed_single_shift_kpp(r1: float, r2: float, c1: float, mu: float = math.inf) -> SpeedResult:
    """Closed-form single-shift Fisher-KPP speed: r = r1 behind the shift, r2 ahead."""
    _kpp_check(r1, r2)
    mu = _check_mu(mu)
    q1, q2, gap = math.sqrt(r1), math.sqrt(r2), math.sqrt(r2 - r1)
    aux = {"mu_star_minus": q1, "mu_star_plus": q2,
           "c_star_minus": 2 * q1, "c_star_plus": 2 * q2}

    def res(s, regime):
        return SpeedResult(float(s), regime, aux)

    if mu <= q1:
        if c1 <= mu + r2 / mu:
            return res(mu + r2 / mu, "plus-tail")
        return res(_pulled(c1, mu, r1, r2), "pulled-underline")
    if mu < q2:
        lock = (mu * mu + r2 - 2 * r1) / (mu - q1)
        if c1 <= mu + r2 / mu:
            return res(mu + r2 / mu, "plus-tail")
        if c1 < lock:
            return res(_pulled(c1, mu, r1, r2), "pulled-underline")
        return res(2 * q1, "minus")
    if mu < q1 + gap:
        lock = (mu * mu + r2 - 2 * r1) / (mu - q1)
        if c1 <= 2 * q2:
            return res(2 * q2, "plus")
        if c1 <= 2 * mu:
            return res(_bar_branch(c1, r1, r2), "pulled-bar")
        if c1 < lock:
            return res(_pulled(c1, mu, r1, r2), "pulled-underline")
        return res(2 * q1, "minus")
    if c1 <= 2 * q2:
        return res(2 * q2, "plus")
    if c1 < 2 * q1 + 2 * gap:
        return res(_bar_branch(c1, r1, r2), "pulled-bar")
    return res(2 * q1, "minus")


def speed_nonlocal_pulling(r1: float, r2: float, c1: float) -> float:
    """Fisher-KPP speed for compactly supported data behind a single shift at speed c1."""
    _kpp_check(r1, r2)
    if c1 <= 2 * math.sqrt(r2):
        return 2 * math.sqrt(r2)
    d = c1 / 2 - math.sqrt(r2 - r1)
    if c1 < 2 * (math.sqrt(r2 - r1) + math.sqrt(r1)):
        return d + r1 / d
    return 2 * math.sqrt(r1)


def speed_two_shift_kpp(r1: float, r2: float, c1: float, c2: float,
                        swapped_branches: bool = False) -> SpeedResult:
    """Fisher-KPP speed with growth rate 1 ahead of c1 t, r2 between c2 t and c1 t, r1 behind c2 t.

    Compactly supported initial data.  ``mu`` below is the effective decay rate
    the top shift imprints on the middle region.  By default the two branches
    that compare c2 with 2 mu use the continuous assignment (the c2/2 - sqrt(r2 - r1)
    root below 2 mu, the mu-dependent root above it); ``swapped_branches=True``
    exchanges them, which is discontinuous at c2 = 2 sqrt(r2).
    """
    if not (1 > r2 > r1 > 0):
        raise ValueError("need 1 > r2 > r1 > 0")
    if not (c1 > c2 > 0):
        raise ValueError("need c1 > c2 > 0")
    mu = c1 / 2 - math.sqrt(1 - r2)
    q1, q2 = math.sqrt(r1), math.sqrt(r2)
    pb = c2 / 2 - math.sqrt((c2 / 2 - mu) ** 2 + r2 - r1)
    pu = c2 / 2 - math.sqrt(r2 - r1)
    aux = {"mu": mu, "bar_p": pb, "underline_p": pu}

    def res(s, regime):
        return SpeedResult(float(s), regime, aux)

    if c1 <= 2:
        return res(2.0, "top")
    if mu < q2:
        if c2 <= mu + r2 / mu:
            return res(mu + r2 / mu, "middle-tail")
        if pb < q1:
            return res(pb + r1 / pb, "pulled-bar")
        return res(2 * q1, "bottom")
    if c2 <= 2 * q2:
        return res(2 * q2, "middle")
    below, above = (pb, pu) if swapped_branches else (pu, pb)
    if c2 < 2 * mu:
        if below < q1:
            return res(below + r1 / below, "pulled-bar" if swapped_branches else "pulled-underline")
        return res(2 * q1, "bottom")
    if above < q1:
        return res(above + r1 / above, "pulled-underline" if swapped_branches else "pulled-bar")
    return res(2 * q1, "bottom")


# dispatch from a ray profile ----------------------------------------------------

def regime_value(rel_minus: DispersionRelation | None, rel_plus: DispersionRelation,
                 c1: float | None, mu: float, regime: str) -> float:
    """Evaluate the formula of a named regime regardless of whether its conditions hold."""
    if regime in ("homogeneous-compact", "homogeneous-minimal", "plus"):
        return rel_plus.c_star
    if regime in ("homogeneous-tail", "plus-tail"):
        return rel_plus.lambda_of(mu) / mu
    if rel_minus is None:
        raise ValueError(f"regime {regime!r} needs a two-regime profile")
    if regime == "minus":
        return rel_minus.c_star
    if regime == "pulled-bar":
        p = bar_p(rel_minus, rel_plus, c1)
    elif regime == "pulled-underline":
        p = underline_p(rel_minus, rel_plus, c1, mu)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return rel_minus.lambda_of(p) / p


def speed_from_profile(profile, kernel=None, mu: float = math.inf,
                       force_regime: str | None = None) -> SpeedResult:
    """Pick the explicit formula matching a piecewise-constant ray profile.

    Only breakpoints at s > 0 matter.  One regime: homogeneous; two regimes:
    single shift; three Fisher-KPP regimes: two shifts (compactly supported
    data, rates rescaled so the leading regime has rate 1).
    """
    from .kernels import make_kernel

    kernel = kernel if kernel is not None else make_kernel(None)
    regs = profile.regimes()
    bps = list(profile.breakpoints)
    first = sum(1 for b in bps if b <= 0)
    bps, regs = bps[first:], regs[first:]

    def rel(r):
        return DispersionRelation(r[0], r[1], kernel if r[1] != 0 else make_kernel(None))

    if len(bps) == 0:
        rp = rel(regs[0])
        res = speed_homogeneous(rp, mu)
        if force_regime:
            res = SpeedResult(regime_value(None, rp, None, mu, force_regime), force_regime,
                              {**res.aux, "forced": True})
        return res
    if len(bps) == 1:
        rm, rp = rel(regs[0]), rel(regs[1])
        res = speed_single_shift(rm, rp, bps[0], mu)
        res.aux["c1"] = bps[0]
        if force_regime:
            res = SpeedResult(regime_value(rm, rp, bps[0], mu, force_regime), force_regime,
                              {**res.aux, "forced": True})
        return res
    if len(bps) == 2 and all(r[1] == 0 for r in regs):
        if math.isfinite(mu):
            raise NotImplementedError("two-shift formula covers compactly supported data only")
        if force_regime:
            raise NotImplementedError("forced regimes are not available for two shifts")
        (a, _), (b, _), (top, _) = regs
        if not top > 0:
            raise ValueError("leading regime must have a positive rate")
        k = math.sqrt(top)
        c2, c1 = bps
        res = speed_two_shift_kpp(a / top, b / top, c1 / k, c2 / k)
        res.s_hat *= k
        res.aux.update(c1=c1, c2=c2, rate_scale=top)
        return res
    raise NotImplementedError("no explicit formula for this profile; use the HJ route")
