"""Shifting environments r(t, x) and their ray-homogenised growth rates R(s), s = x/t.

A :class:`ShiftedEnvironment` is a sum of profiles moving at constant speeds,
``r(t, x) = base + sum_i profile_i(x - c_i t)``.  Along a ray ``x = s t`` each
monotone profile tends to its left limit when ``s < c_i`` and to its right
limit when ``s > c_i``; exactly on ``s = c_i`` the upper (limsup) and lower
(liminf) envelopes differ.  :func:`ray_limit` turns an environment into the
piecewise description :class:`RayProfile` consumed by the dispersion, speed
and Hamilton-Jacobi modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np

from .kernels import DelayKernel

PROFILE_TYPES = ("step", "tanh", "bump")
SegValue = Union[float, Callable[[float], float]]
_BP_TOL = 1e-12


@dataclass(frozen=True)
class Profile:
    """Bounded profile of the moving coordinate z = x - c t.

    step: ``lo`` for z < 0, ``hi`` for z >= 0.
    tanh: smooth ramp from ``lo`` to ``hi`` over ``width``.
    bump: ``lo`` outside |z| < width, peak ``hi`` at z = 0 (compact support).
    """
    type: str
    lo: float
    hi: float
    width: float = 1.0

    def __post_init__(self):
        if self.type not in PROFILE_TYPES:
            raise ValueError(f"unknown profile type {self.type!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("profile values must be finite")
        if self.type != "step" and not self.width > 0:
            raise ValueError("profile width must be positive")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.type == "step":
            return np.where(z >= 0, self.hi, self.lo)
        if self.type == "tanh":
            return self.lo + (self.hi - self.lo) * 0.5 * (1.0 + np.tanh(z / self.width))
        xi = z / self.width
        b = np.where(np.abs(xi) < 1, np.cos(0.5 * np.pi * xi) ** 2, 0.0)
        return self.lo + (self.hi - self.lo) * b

    @property
    def left(self) -> float:
        return self.lo

    @property
    def right(self) -> float:
        return self.lo if self.type == "bump" else self.hi

    @property
    def monotone(self) -> bool:
        return self.type != "bump" or self.lo == self.hi

    def to_dict(self) -> dict:
        return {"type": self.type, "lo": self.lo, "hi": self.hi, "width": self.width}


@dataclass(frozen=True)
class ShiftedEnvironment:
    base: float = 0.0
    terms: tuple[tuple[float, Profile], ...] = ()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> "ShiftedEnvironment":
        d = dict(d or {})
        base = float(d.pop("base", 0.0))
        terms = []
        for term in d.pop("terms", []):
            term = dict(term)
            c = float(term.pop("c"))
            prof = dict(term.pop("profile"))
            if term:
                raise ValueError(f"unknown keys in environment term: {sorted(term)}")
            terms.append((c, Profile(**prof)))
        if d:
            raise ValueError(f"unknown keys in environment: {sorted(d)}")
        return cls(base, tuple(terms))

    def to_dict(self) -> dict:
        return {"base": self.base,
                "terms": [{"c": c, "profile": p.to_dict()} for c, p in self.terms]}

    @property
    def speeds(self) -> list[float]:
        return sorted({c for c, _ in self.terms})

    def bounds(self) -> tuple[float, float]:
        lo = self.base + sum(min(p.lo, p.hi) for _, p in self.terms)
        hi = self.base + sum(max(p.lo, p.hi) for _, p in self.terms)
        return lo, hi


def realize(env: ShiftedEnvironment, t, x):
    """Pointwise value r(t, x) = base + sum_i profile_i(x - c_i t)."""
    x = np.asarray(x, dtype=float)
    out = np.full(np.broadcast(x, np.asarray(t)).shape, env.base, dtype=float)
    for c, prof in env.terms:
        out = out + prof(x - c * t)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RayProfile:
    """Piecewise description of (R1(s), R2(s)) along rays s = x/t.

    ``r1_seg[k]`` / ``r2_seg[k]`` hold the value on the k-th open interval
    between consecutive breakpoints (a constant or a continuous monotone
    callable).  At each breakpoint the upper (u.s.c.) and lower (l.s.c.)
    values are stored explicitly; by default they are the max/min of the two
    one-sided limits.
    """
    breakpoints: tuple[float, ...]
    r1_seg: tuple[SegValue, ...]
    r2_seg: tuple[SegValue, ...]
    r1_break: tuple[tuple[float, float], ...] = ()   # (upper, lower) per breakpoint
    r2_break: tuple[tuple[float, float], ...] = ()
    tags: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        nb = len(self.breakpoints)
        if list(self.breakpoints) != sorted(self.breakpoints):
            raise ValueError("breakpoints must be sorted ascending")
        if len(self.r1_seg) != nb + 1 or len(self.r2_seg) != nb + 1:
            raise ValueError("need one segment value per interval")
        if not self.r1_break:
            object.__setattr__(self, "r1_break", self._default_breaks(self.r1_seg))
        if not self.r2_break:
            object.__setattr__(self, "r2_break", self._default_breaks(self.r2_seg))

    def _default_breaks(self, seg):
        out = []
        for k, b in enumerate(self.breakpoints):
            a, c = _seg_at(seg[k], b), _seg_at(seg[k + 1], b)
            out.append((max(a, c), min(a, c)))
        return tuple(out)

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, r1: float, r2: float = 0.0) -> "RayProfile":
        return cls((), (float(r1),), (float(r2),))

    @classmethod
    def single_shift(cls, c1: float, minus: Sequence[float], plus: Sequence[float]) -> "RayProfile":
        """R_i = minus[i] for s < c1 and plus[i] for s > c1."""
        return cls((float(c1),), (float(minus[0]), float(plus[0])),
                   (float(minus[1]), float(plus[1])))

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], r1: Sequence[SegValue],
                  r2: Sequence[SegValue] | None = None) -> "RayProfile":
        r2 = r2 if r2 is not None else [0.0] * (len(breakpoints) + 1)
        return cls(tuple(float(b) for b in breakpoints), tuple(r1), tuple(r2))

    # queries ----------------------------------------------------------------
    def segment_index(self, s: float) -> int:
        return int(np.searchsorted(np.asarray(self.breakpoints), s, side="right"))

    def _value(self, seg, brk, s: float, envelope: str) -> float:
        for k, b in enumerate(self.breakpoints):
            if abs(s - b) <= _BP_TOL * max(1.0, abs(b)):
                return brk[k][0 if envelope == "upper" else 1]
        return _seg_at(seg[self.segment_index(s)], s)

    def values(self, s, envelope: str = "upper") -> tuple[np.ndarray, np.ndarray]:
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        r1 = np.array([self._value(self.r1_seg, self.r1_break, si, envelope) for si in s_arr])
        r2 = np.array([self._value(self.r2_seg, self.r2_break, si, envelope) for si in s_arr])
        return r1, r2

    @property
    def piecewise_constant(self) -> bool:
        return all(not callable(v) for v in self.r1_seg + self.r2_seg)

    def regimes(self) -> list[tuple[float, float]]:
        """(R1, R2) per interval; only meaningful for piecewise-constant profiles."""
        if not self.piecewise_constant:
            raise ValueError("profile has non-constant segments")
        return [(float(a), float(b)) for a, b in zip(self.r1_seg, self.r2_seg)]

    def to_dict(self) -> dict:
        if not self.piecewise_constant:
            raise ValueError("only piecewise-constant profiles serialise")
        return {"breakpoints": list(self.breakpoints), "r1": list(self.r1_seg),
                "r2": list(self.r2_seg), "r1_break": [list(b) for b in self.r1_break],
                "r2_break": [list(b) for b in self.r2_break]}


def _seg_at(v: SegValue, s: float) -> float:
    return float(v(s)) if callable(v) else float(v)


def eval_R(profile: RayProfile, s: float, envelope: str = "upper") -> tuple[float, float]:
    if envelope not in ("upper", "lower"):
        raise ValueError("envelope must be 'upper' or 'lower'")
    r1, r2 = profile.values(s, envelope)
    return float(r1[0]), float(r2[0])


def _group_envelope(env: ShiftedEnvironment, c: float) -> tuple[float, float]:
    """sup and inf over z of the terms moving at speed c, plus the rest's ray limits at s = c."""
    group = [p for ci, p in env.terms if abs(ci - c) <= _BP_TOL * max(1.0, abs(c))]
    others = env.base + sum(p.right if ci < c else p.left for ci, p in env.terms
                            if abs(ci - c) > _BP_TOL * max(1.0, abs(c)))
    span = max([p.width for p in group] + [1.0])
    z = np.linspace(-60 * span, 60 * span, 24001)
    vals = sum(p(z) for p in group)
    left = sum(p.left for p in group)
    right = sum(p.right for p in group)
    hi = max(float(np.max(vals)), left, right)
    lo = min(float(np.min(vals)), left, right)
    return others + hi, others + lo


def _single_ray_limit(env: ShiftedEnvironment, bps: Sequence[float]):
    segs, brks = [], []
    edges = [-math.inf, *bps, math.inf]
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        mid = 0.5 * (a + b) if math.isfinite(a) and math.isfinite(b) else (
            b - 1.0 if math.isfinite(b) else (a + 1.0 if math.isfinite(a) else 0.0))
        segs.append(env.base + sum(p.right if c < mid else p.left for c, p in env.terms))
    for c in bps:
        brks.append(_group_envelope(env, c))
    return segs, brks


def ray_limit(env: ShiftedEnvironment, env2: ShiftedEnvironment | None = None) -> RayProfile:
    """Ray-homogenised profile of ``env`` (as R1) and optionally ``env2`` (as R2)."""
    lo, hi = env.bounds()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("environment is unbounded")
    env2 = env2 or ShiftedEnvironment()
    bps = sorted(set(env.speeds) | set(env2.speeds))
    s1, b1 = _single_ray_limit(env, bps)
    s2, b2 = _single_ray_limit(env2, bps)
    return RayProfile(tuple(bps), tuple(s1), tuple(s2), tuple(b1), tuple(b2))


# hypothesis checks -----------------------------------------------------------

@dataclass
class HypothesisReport:
    clauses: dict[str, bool]
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def structure_ok(self) -> bool:
        c = self.clauses
        return c["same_monotonicity"] or c["r1_continuous_r2_monotone"] or c["r2_piecewise_r1_local"]

    @property
    def tail_ok(self) -> bool:
        c = self.clauses
        return c["r2_tail_nonincreasing"] or c["r2_tail_regular_declared"] or c["one_sided_kernel"]

    @property
    def ok(self) -> bool:
        return self.clauses["positivity"] and self.clauses["r2_nonnegative"] and self.structure_ok

    def failed(self) -> list[str]:
        return [k for k, v in self.clauses.items() if not v]

    def blocking(self) -> list[str]:
        """Clauses whose failure makes ``ok`` false (structure alternatives reported jointly)."""
        out = [k for k in ("positivity", "r2_nonnegative") if not self.clauses[k]]
        if not self.structure_ok:
            out.append("same_monotonicity|r1_continuous_r2_monotone|r2_piecewise_r1_local")
        return out

    def to_dict(self) -> dict:
        return {"ok": self.ok, "structure_ok": self.structure_ok, "blocking": self.blocking(),
                "tail_ok": self.tail_ok, "clauses": dict(self.clauses),
                "notes": dict(self.notes)}


def _sequence(profile: RayProfile, seg, brk, n_samples: int = 33) -> list[tuple[float, float]]:
    """Samples (s, value) in increasing s, including breakpoint u.s.c. values."""
    out = []
    bps = list(profile.breakpoints)
    edges = [min(bps + [0.0]) - 10.0, *bps, max(bps + [0.0]) + 100.0]
    for k in range(len(seg)):
        a, b = edges[k], edges[k + 1]
        for s in np.linspace(a, b, n_samples)[1:-1]:
            out.append((float(s), _seg_at(seg[k], float(s))))
        if k < len(bps):
            out.append((bps[k], brk[k][0]))
    return out


def _monotone(vals: Sequence[float], sign: int, tol: float = 1e-12) -> bool:
    d = np.diff(np.asarray(vals, dtype=float))
    return bool(np.all(sign * d >= -tol))


def _locally_monotone(profile: RayProfile, seg, brk) -> bool:
    for k, b in enumerate(profile.breakpoints):
        left = _seg_at(seg[k], b)
        right = _seg_at(seg[k + 1], b)
        v = brk[k][0]
        if not (_monotone([left, v, right], 1) or _monotone([left, v, right], -1)):
            return False
    for k, v in enumerate(seg):
        if callable(v):
            bps = [-10.0, *profile.breakpoints, max(profile.breakpoints, default=0.0) + 100.0]
            vals = [v(s) for s in np.linspace(bps[k], bps[k + 1], 65)]
            if not (_monotone(vals, 1) or _monotone(vals, -1)):
                return False
    return True


def _sum_profile(profile: RayProfile) -> tuple[tuple, tuple]:
    seg = tuple((lambda s, a=a, b=b: _seg_at(a, s) + _seg_at(b, s)) if (callable(a) or callable(b))
                else a + b for a, b in zip(profile.r1_seg, profile.r2_seg))
    brk = tuple((u1 + u2, l1 + l2) for (u1, l1), (u2, l2) in zip(profile.r1_break, profile.r2_break))
    return seg, brk


def check_hypotheses(profile: RayProfile, kernel: DelayKernel | None = None) -> HypothesisReport:
    """Mechanically evaluate the structural hypotheses on (R1, R2, kernel).

    Clauses: positivity of the lower envelope of R1 + R2 on s > 0,
    R2 >= 0, the three alternative structure conditions (same monotonicity /
    continuous R1 with monotone R2 / piecewise-constant R2 with locally
    monotone R1 and R1 + R2), the three alternative tail conditions for
    compactly supported data, and a sufficient condition for persistence.
    """
    clauses: dict[str, bool] = {}
    notes: dict[str, str] = {}
    seq1 = _sequence(profile, profile.r1_seg, profile.r1_break)
    seq2 = _sequence(profile, profile.r2_seg, profile.r2_break)

    # positivity of lower envelopes for s > 0
    pos = True
    for k, b in enumerate(profile.breakpoints):
        if b > 0 and profile.r1_break[k][1] + profile.r2_break[k][1] <= 0:
            pos = False
            notes["positivity"] = f"R1+R2 lower envelope <= 0 at s={b}"
    for (s, a), (_, c) in zip(seq1, seq2):
        if s > 0 and a + c <= 0:
            pos = False
            notes["positivity"] = f"R1+R2 <= 0 near s={s:.4g}"
            break
    clauses["positivity"] = pos

    r2_vals = [v for _, v in seq2] + [lo for _, lo in profile.r2_break]
    clauses["r2_nonnegative"] = min(r2_vals) >= 0

    v1 = [v for _, v in seq1]
    v2 = [v for _, v in seq2]
    inc = _monotone(v1, 1) and _monotone(v2, 1)
    dec = _monotone(v1, -1) and _monotone(v2, -1)
    clauses["same_monotonicity"] = inc or dec

    r1_cont = all(abs(u - l) <= 1e-14 for u, l in profile.r1_break)
    r2_mono = _monotone(v2, 1) or _monotone(v2, -1)
    clauses["r1_continuous_r2_monotone"] = r1_cont and r2_mono

    r2_pc = all(not callable(v) for v in profile.r2_seg)
    sseg, sbrk = _sum_profile(profile)
    clauses["r2_piecewise_r1_local"] = (
        r2_pc and _locally_monotone(profile, profile.r1_seg, profile.r1_break)
        and _locally_monotone(profile, sseg, sbrk))

    last2 = profile.r2_seg[-1]
    last_bp = profile.breakpoints[-1] if profile.breakpoints else 0.0
    if callable(last2):
        tail = [last2(s) for s in np.linspace(last_bp + 1e-9, last_bp + 100.0, 65)]
        tail_noninc = _monotone(tail, -1)
        tail_sup = max(tail)
    else:
        tail_noninc = True
        tail_sup = float(last2)
    r2_zero = max(abs(v) for v in r2_vals) == 0
    clauses["r2_tail_nonincreasing"] = r2_zero or tail_noninc
    clauses["r2_tail_regular_declared"] = bool(profile.tags.get("r2_tail_regular", False))
    notes["r2_tail_regular_declared"] = "declared tag; decay rate is not checked from samples"

    one_sided = False
    if kernel is not None and kernel.tau1 is not None and not kernel.absent:
        m = kernel.tau <= kernel.tau1
        one_sided = bool(np.all(kernel.y[m] >= 0)) and tail_sup > 0
    clauses["one_sided_kernel"] = one_sided

    # sufficient condition for persistence: lower R1 > 0 on some [0, s_]
    k0 = profile.segment_index(0.0)
    at0 = [b for b in profile.breakpoints if abs(b) <= _BP_TOL]
    pers = _seg_at(profile.r1_seg[k0], 1e-9) > 0
    if at0:
        pers = pers and profile.r1_break[profile.breakpoints.index(at0[0])][1] > 0
    clauses["persistence_sufficient"] = pers
    return HypothesisReport(clauses, notes)
