"""Direct integration of the nonlocal delayed reaction-diffusion model

    u_t = u_xx + f1(t, x, u) + sum_j w_j f2(t - tau_j, x - y_j, u(t - tau_j, x - y_j)),

with front tracking and empirical speed estimation.

The delay term only needs f2 evaluated on past slices, so a ring buffer
stores F2^n = f2(t_n, x, u^n) rather than u itself.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import linalg, optimize, stats

from .dispersion import DispersionRelation
from .environment import ShiftedEnvironment, realize
from .kernels import DelayKernel, make_kernel

log = logging.getLogger(__name__)

F1_TYPES = ("fisher", "linear_death")
F2_TYPES = ("none", "ricker")
IC_TYPES = ("mu", "inf", "zero", "function")
_ALIGN_TOL = 1e-9
_CLAMP_TOL = 1e-14


class CFLError(ValueError):
    """Explicit diffusion step too large."""


class BlowUpError(RuntimeError):
    """Solution left the invariant region [0, L]."""


class DomainExhaustedError(RuntimeError):
    """Front came too close to the right boundary."""


class FrontNotFoundError(RuntimeError):
    """No point above the tracking level inside the fit window."""


def _as_env(r) -> ShiftedEnvironment:
    if isinstance(r, ShiftedEnvironment):
        return r
    if isinstance(r, Mapping):
        return ShiftedEnvironment.from_dict(r)
    return ShiftedEnvironment(float(r))


@dataclass(frozen=True)
class Nonlinearity:
    """Built-in reaction terms.

    fisher        u (r(t, x) - u)
    linear_death  -d u
    ricker        r(t, x) v exp(-v)
    none          0
    """
    kind: str
    env: ShiftedEnvironment | None = None
    d: float = 0.0

    def __post_init__(self):
        if self.kind not in F1_TYPES + F2_TYPES:
            raise ValueError(f"unknown nonlinearity {self.kind!r}")
        if self.kind in ("fisher", "ricker") and self.env is None:
            raise ValueError(f"{self.kind} needs an environment")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Nonlinearity":
        d = dict(d)
        kind = d.pop("type")
        env = d.pop("r", None)
        dd = float(d.pop("d", 0.0))
        if d:
            raise ValueError(f"unknown keys for nonlinearity {kind!r}: {sorted(d)}")
        return cls(kind, _as_env(env) if env is not None else None, dd)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"type": self.kind}
        if self.env is not None:
            out["r"] = self.env.to_dict()
        if self.kind == "linear_death":
            out["d"] = self.d
        return out

    def rate(self, t, x):
        """Derivative at u = 0."""
        if self.kind in ("fisher", "ricker"):
            return realize(self.env, t, x)
        if self.kind == "linear_death":
            return -self.d * np.ones_like(np.asarray(x, dtype=float))
        return np.zeros_like(np.asarray(x, dtype=float))

    def __call__(self, t, x, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "fisher":
            return u * (realize(self.env, t, x) - u)
        if self.kind == "ricker":
            return realize(self.env, t, x) * u * np.exp(-u)
        if self.kind == "linear_death":
            return -self.d * u
        return np.zeros_like(u)

    def sup_at(self, L: float) -> float:
        """sup over (t, x) of the term at the constant state u = L."""
        if self.kind == "fisher":
            return L * (self.env.bounds()[1] - L)
        if self.kind == "ricker":
            lo, hi = self.env.bounds()
            return (hi if L >= 0 else lo) * L * math.exp(-L)
        if self.kind == "linear_death":
            return -self.d * L
        return 0.0

    def rate_bounds(self) -> tuple[float, float]:
        if self.kind in ("fisher", "ricker"):
            return self.env.bounds()
        if self.kind == "linear_death":
            return -self.d, -self.d
        return 0.0, 0.0


@dataclass
class ModelSpec:
    f1: Nonlinearity
    f2: Nonlinearity = field(default_factory=lambda: Nonlinearity("none"))
    kernel: DelayKernel = field(default_factory=lambda: make_kernel({"type": "none"}))
    L0: float | None = None

    def __post_init__(self):
        if self.f1.kind not in F1_TYPES:
            raise ValueError(f"f1 must be one of {F1_TYPES}")
        if self.f2.kind not in F2_TYPES:
            raise ValueError(f"f2 must be one of {F2_TYPES}")
        if self.f2.kind != "none" and self.kernel.absent:
            raise ValueError("a delayed term needs a kernel")
        if self.L0 is None:
            self.L0 = self.saturation_bound()

    @classmethod
    def fisher_kpp(cls, r) -> "ModelSpec":
        return cls(Nonlinearity("fisher", _as_env(r)))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpec":
        d = dict(d)
        f1 = Nonlinearity.from_dict(d.pop("f1"))
        f2 = Nonlinearity.from_dict(d.pop("f2", {"type": "none"}))
        kernel = make_kernel(d.pop("kernel", {"type": "none"}))
        L0 = d.pop("L0", None)
        if d:
            raise ValueError(f"unknown model keys: {sorted(d)}")
        return cls(f1, f2, kernel, None if L0 is None else float(L0))

    def to_dict(self) -> dict:
        return {"f1": self.f1.to_dict(), "f2": self.f2.to_dict(),
                "kernel": self.kernel.to_dict(), "L0": self.L0}

    def G_sup(self, L: float) -> float:
        """sup over (t, x) of f1(L) + f2(L); the kernel has unit mass."""
        return self.f1.sup_at(L) + self.f2.sup_at(L)

    def saturation_bound(self) -> float:
        """Smallest L0 with G(L, L) <= 0 for all sampled L >= L0."""
        grid = np.geomspace(1e-6, 1e6, 481)
        g = np.array([self.G_sup(L) for L in grid])
        bad = np.nonzero(g > 0)[0]
        if bad.size == 0:
            return float(grid[0])
        k = int(bad[-1])
        if k == grid.size - 1:
            raise ValueError("G(L, L) stays positive: no saturation bound")
        return float(optimize.brentq(self.G_sup, grid[k], grid[k + 1], xtol=1e-14))

    def check_saturation(self, L0: float | None = None, n: int = 200) -> bool:
        L0 = self.L0 if L0 is None else L0
        return all(self.G_sup(L) <= 1e-12 for L in np.linspace(L0, 10 * L0 + 10, n))

    def check_sublinear(self, n: int = 64) -> bool:
        """f_i(u) <= u d_u f_i(0) on sampled u in [0, 10 L0] and the rate bounds."""
        us = np.linspace(0.0, 10 * self.L0, n)
        for f in (self.f1, self.f2):
            for r in set(f.rate_bounds()):
                env = ShiftedEnvironment(r)
                g = Nonlinearity(f.kind, env if f.env is not None else None, f.d)
                if np.any(g(0.0, 0.0 * us, us) > us * g.rate(0.0, 0.0 * us) + 1e-12):
                    return False
        return True

    def linear_relation(self, sup: bool = True) -> DispersionRelation:
        """Dispersion relation of the linearisation with sup (or inf) rates."""
        k = 1 if sup else 0
        r1 = self.f1.rate_bounds()[k]
        r2 = self.f2.rate_bounds()[k]
        return DispersionRelation(r1, r2, self.kernel if r2 != 0 else make_kernel(None))


@dataclass
class InitialData:
    """Initial history, constant on [-tau0, 0] unless ``func`` takes (t, x).

    mu:  a * min(1, exp(-mu x))
    inf: a * cos(pi x / W)^2 on |x| < W/2 (compact support)
    """
    kind: str = "inf"
    amplitude: float = 1.0
    mu: float | None = None
    width: float = 10.0
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in IC_TYPES:
            raise ValueError(f"unknown initial data {self.kind!r}")
        if self.kind == "mu" and not (self.mu is not None and self.mu > 0):
            raise ValueError("IC_mu needs mu > 0")
        if self.kind == "function" and self.func is None:
            raise ValueError("function initial data needs func(t, x)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InitialData":
        d = dict(d)
        kind = d.pop("type", "inf")
        mu = d.pop("mu", None)
        out = cls(kind, float(d.pop("amplitude", 1.0)), None if mu is None else float(mu),
                  float(d.pop("width", 10.0)))
        if d:
            raise ValueError(f"unknown initial-data keys: {sorted(d)}")
        return out

    def to_dict(self) -> dict:
        return {"type": self.kind, "amplitude": self.amplitude, "mu": self.mu, "width": self.width}

    def __call__(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = self.amplitude
        if self.kind == "mu":
            return a * np.exp(-self.mu * np.maximum(x, 0.0))
        if self.kind == "inf":
            inside = np.abs(x) < self.width / 2
            return np.where(inside, a * np.cos(np.pi * x / self.width) ** 2, 0.0)
        if self.kind == "zero":
            return np.zeros_like(x)
        return np.asarray(self.func(t, x), dtype=float) * np.ones_like(x)

    @property
    def time_dependent(self) -> bool:
        return self.kind == "function"


@dataclass
class FrontTrace:
    theta: float
    t: np.ndarray
    x: np.ndarray
    fit: tuple[float, float, float] | None = None

    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.x.tolist()))

    def write_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.t, self.x]), delimiter=",",
                   header="t,x_theta", comments="", fmt="%.17g")


@dataclass
class SimResult:
    x: np.ndarray
    snap_t: np.ndarray
    snap_u: np.ndarray
    trace: FrontTrace
    dt: float
    clamps: int
    cell_steps: int
    meta: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def snapshot(self, t: float) -> tuple[float, np.ndarray]:
        """Stored snapshot nearest to time t."""
        k = int(np.argmin(np.abs(self.snap_t - t)))
        return float(self.snap_t[k]), self.snap_u[k]

    @property
    def final(self) -> np.ndarray:
        return self.snap_u[-1]

    def write_snapshots(self, path) -> None:
        rows = [(t, xi, ui) for t, u in zip(self.snap_t, self.snap_u) for xi, ui in zip(self.x, u)]
        np.savetxt(path, np.array(rows), delimiter=",", header="t,x,u", comments="", fmt="%.17g")


def front_position(x: np.ndarray, u: np.ndarray, theta: float) -> float:
    """sup{x : u(x) >= theta}, interpolated linearly to the right neighbour."""
    idx = np.nonzero(u >= theta)[0]
    if idx.size == 0:
        return math.nan
    i = int(idx[-1])
    if i == x.size - 1:
        return float(x[i])
    return float(x[i] + (u[i] - theta) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]))


def aligned_dt(kernel: DelayKernel, dt_max: float) -> float:
    """Largest dt <= dt_max putting every kernel delay on a multiple of dt, if possible."""
    taus = np.unique(kernel.tau[kernel.tau > 0]) if not kernel.absent else np.zeros(0)
    if taus.size == 0:
        return dt_max
    base = float(np.min(np.diff(np.concatenate([[0.0], taus]))))
    ratios = taus / base
    if np.max(np.abs(ratios - np.round(ratios))) > 1e-9:
        return dt_max
    return base / math.ceil(base / dt_max - 1e-12)


class _History:
    """Ring buffer of F2 slices at t_n, t_{n-1}, ..."""

    def __init__(self, n_slices: int, nx: int):
        self.buf = np.zeros((n_slices, nx))
        self.head = 0      # index of the newest slice
        self.n = n_slices

    def push(self, row: np.ndarray) -> None:
        self.head = (self.head + 1) % self.n
        self.buf[self.head] = row

    def back(self, k: int) -> np.ndarray:
        if k >= self.n:
            raise IndexError("delay beyond stored history")
        return self.buf[(self.head - k) % self.n]


def _delay_plan(kernel: DelayKernel, dt: float):
    """Per delay group: (k, frac, y, w) with tau = (k + frac) dt, frac = 0 when aligned."""
    plan = []
    for tau, ys, ws in kernel.tau_groups():
        q = tau / dt
        k = int(math.floor(q + _ALIGN_TOL))
        frac = q - k
        if abs(frac) <= _ALIGN_TOL or abs(frac - 1) <= _ALIGN_TOL:
            frac = 0.0
        plan.append((k, frac, ys, ws))
    return plan


def _delay_term(hist: _History, plan, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for k, frac, ys, ws in plan:
        sl = hist.back(k)
        if frac:
            sl = (1 - frac) * sl + frac * hist.back(k + 1)
        for yj, wj in zip(ys, ws):
            if yj == 0.0:
                out += wj * sl
            else:
                out += wj * np.interp(x - yj, x, sl, left=sl[0], right=sl[-1])
    return out


def simulate(model: ModelSpec, ic: InitialData, x_lo: float = -50.0, x_hi: float = 450.0,
             dx: float = 0.2, dt: float | None = None, T: float = 200.0,
             theta: float = 0.1, trace_every: float = 0.5, snapshot_every: float = 5.0,
             diffusion: str = "explicit", front_margin: int = 20,
             check_domain: bool = True) -> SimResult:
    """Integrate the model on [x_lo, x_hi] up to time T.

    Explicit Euler for reaction and delay; diffusion explicit (needs
    dt <= 0.4 dx^2) or Crank-Nicolson (``diffusion="cn"``).  Neumann at
    x_lo, u = 0 at x_hi.  Delays on a multiple of dt read a stored slice,
    others interpolate linearly between the two neighbouring slices; spatial
    offsets interpolate linearly on the grid, using boundary values outside.
    """
    if diffusion not in ("explicit", "cn"):
        raise ValueError("diffusion must be 'explicit' or 'cn'")
    nx = int(round((x_hi - x_lo) / dx)) + 1
    x = np.linspace(x_lo, x_hi, nx)
    dx = float(x[1] - x[0])
    kernel = model.kernel
    delayed = model.f2.kind != "none"
    dt_cfl = 0.4 * dx * dx
    if dt is None:
        dt = aligned_dt(kernel, dt_cfl) if delayed else dt_cfl
    if diffusion == "explicit" and dt > dt_cfl * (1 + 1e-12):
        raise CFLError(f"dt = {dt:g} exceeds 0.4 dx^2 = {dt_cfl:g}")
    n_steps = int(math.ceil(T / dt - 1e-9))

    u = ic(x, 0.0).astype(float)
    u[-1] = 0.0
    bound = 2.0 * max(model.L0, float(np.max(np.abs(u))) if u.size else 0.0)

    hist = None
    plan = []
    if delayed:
        plan = _delay_plan(kernel, dt)
        depth = max(k + (1 if f else 0) for k, f, _, _ in plan) + 1
        hist = _History(depth, nx)
        # oldest first so that back(k) is the slice at -k dt
        for k in range(depth - 1, -1, -1):
            tk = -k * dt
            hist.push(model.f2(tk, x, ic(x, tk)))

    if diffusion == "cn":
        r = dt / (dx * dx)
        ab = np.zeros((3, nx))
        ab[0, 1:] = -0.5 * r
        ab[1, :] = 1 + r
        ab[2, :-1] = -0.5 * r
        ab[0, 1] = -r            # Neumann row uses the mirrored ghost
        ab[1, -1] = 1.0          # Dirichlet row
        ab[2, -2] = 0.0

    tr_stride = max(1, int(round(trace_every / dt)))
    sn_stride = max(1, int(round(snapshot_every / dt)))
    tr_t, tr_x = [0.0], [front_position(x, u, theta)]
    sn_t, sn_u = [0.0], [u.copy()]
    clamps = 0
    lap = np.empty_like(u)
    inv_dx2 = 1.0 / (dx * dx)
    t = 0.0
    for n in range(1, n_steps + 1):
        react = model.f1(t, x, u)
        if delayed:
            react = react + _delay_term(hist, plan, x)
        if diffusion == "explicit":
            lap[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) * inv_dx2
            lap[0] = 2 * (u[1] - u[0]) * inv_dx2
            lap[-1] = 0.0
            new = u + dt * (lap + react)
        else:
            rhs = u.copy()
            rhs[1:-1] += 0.5 * r * (u[2:] - 2 * u[1:-1] + u[:-2])
            rhs[0] += r * (u[1] - u[0])
            rhs += dt * react
            rhs[-1] = 0.0
            new = linalg.solve_banded((1, 1), ab, rhs)
        new[-1] = 0.0
        neg = new < 0
        if neg.any():
            clamps += int(np.count_nonzero(new < -_CLAMP_TOL))
            new[neg] = 0.0
        u = new
        t = n * dt
        if not np.all(np.isfinite(u)) or u.max() > bound:
            raise BlowUpError(f"max u = {u.max():.4g} exceeds {bound:.4g} at t = {t:.3f}")
        if delayed:
            hist.push(model.f2(t, x, u))
        if n % tr_stride == 0 or n == n_steps:
            xf = front_position(x, u, theta)
            tr_t.append(t)
            tr_x.append(xf)
            if check_domain and np.isfinite(xf) and xf >= x[-1] - front_margin * dx:
                raise DomainExhaustedError(f"front at x = {xf:.2f} reached the right boundary at t = {t:.2f}")
        if n % sn_stride == 0 or n == n_steps:
            sn_t.append(t)
            sn_u.append(u.copy())

    trace = FrontTrace(theta, np.array(tr_t), np.array(tr_x))
    meta = {"x_lo": x_lo, "x_hi": x_hi, "dx": dx, "dt": dt, "T": t, "steps": n_steps,
            "theta": theta, "diffusion": diffusion, "L0": model.L0, "bound": bound,
            "delay_plan": [(k, f) for k, f, _, _ in plan],
            "model": model.to_dict(), "ic": ic.to_dict()}
    res = SimResult(x, np.array(sn_t), np.array(sn_u), trace, dt, clamps, n_steps * nx, meta)
    if clamps > 1e-3 * res.cell_steps:
        log.warning("positivity clamps on %d of %d cell-steps", clamps, res.cell_steps)
    return res


def estimate_speed(trace: FrontTrace, window: Sequence[float] | None = None) -> tuple[float, float]:
    """Least-squares slope of x_theta(t) over the window (default: last third of the run)."""
    t, xf = trace.t, trace.x
    if window is None:
        window = (2.0 * t[-1] / 3.0, t[-1])
    m = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if np.count_nonzero(m) < 10:
        raise ValueError(f"need at least 10 samples in window {tuple(window)}")
    if np.any(~np.isfinite(xf[m])):
        raise FrontNotFoundError("u < theta everywhere at some sampled time in the window")
    fit = stats.linregress(t[m], xf[m])
    resid = xf[m] - (fit.intercept + fit.slope * t[m])
    trace.fit = (float(fit.slope), float(fit.intercept), float(np.sqrt(np.mean(resid**2))))
    return float(fit.slope), float(fit.stderr)


@dataclass
class DichotomyReport:
    times: list
    outer: list
    inner: list
    outer_tol: float
    inner_threshold: float
    degenerate: bool = False

    @property
    def outer_ok(self) -> bool:
        return bool(self.outer) and self.outer[-1] < self.outer_tol

    @property
    def inner_ok(self) -> bool:
        return (not self.degenerate) and bool(self.inner) and self.inner[-1] > self.inner_threshold

    @property
    def ok(self) -> bool:
        return self.outer_ok and self.inner_ok

    def to_dict(self) -> dict:
        return {"times": self.times, "outer": self.outer, "inner": self.inner,
                "outer_ok": self.outer_ok, "inner_ok": self.inner_ok,
                "degenerate": self.degenerate}


def verify_dichotomy(res: SimResult, s_hat: float, eta: float, t_check: Sequence[float],
                     outer_tol: float = 1e-3, inner_threshold: float = 0.05) -> DichotomyReport:
    """Outer sup over x >= (s_hat + eta) t and inner inf over 0 <= x <= (s_hat - eta) t."""
    if not (s_hat > 0 and eta > 0):
        raise ValueError("need s_hat > 0 and eta > 0")
    x = res.x
    times, outer, inner = [], [], []
    degenerate = s_hat - eta <= 0
    for tc in t_check:
        ts, u = res.snapshot(tc)
        if (s_hat + eta) * ts > x[-1]:
            raise ValueError(f"(s_hat + eta) t = {(s_hat + eta) * ts:.2f} lies outside the domain")
        times.append(ts)
        outer.append(float(u[x >= (s_hat + eta) * ts].max(initial=0.0)))
        m = (x >= 0) & (x <= (s_hat - eta) * ts)
        inner.append(float(u[m].min()) if m.any() else math.nan)
    return DichotomyReport(times, outer, inner, outer_tol, inner_threshold, degenerate)


@dataclass
class TailBoundReport:
    mu: float
    delta: float
    Q_lower: float
    Q_upper: float
    Q_construction: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return (math.isfinite(self.Q_lower) and math.isfinite(self.Q_upper)
                and self.Q_lower <= self.Q_construction + 1e-9)

    def to_dict(self) -> dict:
        return {**self.__dict__, "ok": self.ok}


def tail_bound_check(res: SimResult, ic: InitialData, mu: float, delta: float,
                     rel: DispersionRelation | None = None, margin: int = 50,
                     min_samples: int = 10) -> TailBoundReport:
    """Fit the constants of max{(mu-delta) x - Q_l t, 0} <= -log u <= (mu+delta) x + Q_u t.

    Both sides carry an additive slack |log a| for the amplitude a of the
    initial data; Q_l and Q_u are the smallest non-negative constants that
    make the sandwich hold on the stored snapshots (t > 0, x >= 0, u > 1e-300,
    ``margin`` cells away from the Dirichlet end).  ``Q_construction`` is
    max{|log a|, lambda(mu - delta)} for the relation ``rel`` (sup rates by
    default), which bounds Q_l for an exact solution.
    """
    if ic.kind != "mu":
        raise ValueError("tail bounds need exponentially decaying initial data")
    if not 0 < delta < mu:
        raise ValueError("need 0 < delta < mu")
    slack = abs(math.log(ic.amplitude)) if ic.amplitude > 0 else math.inf
    x = res.x
    xm = (x >= 0) & (np.arange(x.size) < x.size - margin)
    ql, qu, n = 0.0, 0.0, 0
    for t, u in zip(res.snap_t, res.snap_u):
        if t <= 0:
            continue
        m = xm & (u > 1e-300)
        if not m.any():
            continue
        w = -np.log(u[m])
        xs = x[m]
        ql = max(ql, float(np.max(((mu - delta) * xs - w - slack) / t)))
        qu = max(qu, float(np.max((w - (mu + delta) * xs - slack) / t)))
        n += int(m.sum())
    if n < min_samples:
        raise ValueError("too few positive samples to fit the tail bounds")
    rel = rel if rel is not None else DispersionRelation(1.0)
    qc = max(slack, rel.lambda_of(mu - delta))
    return TailBoundReport(mu, delta, ql, qu, qc, n)


def tail_decay_rate(res: SimResult, u_range: tuple[float, float] = (1e-12, 1e-4),
                    t: float | None = None, margin: int = 50) -> float:
    """Exponential decay rate of u ahead of the front, fitted on u in ``u_range``."""
    _, u = res.snapshot(res.snap_t[-1] if t is None else t)
    x = res.x
    m = (u > u_range[0]) & (u < u_range[1]) & (np.arange(x.size) < x.size - margin)
    m &= x > front_position(x, u, u_range[1])
    if np.count_nonzero(m) < 5:
        raise ValueError("too few points in the tail window")
    fit = stats.linregress(x[m], np.log(u[m]))
    return float(-fit.slope)
