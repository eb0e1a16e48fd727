"""Delay kernels Gamma(tau, y) stored as weighted quadrature atoms.

Every downstream use of the kernel goes through the exponential moment

    mgf(p, q) = sum_j w_j exp(p * y_j + q * tau_j),

so a kernel is simply a list of atoms (tau_j, y_j, w_j) whose weights sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

EXP_LIMIT = 700.0
KERNEL_TYPES = ("none", "point_mass", "uniform", "gauss_exp")


class MGFOverflowError(OverflowError):
    """An exponential moment was requested outside the representable range."""


@dataclass(frozen=True, eq=False)
class DelayKernel:
    tau: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    tau0: float
    symmetric_y: bool
    kind: str = "none"
    params: Mapping[str, Any] = field(default_factory=dict)
    # Declared one-sided horizon: Gamma = 0 on [0, tau1] x (-inf, 0).
    tau1: float | None = None

    @property
    def absent(self) -> bool:
        return self.kind == "none"

    @property
    def n_atoms(self) -> int:
        return int(self.weight.size)

    def _exponents(self, p: float, q: float) -> np.ndarray:
        e = p * self.y + q * self.tau
        if e.size and e.max() > EXP_LIMIT:
            raise MGFOverflowError(
                f"exponent {e.max():.1f} > {EXP_LIMIT} at p={p!r}, q={q!r}")
        return e

    def mgf(self, p: float, q: float) -> float:
        if self.absent:
            return 1.0
        return float(np.dot(self.weight, np.exp(self._exponents(p, q))))

    def mgf_derivs(self, p: float, q: float) -> tuple[float, float, float]:
        """Return (mgf, d mgf/dp, d mgf/dq)."""
        if self.absent:
            return 1.0, 0.0, 0.0
        we = self.weight * np.exp(self._exponents(p, q))
        return float(we.sum()), float(np.dot(we, self.y)), float(np.dot(we, self.tau))

    def tau_groups(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """Atoms grouped by delay: [(tau, y_values, weights), ...]."""
        out = []
        for t in np.unique(self.tau):
            m = self.tau == t
            out.append((float(t), self.y[m].copy(), self.weight[m].copy()))
        return out

    def to_dict(self) -> dict:
        d = {"type": self.kind, **dict(self.params)}
        if self.tau1 is not None:
            d["tau1"] = self.tau1
        return d


def mgf(k: DelayKernel, p: float, q: float) -> float:
    return k.mgf(p, q)


def _trapezoid(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and trapezoid weights up to the factor b - a (removed by normalisation)."""
    if n == 1:
        return np.array([0.5 * (a + b)]), np.ones(1)
    x = np.linspace(a, b, n)
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def _build(tau, y, w, tau0, symmetric, kind, params, tau1) -> DelayKernel:
    tau = np.asarray(tau, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if np.any(w < 0):
        raise ValueError("kernel weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise ValueError("kernel has zero total mass")
    w = w / total
    keep = w > 0
    tau, y, w = tau[keep], y[keep], w[keep]
    if np.any(tau < 0) or np.any(tau > tau0 * (1 + 1e-12)):
        raise ValueError("kernel delays must lie in [0, tau0]")
    for a in (tau, y, w):
        a.flags.writeable = False
    return DelayKernel(tau, y, w, float(tau0), bool(symmetric), kind, dict(params), tau1)


def make_kernel(spec: Mapping[str, Any] | None) -> DelayKernel:
    """Build a kernel from a tagged descriptor.

    Recognised descriptors::

        {"type": "none"}
        {"type": "point_mass", "tau": 1.0, "y": 0.0}
        {"type": "uniform", "tau0": 1.0, "Y": 1.0, "n_tau": 5, "n_y": 11}
        {"type": "gauss_exp", "tau0": 1.0, "rate": 1.0, "sigma": 1.0,
         "Y": 6.0, "n_tau": 9, "n_y": 64}

    Any descriptor may carry ``tau1`` (one-sided support horizon).
    """
    spec = dict(spec or {"type": "none"})
    kind = spec.pop("type", "none")
    tau1 = spec.pop("tau1", None)
    if kind not in KERNEL_TYPES:
        raise ValueError(f"unknown kernel type {kind!r}")

    if kind == "none":
        if spec:
            raise ValueError(f"unexpected parameters for absent kernel: {sorted(spec)}")
        empty = np.zeros(0)
        empty.flags.writeable = False
        return DelayKernel(empty, empty, empty, 0.0, True, "none", {}, tau1)

    if kind == "point_mass":
        t = float(spec.pop("tau", 1.0))
        yy = float(spec.pop("y", 0.0))
        tau0 = float(spec.pop("tau0", t if t > 0 else 1.0))
        _no_leftovers(kind, spec)
        if tau0 <= 0:
            raise ValueError("tau0 must be positive")
        return _build([t], [yy], [1.0], tau0, yy == 0.0, kind,
                      {"tau": t, "y": yy, "tau0": tau0}, tau1)

    tau0 = float(spec.pop("tau0", 1.0))
    Y = float(spec.pop("Y", 1.0))
    n_tau = int(spec.pop("n_tau", 5))
    n_y = int(spec.pop("n_y", 11))
    if n_tau <= 0 or n_y <= 0:
        raise ValueError("node counts must be positive")
    if tau0 <= 0:
        raise ValueError("tau0 must be positive")
    if Y < 0:
        raise ValueError("Y must be non-negative")
    tn, tw = _trapezoid(0.0, tau0, n_tau)
    if Y == 0:
        yn, yw = np.zeros(1), np.ones(1)
    else:
        yn, yw = _trapezoid(-Y, Y, n_y)
    params: dict[str, Any] = {"tau0": tau0, "Y": Y, "n_tau": n_tau, "n_y": n_y}

    if kind == "gauss_exp":
        rate = float(spec.pop("rate", 1.0))
        sigma = float(spec.pop("sigma", 1.0))
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        tw = tw * rate * np.exp(-rate * tn)
        yw = yw * np.exp(-0.5 * (yn / sigma) ** 2)
        params.update(rate=rate, sigma=sigma)
    _no_leftovers(kind, spec)

    T, Yg = np.meshgrid(tn, yn, indexing="ij")
    W = np.outer(tw, yw)
    return _build(T, Yg, W, tau0, True, kind, params, tau1)


def _no_leftovers(kind: str, spec: Mapping) -> None:
    if spec:
        raise ValueError(f"unexpected parameters for {kind} kernel: {sorted(spec)}")


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def analytic_mgf(k: DelayKernel, p: float, q: float) -> float:
    """Closed-form exponential moment of the continuous density the kernel discretises.

    Used as an independent oracle for quadrature refinement tests.
    """
    par = k.params
    if k.absent:
        return 1.0
    if k.kind == "point_mass":
        return math.exp(p * par["y"] + q * par["tau"])
    tau0, Y = par["tau0"], par["Y"]
    if k.kind == "uniform":
        ft = 1.0 if q == 0 else math.expm1(q * tau0) / (q * tau0)
        fy = 1.0 if p == 0 or Y == 0 else math.sinh(p * Y) / (p * Y)
        return ft * fy
    rate, sigma = par["rate"], par["sigma"]
    if rate == 0:
        ft = 1.0 if q == 0 else math.expm1(q * tau0) / (q * tau0)
    elif abs(q - rate) < 1e-14:
        ft = rate * tau0 / -math.expm1(-rate * tau0)
    else:
        ft = rate / (rate - q) * -math.expm1((q - rate) * tau0) / -math.expm1(-rate * tau0)
    mass = _norm_cdf(Y / sigma) - _norm_cdf(-Y / sigma)
    shifted = (_norm_cdf((Y - sigma**2 * p) / sigma)
               - _norm_cdf((-Y - sigma**2 * p) / sigma))
    fy = math.exp(0.5 * (sigma * p) ** 2) * shifted / mass
    return ft * fy
