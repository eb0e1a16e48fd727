"""Command-line entry point: ``kppspread {speed,hj,simulate,validate,sweep}``.

Exit codes: 0 success, 1 usage or I/O error, 2 structural hypothesis
failure, 3 numerical non-convergence, 4 validation mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .dispersion import DispersionRelation
from .environment import ShiftedEnvironment, check_hypotheses, ray_limit
from .hj import NonConvergenceError, hj_solve, viscosity_residual, _jsonable
from .kernels import make_kernel
from .simulate import (BlowUpError, DomainExhaustedError, FrontNotFoundError,
                       estimate_speed, simulate)
from .speeds import (speed_from_profile, speed_homogeneous, speed_single_shift,
                     speed_single_shift_kpp, speed_two_shift_kpp)

log = logging.getLogger("kppspread")

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_NUMERIC, EXIT_MISMATCH = 0, 1, 2, 3, 4
SWEEP_COLUMNS = ["mu", "c1", "c2", "s_hat", "regime", "underline_p", "bar_p",
                 "mu_star_minus", "mu_star_plus"]


class HypothesisFailure(RuntimeError):
    def __init__(self, report):
        super().__init__("structural hypotheses fail: " + ", ".join(report.blocking()))
        self.report = report


def _env_of(nl) -> ShiftedEnvironment:
    if nl.kind in ("fisher", "ricker"):
        return nl.env
    if nl.kind == "linear_death":
        return ShiftedEnvironment(-nl.d)
    return ShiftedEnvironment(0.0)


def resolve(cfg: RunConfig, check: bool = True):
    """Model, initial data, ray profile and kernel for a configuration."""
    model, ic = cfg.build()
    profile = ray_limit(_env_of(model.f1), _env_of(model.f2))
    report = check_hypotheses(profile, model.kernel)
    if check and not report.ok:
        raise HypothesisFailure(report)
    return model, ic, profile, report


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


def cmd_speed(cfg: RunConfig, args) -> int:
    model, _, profile, report = resolve(cfg)
    res = speed_from_profile(profile, model.kernel, cfg.decay_rate(),
                             force_regime=cfg.validate.force_regime)
    out = {**res.to_dict(), "mu": cfg.decay_rate(), "hypotheses": report.to_dict()}
    print(json.dumps(_jsonable(out), sort_keys=True))
    if args.out:
        _write_json(_prepare_out(Path(args.out)) / "speed.json", out)
    return EXIT_OK


def run_hj(cfg: RunConfig):
    model, _, profile, report = resolve(cfg)
    h = cfg.hj
    sol = hj_solve(profile, model.kernel, cfg.decay_rate(), h=h.h, s_max=h.s_max,
                   mu_cap=h.mu_cap, scheme=h.scheme, cfl=h.cfl, defect_tol=h.defect_tol,
                   tau_max=h.tau_max, zero_tol=h.zero_tol)
    resid = viscosity_residual(sol, profile, model.kernel)
    sol.meta["residual"] = resid.to_dict()
    sol.meta["hypotheses"] = report.to_dict()
    return sol


def cmd_hj(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg.out_dir(args.out))
    sol = run_hj(cfg)
    sol.write_csv(out / "rho.csv")
    _write_json(out / "meta.json", {"config": cfg.to_dict(), "solution": sol.metadata()})
    print(json.dumps(_jsonable({"s_hat": sol.s_hat, "flags": sol.flags,
                                "defect": sol.meta["defect"]}), sort_keys=True))
    return EXIT_OK


def run_sim(cfg: RunConfig):
    model, ic = cfg.build()
    s = cfg.sim
    res = simulate(model, ic, x_lo=s.x_lo, x_hi=s.x_hi, dx=s.dx, dt=s.dt, T=s.T,
                   theta=s.theta, trace_every=s.trace_every,
                   snapshot_every=s.snapshot_every, diffusion=s.diffusion)
    c, err = estimate_speed(res.trace, s.window)
    return res, c, err


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg.out_dir(args.out))
    res, c, err = run_sim(cfg)
    res.trace.write_csv(out / "front.csv")
    if cfg.sim.write_snapshots:
        res.write_snapshots(out / "snapshots.csv")
    meta = {"config": cfg.to_dict(), "run": res.meta, "speed": c, "stderr": err,
            "fit": res.trace.fit, "clamps": res.clamps, "cell_steps": res.cell_steps}
    _write_json(out / "meta.json", meta)
    print(json.dumps(_jsonable({"speed": c, "stderr": err}), sort_keys=True))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg.out_dir(args.out))
    model, _, profile, _ = resolve(cfg)
    mu = cfg.decay_rate()
    ana = speed_from_profile(profile, model.kernel, mu, force_regime=cfg.validate.force_regime)
    sol = run_hj(cfg)
    _, c_sim, _ = run_sim(cfg)
    v = cfg.validate
    rows = []
    for pair, a, b, kind, tol in (("analytic-hj", ana.s_hat, sol.s_hat, "abs", v.hj_abs_tol),
                                  ("analytic-sim", ana.s_hat, c_sim, "rel", v.sim_rel_tol),
                                  ("hj-sim", sol.s_hat, c_sim, "rel", v.sim_rel_tol)):
        diff = abs(a - b)
        rel = diff / abs(a) if a else math.inf
        ok = (diff if kind == "abs" else rel) <= tol
        rows.append({"pair": pair, "a": a, "b": b, "abs_diff": diff, "rel_diff": rel,
                     "measure": kind, "tol": tol, "pass": ok})
    with open(out / "validate.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    _write_json(out / "meta.json", {"config": cfg.to_dict(), "regime": ana.regime, "rows": rows})
    for r in rows:
        print(f"{r['pair']:<14} {r['a']:.6f} {r['b']:.6f} {r['measure']}={r['abs_diff'] if r['measure'] == 'abs' else r['rel_diff']:.3g}"
              f" tol={r['tol']:g} {'PASS' if r['pass'] else 'FAIL'}")
    failed = [r["pair"] for r in rows if not r["pass"]]
    if failed:
        print("failed pairs: " + ", ".join(failed), file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def _sweep_point(task):
    kind, r_minus, r_plus, kernel_spec, mu, c1, c2 = task
    kernel = make_kernel(kernel_spec)
    if kind == "single_kpp":
        res = speed_single_shift_kpp(r_minus[0], r_plus[0], c1, mu)
    elif kind == "single":
        rel = lambda r: DispersionRelation(r[0], r[1], kernel if r[1] else make_kernel(None))
        res = speed_single_shift(rel(r_minus), rel(r_plus), c1, mu)
    elif kind == "two_shift_kpp":
        res = speed_two_shift_kpp(r_minus[0], r_plus[0], c1, c2)
    elif kind == "homogeneous":
        rel = DispersionRelation(r_plus[0], r_plus[1], kernel if r_plus[1] else make_kernel(None))
        res = speed_homogeneous(rel, mu)
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    aux = res.aux
    return {"mu": mu, "c1": c1, "c2": c2, "s_hat": res.s_hat, "regime": res.regime,
            "underline_p": aux.get("underline_p"), "bar_p": aux.get("bar_p"),
            "mu_star_minus": aux.get("mu_star_minus"), "mu_star_plus": aux.get("mu_star_plus",
                                                                              aux.get("mu_star"))}


def sweep_tasks(cfg: RunConfig) -> list:
    sw = cfg.sweep
    kernel_spec = dict(cfg.model.get("kernel", {"type": "none"}))
    mus = sw.axis("mu")
    c1s = sw.axis("c1")
    c2s = sw.axis("c2")
    return [(sw.kind, list(sw.r_minus), list(sw.r_plus), kernel_spec, mu, c1, c2)
            for mu in mus for c1 in c1s for c2 in c2s]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg.out_dir(args.out))
    tasks = sweep_tasks(cfg)
    jobs = max(1, int(args.jobs or 1))
    if jobs == 1:
        rows = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    with open(out / "sweep.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SWEEP_COLUMNS)
        for r in rows:
            wr.writerow([_fmt(r[k]) for k in SWEEP_COLUMNS])
    _write_json(out / "meta.json", {"config": cfg.to_dict(), "n": len(rows)})
    print(json.dumps({"n": len(rows), "path": str(out / "sweep.csv")}))
    return EXIT_OK


COMMANDS = {"speed": cmd_speed, "hj": cmd_hj, "simulate": cmd_simulate,
            "validate": cmd_validate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kppspread",
                                description="Spreading speeds in shifting environments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output directory (default: config 'out', then $KPPSPREAD_OUT)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry by dotted key; VALUE is parsed as JSON")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except HypothesisFailure as exc:
        print(json.dumps({"error": "hypothesis", "failed": exc.report.blocking(),
                          "notes": exc.report.notes}), file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (NonConvergenceError, BlowUpError, DomainExhaustedError, FrontNotFoundError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, NotImplementedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
