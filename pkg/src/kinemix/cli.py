"""Command-line entry point: ``kinemix verify|simulate|export-plots``.

Exit codes: 0 ok, 1 a check failed, 2 configuration error, 3 NaN or blow-up.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from kinemix.config import SUITES, ConfigError, RunConfig
from kinemix.records import RecordWriter, export_tables

log = logging.getLogger("kinemix")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinemix", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("verify", "simulate", "export-plots"))
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--only", help="comma-separated verify suites: " + ",".join(SUITES))
    p.add_argument("--tensor-cache", help="directory for cached collision classes")
    p.add_argument("--checkpoint-every", type=int, help="write a state checkpoint every N steps")
    p.add_argument("--seed", type=int, help="seed for randomized suites")
    p.add_argument("--out", help="output (or, for export-plots, run) directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _suites(cfg: RunConfig, only: str | None) -> list:
    if not only:
        return list(cfg["diagnostics"]["suites"])
    names = [s.strip() for s in only.split(",") if s.strip()]
    bad = [s for s in names if s not in SUITES]
    if bad:
        raise ConfigError(f"unknown suite(s) {bad}; choose from {list(SUITES)}")
    return names


def cmd_verify(cfg: RunConfig, out: Path, only=None, cache=None, seed=None) -> int:
    from kinemix.verify import Context, run_suites

    names = _suites(cfg, only)
    ctx = Context(cfg.params, cfg.vgrid, seed=cfg["seed"] if seed is None else seed,
                  samples=cfg["diagnostics"]["samples"], cache_dir=cache, angular=cfg["grid"]["angular"])
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    with RecordWriter(out / "records.ndjson", cfg.hash) as rw:
        for name in names:
            checks = run_suites(ctx, [name])[name]
            results[name] = checks
            for c in checks:
                rw.emit(f"{c.suite}.{c.name}", c.value, None, c.tolerance, c.passed, c.ref)
                line = f"[{'PASS' if c.passed else 'FAIL'}] {c.suite}.{c.name} = {c.value:.6g} (tol {c.tolerance:g})"
                print(line + (f"  {c.detail}" if c.detail else ""), flush=True)
    ok = all(c.passed for cs in results.values() for c in cs)
    summary = {
        "command": "verify",
        "config_hash": cfg.hash,
        "suites": {k: {"passed": all(c.passed for c in v), "checks": len(v)} for k, v in results.items()},
        "passed": ok,
        "timings": {k: round(v, 3) for k, v in ctx.timings.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def simulate(cfg: RunConfig, out: Path, cache=None, checkpoint_every: int | None = None,
             progress=None) -> dict:
    """Run a configured simulation with all monitors; returns the summary dict.

    Raises SimulationAborted (after dumping the last finite state) on NaN or blow-up.
    """
    from kinemix.diagnostics import (
        EnergyMonitor,
        Lemma44Monitor,
        SmallnessMonitor,
        antiderivative_W0,
        estimate_constants,
        law_residuals,
        LAWS,
        smallness_monitor_update,
    )
    from kinemix.transport import (
        Operators,
        SimState,
        SimulationAborted,
        fluid_totals,
        make_initial,
        run,
    )
    from kinemix.collision import AngularQuadrature

    params, vgrid, sgrid, scheme = cfg.params, cfg.vgrid, cfg.sgrid, cfg.scheme
    diag = cfg["diagnostics"]
    every = cfg["output"]["every"]
    ckpt = cfg["output"]["checkpoint_every"] if checkpoint_every is None else checkpoint_every
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dump())
    t_start = time.perf_counter()
    ang = AngularQuadrature.lebedev26() if cfg["grid"]["angular"] == "lebedev26" else None
    ops = Operators.build(params, vgrid, cache_dir=cache, angular=ang)
    constants = estimate_constants(ops) if diag["constants"] else None
    if cfg["initial"]["amplitude"] == 0:
        state = SimState(0.0, np.zeros((sgrid.N, params.I, vgrid.Nv)))
    else:
        state = make_initial(cfg.profile, params, vgrid, ops.basis, sgrid, ops.projector)
    state.config_hash = cfg.hash
    totals0 = fluid_totals(state, ops.basis, sgrid)
    nonzero_mean = bool(np.abs(totals0).max() > 1e-14 * max(1.0, np.abs(state.f).max()))
    energy = EnergyMonitor(ops, sgrid, totals0 if nonzero_mean else None, scheme.nonlinear)
    theta = diag["theta"] if diag["theta"] is not None else (
        constants.theta_used if constants else None)
    lemma = None
    if constants is not None and theta is not None:
        lemma = Lemma44Monitor(theta, ops, sgrid, constants.C2)
    small = SmallnessMonitor(epsilon=diag["epsilon"])
    window = []
    last = None
    ckdir = out / "checkpoints"
    rw = RecordWriter(out / "records.ndjson", cfg.hash)
    if constants is not None:
        for k, v in constants.as_dict().items():
            rw.emit(f"constants.{k}", v, 0.0, ref="constants")
    rw.emit("initial.nonzero_mean", float(nonzero_mean), 0.0, ref="antiderivative-correction")
    levels = 0
    drift = 0.0
    try:
        for st in run(state, ops, sgrid, scheme, cfg["scheme"]["T_final"], every=every):
            levels += 1
            rows = energy.update(st)
            for row in rows:
                for k, v in row.items():
                    if k != "t":
                        rw.emit(f"energy.{k}", v, row["t"], ref="energy-functional")
            if lemma is not None:
                lemma.update(st)
                rw.emit("lemma44.lhs", lemma.lhs[-1], st.t, ref="theta-lemma-integrated")
                rw.emit("lemma44.rhs", lemma.rhs[-1], st.t, ref="theta-lemma-integrated")
            coords = ops.basis.coords(st.f)
            W = antiderivative_W0(coords, params, sgrid, totals0 if nonzero_mean else None)
            dtf = None if last is None else (st.f - last.f) / (st.t - last.t)
            smallness_monitor_update(small, st, ops, sgrid, W.corrected[:-1], dtf)
            rw.emit("smallness.sup0", small.sup0, st.t, diag["epsilon"],
                    None if diag["epsilon"] is None else small.sup0 <= diag["epsilon"], "smallness")
            rw.emit("smallness.sup2", small.sup2, st.t, ref="smallness")
            tot = coords.sum(axis=0) * sgrid.dx
            scale = max(float(np.abs(totals0).max()), 1e-300)
            drift = max(drift, float(np.abs(tot - totals0).max()) / scale)
            rw.emit("totals.drift", float(np.abs(tot - totals0).max()) / scale, st.t,
                    diag["tol_cons"] if sgrid.periodic else None, None, "conservation")
            window.append((st.t, st.f, coords))
            if len(window) == 3:
                (t0, _, c0), (t1, f1_, c1), (t2, _, c2) = window
                res = law_residuals(c0, c2, t2 - t0, c1, ops.projector.P1(f1_), params, ops.basis, sgrid)
                for k in LAWS:
                    rw.emit(f"residual.{k}", float(np.abs(res[k]).max()), t1, ref="conservation-laws")
                window.pop(0)
            if ckpt and st.step and st.step % ckpt == 0:
                ckdir.mkdir(exist_ok=True)
                st.save(ckdir / f"state-{st.step:07d}.npz")
            if progress:
                progress(st)
            last = st
    except SimulationAborted as exc:
        if exc.state is not None:
            exc.state.save(out / "abort-state.npz")
        rw.emit("abort", 1.0, None if exc.state is None else exc.state.t, ref="blow-up")
        rw.close()
        raise
    rw.close()
    rep = energy.report
    ratios = rep.max_ratio()
    f1 = rep.series("f1")
    bound = diag["bound_factor"]
    checks = {
        "energy_bound": all(v <= bound for v in ratios.values()),
        "integrals_finite": all(math.isfinite(rep.rows[-1][k]) for k in rep.rows[-1]),
        "f1_decay": bool(f1.max() == 0 or f1[-1] <= diag["decay_factor"] * f1.max()),
        "smallness": small.violated_at is None,
    }
    if lemma is not None:
        checks["lemma44_integrated"] = lemma.report().holds()
    if sgrid.periodic:
        checks["conservation"] = drift < diag["tol_cons"]
    summary = {
        "command": "simulate",
        "config_hash": cfg.hash,
        "t_final": float(last.t),
        "steps": int(last.step),
        "levels": levels,
        "I0": rep.I0,
        "max_ratio": ratios,
        "final": rep.rows[-1],
        "f1_final_over_max": float(f1[-1] / f1.max()) if f1.max() > 0 else 0.0,
        "smallness": {"sup0": small.sup0, "sup2": small.sup2, "violated_at": small.violated_at},
        "totals_drift": drift,
        "nonzero_mean": nonzero_mean,
        "constants": constants.as_dict() if constants else None,
        "checks": checks,
        "passed": all(checks.values()),
        "wall_seconds": round(time.perf_counter() - t_start, 2),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    lines = [f"{k}\t{'pass' if v else 'fail'}" for k, v in checks.items()]
    (out / "summary.tsv").write_text("check\tresult\n" + "\n".join(lines) + "\n")
    return summary


def cmd_simulate(cfg: RunConfig, out: Path, cache=None, checkpoint_every=None) -> int:
    from kinemix.transport import SimulationAborted

    def progress(st):
        if st.step % 20 == 0:
            log.info("t=%.4g step=%d", st.t, st.step)

    try:
        summary = simulate(cfg, out, cache, checkpoint_every, progress)
    except SimulationAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for k, v in summary["checks"].items():
        print(f"[{'PASS' if v else 'FAIL'}] {k}")
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def cmd_export(run_dir: Path) -> int:
    try:
        paths = export_tables(run_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "export-plots":
        if not args.out:
            print("export-plots needs --out RUN_DIR", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_export(Path(args.out))
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        out = Path(args.out or cfg["output"]["directory"])
        if args.command == "verify":
            return cmd_verify(cfg, out, args.only, args.tensor_cache, args.seed)
        if args.checkpoint_every is not None and args.checkpoint_every < 0:
            raise ConfigError("--checkpoint-every must be >= 0")
        return cmd_simulate(cfg, out, args.tensor_cache, args.checkpoint_every)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
