"""Command-line front end.

One command per process. Every run writes a flat ``summary.txt`` into the
output directory, on failure as well as success, with a one-line
machine-readable ``reason``. Curve and trace CSVs accompany solver
commands. All files are written atomically (temp file + rename).

Exit codes: 0 converged/certified, 2 solver stalled or certificate
rejected, 3 input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time
from typing import Dict, Optional

import numpy as np

from . import extremals, solvers
from .config import ConfigError, RunConfig, load_config, make_rng
from .errors import HorloopError
from .models import Model, make_model
from .paths import Control, endpoint_jacobians, integrate, path_csv_text
from .solvers import Loop, Sweep

EXIT_OK = 0
EXIT_STALLED = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

_NUMERICAL_THREADS_ENV = "HORLOOP_THREADS"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_summary(out_dir: str, summary: Dict[str, object]) -> None:
    keys = [k for k in summary if k not in ("status", "wall_time")]
    ordered = ["status"] + sorted(keys) + (["wall_time"] if "wall_time" in summary else [])
    text = "".join(f"{k} = {_fmt(summary[k])}\n" for k in ordered if k in summary)
    atomic_write(os.path.join(out_dir, "summary.txt"), text)


def write_trace(out_dir: str, trace: solvers.SolveTrace) -> None:
    lines = ["iteration,energy,grad_norm,constraint_norm"]
    for i, (e, g, c) in enumerate(trace.iterates):
        lines.append("%d,%s,%s,%s" % (i, _fmt(e), _fmt(g), _fmt(c)))
    atomic_write(os.path.join(out_dir, "trace.csv"), "\n".join(lines) + "\n")


def write_loop(out_dir: str, model: Model, loop: Loop, substeps: int,
               name: str = "loop.csv") -> None:
    path = integrate(model, loop.control, loop.basepoint, substeps=substeps)
    atomic_write(os.path.join(out_dir, name), path_csv_text(model, path, klass=loop.klass))


def read_loop_csv(path: str, model: Model) -> Loop:
    """Reconstruct a loop from the exported CSV (metadata line + rows)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as e:
        raise ConfigError(f"cannot read loop file '{path}': {e}") from e
    if not lines or not lines[0].startswith("# horloop-loop-v1"):
        raise ConfigError(f"'{path}' is not a horloop loop file")
    meta = {}
    for token in lines[0][1:].split():
        if "=" in token:
            key, val = token.split("=", 1)
            meta[key] = val
    try:
        n = int(meta["N"])
        rank = int(meta["rank"])
        dim = int(meta["dim"])
        basepoint = np.array([float(t) for t in meta["basepoint"].split(",")])
        klass = np.array([int(t) for t in meta["klass"].split(",")])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"'{path}': bad metadata line ({e})") from e
    if dim != model.dim or rank != model.rank:
        raise ConfigError(
            f"'{path}': loop is {dim}d rank {rank}, model {model.name} "
            f"is {model.dim}d rank {model.rank}")
    rows = [line.split(",") for line in lines[2:]]
    if len(rows) != n:
        raise ConfigError(f"'{path}': expected {n} rows, found {len(rows)}")
    values = np.array([[float(c) for c in row[1 + dim:1 + dim + rank]] for row in rows])
    return Loop(Control(values), basepoint, klass)


def _model_from_config(cfg: RunConfig) -> Model:
    try:
        return make_model(cfg.model_name, *cfg.model_params)
    except (TypeError, ValueError, HorloopError) as e:
        raise ConfigError(f"cannot build model: {e}") from e


def _report_summary(report: extremals.GeodesicReport, summary: Dict[str, object]) -> None:
    summary["energy"] = report.energy
    summary["residual_control"] = report.lagrange_residual_control
    summary["residual_base"] = report.lagrange_residual_base
    summary["speed_variation"] = report.speed_variation
    for i, comp in enumerate(np.atleast_1d(report.multiplier)):
        summary[f"multiplier_{i + 1}"] = float(comp)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_solve_min(cfg: RunConfig, model: Model, out_dir: str, summary):
    klass = cfg.get_ints("solve.klass")
    if model.lattice is None:
        raise ConfigError(f"model {model.name} has no lattice: no nonzero classes")
    if klass.shape != (model.dim,) or not klass.any():
        raise ConfigError("solve.klass must be a nonzero integer vector of length dim")
    rng = make_rng(cfg.rng_seed)
    scfg = cfg.solver_config()
    seed = solvers.class_seed_loop(model, klass, cfg.n, rng=rng,
                                   scale=cfg.get_float("solve.seed_scale", 0.3), cfg=scfg)
    loop, report, trace = solvers.minimize_in_class(model, seed, scfg)
    summary["iterations"] = len(trace.iterates)
    summary["klass"] = " ".join(str(int(k)) for k in klass)
    _report_summary(report, summary)
    write_trace(out_dir, trace)
    write_loop(out_dir, model, loop, cfg.substeps)
    ok = trace.status == "converged" and report.is_geodesic(scfg.tol_geo, scfg.tol_speed)
    summary["status"] = "converged" if ok else trace.status
    if not ok:
        summary["reason"] = f"descent status {trace.status}, certificate " \
                            f"{'passed' if report.is_geodesic() else 'failed'}"
        return EXIT_STALLED
    return EXIT_OK


def _cmd_solve_minmax(cfg: RunConfig, model: Model, out_dir: str, summary):
    scfg = cfg.solver_config()
    kind = cfg.get_str("minmax.sweep")
    P = cfg.get_int("solver.P", 32)
    if kind == "latitude":
        sweep = solvers.latitude_sweep(model, P=P, n=cfg.n, cfg=scfg)
    elif kind == "rotating":
        basepoint = cfg.get_floats("minmax.basepoint", np.zeros(model.dim))
        sweep = solvers.rotating_sweep(
            model, basepoint, P=P, n=cfg.n,
            rho_min=cfg.get_float("minmax.rho_min", 0.8),
            rho_max=cfg.get_float("minmax.rho_max", 9.2), cfg=scfg)
    else:
        raise ConfigError(f"unknown sweep kind '{kind}'")
    level, critical, report, trace = solvers.minmax_sweep(model, sweep, scfg)
    summary["level"] = level
    summary["iterations"] = len(trace.iterates)
    summary["sweep_size"] = len(sweep.loops)
    _report_summary(report, summary)
    write_trace(out_dir, trace)
    write_loop(out_dir, model, critical, cfg.substeps)
    ok = trace.status == "converged" and report.is_geodesic(scfg.tol_geo, scfg.tol_speed)
    summary["status"] = "converged" if ok else trace.status
    if not ok:
        summary["reason"] = f"min-max status {trace.status}"
        return EXIT_STALLED
    return EXIT_OK


def _cmd_shoot(cfg: RunConfig, model: Model, out_dir: str, summary):
    x0 = cfg.get_floats("shoot.x0", np.zeros(model.dim))
    lam = cfg.get_floats("shoot.lam")
    if x0.shape != (model.dim,) or lam.shape != (model.dim,):
        raise ConfigError("shoot.x0 / shoot.lam must have length dim")
    steps = cfg.get_int("shoot.steps", 512)
    guess = extremals.ExtremalState(x0, lam)
    state, T, report = extremals.shoot_closed(
        model, guess, cfg.get_float("shoot.T", 2.0 * np.pi), steps=steps,
        tol_shoot=cfg.get_float("solver.tol_shoot", extremals.TOL_SHOOT),
        n_report=cfg.n)
    residual = extremals.periodicity_residual(model, state, T, steps=steps)
    summary["status"] = "converged"
    summary["period"] = T
    summary["periodicity_residual"] = float(np.linalg.norm(residual))
    summary["hamiltonian"] = extremals.hamiltonian(model, state)
    _report_summary(report, summary)
    u, base, _ = extremals.extremal_to_loop(model, state, T, cfg.n)
    write_loop(out_dir, model, Loop(u, base, np.zeros(model.dim, int)),
               cfg.substeps)
    return EXIT_OK


def _cmd_verify(cfg: RunConfig, model: Model, out_dir: str, summary):
    loop = read_loop_csv(cfg.get_str("verify.loop_file"), model)
    scfg = cfg.solver_config()
    report = extremals.lagrange_residual(model, loop.control, loop.basepoint,
                                         klass=loop.klass, substeps=cfg.substeps,
                                         tol_loop=1e-6)
    _report_summary(report, summary)
    if report.constant_curve:
        summary["status"] = "rejected"
        summary["reason"] = "constant curve: not a geodesic"
        return EXIT_STALLED
    if report.is_geodesic(scfg.tol_geo, scfg.tol_speed):
        summary["status"] = "certified"
        return EXIT_OK
    summary["status"] = "rejected"
    summary["reason"] = "lagrange residuals exceed tol_geo"
    return EXIT_STALLED


def _cmd_check_gradients(cfg: RunConfig, model: Model, out_dir: str, summary):
    rng = make_rng(cfg.rng_seed)
    samples = cfg.get_int("gradients.samples", 5)
    n = min(cfg.n, 16)   # finite differencing the full Jacobian is quadratic in N
    worst = 0.0
    for _ in range(samples):
        u = Control(rng.standard_normal((n, model.rank)))
        x0 = 0.1 * rng.standard_normal(model.dim)
        jacs = endpoint_jacobians(model, u, x0, substeps=cfg.substeps)
        step = 1e-5
        fd_ctrl = np.empty_like(jacs.jac_control)
        flat = u.values.ravel()
        for k in range(flat.size):
            up, um = flat.copy(), flat.copy()
            up[k] += step
            um[k] -= step
            fp = integrate(model, Control(up.reshape(n, model.rank)), x0,
                           substeps=cfg.substeps).endpoint
            fm = integrate(model, Control(um.reshape(n, model.rank)), x0,
                           substeps=cfg.substeps).endpoint
            fd_ctrl[:, k] = (fp - fm) / (2 * step)
        fd_flow = np.empty_like(jacs.jac_flow)
        for k in range(model.dim):
            dx = np.zeros(model.dim)
            dx[k] = step
            fp = integrate(model, u, x0 + dx, substeps=cfg.substeps).endpoint
            fm = integrate(model, u, x0 - dx, substeps=cfg.substeps).endpoint
            fd_flow[:, k] = (fp - fm) / (2 * step)
        scale = max(np.abs(jacs.jac_control).max(), np.abs(jacs.jac_flow).max(), 1.0)
        worst = max(worst,
                    np.abs(jacs.jac_control - fd_ctrl).max() / scale,
                    np.abs(jacs.jac_flow - fd_flow).max() / scale)
    # projection orthogonality on a restored random loop
    scfg = cfg.solver_config()
    g = rng.standard_normal((cfg.n, model.rank))
    g -= g.mean(axis=0)
    loop = solvers.restore_constraint(
        model, Loop(Control(0.3 * g), np.zeros(model.dim),
                    np.zeros(model.dim, int)), scfg)
    grad, lam = solvers.project_gradient(model, loop, scfg)
    path = integrate(model, loop.control, loop.basepoint, substeps=cfg.substeps,
                     jacobians=True)
    ortho = 0.0
    for i in range(model.dim):
        w_ctrl = loop.control.n * path.jac_control.T[:, i].reshape(grad.du.shape)
        w_base = (path.jac_flow - np.eye(model.dim)).T[:, i]
        ortho = max(ortho, abs(np.sum(grad.du * w_ctrl) / loop.control.n
                               + grad.dx @ w_base))
    summary["max_rel_error"] = worst
    summary["projection_orthogonality"] = ortho
    summary["status"] = "converged" if worst < 1e-5 else "failed"
    if worst >= 1e-5:
        summary["reason"] = "finite-difference audit exceeded 1e-5"
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_contract(cfg: RunConfig, model: Model, out_dir: str, summary):
    rng = make_rng(cfg.rng_seed)
    scfg = cfg.solver_config()
    eps = cfg.get_float("contract.energy", 1e-4)
    sweep = solvers.small_random_loops(model, cfg.get_int("contract.P", 8),
                                       cfg.n, eps * 0.9, rng, scfg)
    if cfg.has("contract.wrap_klass"):
        klass = cfg.get_ints("contract.wrap_klass")
        sweep.loops.append(solvers.class_seed_loop(model, klass, cfg.n, cfg=scfg))
    slices = solvers.contract_small_sweep(
        model, sweep, eps, scfg, n_slices=cfg.get_int("contract.slices", 20))
    summary["status"] = "converged"
    summary["loops"] = len(sweep.loops)
    summary["slices"] = max((len(s) for s in slices), default=0)
    summary["max_slice_energy"] = max(
        (s.energy() for seq in slices for s in seq), default=0.0)
    return EXIT_OK


_COMMANDS = {
    "solve-min": _cmd_solve_min,
    "solve-minmax": _cmd_solve_minmax,
    "shoot": _cmd_shoot,
    "verify": _cmd_verify,
    "check-gradients": _cmd_check_gradients,
    "contract": _cmd_contract,
}


def run(command: str, config_path: str, output: Optional[str] = None,
        quiet: bool = False) -> int:
    """Execute one command; always leaves a summary file behind."""
    t0 = time.perf_counter()
    summary: Dict[str, object] = {"command": command, "status": "failed"}
    out_dir = output or "out"
    code = EXIT_INPUT
    try:
        if command not in _COMMANDS:
            raise ConfigError(f"unknown command '{command}'")
        cfg = load_config(config_path)
        out_dir = output or cfg.output_dir
        model = _model_from_config(cfg)
        summary["model"] = model.name
        summary["rng_seed"] = cfg.rng_seed
        try:
            code = _COMMANDS[command](cfg, model, out_dir, summary)
        except ConfigError:
            raise
        except HorloopError as e:
            summary["status"] = "failed"
            summary["reason"] = f"{type(e).__name__}: {e}"
            code = EXIT_NUMERICAL
    except ConfigError as e:
        summary["status"] = "input-error"
        summary["reason"] = str(e)
        code = EXIT_INPUT
    summary["wall_time"] = time.perf_counter() - t0
    try:
        write_summary(out_dir, summary)
    except OSError:
        code = max(code, EXIT_INPUT)
    if not quiet:
        status = summary.get("status", "?")
        reason = summary.get("reason", "")
        print(f"[{command}] {status}" + (f": {reason}" if reason else ""))
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="horloop",
        description="Closed sub-Riemannian geodesics: direct and min-max solvers.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a key = value config")
    parser.add_argument("--output", default=None, help="output directory override")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    threads = os.environ.get(_NUMERICAL_THREADS_ENV)
    if threads is not None:
        # cap BLAS pools; all solver loops are sequential and deterministic
        os.environ.setdefault("OMP_NUM_THREADS", threads)
        os.environ.setdefault("OPENBLAS_NUM_THREADS", threads)
    code = run(args.command, args.config, output=args.output, quiet=args.quiet)
    return code


if __name__ == "__main__":
    sys.exit(main())
