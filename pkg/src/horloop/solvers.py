"""Variational solvers on the horizontal loop space.

The loop space is the zero set of the constraint G(u, x) = F_x(u) - x
(shifted by a deck translation on quotient models). Its tangent space at a
regular loop is the orthogonal complement of the pulled-back covectors
w_i = dG* e_i, so the constrained gradient of the energy is obtained by an
m x m Gram solve, and constraint restoration is minimum-norm Gauss-Newton
along span{w_i}. Direct minimization runs projected-gradient descent with
an Armijo line search; the min-max driver deforms the high-energy band of
a sweep with the same steps, re-meshing when adjacent loops drift apart,
and finishes near-critical loops with a Gauss-Newton solve of the full
first-order system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import (ChartDomainError, ConstraintViolationError,
                     ContractionFailureError, LevelCollapseError,
                     MeshFailureError, NearSingularConstraintError,
                     NonHorizontalVelocityError, RestorationFailureError,
                     SteeringFailureError)
from .extremals import GeodesicReport, TOL_CONST, lagrange_residual
from .models import Model
from .paths import (Control, concatenate, control_norm, energy, integrate,
                    minimal_control, steer_local)

Array = np.ndarray


@dataclass
class SolverConfig:
    """Shared numerical settings; defaults are the pinned toolkit values."""

    substeps: int = 4
    tol_loop: float = 1e-10
    tol_grad: float = 1e-7
    tol_geo: float = 1e-6
    tol_speed: float = 1e-6
    max_iter: int = 500
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    capture_radius: float = 1.0
    cond_max: float = 1e12
    restore_max_iter: int = 50
    # min-max
    band_frac: float = 0.2
    delta_sweep: float = 1.0
    max_outer: int = 400
    switch_grad: float = 0.5
    max_remesh_factor: int = 4
    # critical-point refinement
    refine_tol: float = 1e-11
    refine_max_iter: int = 12
    refine_energy_drift: float = 0.35
    refine_cooldown: int = 5
    finish_refine: bool = True
    # contraction
    eps_contract_coeff: float = 1e-6
    contract_bound: float = 4.0
    contract_slices: int = 20

    def eps_contract(self, model: Model) -> float:
        return self.eps_contract_coeff * model.scale ** 2


@dataclass
class Loop:
    """Closed horizontal curve: control, basepoint and deck element."""

    control: Control
    basepoint: Array
    klass: Array

    def __post_init__(self):
        self.basepoint = np.asarray(self.basepoint, dtype=float)
        self.klass = np.asarray(self.klass, dtype=int)

    def copy(self) -> "Loop":
        return Loop(self.control.copy(), self.basepoint.copy(), self.klass.copy())

    def energy(self) -> float:
        return energy(self.control)


@dataclass
class Sweep:
    """Ordered family of loops discretizing a one-parameter family.

    ``cyclic`` families close up (last loop neighbours the first); path
    families have inert ends, which is how a pole-to-pole sweep must be
    represented in a single chart that misses one pole.
    """

    loops: List[Loop]
    cyclic: bool = True


@dataclass
class SolveTrace:
    """Per-iteration (energy, gradient norm, constraint norm) plus status."""

    iterates: List[Tuple[float, float, float]] = field(default_factory=list)
    status: str = "max_iter"
    tail: List[Control] = field(default_factory=list)


@dataclass
class LoopTangent:
    du: Array
    dx: Array

    def norm(self) -> float:
        return float(np.sqrt(control_norm(self.du) ** 2 + self.dx @ self.dx))


def loop_distance(a: Loop, b: Loop) -> float:
    """Distance between two loops in the global chart (mesh surrogate).

    A loop is a (control, basepoint) pair, so the continuity surrogate is
    the product metric. Dropping the basepoint term would let a sweep slip
    past a mountain pass through pairs with equal controls at faraway
    basepoints, which destroys the min-max obstruction.
    """
    d2 = control_norm(a.control.values - b.control.values) ** 2
    return float(np.sqrt(d2 + np.sum((a.basepoint - b.basepoint) ** 2)))


def klass_shift(model: Model, klass: Array) -> Array:
    if model.lattice is None:
        return np.zeros(model.dim)
    return model.lattice @ np.asarray(klass, dtype=int)


def loop_residual(model: Model, L: Loop, substeps: int = 4) -> Array:
    """Loop constraint F_x(u) - x, with the deck shift of the class removed."""
    path = integrate(model, L.control, L.basepoint, substeps=substeps)
    return path.endpoint - L.basepoint - klass_shift(model, L.klass)


def _loop_system(model: Model, L: Loop, substeps: int):
    """Integrate with sensitivities and assemble the constraint Gram data."""
    path = integrate(model, L.control, L.basepoint, substeps=substeps, jacobians=True)
    r = path.endpoint - L.basepoint - klass_shift(model, L.klass)
    dphi = path.jac_flow - np.eye(model.dim)
    gram = L.control.n * (path.jac_control @ path.jac_control.T) + dphi @ dphi.T
    return path, r, dphi, gram


def project_gradient(model: Model, L: Loop, cfg: SolverConfig = SolverConfig(),
                     tol_closed: float = 1e-6) -> Tuple[LoopTangent, Array]:
    """Constrained energy gradient and the Lagrange multiplier at a loop.

    Projects (u, 0) onto the orthogonal complement of the pulled-back
    constraint covectors; at constant loops the gradient is set to zero by
    convention, with a zero multiplier.
    """
    m = model.dim
    if control_norm(L.control.values) < TOL_CONST:
        return LoopTangent(np.zeros_like(L.control.values), np.zeros(m)), np.zeros(m)
    path, r, dphi, gram = _loop_system(model, L, cfg.substeps)
    if np.linalg.norm(r) > tol_closed:
        raise ConstraintViolationError(
            f"project_gradient: loop is open (|G| = {np.linalg.norm(r):.3e})")
    if np.linalg.cond(gram) > cfg.cond_max:
        raise NearSingularConstraintError(
            f"{model.name}: constraint Gram matrix is near singular "
            f"(cond > {cfg.cond_max:.1e}) at a non-constant loop")
    lam = np.linalg.solve(gram, path.jac_control @ L.control.values.ravel())
    du = L.control.values - L.control.n * (path.jac_control.T @ lam).reshape(
        L.control.n, L.control.rank)
    dx = -dphi.T @ lam
    return LoopTangent(du, dx), lam


def restore_constraint(model: Model, L: Loop, cfg: SolverConfig = SolverConfig()) -> Loop:
    """Close a nearly-closed loop by minimum-norm Gauss-Newton on G.

    Steps stay in the span of the pulled-back covectors, so the correction
    is L2-orthogonal to the constraint tangent space and the deck element
    is preserved.
    """
    cur = L.copy()
    path, r, dphi, gram = _loop_system(model, cur, cfg.substeps)
    rn = float(np.linalg.norm(r))
    if rn > cfg.capture_radius:
        raise RestorationFailureError(
            f"restore_constraint: residual {rn:.3e} beyond capture radius")
    for _ in range(cfg.restore_max_iter):
        if rn < cfg.tol_loop:
            return cur
        try:
            c = np.linalg.solve(gram, -r)
        except np.linalg.LinAlgError:
            c, *_ = np.linalg.lstsq(gram, -r, rcond=None)
        du = cur.control.n * (path.jac_control.T @ c).reshape(cur.control.values.shape)
        dx = dphi.T @ c
        alpha = 1.0
        for _ in range(30):
            cand = Loop(Control(cur.control.values + alpha * du),
                        cur.basepoint + alpha * dx, cur.klass)
            try:
                path_c, r_c, dphi_c, gram_c = _loop_system(model, cand, cfg.substeps)
            except ChartDomainError:
                alpha *= 0.5
                continue
            rn_c = float(np.linalg.norm(r_c))
            if rn_c < rn:
                cur, path, r, dphi, gram, rn = cand, path_c, r_c, dphi_c, gram_c, rn_c
                break
            alpha *= 0.5
        else:
            raise RestorationFailureError(
                f"restore_constraint: stalled at residual {rn:.3e}")
    raise RestorationFailureError(
        f"restore_constraint: residual {rn:.3e} after {cfg.restore_max_iter} iterations")


def _descent_step(model: Model, L: Loop, grad: LoopTangent, gnorm2: float,
                  cfg: SolverConfig, alpha0: float) -> Tuple[Loop, float, float, bool]:
    """One backtracking projected-gradient step with restoration.

    Returns (loop, energy, step used, accepted).
    """
    e0 = L.energy()
    alpha = alpha0
    while alpha > 1e-14:
        cand = Loop(Control(L.control.values - alpha * grad.du),
                    L.basepoint - alpha * grad.dx, L.klass)
        try:
            cand = restore_constraint(model, cand, cfg)
        except (RestorationFailureError, ChartDomainError):
            alpha *= cfg.backtrack
            continue
        e1 = cand.energy()
        if e1 <= e0 - cfg.armijo * alpha * gnorm2:
            return cand, e1, alpha, True
        alpha *= cfg.backtrack
    return L, e0, alpha, False


def minimize_in_class(model: Model, seed: Loop,
                      cfg: SolverConfig = SolverConfig()
                      ) -> Tuple[Loop, GeodesicReport, SolveTrace]:
    """Projected-gradient energy descent within a fixed homotopy class.

    Each accepted step decreases the energy (Armijo contract). Near the
    bottom the optional Gauss-Newton finish solves the first-order system
    to certificate accuracy. The returned report is the Lagrange-condition
    certificate of the final loop.
    """
    cur = restore_constraint(model, seed, cfg)
    trace = SolveTrace()
    alpha = cfg.step0
    refined = False
    for _ in range(cfg.max_iter):
        grad, lam = project_gradient(model, cur, cfg)
        gn = grad.norm()
        rn = float(np.linalg.norm(loop_residual(model, cur, cfg.substeps)))
        trace.iterates.append((cur.energy(), gn, rn))
        if gn < cfg.tol_grad:
            trace.status = "converged"
            break
        if cfg.finish_refine and not refined and gn < cfg.switch_grad:
            refined = True
            cand, ok = refine_critical_loop(model, cur, cfg)
            if ok:
                cur = cand
                continue
        cur, e1, used, accepted = _descent_step(model, cur, grad, gn * gn, cfg, alpha)
        if not accepted:
            trace.status = "stalled"
            break
        alpha = min(cfg.step0, used * 2.0)
    report = lagrange_residual(model, cur.control, cur.basepoint, klass=cur.klass,
                               substeps=cfg.substeps,
                               tol_loop=max(10 * cfg.tol_loop, 1e-8))
    return cur, report, trace


# ---------------------------------------------------------------------------
# Gauss-Newton refinement of the first-order system
# ---------------------------------------------------------------------------

def _stationarity_residual(model: Model, L: Loop, lam: Array, substeps: int):
    path, r, dphi, _ = _loop_system(model, L, substeps)
    n = L.control.n
    w = n * (path.jac_control.T @ lam).reshape(L.control.values.shape)
    r1 = (w - L.control.values).ravel() / np.sqrt(n)
    r2 = dphi.T @ lam
    return np.concatenate([r1, r2, r]), path, dphi


def refine_critical_loop(model: Model, L: Loop, cfg: SolverConfig = SolverConfig(),
                         lam0: Optional[Array] = None,
                         tail: Optional[List[Control]] = None) -> Tuple[Loop, bool]:
    """Damped Gauss-Newton on (lam dF - u, lam (dphi - 1), G) in (u, x, lam).

    Multiplier columns of the Jacobian are exact; (u, x) columns are taken
    by forward differences of the analytic residual. Used to finish
    near-critical loops to certificate accuracy; returns the best iterate
    and whether the tolerance was met.
    """
    m = model.dim
    n, l = L.control.n, L.control.rank
    if lam0 is None:
        _, lam0 = project_gradient(model, L, cfg)
    z = np.concatenate([L.control.values.ravel(), L.basepoint, lam0])

    def unpack(zv):
        return (Loop(Control(zv[:n * l].reshape(n, l)), zv[n * l:n * l + m], L.klass),
                zv[n * l + m:])

    def res(zv):
        lp, lam = unpack(zv)
        r, path, dphi = _stationarity_residual(model, lp, lam, cfg.substeps)
        return r, path, dphi

    r, path, dphi = res(z)
    rn = float(np.linalg.norm(r))
    best, best_rn = z.copy(), rn
    fd = 1e-6
    for _ in range(cfg.refine_max_iter):
        if rn < cfg.refine_tol:
            break
        nz = n * l + m
        J = np.empty((len(r), nz + m))
        for k in range(nz):
            zp = z.copy()
            zp[k] += fd * max(1.0, abs(z[k]))
            rp, _, _ = res(zp)
            J[:, k] = (rp - r) / (zp[k] - z[k])
        # exact multiplier columns
        J[:n * l, nz:] = np.sqrt(n) * path.jac_control.T
        J[n * l:n * l + m, nz:] = dphi.T
        J[n * l + m:, nz:] = 0.0
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        alpha, accepted = 1.0, False
        for _ in range(25):
            zc = z + alpha * step
            try:
                rc, path_c, dphi_c = res(zc)
            except ChartDomainError:
                alpha *= 0.5
                continue
            if np.linalg.norm(rc) < rn:
                z, r, path, dphi = zc, rc, path_c, dphi_c
                rn = float(np.linalg.norm(r))
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        if tail is not None:
            tail.append(Control(z[:n * l].reshape(n, l).copy()))
        if rn < best_rn:
            best, best_rn = z.copy(), rn
    loop, _ = unpack(best)
    ok = best_rn < max(cfg.refine_tol * 100, 1e-9)
    if ok:
        try:
            loop = restore_constraint(model, loop, cfg)
        except RestorationFailureError:
            ok = False
    return loop, ok


# ---------------------------------------------------------------------------
# min-max over sweeps
# ---------------------------------------------------------------------------

def _check_mesh(sweep: Sweep, delta: float) -> Optional[Tuple[int, float]]:
    loops = sweep.loops
    pairs = len(loops) if sweep.cyclic else len(loops) - 1
    for i in range(pairs):
        d = loop_distance(loops[i], loops[(i + 1) % len(loops)])
        if d > delta:
            return i, d
    return None


def _insert_interpolant(model: Model, a: Loop, b: Loop, cfg: SolverConfig) -> Loop:
    """Steered midpoint loop between two sweep neighbours."""
    if not np.array_equal(a.klass, b.klass):
        raise MeshFailureError("adjacent sweep loops have different deck elements")
    build_cfg = replace(cfg, capture_radius=max(cfg.capture_radius, 3.0))
    u_mid = Control(0.5 * (a.control.values + b.control.values))
    x_mid = 0.5 * (a.basepoint + b.basepoint)
    cand = Loop(u_mid, x_mid, a.klass)
    gap = loop_residual(model, cand, cfg.substeps)
    gap_norm = float(np.linalg.norm(gap))
    if gap_norm > build_cfg.capture_radius:
        if gap_norm <= model.steer_radius:
            # close the bulk of the gap with a local steering tail
            end = x_mid + klass_shift(model, cand.klass) + gap
            target = x_mid + klass_shift(model, cand.klass)
            sigma, T = steer_local(model, end, target, n=max(8, u_mid.n // 8))
            if T > 0:
                u_mid = concatenate(u_mid, sigma, T, n_out=u_mid.n)
                cand = Loop(u_mid, x_mid, a.klass)
        else:
            # too nonlinear for one steering hop; trust the Gauss-Newton
            # closure and let its own failure report a mesh breakdown
            build_cfg = replace(build_cfg, capture_radius=2.0 * gap_norm)
    return restore_constraint(model, cand, build_cfg)


def minmax_sweep(model: Model, sweep0: Sweep,
                 cfg: SolverConfig = SolverConfig(),
                 progress=None) -> Tuple[float, Loop, GeodesicReport, SolveTrace]:
    """Discrete deformation of a sweep toward its min-max level.

    Every loop whose energy is within ``band_frac`` of the running maximum
    takes one projected-gradient descent step per round; pairs that drift
    beyond the mesh bound get a steered interpolant. When the maximal
    loop's constrained gradient is small the Gauss-Newton finisher takes
    over. Returns (level, critical loop, certificate, trace); the trace
    keeps the recent max-loop controls for Cauchy-tail diagnostics.
    """
    loops = [restore_constraint(model, L, cfg) for L in sweep0.loops]
    p0 = len(loops)
    cyclic = sweep0.cyclic
    bad = _check_mesh(Sweep(loops, cyclic), cfg.delta_sweep)
    if bad is not None:
        raise MeshFailureError(
            f"initial sweep violates the mesh bound at pair {bad[0]} (d = {bad[1]:.3g})")
    eps0 = cfg.eps_contract(model)
    trace = SolveTrace()
    last_refine = -10 ** 9
    for outer in range(cfg.max_outer):
        energies = np.array([L.energy() for L in loops])
        k = int(np.argmax(energies))
        level = float(energies[k])
        if level < eps0:
            raise LevelCollapseError(
                f"sweep maximum energy {level:.3e} below {eps0:.3e}: min-max level ~ 0")
        grad, _ = project_gradient(model, loops[k], cfg)
        gn = grad.norm()
        rn = float(np.linalg.norm(loop_residual(model, loops[k], cfg.substeps)))
        trace.iterates.append((level, gn, rn))
        trace.tail.append(loops[k].control.copy())
        if len(trace.tail) > 40:
            trace.tail.pop(0)
        if progress is not None:
            progress(outer, level, gn, len(loops))
        if gn < cfg.tol_grad:
            trace.status = "converged"
            break
        if gn < cfg.switch_grad and outer - last_refine >= cfg.refine_cooldown:
            last_refine = outer
            cand, ok = refine_critical_loop(model, loops[k], cfg, tail=trace.tail)
            # accept only a genuine nearby critical loop: non-constant and at
            # a comparable energy (the finisher must not change the level)
            if (ok and control_norm(cand.control.values) > TOL_CONST
                    and abs(cand.energy() - level) <= cfg.refine_energy_drift * level):
                loops[k] = cand
                continue
        band = [i for i in range(len(loops))
                if energies[i] >= (1.0 - cfg.band_frac) * level
                and control_norm(loops[i].control.values) > TOL_CONST]
        moved = False
        for i in band:
            try:
                g_i, _ = project_gradient(model, loops[i], cfg)
            except ChartDomainError:
                continue   # near the chart guard; the loop stays put
            gn_i = g_i.norm()
            if gn_i < cfg.tol_grad:
                continue
            # cap the move so one step cannot tear the mesh open
            alpha0 = min(cfg.step0, 0.5 * cfg.delta_sweep / gn_i)
            loops[i], _, _, ok = _descent_step(model, loops[i], g_i, gn_i ** 2,
                                               cfg, alpha0)
            moved = moved or ok
        # drop loops made redundant by their neighbours; never touch the
        # high-energy band (mirror-symmetric landscapes put opposite slopes
        # close together in the chart metric, and removing a crest node
        # there would let the level leak through the short link), never the
        # ends of a path sweep
        floor = (1.0 - cfg.band_frac) * level
        i = 0 if cyclic else 1
        while len(loops) > 3 and i < len(loops) - (0 if cyclic else 1):
            prv, nxt = loops[i - 1], loops[(i + 1) % len(loops)]
            if (loops[i].energy() < floor
                    and loop_distance(prv, nxt) < 0.6 * cfg.delta_sweep
                    and loops[i].energy() <= max(prv.energy(), nxt.energy())):
                loops.pop(i)
            else:
                i += 1
        # re-mesh on two triggers: pairs that drifted beyond the mesh bound,
        # and band pairs whose restored midpoint climbs above both endpoints.
        # The second is essential: the energy ridge lives in the constraint,
        # so two nodes straddling a crest can sit close in the chart metric
        # while the filled path between them peaks; without probing, descent
        # drains the band and the recorded level leaks below the pass.
        inserted = []
        for i in range(len(loops) if cyclic else len(loops) - 1):
            j = (i + 1) % len(loops)
            pair_hi = max(loops[i].energy(), loops[j].energy())
            d = loop_distance(loops[i], loops[j])
            need_dist = d > cfg.delta_sweep
            probe = pair_hi >= floor and d > 0.05 * cfg.delta_sweep
            if not (need_dist or probe):
                continue
            if len(loops) + len(inserted) >= cfg.max_remesh_factor * p0:
                raise MeshFailureError(
                    f"sweep grew beyond {cfg.max_remesh_factor}x its initial size")
            try:
                mid = _insert_interpolant(model, loops[i], loops[j], cfg)
            except (RestorationFailureError, SteeringFailureError, ChartDomainError) as e:
                if need_dist:
                    raise MeshFailureError(f"re-meshing failed: {e}") from e
                continue
            if need_dist or mid.energy() > pair_hi * (1.0 + 1e-12) + 1e-12:
                inserted.append((j, mid))
        for j, L in sorted(inserted, key=lambda t: -t[0]):
            loops.insert(j, L)
        if not moved and not inserted and tried_refine:
            trace.status = "stalled"
            break
    energies = np.array([L.energy() for L in loops])
    k = int(np.argmax(energies))
    critical = loops[k]
    level = float(energies[k])
    if level < eps0:
        raise LevelCollapseError(
            f"sweep maximum energy {level:.3e} below {eps0:.3e}: min-max level ~ 0")
    report = lagrange_residual(model, critical.control, critical.basepoint,
                               klass=critical.klass, substeps=cfg.substeps,
                               tol_loop=max(10 * cfg.tol_loop, 1e-8))
    return level, critical, report, trace


# ---------------------------------------------------------------------------
# small-energy contraction
# ---------------------------------------------------------------------------

def contract_small_sweep(model: Model, sweep: Sweep, eps: float,
                         cfg: SolverConfig = SolverConfig(),
                         n_slices: Optional[int] = None) -> List[List[Loop]]:
    """Contract a low-energy sweep to constant loops through closed slices.

    Each loop's state samples are shrunk linearly toward the basepoint,
    reprojected to the frame by the minimal control and re-closed by
    restoration. A slice that fails to close, leaves the frame span, or
    exceeds the energy bound aborts the contraction; a loop with nonzero
    deck element can never pass the energy bound.
    """
    if n_slices is None:
        n_slices = cfg.contract_slices
    sup = max((L.energy() for L in sweep.loops), default=0.0)
    if sup > eps:
        raise ContractionFailureError(
            f"small-energy hypothesis violated: sup energy {sup:.3e} > eps {eps:.3e}")
    bound = cfg.contract_bound * eps
    out: List[List[Loop]] = []
    for idx, L in enumerate(sweep.loops):
        slices: List[Loop] = []
        if control_norm(L.control.values) < TOL_CONST:
            out.append(slices)
            continue
        path = integrate(model, L.control, L.basepoint, substeps=cfg.substeps)
        n = L.control.n
        for s in range(1, n_slices + 1):
            c = 1.0 - s / n_slices
            shrunk = L.basepoint + c * (path.states - L.basepoint)
            vel = (shrunk[1:] - shrunk[:-1]) * n
            try:
                u_s = minimal_control(model, shrunk[:-1], vel)
                cand = restore_constraint(model, Loop(u_s, L.basepoint, L.klass), cfg)
            except (NonHorizontalVelocityError, RestorationFailureError,
                    ChartDomainError) as e:
                raise ContractionFailureError(
                    f"loop {idx}, slice {s}/{n_slices}: {e}") from e
            if cand.energy() > bound:
                raise ContractionFailureError(
                    f"loop {idx}, slice {s}/{n_slices}: energy {cand.energy():.3e} "
                    f"exceeds bound {bound:.3e}")
            slices.append(cand)
        out.append(slices)
    return out


# ---------------------------------------------------------------------------
# seed and sweep construction
# ---------------------------------------------------------------------------

def class_seed_loop(model: Model, klass, n: int, rng=None, scale: float = 0.0,
                    cfg: SolverConfig = SolverConfig()) -> Loop:
    """Closed seed loop in a given deck class: lattice chord plus noise."""
    klass = np.asarray(klass, dtype=int)
    vals = np.tile(_chord_control(model, klass), (n, 1))
    if rng is not None and scale > 0:
        vals = vals + scale * rng.standard_normal(vals.shape)
    return restore_constraint(model, Loop(Control(vals), np.zeros(model.dim), klass), cfg)


def _chord_control(model: Model, klass: Array) -> Array:
    """Constant control whose frame image at 0 points along the lattice chord."""
    shift = klass_shift(model, klass)
    X0 = model.frame_eval(np.zeros(model.dim))
    v, *_ = np.linalg.lstsq(X0, shift, rcond=None)
    return v


def small_random_loops(model: Model, P: int, n: int, target_energy: float,
                       rng, cfg: SolverConfig = SolverConfig()) -> Sweep:
    """Class-0 sweep of random closed loops with sup energy ~ target."""
    loops = []
    for _ in range(P):
        g = rng.standard_normal((n, model.rank))
        g -= g.mean(axis=0)
        e = energy(Control(g))
        if e > 0:
            g *= np.sqrt(target_energy / e)
        loops.append(restore_constraint(
            model, Loop(Control(g), np.zeros(model.dim), np.zeros(model.dim, int)), cfg))
    return Sweep(loops)


def latitude_sweep(model: Model, P: int = 32, n: int = 64,
                   cfg: SolverConfig = SolverConfig()) -> Sweep:
    """Suspension family of latitude circles in the stereographic chart.

    The cycle runs pole to pole through latitude circles (the equator in
    the middle carries the maximal energy) and closes up through constant
    loops walking back across the chart, which is the suspension picture
    of the generating family. Only a cyclic family of this kind carries a
    min-max obstruction; a mere path of circles can slide across the
    sphere at small energy. The circle grid is graded by the mesh bound
    (P acts as a resolution floor; chart inflation near the far pole
    forces a finer grading than uniform polar angles would).

    Circles are seeded from midpoint samples of the constant-speed
    parametrization and restored to close exactly. Grading is uniform in
    the chart metric, so the circle count grows toward the far pole where
    chart lengths are inflated.
    """
    t = (np.arange(n) + 0.5) / n
    build_cfg = replace(cfg, capture_radius=max(cfg.capture_radius, 20.0))
    zero_klass = np.zeros(model.dim, int)
    link = 0.42 * cfg.delta_sweep

    def speed_of(rho):
        return 4.0 * np.pi * rho / (1.0 + rho * rho)

    # march rho so consecutive circles differ by at most `link` in the
    # product metric; stop once the control norm itself is below `link`,
    # where the handoff to constant loops is mesh-legal
    rho_grid = [0.05]
    while True:
        rho = rho_grid[-1]
        if rho > 1.0 and speed_of(rho) < link:
            break
        dspeed = abs(4.0 * np.pi * (1.0 - rho * rho) / (1.0 + rho * rho) ** 2)
        rho_grid.append(rho + link / max(1.0, dspeed))
    loops = []
    for rho in rho_grid:
        # chord-sampled circle: the seed polygon closes by construction, so
        # the raw closure gap stays small even at large chart radius
        knots = rho * np.stack([np.cos(2 * np.pi * np.arange(n + 1) / n),
                                np.sin(2 * np.pi * np.arange(n + 1) / n)], axis=1)
        chords = (knots[1:] - knots[:-1]) * n
        mids = 0.5 * (knots[1:] + knots[:-1])
        lam = 0.5 * (1.0 + np.sum(mids ** 2, axis=1))
        vals = chords / lam[:, None]
        loops.append(restore_constraint(
            model, Loop(Control(vals), knots[0].copy(), zero_klass), build_cfg))
    x_far, x_near = loops[-1].basepoint, loops[0].basepoint
    bridge = int(np.ceil(np.linalg.norm(x_far - x_near) / link))
    for b in range(bridge):
        base = x_far + (x_near - x_far) * b / bridge
        loops.append(Loop(Control(np.zeros((n, model.rank))), base, zero_klass))
    return Sweep(loops, cyclic=True)


def rotating_sweep(model: Model, basepoint, P: int = 32, n: int = 64,
                   rho_min: float = 0.8, rho_max: float = 9.2,
                   cfg: SolverConfig = SolverConfig()) -> Sweep:
    """Mirrored family of restored rotating-control loops.

    Seeds u(t) = rho (cos 2 pi t, sin 2 pi t) are re-closed by restoration;
    the restored family interpolates from near-constant loops up to the
    closed geodesic with a uniformly precessing control when the model
    carries one. The amplitude marches rho_min -> rho_max adaptively so
    consecutive restored rungs respect the mesh bound (P sets the coarsest
    grading), and the sweep traverses the ladder up and back, making it
    cyclic with low-energy ends.
    """
    basepoint = np.asarray(basepoint, dtype=float)
    build_cfg = replace(cfg, capture_radius=max(cfg.capture_radius, 3.0))
    t = (np.arange(n) + 0.5) / n
    pattern = np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], axis=1)

    def rung(rho):
        vals = np.zeros((n, model.rank))
        vals[:, :2] = rho * pattern
        return restore_constraint(
            model, Loop(Control(vals), basepoint, np.zeros(model.dim, int)),
            build_cfg)

    step0 = (rho_max - rho_min) / max(P // 2 - 1, 1)
    rungs = [rung(rho_min)]
    rho, step = rho_min, step0
    while rho < rho_max - 1e-12:
        step = min(step, rho_max - rho)
        try:
            cand = rung(rho + step)
            ok = loop_distance(rungs[-1], cand) <= 0.55 * cfg.delta_sweep
        except (RestorationFailureError, ChartDomainError):
            ok = False
        if not ok:
            step *= 0.5
            if step < step0 / 256:
                raise MeshFailureError(
                    f"rotating sweep: family not resolvable near rho = {rho:.3g}")
            continue
        rungs.append(cand)
        rho += step
        step = min(2.0 * step, step0)
    return Sweep(rungs + rungs[::-1])
