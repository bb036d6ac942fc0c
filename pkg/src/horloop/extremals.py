"""Normal extremals: Hamiltonian flow, periodic shooting, geodesic certificates.

A closed horizontal loop is certified as a geodesic through the two
first-order conditions

    lam . d_u F = u      and      lam . (d_x phi - 1) = 0

for a single covector lam: the first says the control is the projection of
a normal extremal, the second that the extremal is periodic. Both residuals
are evaluated with the exact discrete Jacobians from :mod:`horloop.paths`,
so a zero of the discrete projected gradient gives a certificate at the
same magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import (ConstraintViolationError, DegenerateSolutionError,
                     ShootingFailureError)
from .models import Model, nearest_lattice_shift
from .paths import (Control, EndpointJacobians, adjoint_apply, control_norm,
                    energy, integrate)

Array = np.ndarray

TOL_SHOOT = 1e-9
TOL_GEO = 1e-6
TOL_SPEED = 1e-6      # relative speed variation accepted for a geodesic
TOL_CONST = 1e-8      # L2 control norm below which a loop counts as constant
TOL_LOOP = 1e-8


@dataclass
class ExtremalState:
    """Point-covector pair in chart coordinates."""

    x: Array
    lam: Array

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)


@dataclass
class GeodesicReport:
    """Certificate data for a closed loop."""

    energy: float
    speed_variation: float
    lagrange_residual_control: float
    lagrange_residual_base: float
    multiplier: Array
    constant_curve: bool = False

    def is_geodesic(self, tol_geo: float = TOL_GEO, tol_speed: float = TOL_SPEED) -> bool:
        if self.constant_curve:
            return False
        mean_speed = max(np.sqrt(2.0 * self.energy), 1e-300)
        return (self.lagrange_residual_control < tol_geo
                and self.lagrange_residual_base < tol_geo
                and self.speed_variation / mean_speed < tol_speed)


def hamiltonian(model: Model, s: ExtremalState) -> float:
    """Sub-Riemannian Hamiltonian H = (1/2) sum_i <lam, X_i(x)>^2."""
    model.check_point(s.x)
    p = model.frame_eval(s.x).T @ s.lam
    return 0.5 * float(p @ p)


def _hamilton_rhs(model: Model, x: Array, lam: Array) -> Tuple[Array, Array]:
    X = model.frame_eval(x)
    u = X.T @ lam
    xdot = X @ u
    J = model.frame_jacobian_eval(x)          # (rank, m, m)
    lamdot = -np.einsum("i,irc,r->c", u, J, lam)
    return xdot, lamdot


def extremal_flow(model: Model, s0: ExtremalState, T: float,
                  steps: int = 512) -> Tuple[Array, Array, Array]:
    """Integrate Hamilton's equations with the 4th-order one-step scheme.

    Returns (times, xs, lams) with arrays of shape (steps+1, dim). The
    projected curve is horizontal with control u_i(t) = <lam(t), X_i(x(t))>.
    """
    model.check_point(s0.x)
    h = T / steps
    xs = np.empty((steps + 1, model.dim))
    lams = np.empty((steps + 1, model.dim))
    xs[0], lams[0] = s0.x, s0.lam
    x, lam = s0.x.copy(), s0.lam.copy()
    for k in range(steps):
        k1x, k1l = _hamilton_rhs(model, x, lam)
        k2x, k2l = _hamilton_rhs(model, x + 0.5 * h * k1x, lam + 0.5 * h * k1l)
        k3x, k3l = _hamilton_rhs(model, x + 0.5 * h * k2x, lam + 0.5 * h * k2l)
        k4x, k4l = _hamilton_rhs(model, x + h * k3x, lam + h * k3l)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        lam = lam + (h / 6.0) * (k1l + 2 * k2l + 2 * k3l + k4l)
        model.check_point(x, time=(k + 1) * h)
        xs[k + 1], lams[k + 1] = x, lam
    return np.linspace(0.0, T, steps + 1), xs, lams


def periodicity_residual(model: Model, s0: ExtremalState, T: float,
                         steps: int = 512) -> Array:
    """(x(T) - x0 mod lattice, lam(T) - lam0); zero iff the extremal closes."""
    _, xs, lams = extremal_flow(model, s0, T, steps=steps)
    dx = xs[-1] - s0.x
    if model.lattice is not None:
        dx = dx - model.lattice @ nearest_lattice_shift(model, dx)
    return np.concatenate([dx, lams[-1] - s0.lam])


def extremal_to_loop(model: Model, s0: ExtremalState, T: float, n: int,
                     steps_per_interval: int = 8) -> Tuple[Control, Array, Array]:
    """Sample a closed extremal as a unit-interval loop.

    The control is read off at interval midpoints and rescaled to unit
    time; the matching multiplier for the unit-interval loop constraint is
    T * lam(T).
    """
    steps = n * steps_per_interval
    _, xs, lams = extremal_flow(model, s0, T, steps=steps)
    vals = np.empty((n, model.rank))
    for j in range(n):
        k = j * steps_per_interval + steps_per_interval // 2
        vals[j] = T * (model.frame_eval(xs[k]).T @ lams[k])
    return Control(vals), xs[0].copy(), T * lams[-1]


def _close_sampled_loop(model: Model, u: Control, x: Array, substeps: int = 4,
                        tol: float = 1e-10, max_iter: int = 25) -> Control:
    """Minimum-norm Gauss-Newton closure of a nearly-closed sampled loop.

    Only the control moves (the basepoint is the sampled orbit start); used
    to turn midpoint samples of a periodic extremal into an exactly closed
    discrete loop before certification.
    """
    vals = u.values.copy()
    for _ in range(max_iter):
        path = integrate(model, Control(vals), x, substeps=substeps, jacobians=True)
        gap = path.endpoint - x
        if model.lattice is not None:
            gap = gap - model.lattice @ nearest_lattice_shift(model, gap)
        if np.linalg.norm(gap) < tol:
            return Control(vals)
        Jc = path.jac_control
        gram = u.n * (Jc @ Jc.T)
        c = np.linalg.solve(gram, -gap)
        vals = vals + u.n * (Jc.T @ c).reshape(vals.shape)
    return Control(vals)


def shoot_closed(model: Model, guess: ExtremalState, T_guess: float,
                 steps: int = 512, tol_shoot: float = TOL_SHOOT,
                 max_iter: int = 60, fd_step: float = 1e-6,
                 n_report: int = 64):
    """Close a normal extremal by damped Newton on the periodicity residual.

    The system is augmented with the unit-speed normalization H = 1/2
    (the period becomes an unknown) and a transversal anchor fixing the
    time-translation gauge; the rectangular system is solved in the
    least-squares sense. On success returns (state, T, report) where the
    report certifies the unit-interval discretization of the orbit.
    """
    H0 = hamiltonian(model, guess)
    if H0 <= 1e-12:
        raise DegenerateSolutionError("shoot_closed: guess has H ~ 0")
    # move the guess onto the H = 1/2 level, preserving the traversed arc,
    # so unit-interval multipliers (lam, T=1) are valid guesses
    s0 = np.sqrt(2.0 * H0)
    guess = ExtremalState(guess.x, guess.lam / s0)
    T_guess = float(T_guess) * s0
    x_g = guess.x.copy()
    v_g = model.frame_eval(x_g) @ (model.frame_eval(x_g).T @ guess.lam)
    nv = np.linalg.norm(v_g)
    if nv < 1e-12:
        raise DegenerateSolutionError("shoot_closed: guess velocity vanishes")
    v_g /= nv
    m = model.dim

    def residual(z):
        s = ExtremalState(z[:m], z[m:2 * m])
        T = z[2 * m]
        per = periodicity_residual(model, s, T, steps=steps)
        return np.concatenate([per,
                               [hamiltonian(model, s) - 0.5],
                               [(s.x - x_g) @ v_g]])

    z = np.concatenate([guess.x, guess.lam, [T_guess]])
    hist = []
    r = residual(z)
    for _ in range(max_iter):
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        if rn < tol_shoot:
            break
        J = np.empty((len(r), len(z)))
        for k in range(len(z)):
            dz = np.zeros_like(z)
            dz[k] = fd_step * max(1.0, abs(z[k]))
            J[:, k] = (residual(z + dz) - residual(z - dz)) / (2 * dz[k])
        # rank-deficient at degenerate (e.g. Zoll-like) orbit families; the
        # relative cutoff keeps finite-difference noise out of the step
        step, *_ = np.linalg.lstsq(J, -r, rcond=1e-5)
        alpha, accepted = 1.0, False
        for _ in range(30):
            zc = z + alpha * step
            if zc[2 * m] > 1e-6:
                rc = residual(zc)
                if np.linalg.norm(rc) < rn:
                    z, r = zc, rc
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise ShootingFailureError(
                f"shoot_closed: no descent at residual {rn:.3e}", residual_history=hist)
    else:
        raise ShootingFailureError(
            f"shoot_closed: residual {hist[-1]:.3e} after {max_iter} iterations",
            residual_history=hist)
    s = ExtremalState(z[:m], z[m:2 * m])
    T = float(z[2 * m])
    if np.linalg.norm(s.lam) < 1e-8:
        raise DegenerateSolutionError("shoot_closed: converged to lam = 0")
    u, x0, lam_loop = extremal_to_loop(model, s, T, n_report)
    u = _close_sampled_loop(model, u, x0)
    report = lagrange_residual(model, u, x0, lam=lam_loop, tol_loop=1e-8)
    return s, T, report


def lagrange_residual(model: Model, u: Control, x: Array, lam: Optional[Array] = None,
                      klass: Optional[Array] = None, substeps: int = 4,
                      tol_loop: float = TOL_LOOP) -> GeodesicReport:
    """Evaluate the two first-order geodesic conditions on a closed loop.

    When no multiplier is supplied it is recovered by least squares from
    lam . d_u F = u. Constant loops are flagged and never certified.
    """
    x = np.asarray(x, dtype=float)
    path = integrate(model, u, x, substeps=substeps, jacobians=True)
    gap = path.endpoint - x
    if klass is not None and model.lattice is not None:
        gap = gap - model.lattice @ np.asarray(klass, dtype=int)
    elif model.lattice is not None:
        gap = gap - model.lattice @ nearest_lattice_shift(model, gap)
    if np.linalg.norm(gap) > tol_loop:
        raise ConstraintViolationError(
            f"lagrange_residual: loop is open (|G| = {np.linalg.norm(gap):.3e})")
    jacs = EndpointJacobians(jac_control=path.jac_control, jac_flow=path.jac_flow,
                             n=u.n, rank=u.rank)
    speeds = np.linalg.norm(u.values, axis=1)
    if control_norm(u.values) < TOL_CONST:
        return GeodesicReport(energy=energy(u), speed_variation=0.0,
                              lagrange_residual_control=0.0,
                              lagrange_residual_base=0.0,
                              multiplier=np.zeros(model.dim), constant_curve=True)
    if lam is None:
        # least-squares multiplier for N Jc^T lam = vec(u)
        lam, *_ = np.linalg.lstsq(u.n * path.jac_control.T, u.values.ravel(), rcond=None)
    lam = np.asarray(lam, dtype=float)
    ctrl, base = adjoint_apply(jacs, lam)
    res_ctrl = control_norm(ctrl - u.values)
    res_base = float(np.linalg.norm(base - lam))
    return GeodesicReport(energy=energy(u),
                          speed_variation=float(speeds.max() - speeds.min()),
                          lagrange_residual_control=res_ctrl,
                          lagrange_residual_base=res_base,
                          multiplier=lam)
