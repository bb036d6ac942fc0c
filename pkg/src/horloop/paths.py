"""Control-space calculus for horizontal paths.

Horizontal paths are represented by piecewise-constant controls on N
uniform subintervals of [0,1] together with a basepoint. The Cauchy
problem is integrated with the classical 4th-order one-step scheme using
a fixed number of substeps per control interval, and the endpoint
Jacobians are obtained by differentiating that discretization exactly:
the per-substep stage derivatives are chained, so the returned matrices
are the derivatives of the discrete endpoint map to roundoff. This is
what makes projected gradients and Gauss-Newton restorations below
behave like textbook methods on a finite-dimensional problem.

The weighted L2 inner product on controls is <u, v> = (1/N) sum_j u_j.v_j,
and every adjoint below is taken with respect to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import (ChartDomainError, NonHorizontalVelocityError,
                     RankMismatchError, SteeringFailureError)
from .models import Model

Array = np.ndarray

DEFAULT_SUBSTEPS = 4
TOL_SPAN = 1e-8
TOL_ENDPOINT = 1e-9


@dataclass
class Control:
    """Piecewise-constant control on N uniform subintervals of [0,1]."""

    values: Array

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    def inner(self, other: "Control") -> float:
        return float(np.sum(self.values * other.values) / self.n)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) / self.n))

    def copy(self) -> "Control":
        return Control(self.values.copy())


def control_inner(a: Array, b: Array) -> float:
    """Weighted L2 product of two control-shaped arrays."""
    a = np.asarray(a, dtype=float)
    return float(np.sum(a * np.asarray(b, dtype=float)) / a.shape[0])


def control_norm(a: Array) -> float:
    return float(np.sqrt(np.sum(np.asarray(a, dtype=float) ** 2) / np.asarray(a).shape[0]))


@dataclass
class HorizontalPath:
    """Integrated samples of a horizontal path, with optional sensitivities."""

    control: Control
    basepoint: Array
    states: Array                      # (N+1, dim) knots
    duration: float = 1.0
    jac_flow: Optional[Array] = None   # (dim, dim) d endpoint / d basepoint
    jac_control: Optional[Array] = None  # (dim, N*rank), interval-major columns

    @property
    def endpoint(self) -> Array:
        return self.states[-1]


@dataclass
class EndpointJacobians:
    """Derivatives of the discrete endpoint map."""

    jac_control: Array   # (dim, N*rank)
    jac_flow: Array      # (dim, dim)
    n: int
    rank: int


def energy(u: Control, duration: float = 1.0) -> float:
    """Energy (1/2) int |u|^2 over [0, duration] of a piecewise-constant control."""
    return 0.5 * duration * float(np.sum(u.values ** 2)) / u.n


def _rk4_interval(model, x, u, h, substeps, t0, want_jac):
    """Advance one control interval; optionally chain stage derivatives.

    Returns (x_end, M, B) where M = dx_end/dx_start and B = dx_end/du are
    exact derivatives of the discrete step (None when not requested).
    """
    m = model.dim
    frame = model.frame_eval
    fjac = model.frame_jacobian_eval
    M = np.eye(m) if want_jac else None
    B = np.zeros((m, u.shape[0])) if want_jac else None
    t = t0
    for _ in range(substeps):
        F1 = frame(x); k1 = F1 @ u
        x2 = x + 0.5 * h * k1
        F2 = frame(x2); k2 = F2 @ u
        x3 = x + 0.5 * h * k2
        F3 = frame(x3); k3 = F3 @ u
        x4 = x + h * k3
        F4 = frame(x4); k4 = F4 @ u
        x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if want_jac:
            D1 = np.tensordot(u, fjac(x), axes=(0, 0))
            D2 = np.tensordot(u, fjac(x2), axes=(0, 0))
            D3 = np.tensordot(u, fjac(x3), axes=(0, 0))
            D4 = np.tensordot(u, fjac(x4), axes=(0, 0))
            A1 = D1
            A2 = D2 @ (np.eye(m) + 0.5 * h * A1)
            A3 = D3 @ (np.eye(m) + 0.5 * h * A2)
            A4 = D4 @ (np.eye(m) + h * A3)
            Mstep = np.eye(m) + (h / 6.0) * (A1 + 2.0 * A2 + 2.0 * A3 + A4)
            B1 = F1
            B2 = F2 + 0.5 * h * (D2 @ B1)
            B3 = F3 + 0.5 * h * (D3 @ B2)
            B4 = F4 + h * (D4 @ B3)
            Bstep = (h / 6.0) * (B1 + 2.0 * B2 + 2.0 * B3 + B4)
            B = Mstep @ B + Bstep
            M = Mstep @ M
        x = x_new
        t += h
        model.check_point(x, time=t)
    return x, M, B


def integrate(model: Model, u: Control, x0: Array, substeps: int = DEFAULT_SUBSTEPS,
              duration: float = 1.0, jacobians: bool = False) -> HorizontalPath:
    """Solve the Cauchy problem x' = sum_i u_i X_i(x) from x0.

    With ``jacobians=True`` the returned path carries the exact derivatives
    of the discrete endpoint with respect to every control coefficient and
    the basepoint.
    """
    model.check_rank(u.rank)
    x0 = np.asarray(x0, dtype=float)
    model.check_point(x0)
    n, l, m = u.n, u.rank, model.dim
    h = duration / (n * substeps)
    states = np.empty((n + 1, m))
    states[0] = x0
    x = x0.copy()
    Ms = [] if jacobians else None
    Bs = [] if jacobians else None
    for j in range(n):
        x, M, B = _rk4_interval(model, x, u.values[j], h, substeps,
                                j * duration / n, jacobians)
        states[j + 1] = x
        if jacobians:
            Ms.append(M)
            Bs.append(B)
    path = HorizontalPath(control=u, basepoint=x0, states=states, duration=duration)
    if jacobians:
        jac_control = np.empty((m, n * l))
        P = np.eye(m)
        for j in range(n - 1, -1, -1):
            jac_control[:, j * l:(j + 1) * l] = P @ Bs[j]
            P = P @ Ms[j]
        path.jac_control = jac_control
        path.jac_flow = P
    return path


def endpoint_jacobians(model: Model, u: Control, x0: Array,
                       substeps: int = DEFAULT_SUBSTEPS,
                       duration: float = 1.0) -> EndpointJacobians:
    """Exact derivatives of the discrete endpoint map at (u, x0)."""
    path = integrate(model, u, x0, substeps=substeps, duration=duration, jacobians=True)
    return EndpointJacobians(jac_control=path.jac_control, jac_flow=path.jac_flow,
                             n=u.n, rank=u.rank)


def adjoint_apply(jacs: EndpointJacobians, lam: Array) -> Tuple[Array, Array]:
    """Pull a covector back through the endpoint differential.

    Returns (control part, base part) of dF* lam, adjoint with respect to
    the weighted control product: the control part carries the factor N
    that cancels the 1/N quadrature weight, so that
    <dF* lam, du>_L2 = lam . (dF du) for every variation du.
    """
    lam = np.asarray(lam, dtype=float)
    ctrl = jacs.n * (jacs.jac_control.T @ lam).reshape(jacs.n, jacs.rank)
    base = jacs.jac_flow.T @ lam
    return ctrl, base


def minimal_control(model: Model, path_states: Array, velocities: Array,
                    tol_span: float = TOL_SPAN) -> Control:
    """Pointwise least-norm control generating the given interval velocities.

    On each interval the velocity must lie in the span of the frame at the
    matching state sample; the minimum-norm least-squares solution is the
    discrete counterpart of the minimal control of a horizontal path.
    """
    states = np.asarray(path_states, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    n = velocities.shape[0]
    out = np.empty((n, model.rank))
    worst = (-1, 0.0)
    for j in range(n):
        X = model.frame_eval(states[j])
        v, *_ = np.linalg.lstsq(X, velocities[j], rcond=None)
        r = float(np.linalg.norm(X @ v - velocities[j]))
        if r > worst[1]:
            worst = (j, r)
        out[j] = v
    if worst[1] > tol_span:
        raise NonHorizontalVelocityError(
            f"velocity not in frame span (interval {worst[0]}, residual {worst[1]:.3e})",
            worst_interval=worst[0], residual=worst[1])
    return Control(out)


def path_velocities(model: Model, path: HorizontalPath) -> Array:
    """Interval velocities of an integrated path, sampled at the left knots."""
    n = path.control.n
    out = np.empty((n, model.dim))
    for j in range(n):
        out[j] = model.frame_eval(path.states[j]) @ path.control.values[j]
    return out


# ---------------------------------------------------------------------------
# concatenation algebra
# ---------------------------------------------------------------------------

def _average_step_function(edges: Array, values: Array, n_out: int) -> Array:
    """Exact interval averages of a step function on a uniform n_out grid."""
    l = values.shape[1]
    out = np.zeros((n_out, l))
    for k in range(values.shape[0]):
        a, b = edges[k], edges[k + 1]
        if b <= a:
            continue
        i0 = max(int(np.floor(a * n_out + 1e-12)), 0)
        i1 = min(int(np.ceil(b * n_out - 1e-12)), n_out)
        for i in range(i0, i1):
            lo = max(a, i / n_out)
            hi = min(b, (i + 1) / n_out)
            if hi > lo:
                out[i] += values[k] * (hi - lo)
    return out * n_out


def resample(u: Control, n_new: int) -> Control:
    """Re-grid a control by exact interval averaging (refinement is exact)."""
    edges = np.arange(u.n + 1) / u.n
    return Control(_average_step_function(edges, u.values, n_new))


def concatenate(u: Control, v: Control, T: float, n_out: Optional[int] = None) -> Control:
    """Time-compress u (on [0,1]) and v (on [0,T]) into a single unit control.

    The first factor is squeezed into [0, 1/(T+1)] and scaled by (T+1),
    the second into the remainder; flowing the result for unit time equals
    flowing u for time 1 then v for time T. The output is re-gridded to
    ``n_out`` by interval averaging, which is exact whenever the grids
    align (v.n == u.n * T with n_out = u.n + v.n).
    """
    if u.rank != v.rank:
        raise RankMismatchError("concatenate: rank mismatch")
    if T < 0:
        raise ValueError("concatenate: T must be nonnegative")
    if n_out is None:
        n_out = u.n + (v.n if T > 0 else 0)
    s = T + 1.0
    if T == 0:
        return resample(u, n_out)
    edges = np.concatenate([np.arange(u.n + 1) / (u.n * s),
                            1.0 / s + (T / s) * (np.arange(1, v.n + 1) / v.n)])
    values = np.vstack([s * u.values, s * v.values])
    return Control(_average_step_function(edges, values, n_out))


def backward(u: Control) -> Control:
    """Time-reversed control; flowing it from the endpoint returns to the start.

    Reversal negates the values: the curve t -> gamma(T - t) has velocity
    -gamma'(T - t), so reordering alone would not retrace the path. B is an
    exact involution.
    """
    return Control(-u.values[::-1])


def concat_reverse(u: Control, v: Control, T: float, n_out: Optional[int] = None) -> Control:
    """Unit-time control that flows u on [0,T] first and then v on [0,1].

    Defined as the time reversal of the concatenation of the reversed
    factors; at T = 0 it reduces to v alone.
    """
    if T == 0:
        return resample(v, n_out if n_out is not None else v.n)
    return backward(concatenate(backward(v), backward(u), T, n_out=n_out))


# ---------------------------------------------------------------------------
# local steering
# ---------------------------------------------------------------------------

def _steer_kick(n: int, rank: int, scale: float, swap: bool) -> Array:
    t = (np.arange(n) + 0.5) / n
    kick = np.zeros((n, rank))
    a, b = np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)
    if swap:
        a, b = b, a
    kick[:, 0] = scale * a
    if rank > 1:
        kick[:, 1] = scale * b
    return kick


def steer_local(model: Model, x: Array, y: Array, n: int = 16,
                substeps: int = DEFAULT_SUBSTEPS, tol_endpoint: float = TOL_ENDPOINT,
                max_iter: int = 60) -> Tuple[Control, float]:
    """Control joining two nearby chart points, by damped Gauss-Newton.

    Starts from the zero control and least-squares Newton steps on the
    endpoint residual. At bracket-degenerate starts (the zero control can
    be a critical point of the endpoint map) a deterministic oscillatory
    kick moves the iterate off the singular set; both orientations are
    tried and the better one kept. Returns (control, time horizon).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y - x) > model.steer_radius:
        raise SteeringFailureError(
            f"{model.name}: steering targets too far apart "
            f"({np.linalg.norm(y - x):.3g} > {model.steer_radius:.3g})")
    u = Control(np.zeros((n, model.rank)))
    if np.allclose(x, y, rtol=0.0, atol=1e-15):
        return u, 0.0
    res = np.inf
    for it in range(max_iter):
        path = integrate(model, u, x, substeps=substeps, jacobians=True)
        r = path.endpoint - y
        res = float(np.linalg.norm(r))
        if res < tol_endpoint:
            return u, 1.0
        step, *_ = np.linalg.lstsq(path.jac_control, -r, rcond=None)
        step = step.reshape(n, model.rank)
        if np.linalg.norm(step) < 1e-15:
            # singular start: try both kick orientations, keep the better
            best = None
            for swap in (False, True):
                cand = Control(u.values + _steer_kick(n, model.rank, np.sqrt(res), swap))
                rc = np.linalg.norm(integrate(model, cand, x, substeps=substeps).endpoint - y)
                if best is None or rc < best[0]:
                    best = (rc, cand)
            u = best[1]
            continue
        alpha = 1.0
        accepted = False
        for _ in range(30):
            cand = Control(u.values + alpha * step)
            try:
                rc = np.linalg.norm(integrate(model, cand, x, substeps=substeps).endpoint - y)
            except ChartDomainError:
                rc = np.inf
            if rc < res:
                u = cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    raise SteeringFailureError(
        f"{model.name}: steering stalled at residual {res:.3e} after {max_iter} iterations")


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def path_csv_text(model: Model, path: HorizontalPath, klass: Optional[Array] = None) -> str:
    """Plot-ready CSV: one row per interval midpoint, controls held constant.

    The metadata comment line carries the exact basepoint, deck element and
    grid so the loop can be reconstructed bit-for-bit.
    """
    n, l, m = path.control.n, path.control.rank, model.dim
    if klass is None:
        klass = np.zeros(m, dtype=int)
    fmt = lambda v: ",".join("%.17g" % float(c) for c in v)
    lines = [
        "# horloop-loop-v1 model=%s N=%d rank=%d dim=%d duration=%.17g "
        "basepoint=%s klass=%s" % (
            model.name, n, l, m, path.duration, fmt(path.basepoint),
            ",".join(str(int(k)) for k in klass)),
        ",".join(["t"] + [f"x_{i+1}" for i in range(m)] + [f"u_{i+1}" for i in range(l)]),
    ]
    mid_states = 0.5 * (path.states[:-1] + path.states[1:])
    for j in range(n):
        t = (j + 0.5) / n * path.duration
        lines.append(fmt([t]) + "," + fmt(mid_states[j]) + "," + fmt(path.control.values[j]))
    return "\n".join(lines) + "\n"
