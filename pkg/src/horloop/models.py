"""Built-in sub-Riemannian structures given by frames of vector fields.

A model is a single chart ``R^dim`` carrying ``rank`` vector fields whose
span is the distribution; the fields are declared orthonormal, which fixes
the metric. Quotient models (tori) carry a lattice of deck translations.
Models with a closed-form endpoint map also carry an exact oracle used to
validate the numerical integrator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ChartDomainError, RankMismatchError, UnsupportedOperationError

Array = np.ndarray


@dataclass(frozen=True)
class Model:
    """A frame of vector fields in a chart, plus optional quotient data.

    frame_eval(x) returns the dim x rank matrix whose column i is the
    i-th frame field at x. frame_jacobian_eval(x) returns an array of
    shape (rank, dim, dim); entry [i, r, c] is d(X_i)_r / dx_c.
    """

    name: str
    dim: int
    rank: int
    frame_eval: Callable[[Array], Array]
    frame_jacobian_eval: Callable[[Array], Array]
    lattice: Optional[Array] = None           # (dim, dim), generators as columns
    oracle: Optional[Callable[[Array, Array], Array]] = None
    chart_radius: float = np.inf
    scale: float = 1.0
    steer_radius: float = 1.0
    contact: bool = False

    def check_point(self, x: Array, time: Optional[float] = None) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ChartDomainError(
                f"{self.name}: point has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > self.chart_radius:
            when = "" if time is None else f" at t={time:.6g}"
            raise ChartDomainError(
                f"{self.name}: point left the chart domain{when}", exit_time=time)

    def check_rank(self, l: int) -> None:
        if l != self.rank:
            raise RankMismatchError(
                f"{self.name}: control rank {l} != frame rank {self.rank}")


@dataclass(frozen=True)
class Point:
    """Chart coordinates plus the deck-transformation sector of a lift."""

    coords: Array
    klass: Optional[Array] = None


def frame_at(model: Model, x: Array) -> Array:
    """Evaluate the frame matrix at a chart point (columns = fields)."""
    x = np.asarray(x, dtype=float)
    model.check_point(x)
    return model.frame_eval(x)


def heisenberg_bracket_matrix(a: int) -> Array:
    """Block-diagonal skew matrix diag(J2, ..., J2), J2 = [[0,1],[-1,0]]."""
    j2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(a), j2)


def heisenberg_endpoint_exact(a: int, u) -> Array:
    """Endpoint of a piecewise-constant control in the rank-2a Heisenberg chart.

    Computed by the per-interval closed form: on each interval the
    horizontal part moves linearly and the vertical increment is
    h * <u_j, A w_j> (the quadratic self-term vanishes by skew-symmetry).
    No ODE solve is involved.
    """
    values = np.asarray(getattr(u, "values", u), dtype=float)
    if values.ndim != 2 or values.shape[1] != 2 * a:
        raise RankMismatchError(
            f"heisenberg({a}): control rank {values.shape} != {2 * a}")
    A = heisenberg_bracket_matrix(a)
    n = values.shape[0]
    h = 1.0 / n
    w = np.zeros(2 * a)
    z = 0.0
    for j in range(n):
        uj = values[j]
        z += h * uj @ (A @ w)
        w = w + h * uj
    return np.concatenate([w, [z]])


def group_translate(a: int, x: Array, y: Array) -> Array:
    """Left translation L(x, y) of the rank-2a Heisenberg group chart.

    Affine in each argument, L(x, 0) = x, L(0, y) = y, and the flow from
    basepoint x of any control equals L(x, endpoint-from-zero).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = 2 * a + 1
    if x.shape != (m,) or y.shape != (m,):
        raise RankMismatchError(f"group_translate: expected vectors of length {m}")
    A = heisenberg_bracket_matrix(a)
    out = x + y
    out[-1] = x[-1] + y[-1] + y[:-1] @ (A @ x[:-1])
    return out


def reduce_mod_lattice(model: Model, x: Array) -> Point:
    """Reduce a chart point into the fundamental domain of the lattice.

    Returns the reduced coordinates together with the integer coefficient
    vector that was removed (the deck element).
    """
    if model.lattice is None:
        raise UnsupportedOperationError(f"{model.name}: model has no lattice")
    x = np.asarray(x, dtype=float)
    coeff = np.linalg.solve(model.lattice, x)
    klass = np.floor(coeff).astype(int)
    frac = coeff - klass
    # rounding can land frac exactly on the upper cell face; fold it back
    on_face = frac >= 1.0
    klass[on_face] += 1
    frac[on_face] = 0.0
    return Point(coords=model.lattice @ frac, klass=klass)


def nearest_lattice_shift(model: Model, d: Array) -> Array:
    """Integer combination of generators closest to d (zero without lattice)."""
    if model.lattice is None:
        return np.zeros(model.dim, dtype=int)
    return np.rint(np.linalg.solve(model.lattice, np.asarray(d, dtype=float))).astype(int)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def heisenberg(a: int = 1) -> Model:
    """Heisenberg chart of dimension 2a+1: exact model for the contact normal form."""
    a = int(a)
    if a < 1:
        raise ValueError("heisenberg: a must be a positive integer")
    m = 2 * a + 1
    A = heisenberg_bracket_matrix(a)

    def frame(x):
        F = np.zeros((m, 2 * a))
        F[: 2 * a, :] = np.eye(2 * a)
        F[-1, :] = A @ x[: 2 * a]
        return F

    def frame_jac(x):
        J = np.zeros((2 * a, m, m))
        J[:, -1, : 2 * a] = A
        return J

    def oracle(values, x0):
        return group_translate(a, x0, heisenberg_endpoint_exact(a, values))

    return Model(name=f"heisenberg({a})", dim=m, rank=2 * a,
                 frame_eval=frame, frame_jacobian_eval=frame_jac,
                 oracle=oracle, scale=1.0, steer_radius=1.0, contact=True)


def flat_torus(m: int = 2) -> Model:
    """Flat torus R^m / 2*pi*Z^m with the identity frame (Riemannian limit)."""
    m = int(m)
    if m < 1:
        raise ValueError("flat_torus: m must be a positive integer")
    eye = np.eye(m)
    zeros = np.zeros((m, m, m))

    def oracle(values, x0):
        values = np.asarray(values, dtype=float)
        return np.asarray(x0, dtype=float) + values.mean(axis=0)

    return Model(name=f"flat_torus({m})", dim=m, rank=m,
                 frame_eval=lambda x: eye, frame_jacobian_eval=lambda x: zeros,
                 lattice=2.0 * np.pi * np.eye(m), oracle=oracle,
                 scale=2.0 * np.pi, steer_radius=3.0)


def contact_t3() -> Model:
    """Contact three-torus: frame d/dz and sin(z) d/dx + cos(z) d/dy."""

    def frame(x):
        z = x[2]
        return np.array([[0.0, np.sin(z)],
                         [0.0, np.cos(z)],
                         [1.0, 0.0]])

    def frame_jac(x):
        z = x[2]
        J = np.zeros((2, 3, 3))
        J[1, 0, 2] = np.cos(z)
        J[1, 1, 2] = -np.sin(z)
        return J

    def oracle(values, x0):
        values = np.asarray(values, dtype=float)
        x = np.asarray(x0, dtype=float).copy()
        h = 1.0 / values.shape[0]
        for u1, u2 in values:
            d = u1 * h
            if abs(d) > 1e-14:
                half = 0.5 * d
                s = np.sin(half) / half
            else:
                half = 0.5 * d
                s = 1.0
            x[0] += u2 * h * s * np.sin(x[2] + half)
            x[1] += u2 * h * s * np.cos(x[2] + half)
            x[2] += d
        return x

    return Model(name="contact_t3", dim=3, rank=2,
                 frame_eval=frame, frame_jacobian_eval=frame_jac,
                 lattice=2.0 * np.pi * np.eye(3), oracle=oracle,
                 scale=2.0 * np.pi, steer_radius=2.0, contact=True)


def round_s2(chart_radius: float = 80.0) -> Model:
    """Round unit sphere in a stereographic chart (Riemannian-limit mode).

    The conformal factor (1+|w|^2)/2 scales the identity frame; the chart
    misses one pole, so points beyond ``chart_radius`` are rejected.
    """

    def frame(x):
        lam = 0.5 * (1.0 + x @ x)
        return lam * np.eye(2)

    def frame_jac(x):
        J = np.zeros((2, 2, 2))
        J[0, 0, :] = x
        J[1, 1, :] = x
        return J

    return Model(name="round_s2", dim=2, rank=2,
                 frame_eval=frame, frame_jacobian_eval=frame_jac,
                 chart_radius=float(chart_radius), scale=np.pi, steer_radius=6.0)


def _quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                     w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                     w1 * y2 + y1 * w2 + z1 * x2 - x1 * z2,
                     w1 * z2 + z1 * w2 + x1 * y2 - y1 * x2])


def _quat_exp_im(v):
    n = np.linalg.norm(v)
    if n < 1e-300:
        return np.array([1.0, 0.0, 0.0, 0.0])
    return np.concatenate([[np.cos(n)], np.sin(n) * v / n])


def chart_to_quat(p: Array) -> Array:
    r2 = p @ p
    return np.concatenate([[(1.0 - r2) / (1.0 + r2)], 2.0 * p / (1.0 + r2)])


def quat_to_chart(q: Array) -> Array:
    if q[0] <= -1.0 + 1e-12:
        raise ChartDomainError("contact_s3: point at the chart pole")
    return q[1:] / (1.0 + q[0])


def contact_s3(chart_radius: float = 20.0) -> Model:
    """Standard contact structure on the 3-sphere in a stereographic chart.

    The frame is the pushforward of the two left-invariant quaternion
    fields q -> q*i and q -> q*j; the Reeb direction q*k is transverse.
    In chart coordinates both fields are quadratic polynomials.
    """

    def frame(p):
        p1, p2, p3 = p
        r2 = p @ p
        half = 0.5 * (1.0 - r2)
        return np.array([[half + p1 * p1, -p3 + p1 * p2],
                         [p3 + p1 * p2, half + p2 * p2],
                         [-p2 + p1 * p3, p1 + p2 * p3]])

    def frame_jac(p):
        p1, p2, p3 = p
        J = np.empty((2, 3, 3))
        J[0] = [[p1, -p2, -p3],
                [p2, p1, 1.0],
                [p3, -1.0, p1]]
        J[1] = [[p2, p1, -1.0],
                [-p1, p2, -p3],
                [1.0, p3, p2]]
        return J

    def oracle(values, x0):
        values = np.asarray(values, dtype=float)
        q = chart_to_quat(np.asarray(x0, dtype=float))
        h = 1.0 / values.shape[0]
        for u1, u2 in values:
            q = _quat_mul(q, _quat_exp_im(h * np.array([u1, u2, 0.0])))
        return quat_to_chart(q)

    return Model(name="contact_s3", dim=3, rank=2,
                 frame_eval=frame, frame_jacobian_eval=frame_jac,
                 oracle=oracle, chart_radius=float(chart_radius),
                 scale=np.pi, steer_radius=4.0, contact=True)


def flat_line_redundant() -> Model:
    """1-d flat model with a duplicated frame column (minimal-control tests)."""
    F = np.array([[1.0, 1.0]])
    zeros = np.zeros((2, 1, 1))

    def oracle(values, x0):
        values = np.asarray(values, dtype=float)
        return np.asarray(x0, dtype=float) + values.sum(axis=1).mean(keepdims=True)

    return Model(name="flat_line_redundant", dim=1, rank=2,
                 frame_eval=lambda x: F, frame_jacobian_eval=lambda x: zeros,
                 oracle=oracle)


def heisenberg_redundant() -> Model:
    """Heisenberg(1) with a redundant third column X3 = X1 + X2."""
    base = heisenberg(1)

    def frame(x):
        F2 = base.frame_eval(x)
        return np.column_stack([F2, F2[:, 0] + F2[:, 1]])

    def frame_jac(x):
        J2 = base.frame_jacobian_eval(x)
        return np.concatenate([J2, (J2[0] + J2[1])[None, :, :]], axis=0)

    return Model(name="heisenberg_redundant", dim=3, rank=3,
                 frame_eval=frame, frame_jacobian_eval=frame_jac, contact=True)


_BUILDERS = {
    "heisenberg": heisenberg,
    "flat_torus": flat_torus,
    "contact_t3": contact_t3,
    "round_s2": round_s2,
    "contact_s3": contact_s3,
    "flat_line_redundant": flat_line_redundant,
    "heisenberg_redundant": heisenberg_redundant,
}


def make_model(name: str, *params) -> Model:
    """Instantiate a built-in model by name and parameter list."""
    if name not in _BUILDERS:
        raise UnsupportedOperationError(
            f"unknown model '{name}' (available: {', '.join(sorted(_BUILDERS))})")
    return _BUILDERS[name](*params)
