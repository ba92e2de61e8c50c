"""Event geometry of the two-sphere table.

Positions are 6-vectors ``X = [x, xbar]`` and velocities ``V = [v, vbar]``.
The table is the closed set ``|x - xbar| >= eps``.  Every function accepts a
single state (shape ``(6,)``) or a batch (shape ``(N, 6)``) and returns a
result of matching rank.

Relative coordinates ``y = xbar - x`` and ``w = vbar - v`` carry all of the
geometry: the free line ``y + s w`` meets the sphere ``|.| = eps`` at the
roots of ``|w|^2 s^2 + 2 (y.w) s + |y|^2 - eps^2``.  For a point of the table
both roots share the sign of ``-y.w``, so pre/post classification reduces to
the sign of ``y.w``.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ._backend import INVALID, NON, POST, PRE, kernels
from .errors import Degenerate, InvalidState, NotInCone

RTOL = 1e-9
SQRT2 = np.sqrt(2.0)


class ConeClass(IntEnum):
    NON_COLLIDING = NON
    PRE_COLLISIONAL = PRE
    POST_COLLISIONAL = POST


class TableRegion(IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    EXTERIOR = 2


def _vec(a, n):
    a = np.asarray(a, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite component")
    return a


@dataclass(frozen=True)
class PhasePoint:
    """Centres and velocities of the two spheres."""

    x: np.ndarray
    xbar: np.ndarray
    v: np.ndarray
    vbar: np.ndarray

    def __post_init__(self):
        for name in ("x", "xbar", "v", "vbar"):
            object.__setattr__(self, name, _vec(getattr(self, name), 3))

    @classmethod
    def from_XV(cls, X, V):
        X = _vec(X, 6)
        V = _vec(V, 6)
        return cls(X[:3], X[3:], V[:3], V[3:])

    @classmethod
    def from_Z(cls, Z):
        Z = _vec(Z, 12)
        return cls(Z[0:3], Z[3:6], Z[6:9], Z[9:12])

    @property
    def X(self):
        return np.concatenate([self.x, self.xbar])

    @property
    def V(self):
        return np.concatenate([self.v, self.vbar])

    @property
    def Z(self):
        return np.concatenate([self.x, self.xbar, self.v, self.vbar])

    def __eq__(self, other):
        return isinstance(other, PhasePoint) and np.array_equal(self.Z, other.Z)

    def __hash__(self):
        return hash(self.Z.tobytes())


def as_batch(A, width=6):
    """Return ``(array of shape (N, width), was_single)``."""
    A = np.asarray(A, dtype=float)
    single = A.ndim == 1
    A = np.ascontiguousarray(A.reshape(-1, width))
    return A, single


def _pair(X, V):
    X, single = as_batch(X)
    V, _ = as_batch(V)
    if X.shape != V.shape:
        X, V = np.broadcast_arrays(X, V)
        X, V = np.ascontiguousarray(X), np.ascontiguousarray(V)
    return X, V, single


def _out(a, single):
    return a[0] if single else a


def switch(X):
    """Exchange the two centres: ``r([x, xbar]) = [xbar, x]``."""
    X = np.asarray(X, dtype=float)
    return np.concatenate([X[..., 3:], X[..., :3]], axis=-1)


def table_membership(X, eps=1.0, tol=RTOL):
    """Interior, Boundary or Exterior of the table for each position."""
    A, single = as_batch(X)
    d = np.linalg.norm(A[:, 3:] - A[:, :3], axis=1)
    region = np.full(d.shape, TableRegion.EXTERIOR, dtype=np.int8)
    region[d > eps + tol] = TableRegion.INTERIOR
    region[np.abs(d - eps) <= tol] = TableRegion.BOUNDARY
    if single:
        return TableRegion(int(region[0]))
    return region


def classify_velocity(X, V, eps=1.0, rtol=RTOL):
    """Cone class of V at X; a ConeClass for one state, an int8 array for a batch."""
    X, V, single = _pair(X, V)
    codes, _ = kernels.classify(X, V, float(eps), rtol)
    if np.any(codes == INVALID):
        raise InvalidState("centres closer than eps")
    if single:
        return ConeClass(int(codes[0]))
    return codes


def _collision(X, V, eps, rtol):
    codes, boundary, tau, m = kernels.collision(X, V, float(eps), rtol)
    if np.any(codes == INVALID):
        raise InvalidState("centres closer than eps")
    if np.any(codes == NON):
        raise NotInCone("velocity outside the collision cone")
    return codes, tau, m


def collision_time(X, V, eps=1.0, rtol=RTOL):
    """Signed time at which the free line through (X, V) touches the boundary."""
    X, V, single = _pair(X, V)
    _, tau, _ = _collision(X, V, eps, rtol)
    return float(tau[0]) if single else tau


def contact_direction(X, V, eps=1.0, rtol=RTOL):
    """Unit vector m = (relative position at contact) / eps."""
    X, V, single = _pair(X, V)
    _, _, m = _collision(X, V, eps, rtol)
    return _out(m, single)


def _normal_from_m(m):
    return np.concatenate([m, -m], axis=-1) / SQRT2


def boundary_normal(X, V, eps=1.0, rtol=RTOL):
    """Unit 6-vector (1/sqrt2)[m; -m] built from the contact configuration."""
    return _normal_from_m(contact_direction(X, V, eps, rtol))


def _matrix_from_m(m, active=None):
    nu = _normal_from_m(m)
    S = np.eye(6) - 2.0 * nu[..., :, None] * nu[..., None, :]
    if active is not None:
        S[~active] = np.eye(6)
    return S


def scattering_matrix(X, V, eps=1.0, rtol=RTOL):
    """Reflection I - 2 nu nu^T across the contact plane."""
    return _matrix_from_m(contact_direction(X, V, eps, rtol))


def apply_scatter(A, m):
    """Apply the reflection with contact direction m to 6-vectors A (rows)."""
    A, single = as_batch(A)
    m = np.ascontiguousarray(np.asarray(m, dtype=float).reshape(-1, 3))
    return _out(kernels.reflect(A, m), single)


def scatter_extended(Q, P, eps=1.0, rtol=RTOL):
    """Scattering matrix extended to every (Q, P) in R^6 x R^6."""
    Q, P, single = _pair(Q, P)
    active, _, m = kernels.extended(Q, P, float(eps), rtol)
    return _out(_matrix_from_m(m, active), single)


def extend_tau(Q, P, eps=1.0, rtol=RTOL):
    """Collision time extended inside the excluded ball.

    Inside, the positive root is taken when the centres separate
    (``y.w >= 0``) and the negative root otherwise; at coincident centres
    the value is ``eps / |w|``.  On the table this is ``collision_time``.
    """
    Q, P, single = _pair(Q, P)
    y = Q[:, 3:] - Q[:, :3]
    w = P[:, 3:] - P[:, :3]
    still = np.einsum("ij,ij->i", w, w) == 0.0
    if np.any(still):
        raise Degenerate("relative velocity vanishes")
    inside = np.linalg.norm(y, axis=1) < eps - rtol * np.maximum(1.0, np.linalg.norm(y, axis=1))
    tau = np.empty(len(Q))
    if inside.any():
        _, t_in, _ = kernels.extended(Q[inside], P[inside], float(eps), rtol)
        tau[inside] = t_in
    if (~inside).any():
        _, t_out, _ = _collision(Q[~inside], P[~inside], eps, rtol)
        tau[~inside] = t_out
    return float(tau[0]) if single else tau


def sigma_star_batch(X, V, eps=1.0, rtol=RTOL):
    """Batched involution on arrays of positions and velocities."""
    X, V, _ = _pair(X, V)
    return kernels.sigma_star(X, V, float(eps), rtol)


def sigma_star_map(Z, eps=1.0, rtol=RTOL):
    """Apply the extended reflection to both position and velocity blocks.

    Accepts a PhasePoint or an array whose last axis has length 12.
    """
    if isinstance(Z, PhasePoint):
        Xo, Vo = sigma_star_batch(Z.X, Z.V, eps, rtol)
        return PhasePoint.from_XV(Xo[0], Vo[0])
    A, single = as_batch(Z, 12)
    Xo, Vo = sigma_star_batch(A[:, :6], A[:, 6:], eps, rtol)
    return _out(np.concatenate([Xo, Vo], axis=1), single)


def conserved_quantities(Z, origin=(0.0, 0.0, 0.0)):
    """Total momentum, angular momentum about ``origin`` and kinetic energy."""
    if isinstance(Z, PhasePoint):
        Z = Z.Z
    A, single = as_batch(Z, 12)
    a = np.asarray(origin, dtype=float)
    x, xb, v, vb = A[:, 0:3], A[:, 3:6], A[:, 6:9], A[:, 9:12]
    p = v + vb
    L = np.cross(x - a, v) + np.cross(xb - a, vb)
    E = 0.5 * np.einsum("ij,ij->i", A[:, 6:], A[:, 6:])
    if single:
        return p[0], L[0], float(E[0])
    return p, L, E
