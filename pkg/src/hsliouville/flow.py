"""Hard-sphere flow, the collision-free doubled flow, and the fold map between them.

Branch conventions for ``hard_sphere_flow``:

* pre-collisional states move freely for ``t <= tau`` and reflected after;
* post-collisional states move reflected for ``t <= tau`` and freely after;
* boundary states with incoming velocity reflect for ``t > 0``;
* boundary states with outgoing velocity move reflected only for ``t < 0``,
  so that ``T_0`` is the identity on them as well.

At most one collision happens along any trajectory.

The doubled flow never changes velocity.  At the contact time the position
is swapped by ``switch`` and the sheet index flips (1 <-> 2), symmetrically
for both sheets.  ``fold`` sends sheet 1 to the base point and sheet 2
through the extended reflection, which recovers the colliding flow.
"""

from dataclasses import dataclass, field

import numpy as np

from ._backend import INVALID, NON, POST, PRE, kernels
from .errors import InvalidState
from .geometry import (
    RTOL,
    PhasePoint,
    _pair,
    apply_scatter,
    as_batch,
    conserved_quantities,
    sigma_star_batch,
    switch,
)

__all__ = [
    "SheetPoint",
    "Event",
    "Trajectory",
    "hard_sphere_flow",
    "flow_batch",
    "doubled_flow",
    "doubled_flow_batch",
    "fold",
    "fold_batch",
    "switch",
    "conserved_quantities",
    "trajectory",
    "doubled_trajectory",
]


@dataclass(frozen=True)
class SheetPoint:
    """Phase point on sheet 1 or 2 of the doubled table."""

    base: PhasePoint
    sheet: int = 1

    def __post_init__(self):
        if self.sheet not in (1, 2):
            raise ValueError("sheet must be 1 or 2")


def _times(t, n):
    t = np.asarray(t, dtype=float)
    return np.ascontiguousarray(np.broadcast_to(t, (n,)) if t.ndim == 0 else t.reshape(n))


def flow_batch(X, V, t, eps=1.0, rtol=RTOL, check=True):
    """Flow every row of (X, V) by t (scalar or per-row array).

    Rows outside the phase space come back as NaN unless ``check`` is set,
    in which case InvalidState is raised.
    """
    X, V, _ = _pair(X, V)
    Xo, Vo, codes = kernels.flow(X, V, _times(t, len(X)), float(eps), rtol)
    if check and np.any(codes == INVALID):
        raise InvalidState("state outside the phase space")
    return Xo, Vo


def hard_sphere_flow(Z0, t, eps=1.0, rtol=RTOL):
    """T_t Z0 for a PhasePoint, or for an array of shape (12,) or (N, 12)."""
    if isinstance(Z0, PhasePoint):
        Xo, Vo = flow_batch(Z0.X, Z0.V, t, eps, rtol)
        return PhasePoint.from_XV(Xo[0], Vo[0])
    A, single = as_batch(Z0, 12)
    Xo, Vo = flow_batch(A[:, :6], A[:, 6:], t, eps, rtol)
    out = np.concatenate([Xo, Vo], axis=1)
    return out[0] if single else out


def doubled_flow_batch(X, V, sheet, t, eps=1.0, rtol=RTOL, check=True):
    """Doubled flow of rows; returns (positions, sheets).  Velocity is unchanged."""
    X, V, _ = _pair(X, V)
    s = np.ascontiguousarray(np.broadcast_to(np.asarray(sheet, dtype=np.int8), (len(X),)))
    Xo, so, codes = kernels.doubled_flow(X, V, s, _times(t, len(X)), float(eps), rtol)
    if check and np.any(codes == INVALID):
        raise InvalidState("state outside the phase space")
    return Xo, so


def doubled_flow(zeta, t, eps=1.0, rtol=RTOL):
    """S_t on a SheetPoint."""
    b = zeta.base
    Xo, so = doubled_flow_batch(b.X, b.V, zeta.sheet, t, eps, rtol)
    return SheetPoint(PhasePoint.from_XV(Xo[0], b.V), int(so[0]))


def fold_batch(X, V, sheet, eps=1.0, rtol=RTOL):
    """Sheet 1 rows unchanged; sheet 2 rows mapped through the involution."""
    X, V, _ = _pair(X, V)
    sheet = np.broadcast_to(np.asarray(sheet), (len(X),))
    Xo, Vo = X.copy(), V.copy()
    two = sheet == 2
    if two.any():
        Xo[two], Vo[two] = sigma_star_batch(X[two], V[two], eps, rtol)
    return Xo, Vo


def fold(zeta, eps=1.0, rtol=RTOL):
    """Base phase point represented by a SheetPoint."""
    b = zeta.base
    Xo, Vo = fold_batch(b.X, b.V, zeta.sheet, eps, rtol)
    return PhasePoint.from_XV(Xo[0], Vo[0])


@dataclass(frozen=True)
class Event:
    """Collision record: contact time, velocities either side, unit normal."""

    time: float
    pre_velocity: np.ndarray
    post_velocity: np.ndarray
    normal: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 12) rows [x, xbar, v, vbar]
    sheets: np.ndarray
    event: Event | None = None
    notes: dict = field(default_factory=dict)

    def rows(self):
        for t, z, s in zip(self.times, self.states, self.sheets):
            yield float(t), z, int(s)


def _event(X, V, eps, rtol):
    codes, _, tau, m = kernels.collision(X[None], V[None], float(eps), rtol)
    code = int(codes[0])
    if code == INVALID:
        raise InvalidState("state outside the phase space")
    if code == NON:
        return None
    Vs = apply_scatter(V, m[0])
    nu = np.concatenate([m[0], -m[0]]) / np.sqrt(2.0)
    if code == PRE:
        return Event(float(tau[0]), V.copy(), Vs, nu)
    return Event(float(tau[0]), Vs, V.copy(), nu)


def _grid(times, event):
    times = np.asarray(times, dtype=float).ravel()
    if event is not None:
        times = np.union1d(times, [event.time])
    return np.sort(times)


def trajectory(Z0, times, eps=1.0, rtol=RTOL):
    """Sample T_t Z0 on ``times`` with the collision time always included."""
    Z0 = Z0 if isinstance(Z0, PhasePoint) else PhasePoint.from_Z(Z0)
    ev = _event(Z0.X, Z0.V, eps, rtol)
    ts = _grid(times, ev)
    n = len(ts)
    Xo, Vo = flow_batch(np.tile(Z0.X, (n, 1)), np.tile(Z0.V, (n, 1)), ts, eps, rtol)
    return Trajectory(ts, np.concatenate([Xo, Vo], axis=1), np.ones(n, dtype=np.int8), ev)


def doubled_trajectory(zeta, times, eps=1.0, rtol=RTOL):
    """Sample S_t zeta on ``times`` with the sheet switch time included."""
    b = zeta.base
    ev = _event(b.X, b.V, eps, rtol)
    ts = _grid(times, ev)
    n = len(ts)
    V = np.tile(b.V, (n, 1))
    Xo, so = doubled_flow_batch(np.tile(b.X, (n, 1)), V, zeta.sheet, ts, eps, rtol)
    return Trajectory(ts, np.concatenate([Xo, V], axis=1), so, ev)
