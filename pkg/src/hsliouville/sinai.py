"""Planar Sinai billiard and its unfolding by accumulated reflections.

The table is the square [-1, 1]^2 minus the open disk |x| < r.  A particle
moves on straight lines and reflects specularly off the walls and the
scatterer.  ``sinai_flow`` evolves the reflected trajectory directly.
``sinai_unfold`` keeps the line x0 + s v0 straight and instead reflects
the table: every event adds a planar reflection to an IsometryChain, and
``fold_chain`` maps the straight-line point back onto the table.  The two
computations share no event code, so comparing them is a real check.

At an event time exactly the state is reported before reflection.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CornerHit

TOL = 1e-9

__all__ = [
    "SinaiState",
    "Reflection",
    "IsometryChain",
    "sinai_flow",
    "sinai_unfold",
    "fold_chain",
    "sinai_trajectory",
    "TOL",
]

_WALLS = tuple((np.array(n, dtype=float), 1.0) for n in ((1, 0), (-1, 0), (0, 1), (0, -1)))


def _vec2(a, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 2-vector")
    return a


@dataclass(frozen=True)
class SinaiState:
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    events: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position, "position"))
        object.__setattr__(self, "velocity", _vec2(self.velocity, "velocity"))
        if not 0.0 < self.radius < 1.0:
            raise ValueError("scatterer radius must lie in (0, 1)")

    @property
    def reversed(self):
        return SinaiState(self.position, -self.velocity, self.radius, self.events)

    def in_table(self, tol=TOL):
        x = self.position
        return bool(np.all(np.abs(x) <= 1.0 + tol) and np.hypot(*x) >= self.radius - tol)


@dataclass(frozen=True)
class Reflection:
    """x -> A x + b, a reflection across a line (det A = -1)."""

    time: float
    A: np.ndarray
    b: np.ndarray
    kind: str

    def __call__(self, x):
        return self.A @ x + self.b


@dataclass
class IsometryChain:
    reflections: list = field(default_factory=list)

    def __len__(self):
        return len(self.reflections)

    def __iter__(self):
        return iter(self.reflections)

    @property
    def times(self):
        return [r.time for r in self.reflections]


def _check_start(x0, v0, r):
    x0, v0 = _vec2(x0, "x0"), _vec2(v0, "v0")
    if not 0.0 < r < 1.0:
        raise ValueError("scatterer radius must lie in (0, 1)")
    if not np.any(v0):
        raise ValueError("velocity must be nonzero")
    if np.any(np.abs(x0) > 1.0 + TOL) or np.hypot(*x0) < r - TOL:
        raise ValueError("x0 lies outside the table")
    return x0, v0


def _circle_hit(p, v, c, r):
    """First s > 0 with |p + s v - c| = r while approaching; inf if none."""
    y = p - c
    b = y @ v
    if b >= 0:
        return np.inf
    a = v @ v
    disc = b * b - a * (y @ y - r * r)
    if disc <= 0:
        # disc / a = r^2 - d^2 with d the line's distance from c; within TOL of
        # tangency return the touching point so the caller flags a graze
        return -b / a if disc >= -2.0 * r * TOL * a else np.inf
    return (y @ y - r * r) / (-b + np.sqrt(disc))


def _corner(x):
    return bool(np.all(np.abs(np.abs(x) - 1.0) <= TOL))


def sinai_flow(x0, v0, t, r=0.5, max_events=100_000):
    """Event-driven billiard flow for a time t >= 0."""
    x, v = _check_start(x0, v0, r)
    x, v = x.copy(), v.copy()
    if t < 0:
        raise ValueError("t must be non-negative; reverse the velocity for backward flow")
    left = float(t)
    count = 0
    speed = np.hypot(*v)
    while True:
        best, normal, kind = np.inf, None, None
        for n, d in _WALLS:
            vn = n @ v
            if vn > 0:
                s = (d - n @ x) / vn
                if s < best:
                    best, normal, kind = s, n, "wall"
        s = _circle_hit(x, v, np.zeros(2), r)
        if s < best:
            best, kind = s, "scatterer"
        if best >= left:
            return SinaiState(x + left * v, v, r, count)
        x = x + best * v
        left -= best
        elapsed = float(t) - left
        if kind == "wall":
            if _corner(x):
                raise CornerHit("trajectory reaches a corner", elapsed, x)
            m = normal
            k = int(np.argmax(np.abs(m)))
            x[k] = np.sign(m[k])
        else:
            m = x / np.hypot(*x)
            if abs(m @ v) <= TOL * speed:
                raise CornerHit("trajectory grazes the scatterer", elapsed, x)
            x = r * m
        v = v - 2.0 * (v @ m) * m
        count += 1
        if count > max_events:
            raise RuntimeError("event limit exceeded")


def sinai_unfold(x0, v0, t, r=0.5, max_events=100_000):
    """Straight-line point x0 + t v0 and the reflections that fold it back.

    The map M(u) = A u + b takes unfolded coordinates to the table.  The
    walls and the scatterer are pulled back through M, the straight line is
    intersected with them, and each hit composes M with the reflection
    across the pulled-back wall or tangent line.
    """
    x0, v0 = _check_start(x0, v0, r)
    if t < 0:
        raise ValueError("t must be non-negative")
    A, b = np.eye(2), np.zeros(2)
    s = 0.0
    chain = IsometryChain()
    while True:
        p = x0 + s * v0
        best, N, kind = np.inf, None, None
        for n, d in _WALLS:
            Nn = A.T @ n
            vn = Nn @ v0
            if vn > 0:
                ds = (d - n @ b - Nn @ p) / vn
                if ds < best:
                    best, N, kind = ds, Nn, "wall"
        centre = -A.T @ b
        ds = _circle_hit(p, v0, centre, r)
        if ds < best:
            best, kind = ds, "scatterer"
        if s + best >= t:
            return x0 + t * v0, chain
        s += best
        h = x0 + s * v0
        phys = A @ h + b
        if kind == "wall":
            if _corner(phys):
                raise CornerHit("trajectory reaches a corner", s, phys)
        else:
            N = (h - centre) / r
            if abs(N @ v0) <= TOL * np.hypot(*v0):
                raise CornerHit("trajectory grazes the scatterer", s, phys)
        H = np.eye(2) - 2.0 * np.outer(N, N)
        shift = 2.0 * (h @ N) * (A @ N)
        L = A @ H @ A.T
        chain.reflections.append(Reflection(s, L, b - L @ b + shift, kind))
        A, b = A @ H, b + shift
        if len(chain) > max_events:
            raise RuntimeError("event limit exceeded")


def fold_chain(chain, point, velocity=None):
    """Apply the chain's reflections in order; velocities use the linear parts."""
    x = np.asarray(point, dtype=float)
    v = None if velocity is None else np.asarray(velocity, dtype=float)
    for R in chain:
        x = R(x)
        if v is not None:
            v = R.A @ v
    return x if v is None else (x, v)


def sinai_trajectory(x0, v0, times, r=0.5):
    """Rows (t, x1, x2, v1, v2) of the flow sampled at ``times``, event times included."""
    x0, v0 = _check_start(x0, v0, r)
    times = np.asarray(times, dtype=float)
    _, chain = sinai_unfold(x0, v0, float(times.max()), r)
    grid = np.union1d(times, [e for e in chain.times if e <= times.max()])
    rows = []
    for t in grid:
        st = sinai_flow(x0, v0, t, r)
        rows.append([t, *st.position, *st.velocity])
    return np.array(rows)
