"""Deterministic Monte Carlo and tensor-grid integration.

Random numbers come from counter-based Philox streams keyed on
``(seed, label, chunk index)``.  Sample ``i`` always lands in chunk
``i // chunk_size``, so an estimate depends only on its QuadratureSpec and never on
how many workers evaluate the chunks.  Chunk statistics are merged in a
fixed pairwise order, which keeps results bit-stable.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import hashlib
import math

import numpy as np

SQRT2 = math.sqrt(2.0)
FOUR_PI = 4.0 * math.pi


# ---------------------------------------------------------------- boxes

@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in R^d."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box needs hi >= lo componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def around(cls, center, half_widths):
        c = np.asarray(center, dtype=float)
        h = np.broadcast_to(np.asarray(half_widths, dtype=float), c.shape)
        return cls(c - h, c + h)

    @property
    def dim(self):
        return self.lo.size

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.widths))

    def sample(self, u):
        """Map uniform draws in [0, 1)^d to the box."""
        return self.lo + u * self.widths

    def contains(self, P):
        P = np.atleast_2d(P)
        return np.all((P >= self.lo) & (P <= self.hi), axis=1)

    def draw(self, rng, m):
        return self.sample(rng.random((m, self.dim)))

    def density(self, P):
        return self.contains(P) / self.volume

    def pad(self, frac=0.0, absolute=0.0):
        d = frac * self.widths + absolute
        return Box(self.lo - d, self.hi + d)

    def __mul__(self, other):
        return Box(np.concatenate([self.lo, other.lo]), np.concatenate([self.hi, other.hi]))

    def select(self, idx):
        return Box(self.lo[idx], self.hi[idx])

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def ball_points(rng, m, d):
    """Uniform points in the unit ball of R^d."""
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return g * rng.random((m, 1)) ** (1.0 / d)


@dataclass(frozen=True)
class EllipsoidBlocks:
    """Product of axis-aligned ellipsoids, each living on a block of coordinates.

    ``blocks`` is a tuple of (indices, center, semi-axes).
    """

    dim: int
    blocks: tuple

    @property
    def volume(self):
        v = 1.0
        for idx, _, axes in self.blocks:
            d = len(idx)
            v *= math.pi ** (d / 2) / math.gamma(d / 2 + 1) * float(np.prod(axes))
        return v

    def draw(self, rng, m):
        P = np.empty((m, self.dim))
        for idx, c, axes in self.blocks:
            P[:, idx] = np.asarray(c) + ball_points(rng, m, len(idx)) * np.asarray(axes)
        return P

    def contains(self, P):
        ok = np.ones(len(P), dtype=bool)
        for idx, c, axes in self.blocks:
            q = (P[:, idx] - np.asarray(c)) / np.asarray(axes)
            ok &= (q * q).sum(axis=1) <= 1.0
        return ok

    def density(self, P):
        return self.contains(P) / self.volume

    def bounding_box(self):
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for idx, c, axes in self.blocks:
            lo[idx] = np.asarray(c) - axes
            hi[idx] = np.asarray(c) + axes
        return Box(lo, hi)


def _ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True, eq=False)
class PaddedBlocks:
    """Equal-weight union of translates of a product of padded round ellipsoids.

    A block ``(pos_idx, vel_idx, cx, cv, a, b, pad)`` is the set
    ``|x - cx| <= a sqrt(1 - |v - cv|^2 / b^2) + pad``: a round ellipsoid
    in (position, velocity) widened by a ball of radius ``pad`` in position
    only.  ``shifts`` (K, dim) lists the translates; the density is the
    number of translates containing a point over K times the volume.
    """

    dim: int
    blocks: tuple
    shifts: np.ndarray = None

    def __post_init__(self):
        sh = np.zeros((1, self.dim)) if self.shifts is None else np.atleast_2d(np.asarray(self.shifts, dtype=float))
        object.__setattr__(self, "shifts", sh)

    @staticmethod
    def _block_volume(dp, dv, a, b, pad):
        # sum_j C(dp, j) a^j pad^(dp-j) * integral over the unit dv-ball of (1 - |u|^2)^(j/2)
        tot = 0.0
        for j in range(dp + 1):
            ball = math.pi ** (dv / 2) * math.gamma(j / 2 + 1) / math.gamma(j / 2 + 1 + dv / 2)
            tot += math.comb(dp, j) * a**j * pad ** (dp - j) * ball
        return _ball_volume(dp) * b**dv * tot

    @property
    def volume(self):
        v = 1.0
        for pi, vi, _, _, a, b, pad in self.blocks:
            v *= self._block_volume(len(pi), len(vi), a, b, pad)
        return v

    def _count(self, P):
        ok = np.ones((len(P), len(self.shifts)), dtype=bool)
        for pi, vi, cx, cv, a, b, pad in self.blocks:
            q2 = ((P[:, vi] - np.asarray(cv)) ** 2).sum(axis=1) / b**2
            R = np.where(q2 <= 1.0, a * np.sqrt(np.maximum(1.0 - q2, 0.0)) + pad, -1.0)
            u = P[:, pi] - np.asarray(cx)
            d = self.shifts[:, pi]
            r2 = (u * u).sum(axis=1)[:, None] - 2.0 * u @ d.T + (d * d).sum(axis=1)[None, :]
            ok &= r2 <= (R * np.abs(R))[:, None]
        return ok.sum(axis=1)

    def contains(self, P):
        return self._count(P) > 0

    def density(self, P):
        return self._count(P) / (len(self.shifts) * self.volume)

    def draw(self, rng, m):
        P = np.empty((m, self.dim))
        for pi, vi, cx, cv, a, b, pad in self.blocks:
            got = 0
            while got < m:  # rejection from (position ball of radius a + pad) x (velocity ball)
                k = 2 * (m - got) + 16
                x = (a + pad) * ball_points(rng, k, len(pi))
                v = b * ball_points(rng, k, len(vi))
                q2 = (v * v).sum(axis=1) / b**2
                keep = np.linalg.norm(x, axis=1) <= a * np.sqrt(np.maximum(1.0 - q2, 0.0)) + pad
                x, v = x[keep][: m - got], v[keep][: m - got]
                P[got:got + len(x), pi] = np.asarray(cx) + x
                P[got:got + len(x), vi] = np.asarray(cv) + v
                got += len(x)
        return P + self.shifts[rng.integers(len(self.shifts), size=m)]


@dataclass(frozen=True)
class ShearedRegion:
    """Image of a region under (X, V) -> (X + s V, V); positions are the first half of the coordinates.

    The shear has unit Jacobian, so the density is the base density at the
    preimage.
    """

    base: object
    shift: float

    @property
    def dim(self):
        return self.base.dim

    @property
    def volume(self):
        return self.base.volume

    def _unshear(self, P):
        k = self.dim // 2
        return np.concatenate([P[:, :k] - self.shift * P[:, k:], P[:, k:]], axis=1)

    def draw(self, rng, m):
        P = self.base.draw(rng, m)
        k = self.dim // 2
        P[:, :k] += self.shift * P[:, k:]
        return P

    def contains(self, P):
        return self.base.contains(self._unshear(P))

    def density(self, P):
        return self.base.density(self._unshear(P))

    def select(self, idx):
        return ShearedRegion(self.base.select(idx), self.shift)


def bounding_box(P, frac=0.0, absolute=0.0):
    P = np.atleast_2d(P)
    return Box(P.min(axis=0), P.max(axis=0)).pad(frac, absolute)


# ---------------------------------------------------------------- specs and estimates

@dataclass(frozen=True)
class QuadratureSpec:
    sample_count: int = 1_000_000
    seed: int = 42
    method: str = "MonteCarlo"
    stratification: str = "mixture of support boxes, proportional to volume"
    domain: Box | None = None
    chunk_size: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.method not in ("MonteCarlo", "TensorGrid"):
            raise ValueError(f"unknown method {self.method!r}")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class Estimate:
    value: float
    standard_error: float
    sample_count: int

    def __add__(self, other):
        if not isinstance(other, Estimate):
            return Estimate(self.value + other, self.standard_error, self.sample_count)
        return Estimate(self.value + other.value,
                        math.hypot(self.standard_error, other.standard_error),
                        self.sample_count + other.sample_count)

    __radd__ = __add__

    def __neg__(self):
        return Estimate(-self.value, self.standard_error, self.sample_count)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return Estimate(c * self.value, abs(c) * self.standard_error, self.sample_count)

    def to_dict(self):
        return {"value": self.value, "standard_error": self.standard_error,
                "sample_count": self.sample_count}

    @staticmethod
    def pool(a, b):
        """Pool two independent estimates of the same quantity."""
        n = a.sample_count + b.sample_count
        value = (a.value * a.sample_count + b.value * b.sample_count) / n
        se = math.hypot(a.standard_error * a.sample_count, b.standard_error * b.sample_count) / n
        return Estimate(value, se, n)


# ---------------------------------------------------------------- random streams

def _label_key(label):
    return int.from_bytes(hashlib.sha256(str(label).encode()).digest()[:8], "little")


def stream(seed, label, index=0):
    """Philox generator for (seed, label, index); independent of call order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_label_key(label), int(index)))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def sphere_points(rng, n):
    """Uniform points on the unit sphere S^2."""
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1)[:, None]


# ---------------------------------------------------------------- Monte Carlo engine

@dataclass
class _Moments:
    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, vals):
        mean = vals.mean(axis=0)
        return cls(len(vals), mean, ((vals - mean) ** 2).sum(axis=0))

    def merge(self, other):
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * (other.n / n)
        m2 = self.m2 + other.m2 + d * d * (self.n * other.n / n)
        return _Moments(n, mean, m2)


def _pairwise(parts):
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def monte_carlo(draw, n, seed, label, chunk_size=1 << 16, workers=1):
    """Generic estimator.

    ``draw(rng, m)`` returns an array of m weighted integrand values, shape
    (m,) or (m, k).  Returns one Estimate, or a list of k Estimates.
    """
    n = int(n)
    bounds = [(i, min(chunk_size, n - i * chunk_size)) for i in range((n + chunk_size - 1) // chunk_size)]

    def run(b):
        vals = np.asarray(draw(stream(seed, label, b[0]), b[1]), dtype=float)
        return _Moments.of(vals)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    mom = _pairwise(parts)
    var = mom.m2 / max(n - 1, 1)
    se = np.sqrt(var / n)
    if np.ndim(mom.mean) == 0:
        return Estimate(float(mom.mean), float(se), n)
    return [Estimate(float(v), float(s), n) for v, s in zip(mom.mean, se)]


def mc_integrate(integrand, box, spec, label="mc"):
    """Integral of ``integrand(points)`` over ``box`` (or ``spec.domain``)."""
    box = box if box is not None else spec.domain
    if spec.method == "TensorGrid":
        return tensor_grid_integrate(integrand, box, spec.sample_count)
    vol = box.volume

    def draw(rng, m):
        return vol * np.asarray(integrand(box.sample(rng.random((m, box.dim)))))

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


class Mixture:
    """Importance sampling from a mixture of regions.

    Regions need ``volume``, ``draw(rng, m)`` and ``density(P)`` (the
    sampling density of ``draw``, zero outside the region).  Component j is
    picked with probability proportional to ``weights[j]`` (volumes by
    default) and each point gets weight 1 / (mixture density).  For uniform
    regions that is sum|R| / count(z), which is unbiased for the integral
    over the union.
    """

    def __init__(self, regions, weights=None):
        self.regions = list(regions)
        if not self.regions:
            raise ValueError("empty region list")
        self.dim = self.regions[0].dim
        w = np.array([r.volume for r in self.regions] if weights is None else weights, dtype=float)
        self.total = float(sum(r.volume for r in self.regions))
        self.prob = w / w.sum()
        self.cdf = np.cumsum(self.prob)

    @property
    def volume(self):
        return self.total

    def density(self, P):
        q = np.zeros(len(P))
        for p, r in zip(self.prob, self.regions):
            q += p * r.density(P)
        return q

    def draw(self, rng, m):
        j = np.searchsorted(self.cdf, rng.random(m), side="right")
        j = np.minimum(j, len(self.regions) - 1)
        P = np.empty((m, self.dim))
        for k, r in enumerate(self.regions):
            sel = j == k
            if sel.any():
                P[sel] = r.draw(rng, int(sel.sum()))
        return P

    def sample(self, rng, m):
        """Return (points, weights)."""
        P = self.draw(rng, m)
        return P, 1.0 / self.density(P)


def mc_integrate_union(integrand, boxes, spec, label="mc-union"):
    """Integral over the union of boxes of ``integrand(points)``."""
    mix = Mixture(boxes)

    def draw(rng, m):
        P, w = mix.sample(rng, m)
        vals = np.asarray(integrand(P))
        return vals * (w if vals.ndim == 1 else w[:, None])

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


def tensor_grid_integrate(integrand, box, sample_count):
    """Gauss-Legendre tensor rule with about ``sample_count`` nodes.

    The error estimate is the difference from the rule with half the nodes
    per axis.  Intended for low-dimensional smooth integrands.
    """
    d = box.dim

    def rule(k):
        x, w = np.polynomial.legendre.leggauss(k)
        axes = [box.lo[i] + 0.5 * (x + 1) * box.widths[i] for i in range(d)]
        wts = [0.5 * box.widths[i] * w for i in range(d)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        W = np.ones(1)
        for wi in wts:
            W = np.multiply.outer(W, wi).ravel()
        return float(np.dot(W, integrand(grid)))

    k = max(2, int(round(sample_count ** (1.0 / d))))
    fine = rule(k)
    coarse = rule(max(1, k // 2))
    return Estimate(fine, abs(fine - coarse), k ** d)


def cap_points(rng, m, axis, cos_min):
    """Uniform points on the spherical cap {n : n.axis >= cos_min}."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    z = 1.0 - rng.random(m) * (1.0 - cos_min)
    phi = 2.0 * math.pi * rng.random(m)
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return (z[:, None] * axis + (r * np.cos(phi))[:, None] * e1 + (r * np.sin(phi))[:, None] * e2)


def cap_covering(lo, hi, margin=0.02):
    """(axis, cos_min) of a cap containing the directions of all vectors in the box [lo, hi].

    A cone of half-angle below pi/2 is convex, so it contains the box as
    soon as it contains the eight corners.  Falls back to the whole sphere.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axis = (lo + hi) / 2
    norm = np.linalg.norm(axis)
    if norm == 0:
        return np.array([0.0, 0.0, 1.0]), -1.0
    axis = axis / norm
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(3, -1).T
    lengths = np.linalg.norm(corners, axis=1)
    if np.any(lengths == 0):
        return axis, -1.0
    angle = float(np.max(np.arccos(np.clip(corners @ axis / lengths, -1.0, 1.0)))) + margin
    if angle >= math.pi / 2:
        return axis, -1.0
    return axis, math.cos(angle)


@dataclass(frozen=True)
class BoundaryPiece:
    """Region of (y, n, V, t) with (y, V, t) in a box and n in a spherical cap.

    Points are stored as 13 columns ``[y(3), n(3), V(6), t]``; the volume
    uses surface measure on the sphere.
    """

    box: Box  # over the 10 coordinates (y, V, t)
    axis: tuple = (0.0, 0.0, 1.0)
    cos_min: float = -1.0
    dim: int = 13

    @property
    def volume(self):
        return self.box.volume * 2.0 * math.pi * (1.0 - self.cos_min)

    def draw(self, rng, m):
        B = self.box.draw(rng, m)
        n = cap_points(rng, m, self.axis, self.cos_min)
        return np.concatenate([B[:, :3], n, B[:, 3:]], axis=1)

    def contains(self, P):
        ok = self.box.contains(np.concatenate([P[:, :3], P[:, 6:]], axis=1))
        return ok & (P[:, 3:6] @ np.asarray(self.axis, dtype=float) >= self.cos_min)

    def density(self, P):
        return self.contains(P) / self.volume


def boundary_integrate(integrand, eps, spec, pieces, label="boundary"):
    """Integral over the boundary of the table, times velocity and time.

    The boundary is parameterized by ``Y = [y, y + eps n]`` with ``y`` in
    R^3 and ``n`` on the unit sphere; its surface element is
    ``sqrt2 eps^2 dy dOmega(n)``.  ``pieces`` (BoundaryPiece, or plain 10-d
    boxes over (y, V, t) meaning the full sphere) must cover the support
    of ``integrand(y, n, V, t)``, which returns shape (m,) or (m, k).
    """
    if not isinstance(pieces, (list, tuple)):
        pieces = [pieces]
    pieces = [BoundaryPiece(p) if isinstance(p, Box) else p for p in pieces]
    mix = Mixture(pieces)
    c = SQRT2 * eps * eps

    def draw(rng, m):
        P, w = mix.sample(rng, m)
        vals = np.asarray(integrand(P[:, 0:3], P[:, 3:6], P[:, 6:12], P[:, 12]))
        w = c * w
        return vals * (w if vals.ndim == 1 else w[:, None])

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


# ---------------------------------------------------------------- test functions

def _bump_parts(s):
    """log b(s) and d log b / ds for b(s) = exp(-1/(1 - s^2)), zero outside |s| < 1."""
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    logb = np.where(inside, -1.0 / q, -np.inf)
    dlog = np.where(inside, -2.0 * s / (q * q), 0.0)
    return logb, dlog


@dataclass(frozen=True)
class TestFunction:
    """Product of one-dimensional bumps in each phase coordinate and in time.

    ``center`` and ``half_widths`` have length d (12 for two-particle phase
    space ``[x, xbar, v, vbar]``, 6 for one-particle ``[x, v]``); the first
    d/2 coordinates are positions.
    """

    __test__ = False  # not a pytest class

    center: np.ndarray
    half_widths: np.ndarray
    time_center: float
    time_half_width: float
    scale: float = 1.0
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        h = np.broadcast_to(np.asarray(self.half_widths, dtype=float), c.shape).copy()
        if np.any(h <= 0) or self.time_half_width <= 0:
            raise ValueError("widths must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_widths", h)

    @property
    def dim(self):
        return self.center.size

    @property
    def phase_box(self):
        return Box.around(self.center, self.half_widths)

    @property
    def time_window(self):
        return (self.time_center - self.time_half_width, self.time_center + self.time_half_width)

    @property
    def box(self):
        """Support box in (phase coordinates, t)."""
        return self.phase_box * Box([self.time_window[0]], [self.time_window[1]])

    def _parts(self, Z, t):
        Z = np.atleast_2d(Z)
        s = (Z - self.center) / self.half_widths
        st = (np.asarray(t, dtype=float) - self.time_center) / self.time_half_width
        lz, dz = _bump_parts(s)
        lt, dt = _bump_parts(st)
        with np.errstate(invalid="ignore"):
            val = self.scale * np.exp(lz.sum(axis=1) + lt)
        return val, dz / self.half_widths, dt / self.time_half_width

    def value(self, Z, t):
        return self._parts(Z, t)[0]

    def dt(self, Z, t):
        val, _, d = self._parts(Z, t)
        return val * d

    def grad(self, Z, t):
        val, d, _ = self._parts(Z, t)
        return val[:, None] * d

    def grad_X(self, Z, t):
        return self.grad(Z, t)[:, : self.dim // 2]

    def transport(self, Z, t):
        """Value and (d/dt + V.grad_X) applied to the function, in one pass."""
        val, d, dt = self._parts(Z, t)
        k = self.dim // 2
        adv = np.einsum("ij,ij->i", np.atleast_2d(Z)[:, k:], d[:, :k])
        return val, val * (dt + adv)

    def eval(self, X, V, t):
        return self.value(np.concatenate([np.atleast_2d(X), np.atleast_2d(V)], axis=1), t)

    def to_dict(self):
        return {"center": self.center.tolist(), "half_widths": self.half_widths.tolist(),
                "time_window": [self.time_center, self.time_half_width], "scale": self.scale}


def bump_test_function(center, half_widths, time_window, scale=1.0):
    """Smooth compactly supported test function; ``time_window = (t0, half_width)``."""
    t0, th = time_window
    return TestFunction(center, half_widths, float(t0), float(th), float(scale))
