"""Initial data, mild solutions and marginals.

Every datum evaluates on batches: positions ``X`` and velocities ``V`` of
shape (N, 6).  Data carry a list of 12-dimensional support boxes in the
coordinate order ``[x, xbar, v, vbar]``; Monte Carlo routines sample from
their union.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from ._backend import POST, PRE, kernels
from .errors import InvalidState, SupportWarning
from .flow import doubled_flow_batch, flow_batch
from .geometry import RTOL, PhasePoint, _pair, apply_scatter, sigma_star_batch
from .quadrature import (
    Box,
    EllipsoidBlocks,
    Mixture,
    PaddedBlocks,
    QuadratureSpec,
    ShearedRegion,
    ball_points,
    bounding_box,
    monte_carlo,
    stream,
)

E_INV = math.exp(-1.0)


def _bump(s2):
    inside = s2 < 1.0
    q = np.where(inside, 1.0 - s2, 1.0)
    return np.where(inside, np.exp(-1.0 / q), 0.0), np.where(inside, 1.0 / (q * q), 0.0)


# ---------------------------------------------------------------- one-particle data

@dataclass(frozen=True)
class BumpComponent:
    """A exp(-1/(1 - s^2)) with s^2 = |x - cx|^2/rx^2 + |v - cv|^2/rv^2."""

    center_x: tuple
    center_v: tuple
    radius_x: float
    radius_v: float
    amplitude: float = 1.0

    def box(self):
        c = np.concatenate([self.center_x, self.center_v])
        r = np.array([self.radius_x] * 3 + [self.radius_v] * 3)
        return Box.around(c, r)


class OneParticleDatum:
    """Sum of smooth bumps on one-particle phase space."""

    def __init__(self, components):
        self.components = tuple(components)

    def _terms(self, x, v):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        for c in self.components:
            dx = x - np.asarray(c.center_x)
            dv = v - np.asarray(c.center_v)
            s2 = (dx * dx).sum(axis=1) / c.radius_x**2 + (dv * dv).sum(axis=1) / c.radius_v**2
            b, d = _bump(s2)
            yield c, dx, dv, c.amplitude * b, d

    def eval(self, x, v):
        out = 0.0
        for _, _, _, val, _ in self._terms(x, v):
            out = out + val
        return out

    __call__ = eval

    def grad_x(self, x, v):
        out = 0.0
        for c, dx, _, val, d in self._terms(x, v):
            out = out + (val * d)[:, None] * (-2.0 * dx / c.radius_x**2)
        return out

    def grad_v(self, x, v):
        out = 0.0
        for c, _, dv, val, d in self._terms(x, v):
            out = out + (val * d)[:, None] * (-2.0 * dv / c.radius_v**2)
        return out

    def boxes(self):
        return [c.box() for c in self.components]

    @property
    def support(self):
        """(center, radius) of a phase-space ball containing the support."""
        lo = np.min([b.lo for b in self.boxes()], axis=0)
        hi = np.max([b.hi for b in self.boxes()], axis=0)
        return (lo + hi) / 2, float(np.linalg.norm(hi - lo) / 2)

    def to_dict(self):
        return {"components": [[*c.center_x, *c.center_v, c.radius_x, c.radius_v, c.amplitude]
                               for c in self.components]}


# ---------------------------------------------------------------- two-particle data

class InitialDatum:
    """Density on two-particle phase space with exact spatial gradient."""

    supported_in_table = True

    def eval(self, X, V):
        raise NotImplementedError

    def grad_X(self, X, V):
        raise NotImplementedError

    def support_boxes(self):
        raise NotImplementedError

    def support_regions(self):
        """Regions whose union contains the support; boxes unless refined."""
        return self.support_boxes()

    def __call__(self, X, V):
        X, V, single = _pair(X, V)
        out = self.eval(X, V)
        return float(out[0]) if single else out

    @property
    def support(self):
        bs = self.support_boxes()
        lo = np.min([b.lo for b in bs], axis=0)
        hi = np.max([b.hi for b in bs], axis=0)
        return (lo + hi) / 2, float(np.linalg.norm(hi - lo) / 2)


class BumpDatum(InitialDatum):
    """Single bump in the 12 phase coordinates."""

    def __init__(self, center, radius_x, radius_v, amplitude=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius_x = float(radius_x)
        self.radius_v = float(radius_v)
        self.amplitude = float(amplitude)
        self._scale = np.array([radius_x] * 6 + [radius_v] * 6, dtype=float)

    def _s2(self, X, V):
        d = (np.concatenate([X, V], axis=1) - self.center) / self._scale
        return d, (d * d).sum(axis=1)

    def eval(self, X, V):
        _, s2 = self._s2(X, V)
        return self.amplitude * _bump(s2)[0]

    def grad_X(self, X, V):
        d, s2 = self._s2(X, V)
        b, q = _bump(s2)
        return (self.amplitude * b * q)[:, None] * (-2.0 * d[:, :6] / self._scale[:6])

    def support_boxes(self):
        return [Box.around(self.center, self._scale)]

    def support_regions(self):
        return [EllipsoidBlocks(12, ((list(range(12)), self.center, self._scale),))]


def _two_particle_box(bi, bj):
    """12-d box [x, xbar, v, vbar] from one-particle boxes [x, v] of each sphere."""
    return Box(np.concatenate([bi.lo[:3], bj.lo[:3], bi.lo[3:], bj.lo[3:]]),
               np.concatenate([bi.hi[:3], bj.hi[:3], bi.hi[3:], bj.hi[3:]]))


class ChaoticDatum(InitialDatum):
    """Product phi0(x, v) phi0(xbar, vbar)."""

    def __init__(self, phi0, eps=1.0):
        self.phi0 = phi0
        self.eps = float(eps)
        self._boxes = []
        self._regions = []
        self.supported_in_table = True
        comps = phi0.components
        for i, ci in enumerate(comps):
            for j, cj in enumerate(comps):
                dist = float(np.linalg.norm(np.subtract(ci.center_x, cj.center_x)))
                rmax = ci.radius_x + cj.radius_x
                if dist + rmax < self.eps:
                    continue  # the pair never reaches |x - xbar| >= eps
                if dist - rmax < self.eps:
                    self.supported_in_table = False
                self._boxes.append(_two_particle_box(ci.box(), cj.box()))
                self._regions.append(EllipsoidBlocks(12, (
                    ([0, 1, 2, 6, 7, 8], (*ci.center_x, *ci.center_v), [ci.radius_x] * 3 + [ci.radius_v] * 3),
                    ([3, 4, 5, 9, 10, 11], (*cj.center_x, *cj.center_v), [cj.radius_x] * 3 + [cj.radius_v] * 3),
                )))
        if not self.supported_in_table:
            warnings.warn("chaotic datum support meets |x - xbar| < eps", SupportWarning, stacklevel=3)

    def eval(self, X, V):
        return self.phi0.eval(X[:, :3], V[:, :3]) * self.phi0.eval(X[:, 3:], V[:, 3:])

    def grad_X(self, X, V):
        a = self.phi0.eval(X[:, :3], V[:, :3])
        b = self.phi0.eval(X[:, 3:], V[:, 3:])
        ga = self.phi0.grad_x(X[:, :3], V[:, :3])
        gb = self.phi0.grad_x(X[:, 3:], V[:, 3:])
        return np.concatenate([ga * b[:, None], a[:, None] * gb], axis=1)

    def support_boxes(self):
        return list(self._boxes)

    def support_regions(self):
        return list(self._regions)


class TwistedDatum(InitialDatum):
    """F0 composed with the phase-space involution; gradient by central differences."""

    def __init__(self, base, eps=1.0, h=1e-6):
        self.base = base
        self.eps = float(eps)
        self.h = h
        self.supported_in_table = base.supported_in_table

    def eval(self, X, V):
        Xs, Vs = sigma_star_batch(X, V, self.eps)
        return self.base.eval(Xs, Vs)

    def grad_X(self, X, V):
        scale = np.maximum(1.0, np.abs(X))
        g = np.empty_like(X)
        for k in range(6):
            step = np.zeros_like(X)
            step[:, k] = self.h * scale[:, k]
            g[:, k] = (self.eval(X + step, V) - self.eval(X - step, V)) / (2 * step[:, k])
        return g

    def support_boxes(self):
        # The involution fixes the centre of mass, the total velocity, |y|
        # and |w|, which bounds the image of each box.
        out = []
        for b in self.base.support_boxes():
            lo, hi = b.lo, b.hi
            cm_lo = (lo[:3] + lo[3:6]) / 2
            cm_hi = (hi[:3] + hi[3:6]) / 2
            vc_lo = (lo[6:9] + lo[9:]) / 2
            vc_hi = (hi[6:9] + hi[9:]) / 2
            ry = np.linalg.norm(np.maximum(np.abs(hi[3:6] - lo[:3]), np.abs(lo[3:6] - hi[:3])))
            rw = np.linalg.norm(np.maximum(np.abs(hi[9:] - lo[6:9]), np.abs(lo[9:] - hi[6:9])))
            out.append(Box(np.concatenate([cm_lo - ry / 2, cm_lo - ry / 2, vc_lo - rw / 2, vc_lo - rw / 2]),
                           np.concatenate([cm_hi + ry / 2, cm_hi + ry / 2, vc_hi + rw / 2, vc_hi + rw / 2])))
        return out


@dataclass(frozen=True)
class DoubledDatum:
    """Pair (F0 on sheet 1, G0 on sheet 2)."""

    first: InitialDatum
    second: InitialDatum

    def eval(self, X, V, sheet):
        sheet = np.broadcast_to(np.asarray(sheet), (len(X),))
        out = np.zeros(len(X))
        one = sheet == 1
        if one.any():
            out[one] = self.first.eval(X[one], V[one])
        if (~one).any():
            out[~one] = self.second.eval(X[~one], V[~one])
        return out


def make_bump(center, radius, amplitude=1.0):
    """Smooth bump A exp(-1/(1 - s^2)).

    A 6-component centre gives a OneParticleDatum, a 12-component centre an
    InitialDatum.  ``radius`` is a scalar or a (position, velocity) pair.
    """
    center = np.asarray(center, dtype=float)
    rx, rv = (radius, radius) if np.isscalar(radius) else radius
    if rx <= 0 or rv <= 0:
        raise ValueError("radius must be positive")
    if center.size == 6:
        return OneParticleDatum([BumpComponent(tuple(center[:3]), tuple(center[3:]), float(rx), float(rv),
                                               float(amplitude))])
    if center.size == 12:
        return BumpDatum(center, rx, rv, amplitude)
    raise ValueError("center must have 6 or 12 components")


def make_chaotic_datum(phi0, eps=1.0):
    return ChaoticDatum(phi0, eps)


def twist_datum(F0, eps=1.0):
    """G0 = F0 composed with the involution; twisting twice returns F0."""
    if isinstance(F0, TwistedDatum) and F0.eps == eps:
        return F0.base
    return TwistedDatum(F0, eps)


def doubled_datum(F0, eps=1.0):
    return DoubledDatum(F0, twist_datum(F0, eps))


# ---------------------------------------------------------------- solutions

def mild_values(F0, X, V, t, eps=1.0):
    """F(X, V, t) = F0(T_{-t}(X, V)) on a batch; zero outside the phase space."""
    X, V, _ = _pair(X, V)
    Xb, Vb = flow_batch(X, V, -np.asarray(t, dtype=float), eps, check=False)
    ok = np.isfinite(Xb[:, 0])
    out = np.zeros(len(X))
    if ok.any():
        out[ok] = F0.eval(Xb[ok], Vb[ok])
    return out


def mild_solution(F0, Z, t, eps=1.0):
    """F0 evaluated at the backward-flowed point T_{-t} Z."""
    Z = Z if isinstance(Z, PhasePoint) else PhasePoint.from_Z(Z)
    Xb, Vb = flow_batch(Z.X, Z.V, -float(t), eps)
    return float(F0.eval(Xb, Vb)[0])


def doubled_values(dd, X, V, sheet, t, eps=1.0):
    """f(zeta, t) = f0(S_{-t} zeta) on a batch; zero outside the phase space."""
    X, V, _ = _pair(X, V)
    Xb, sb = doubled_flow_batch(X, V, sheet, -np.asarray(t, dtype=float), eps, check=False)
    ok = np.isfinite(Xb[:, 0])
    out = np.zeros(len(X))
    if ok.any():
        out[ok] = dd.eval(Xb[ok], V[ok], sb[ok])
    return out


def doubled_mild_solution(dd, zeta, t, eps=1.0):
    b = zeta.base
    Xb, sb = doubled_flow_batch(b.X, b.V, zeta.sheet, -float(t), eps)
    if not np.isfinite(Xb[0, 0]):
        raise InvalidState("state outside the phase space")
    return float(dd.eval(Xb, b.V[None], sb)[0])


def free_transport(phi0, q, p, t):
    """phi0(q - t p, p)."""
    q = np.atleast_2d(q)
    p = np.atleast_2d(p)
    out = phi0.eval(q - np.asarray(t, dtype=float).reshape(-1, 1) * p, p)
    return float(out[0]) if out.size == 1 else out


def chaotic_free(phi0, X, V, t):
    """Free-transport product phi0(q - tp, p) phi0(qbar - t pbar, pbar)."""
    X, V, _ = _pair(X, V)
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    return phi0.eval(X[:, :3] - t * V[:, :3], V[:, :3]) * phi0.eval(X[:, 3:] - t * V[:, 3:], V[:, 3:])


# ---------------------------------------------------------------- transported supports

def sample_support(F0, rng, m):
    """Uniform draws over the union of support boxes, with F0 > 0 kept."""
    mix = Mixture(F0.support_regions())
    P, _ = mix.sample(rng, m)
    keep = F0.eval(P[:, :6], P[:, 6:]) > 0
    return P[keep]


@dataclass(frozen=True)
class TwistedRegion:
    """Image of a 12-d region under the phase-space involution.

    The involution has unit Jacobian, so the density is the base density
    at the image point.
    """

    base: object
    eps: float = 1.0
    dim: int = 12

    @property
    def volume(self):
        return self.base.volume

    def _map(self, P):
        X, V = sigma_star_batch(P[:, :6], P[:, 6:], self.eps)
        return np.concatenate([X, V], axis=1)

    def draw(self, rng, m):
        return self._map(self.base.draw(rng, m))

    def contains(self, P):
        return self.base.contains(self._map(P))

    def density(self, P):
        return self.base.density(self._map(P))


def _round_blocks(region):
    """(pos_idx, vel_idx, cx, cv, a, b) blocks of round ellipsoids containing a support region."""
    if isinstance(region, EllipsoidBlocks):
        out = []
        for idx, c, axes in region.blocks:
            idx, c, axes = list(idx), np.asarray(c, dtype=float), np.asarray(axes, dtype=float)
            pos = [k for k, i in enumerate(idx) if i < 6]
            vel = [k for k, i in enumerate(idx) if i >= 6]
            out.append(([idx[k] for k in pos], [idx[k] for k in vel], c[pos], c[vel],
                        float(axes[pos].max()), float(axes[vel].max())))
        return out
    box = _box_of(region)
    h = box.widths / 2 * math.sqrt(12)
    c = (box.lo + box.hi) / 2
    return [(list(range(6)), list(range(6, 12)), c[:6], c[6:], float(h[:6].max()), float(h[6:].max()))]


def _cap_grid(m, h):
    """Fibonacci directions with spacing about h covering the unit vectors ``m`` (rows)."""
    axis = m.mean(axis=0)
    axis = axis / np.linalg.norm(axis) if np.linalg.norm(axis) > 1e-12 else np.array([1.0, 0.0, 0.0])
    reach = float(np.max(np.arccos(np.clip(m @ axis, -1.0, 1.0)))) + h
    n = int(math.ceil(4.0 * math.pi / (h * h)))
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    s = np.sqrt(1.0 - z * z)
    pts = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    return pts[np.arccos(np.clip(pts @ axis, -1.0, 1.0)) <= reach]


def reachable_regions(F0, t, eps=1.0, samples=40_000, seed=0, h=0.22, spread=0.0, rtol=RTOL):
    """Sampling mixture covering the support of F(., t).

    Each support region R contributes its free image, the shear
    ``(X + tV, V)`` of R.  A support point Z0 that has collided by time t
    with contact direction m satisfies

        Sigma*(T_t Z0) = (X0 + t V0 + eps [m, -m], V0),

    so the collided mass is the involution image of the sheared support
    displaced by ``eps [m, -m]``.  Directions m are covered by a grid with
    spacing h on the cap spanned by sampled contacts; each grid direction
    gives a copy of R displaced accordingly and widened in position by the
    grid resolution.  Shear, displacement and involution all have unit
    Jacobian, so the mixture density is exact and nothing about the
    hard-sphere flow's volume is assumed.  Component weights follow the
    sampled split between free and collided mass.

    With ``spread`` > 0 the regions cover F(., s) for every s within
    ``spread`` of t: positions are widened by speed bound times spread.
    """
    t = float(t)
    rng = stream(seed, "reachable")
    base = Mixture(F0.support_regions())
    P, w = base.sample(rng, samples)
    f = F0.eval(P[:, :6], P[:, 6:]) * w
    keep = f > 0
    P, f = P[keep], f[keep]
    src = np.full(len(P), -1)
    for j, r in enumerate(base.regions):
        src[r.contains(P) & (src < 0)] = j
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    codes, _, tau, m = kernels.collision(X, V, float(eps), rtol)
    hit = np.zeros(len(P), dtype=bool)
    if t + spread >= 0:
        hit |= (codes == PRE) & (tau < t + spread)
    if t - spread < 0:
        hit |= (codes == POST) & (tau > t - spread)
    regions, weights = [], []
    for j, r in enumerate(base.regions):
        sel = src == j
        mass = float(f[sel].sum()) or 1e-300
        moved = float(f[sel & hit].sum())
        rb = _round_blocks(r)
        widen = [spread * (float(np.linalg.norm(cv)) + b) for _, _, _, cv, _, b in rb]
        if spread > 0:
            free = PaddedBlocks(12, tuple((pi, vi, tuple(cx), tuple(cv), a, b, wd)
                                          for (pi, vi, cx, cv, a, b), wd in zip(rb, widen)))
            regions.append(ShearedRegion(free, t))
        else:
            regions.append(ShearedRegion(r, t))
        weights.append(max(mass - moved, 0.05 * mass))
        if not (sel & hit).any():
            continue
        grid = _cap_grid(m[sel & hit], h)
        shifts = np.zeros((len(grid), 12))
        shifts[:, :3], shifts[:, 3:6] = eps * grid, -eps * grid
        blocks = tuple((pi, vi, tuple(cx), tuple(cv), a, b, eps * h * math.sqrt(len({i // 3 for i in pi})) + wd)
                       for (pi, vi, cx, cv, a, b), wd in zip(rb, widen))
        regions.append(TwistedRegion(ShearedRegion(PaddedBlocks(12, blocks, shifts), t), float(eps)))
        weights.append(max(moved, 0.05 * mass))
    return Mixture(regions, weights)


def marginal_regions(F0, t, eps=1.0, samples=40_000, seed=0, pad=0.15, rtol=RTOL):
    """Regions in (xbar, vbar) covering the second sphere's states in the support of F(., t).

    Free states lie in the shear of each support region's projection;
    collided states are bounded by a padded box after shearing back to
    the median contact time.
    """
    t = float(t)
    idx = [3, 4, 5, 9, 10, 11]
    rng = stream(seed, "marginal-regions")
    base = Mixture(F0.support_regions())
    P, _ = base.sample(rng, samples)
    P = P[F0.eval(P[:, :6], P[:, 6:]) > 0]
    out = [ShearedRegion(_box_of(r).select(idx), t) for r in base.regions]
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    codes, _, tau, _ = kernels.collision(X, V, float(eps), rtol)
    hit = ((codes == PRE) & (tau < t)) if t >= 0 else ((codes == POST) & (tau > t))
    if hit.sum() >= 2:
        Xt, Vt = flow_batch(X[hit], V[hit], np.full(int(hit.sum()), t), eps, check=False)
        shift = t - float(np.median(tau[hit]))
        Q = np.concatenate([Xt[:, 3:] - shift * Vt[:, 3:], Vt[:, 3:]], axis=1)
        out.append(ShearedRegion(bounding_box(Q, pad, 1e-3), shift))
    return out


# ---------------------------------------------------------------- marginal

def _box_of(region):
    return region if isinstance(region, Box) else region.bounding_box()


def marginal_one(F0, x, v, t, eps=1.0, spec=None, regions=None, label="marginal"):
    """First marginal: integral of F(x, v, xbar, vbar, t) over |xbar - x| >= eps and all vbar.

    Sampling covers the second sphere's part of the reachable support
    (from ``marginal_regions`` unless ``regions`` is given).
    """
    spec = spec or QuadratureSpec()
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if regions is None:
        regions = marginal_regions(F0, t, eps, seed=spec.seed)
    mix = Mixture(regions)

    def draw(rng, m):
        P, w = mix.sample(rng, m)
        X = np.concatenate([np.broadcast_to(x, (m, 3)), P[:, :3]], axis=1)
        V = np.concatenate([np.broadcast_to(v, (m, 3)), P[:, 3:]], axis=1)
        return w * mild_values(F0, X, V, np.full(m, float(t)), eps)

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


def symmetry_defect(F0, samples=2000, seed=0):
    """Largest |F0(sZ) - F0(Z)| over support samples, s exchanging the spheres."""
    P = sample_support(F0, stream(seed, "symmetry"), samples)
    X, V = P[:, :6], P[:, 6:]
    sw = lambda A: np.concatenate([A[:, 3:], A[:, :3]], axis=1)
    Xs, Vs = sw(X), sw(V)
    return float(np.max(np.abs(F0.eval(Xs, Vs) - F0.eval(X, V)), initial=0.0))


# ---------------------------------------------------------------- transported integrals

def lagrangian_integrate(F0, g, window, spec, eps=1.0, label="lagrangian", weight=None, origin=False):
    """Integral of F(Z, t) g(Z, t) over the phase space and the time window.

    The flow preserves volume, so substituting Z = T_t Z0 gives the integral
    of F0(Z0) g(T_t Z0, t).  Z0 is drawn from the support regions of F0 and
    t uniformly from the window.  ``g(X, V, t)`` returns shape (m,) or
    (m, k) and sees the flowed state; with ``origin`` set it is called as
    ``g(X, V, t, X0, V0)``.  ``weight(X0, V0)`` replaces F0 as the density
    that is transported.
    """
    mix = Mixture(F0.support_regions())
    t0, t1 = window
    span = t1 - t0
    weight = weight or F0.eval

    def draw(rng, m):
        P, w = mix.sample(rng, m)
        t = t0 + span * rng.random(m)
        X0, V0 = P[:, :6], P[:, 6:]
        f = weight(X0, V0)
        X, V = flow_batch(X0, V0, t, eps, check=False)
        live = (f != 0) & np.isfinite(X[:, 0])
        args = (X[live], V[live], t[live]) + ((X0[live], V0[live]) if origin else ())
        vals = np.asarray(g(*args))
        out = np.zeros((m,) + vals.shape[1:])
        wl = (w * span * f)[live]
        out[live] = vals * (wl if vals.ndim == 1 else wl[:, None])
        return out

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


def contact_events(F0, window, eps=1.0, samples=40_000, seed=0, rtol=RTOL):
    """Contact configurations reached from the support of F0 within ``window``.

    Returns arrays (y, n, V_pre, V_post, t, source region) for every sampled
    support point whose collision time lies in the window; ``y`` is the
    first centre at contact and ``n`` the unit vector to the second.
    """
    rng = stream(seed, "contacts")
    mix = Mixture(F0.support_regions())
    P, _ = mix.sample(rng, samples)
    P = P[F0.eval(P[:, :6], P[:, 6:]) > 0]
    src = np.full(len(P), -1)
    for j, r in enumerate(mix.regions):
        src[r.contains(P) & (src < 0)] = j
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    codes, _, tau, m = kernels.collision(X, V, float(eps), rtol)
    hit = ((codes == PRE) | (codes == POST)) & (tau >= window[0]) & (tau <= window[1])
    X, V, tau, m, codes, src = X[hit], V[hit], tau[hit], m[hit], codes[hit], src[hit]
    Y = X + tau[:, None] * V
    Vs = apply_scatter(V, m)
    pre = codes == PRE
    Vin = np.where(pre[:, None], V, Vs)
    Vout = np.where(pre[:, None], Vs, V)
    return Y[:, :3], m, Vin, Vout, tau, src


def _reflect_n(V, n):
    """Velocities after the scattering reflection with contact direction n (rows)."""
    d = np.einsum("ij,ij->i", V[:, :3] - V[:, 3:], n)[:, None] * n
    return np.concatenate([V[:, :3] - d, V[:, 3:] + d], axis=1)


def _ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _uniform_sphere(rng, m):
    u = rng.standard_normal((m, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass(frozen=True)
class TracePiece:
    """Sampling region for boundary integrals of the trace of F.

    Points are 13 columns ``[y, n, V, t]``.  A draw picks the first
    particle's pre-image (x0, v) uniformly in its 6-d support ellipsoid
    ``(c1, a1)``, the second velocity uniformly in the ellipsoid
    ``(c2[3:], a2[3:])``, t uniformly in ``[t0, t1]`` and sets
    ``y = x0 + t v``.  The normal n comes from the cap of directions for
    which ``y + eps n - t vbar`` can reach the second particle's spatial
    ball, mixed with a uniform sphere component of weight ``defensive``.
    With ``reflected`` set the trace velocity is the reflection of the
    pre-image velocity through n.  ``density`` is exact, so the piece
    can be mixed with others.  With ``t0 == t1`` the time is fixed and
    carries no measure.
    """

    c1: tuple
    a1: tuple
    c2: tuple
    a2: tuple
    t0: float
    t1: float
    eps: float = 1.0
    reflected: bool = False
    defensive: float = 0.1
    dim: int = 13

    @property
    def volume(self):
        return _ball_volume(6) * float(np.prod(self.a1)) * _ball_volume(3) * float(np.prod(self.a2[3:])) * ((self.t1 - self.t0) or 1.0)

    def _cap(self, y, vb, t):
        d = np.asarray(self.c2[:3]) + t[:, None] * vb - y
        nd = np.linalg.norm(d, axis=1)
        R = float(np.max(self.a2[:3]))
        with np.errstate(divide="ignore", invalid="ignore"):
            cmin = (self.eps**2 + nd**2 - R**2) / (2.0 * self.eps * nd)
        cmin = np.where(nd > 0, cmin, np.where(R >= self.eps, -1.0, 2.0))
        axis = d / np.where(nd > 0, nd, 1.0)[:, None]
        return axis, np.clip(cmin, -1.0, 2.0)

    def _n_density(self, n, axis, cmin):
        q = np.full(len(n), self.defensive / (4.0 * math.pi))
        ok = cmin <= 1.0
        area = 2.0 * math.pi * (1.0 - np.where(ok, cmin, 0.0))
        hit = ok & (np.einsum("ij,ij->i", n, axis) >= cmin) & (area > 0)
        q[hit] += (1.0 - self.defensive) / area[hit]
        q[~ok] = 1.0 / (4.0 * math.pi)
        return q

    def draw(self, rng, m):
        a1, a2 = np.asarray(self.a1), np.asarray(self.a2)
        P1 = np.asarray(self.c1) + ball_points(rng, m, 6) * a1
        vb = np.asarray(self.c2[3:]) + ball_points(rng, m, 3) * a2[3:]
        t = self.t0 + (self.t1 - self.t0) * rng.random(m)
        v = P1[:, 3:]
        y = P1[:, :3] + t[:, None] * v
        axis, cmin = self._cap(y, vb, t)
        n = _uniform_sphere(rng, m)
        use = (rng.random(m) >= self.defensive) & (cmin <= 1.0)
        if use.any():
            n[use] = _cap_rows(rng, axis[use], cmin[use])
        V0 = np.concatenate([v, vb], axis=1)
        V = _reflect_n(V0, n) if self.reflected else V0
        return np.concatenate([y, n, V, t[:, None]], axis=1)

    def density(self, P):
        y, n, V, t = P[:, :3], P[:, 3:6], P[:, 6:12], P[:, 12]
        V0 = _reflect_n(V, n) if self.reflected else V
        v, vb = V0[:, :3], V0[:, 3:]
        a1, a2 = np.asarray(self.a1), np.asarray(self.a2)
        q1 = (np.concatenate([y - t[:, None] * v, v], axis=1) - np.asarray(self.c1)) / a1
        q2 = (vb - np.asarray(self.c2[3:])) / a2[3:]
        ok = ((q1 * q1).sum(axis=1) <= 1.0) & ((q2 * q2).sum(axis=1) <= 1.0) & (t >= self.t0) & (t <= self.t1)
        axis, cmin = self._cap(y, vb, t)
        return np.where(ok, self._n_density(n, axis, cmin), 0.0) / self.volume


def _cap_rows(rng, axis, cmin):
    """One uniform point per row in the cap {u : u.axis >= cmin}."""
    m = len(axis)
    c = 1.0 - rng.random(m) * (1.0 - cmin)
    phi = 2.0 * math.pi * rng.random(m)
    s = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    ref = np.where(np.abs(axis[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axis, e1)
    return c[:, None] * axis + s[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)


@dataclass(frozen=True)
class MirroredPiece:
    """Image of a region under n -> -n together with V -> reflection of V through n.

    The map is a volume-preserving involution, so uniform sampling carries over.
    """

    base: object
    dim: int = 13

    @property
    def volume(self):
        return self.base.volume

    @staticmethod
    def _map(P):
        n = -P[:, 3:6]
        return np.concatenate([P[:, :3], n, _reflect_n(P[:, 6:12], n), P[:, 12:]], axis=1)

    def draw(self, rng, m):
        return self._map(self.base.draw(rng, m))

    def density(self, P):
        return self.base.density(self._map(P))


def _particle_blocks(region):
    """Enclosing 6-d ellipsoids (centre, semi-axes) of each particle's (x, v) in a support region."""
    out = []
    for I in ((0, 1, 2, 6, 7, 8), (3, 4, 5, 9, 10, 11)):
        if isinstance(region, EllipsoidBlocks):
            c, a, touched = np.empty(6), np.empty(6), set()
            for bi, (idx, bc, axes) in enumerate(region.blocks):
                for k, i in enumerate(I):
                    if i in idx:
                        j = list(idx).index(i)
                        c[k], a[k] = bc[j], axes[j]
                        touched.add(bi)
            out.append((c, a * math.sqrt(len(touched))))
        else:
            box = region if isinstance(region, Box) else region.bounding_box()
            sel = list(I)
            out.append(((box.lo[sel] + box.hi[sel]) / 2, box.widths[sel] / 2 * math.sqrt(6)))
    return out


def trace_pieces(F0, window, eps=1.0, samples=40_000, seed=0, pad=0.1):
    """Regions covering the boundary trace of F(., t) for t in ``window``.

    For each support region, contact events of sampled support points give a
    range of contact times (padded).  Two pieces are emitted per region:
    trace velocity equal to the pre-image velocity, or to its reflection.
    Returns [] when no contact occurs.
    """
    _, _, _, _, t, src = contact_events(F0, window, eps, samples, seed)
    regions = F0.support_regions()
    pieces = []
    for j in np.unique(src):
        sel = src == j
        span = t[sel].max() - t[sel].min()
        t0 = max(window[0], t[sel].min() - pad * span - 1e-3)
        t1 = min(window[1], t[sel].max() + pad * span + 1e-3)
        (c1, a1), (c2, a2) = _particle_blocks(regions[j])
        for refl in (False, True):
            pieces.append(TracePiece(tuple(c1), tuple(a1), tuple(c2), tuple(a2), t0, t1, float(eps), refl))
    return pieces


def contact_pieces(F0, eps=1.0):
    """Pieces covering boundary states (y, n, V) at which F0 itself is nonzero.

    The time column is fixed at 0.  Pieces with ``reflected`` set carry the
    reflection of the support velocity.
    """
    pieces = []
    for r in F0.support_regions():
        (c1, a1), (c2, a2) = _particle_blocks(r)
        for refl in (False, True):
            pieces.append(TracePiece(tuple(c1), tuple(a1), tuple(c2), tuple(a2), 0.0, 0.0, float(eps), refl))
    return pieces
