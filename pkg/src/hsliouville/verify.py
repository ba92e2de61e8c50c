"""Numerical checks of the weak formulation and its companions.

Every check returns a CheckReport.  Monte Carlo checks pass when the
residual is within three combined standard errors; deterministic checks
use an absolute tolerance.  Seeds are derived from (master seed, check
name), so results do not depend on the order in which checks run.
"""

from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from ._backend import INVALID, NON, POST, PRE, kernels
from .distribution import (
    BumpComponent,
    ChaoticDatum,
    OneParticleDatum,
    MirroredPiece,
    _reflect_n,
    chaotic_free,
    contact_events,
    contact_pieces,
    lagrangian_integrate,
    make_chaotic_datum,
    mild_values,
    reachable_regions,
    sample_support,
    symmetry_defect,
    trace_pieces,
)
from .errors import AsymmetricDatum, CornerHit, UnsupportedRegion
from .flow import doubled_flow_batch, flow_batch, fold_batch
from .geometry import RTOL, SQRT2, apply_scatter, conserved_quantities, sigma_star_batch
from .sinai import fold_chain, sinai_flow, sinai_unfold
from .quadrature import (
    Box,
    EllipsoidBlocks,
    Estimate,
    Mixture,
    QuadratureSpec,
    TestFunction,
    boundary_integrate,
    monte_carlo,
    stream,
)

__all__ = [
    "CheckReport",
    "check_seed",
    "weak_liouville_residual",
    "region_identity_check",
    "chaos_duality_check",
    "chaos_witness",
    "sheet_swap_check",
    "bbgky_residual",
    "conservation_check",
    "divergence_check",
    "identity_suite",
    "random_states",
    "head_on_datum",
    "weak_battery",
    "bbgky_test_function",
    "sinai_checks",
    "bisect_collision_time",
]

SIGMAS = 3.0


@dataclass
class CheckReport:
    name: str
    left: float
    left_error: float
    right: float
    right_error: float
    residual: float
    tolerance: float
    passed: bool
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "left": self.left,
            "left_error": self.left_error,
            "right": self.right,
            "right_error": self.right_error,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "notes": self.notes,
        }

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: residual {self.residual:.3e} (tolerance {self.tolerance:.3e})"


def mc_report(name, left, right, residual=None, notes=None, sigmas=SIGMAS):
    """Report comparing two estimates; ``residual`` overrides left - right when they share samples."""
    res = residual if residual is not None else left - right
    tol = sigmas * res.standard_error
    return CheckReport(name, left.value, left.standard_error, right.value, right.standard_error,
                       res.value, tol, bool(abs(res.value) <= tol), dict(notes or {}))


def exact_report(name, residual, tolerance, notes=None, left=0.0, right=0.0):
    residual = float(residual)
    ok = bool(np.isfinite(residual) and abs(residual) <= tolerance)
    return CheckReport(name, float(left), 0.0, float(right), 0.0, residual, float(tolerance), ok, dict(notes or {}))


def check_seed(master, name):
    """Seed for one check, derived from the master seed and the check name."""
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence(int(master), spawn_key=(key,)).generate_state(1)[0])


def _spec_for(spec, name):
    spec = spec or QuadratureSpec()
    return spec.with_(seed=check_seed(spec.seed, name))


def _provenance(spec, eps, **extra):
    out = {"seed": spec.seed, "samples": spec.sample_count, "epsilon": eps}
    out.update(extra)
    return out


def _zero(n):
    return Estimate(0.0, 0.0, int(n))


# ---------------------------------------------------------------- standard scenarios

def head_on_datum(eps=1.0, radius=0.45):
    """Two bumps at -2 eps and +2 eps moving towards each other at unit speed."""
    return OneParticleDatum([
        BumpComponent((-2.0 * eps, 0.0, 0.0), (1.0, 0.0, 0.0), radius * eps, radius),
        BumpComponent((2.0 * eps, 0.0, 0.0), (-1.0, 0.0, 0.0), radius * eps, radius),
    ])


def _tf(cx, hx, cv, hv, window, eps):
    c = np.concatenate([np.asarray(cx, dtype=float) * eps, cv])
    h = np.concatenate([np.asarray(hx, dtype=float) * eps, hv])
    t0, th = window
    return TestFunction(c, h, t0 * eps, th * eps)


def weak_battery(eps=1.0):
    """Test functions spanning the collision epoch of ``head_on_datum``.

    Collisions happen for t in roughly [1, 2] eps.
    """
    wide = [0.6, 0.6, 0.6, 0.6, 0.6, 0.6]
    return {
        "no_collision": _tf([-1.8, 0, 0, 1.8, 0, 0], [0.8, .6, .6, .8, .6, .6], [1, 0, 0, -1, 0, 0], wide, (0.2, 0.5), eps),
        "pre_collision": _tf([-1.5, 0, 0, 1.5, 0, 0], [1.3, .6, .6, 1.3, .6, .6], [1, 0, 0, -1, 0, 0], wide, (0.8, 0.8), eps),
        "straddling": _tf([-0.8, 0, 0, 0.8, 0, 0], [0.9, .6, .6, .9, .6, .6], [1, 0, 0, -1, 0, 0], wide, (1.2, 0.9), eps),
        "post_collision": _tf([-1.5, 0, 0, 1.5, 0, 0], [1.3, .6, .6, 1.3, .6, .6], [-1, 0, 0, 1, 0, 0], wide, (2.5, 1.0), eps),
        "boundary": _tf([-0.5, 0, 0, 0.5, 0, 0], [0.6, .6, .6, .6, .6, .6], [0] * 6, [1.6, .7, .7, 1.6, .7, .7], (1.5, 0.8), eps),
    }


def bbgky_test_function(eps=1.0):
    """One-particle psi around the left sphere while it collides."""
    return TestFunction(np.array([-0.6 * eps, 0, 0, 1.0, 0, 0]), np.array([1.0 * eps, .7 * eps, .7 * eps, .7, .7, .7]),
                        1.5 * eps, 1.0 * eps)


# ---------------------------------------------------------------- weak Liouville

def _orientation(flip):
    return -1.0 if flip else 1.0


def weak_liouville_residual(F0, Phi, eps=1.0, spec=None, boundary_spec=None, flip_orientation=False,
                            name="weak_liouville"):
    """I(Phi) + J(Phi) + boundary term for the mild solution of F0.

    I and J are the interior pairings of F with the time derivative and the
    transport derivative of Phi, sampled along trajectories.  The boundary
    term is the integral of F Phi V.nu over the boundary, velocity and time,
    with nu = (1/sqrt2)[-n; n] pointing out of the excluded ball;
    ``flip_orientation`` reverses it for diagnostics.
    """
    spec = _spec_for(spec, name)
    bspec = (boundary_spec or spec).with_(seed=check_seed(spec.seed, name + "/boundary"))
    sign = _orientation(flip_orientation)

    def g(X, V, t):
        Z = np.concatenate([X, V], axis=1)
        _, tr = Phi.transport(Z, t)
        dt = Phi.dt(Z, t)
        return np.stack([dt, tr - dt, tr], axis=1)

    I, J, IJ = lagrangian_integrate(F0, g, Phi.time_window, spec, eps, label=name + "/interior")
    pieces = trace_pieces(F0, Phi.time_window, eps, seed=spec.seed)

    def bint(y, n, V, t):
        Y = np.concatenate([y, y + eps * n], axis=1)
        F = mild_values(F0, Y, V, t, eps)
        w = V[:, 3:] - V[:, :3]
        return sign * F * Phi.eval(Y, V, t) * np.einsum("ij,ij->i", w, n) / SQRT2

    if pieces:
        B = boundary_integrate(bint, eps, bspec, pieces, label=name + "/boundary")
    else:
        B = _zero(bspec.sample_count)
    notes = _provenance(spec, eps, boundary_samples=bspec.sample_count, boundary_seed=bspec.seed,
                        I=I.to_dict(), J=J.to_dict(), boundary=B.to_dict(),
                        orientation="flipped" if flip_orientation else "standard",
                        contact_in_window=bool(pieces))
    return mc_report(name, IJ, -B, residual=IJ + B, notes=notes)


# ---------------------------------------------------------------- region identities

_REGION_NAMES = {"--": ("-", "-"), "-+": ("-", "+"), "+-": ("+", "-"), "++": ("+", "+")}


def _parse_region(region):
    if isinstance(region, str):
        key = region.replace("(", "").replace(")", "").replace(",", "").replace(" ", "")
    else:
        key = "".join(region)
    if key not in _REGION_NAMES:
        raise UnsupportedRegion(f"unknown region {region!r}")
    return _REGION_NAMES[key]


def _line_window(region, P0, D):
    """Interval of s where P0 + s D lies in the region (lo > hi when empty)."""
    m = len(P0)
    lo, hi = np.full(m, -np.inf), np.full(m, np.inf)
    if isinstance(region, EllipsoidBlocks):
        for idx, c, axes in region.blocks:
            u = (P0[:, idx] - np.asarray(c)) / np.asarray(axes)
            d = D[:, idx] / np.asarray(axes)
            a = (d * d).sum(axis=1)
            b = (u * d).sum(axis=1)
            c0 = (u * u).sum(axis=1) - 1.0
            disc = b * b - a * c0
            still = a == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.sqrt(np.maximum(disc, 0.0))
                l1 = np.where(still, np.where(c0 <= 0, -np.inf, np.inf), (-b - r) / a)
                h1 = np.where(still, np.where(c0 <= 0, np.inf, -np.inf), (-b + r) / a)
            empty = (~still) & (disc < 0)
            l1[empty], h1[empty] = np.inf, -np.inf
            lo, hi = np.maximum(lo, l1), np.minimum(hi, h1)
        return lo, hi
    box = region if isinstance(region, Box) else region.bounding_box()
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(box.dim):
            dk = D[:, k]
            a = (box.lo[k] - P0[:, k]) / dk
            b = (box.hi[k] - P0[:, k]) / dk
            l1 = np.where(dk == 0, np.where((P0[:, k] >= box.lo[k]) & (P0[:, k] <= box.hi[k]), -np.inf, np.inf),
                          np.minimum(a, b))
            h1 = np.where(dk == 0, np.where((P0[:, k] >= box.lo[k]) & (P0[:, k] <= box.hi[k]), np.inf, -np.inf),
                          np.maximum(a, b))
            lo, hi = np.maximum(lo, l1), np.minimum(hi, h1)
    return lo, hi


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _region_H(F0, Phi, X, V, cone, lower, eps):
    """H(X, V) = integral over the region's t-range of F0(A(t), U) Phi(X, V, t)."""
    m = len(X)
    out = np.zeros(m)
    codes, _, tau, mm = kernels.collision(np.ascontiguousarray(X), np.ascontiguousarray(V), float(eps), RTOL)
    ok = codes == cone
    if not ok.any():
        return out
    X, V, tau, mm = X[ok], V[ok], tau[ok], mm[ok]
    free = (cone == PRE) == lower
    U = V if free else apply_scatter(V, mm)
    Y = X + tau[:, None] * V
    P0 = np.concatenate([Y - tau[:, None] * U, U], axis=1)
    D = np.concatenate([-U, np.zeros_like(U)], axis=1)
    w0, w1 = Phi.time_window
    r_lo = np.maximum(-tau, w0) if lower else np.full(len(X), w0)
    r_hi = np.full(len(X), w1) if lower else np.minimum(-tau, w1)
    regions = F0.support_regions()
    wins = [_line_window(r, P0, D) for r in regions]
    H = np.zeros(len(X))
    for lo, hi in wins:
        a, b = np.maximum(lo, r_lo), np.minimum(hi, r_hi)
        live = b > a
        if not live.any():
            continue
        a, b = a[live], b[live]
        t = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GL_X[None, :]
        k = len(_GL_X)
        n = int(live.sum())
        P = np.repeat(P0[live], k, axis=0) + t.reshape(-1, 1) * np.repeat(D[live], k, axis=0)
        Zr = np.repeat(np.concatenate([X[live], V[live]], axis=1), k, axis=0)
        count = np.zeros(n * k)
        for lo2, hi2 in wins:
            count += (t.ravel() >= np.repeat(lo2[live], k)) & (t.ravel() <= np.repeat(hi2[live], k))
        vals = F0.eval(P[:, :6], P[:, 6:]) * Phi.value(Zr, t.ravel()) / np.maximum(count, 1)
        H[live] += 0.5 * (b - a) * (vals.reshape(n, k) @ _GL_W)
    out[ok] = H
    return out


def region_identity_check(F0, Phi, region, side, eps=1.0, spec=None, time_nodes=4, fd_step=1e-5):
    """Left and right sides of one of the eight region identities.

    ``region`` is (cone sign, time sign): cone - is pre-collisional, + is
    post-collisional; time - is the part ``t >= -tau`` of the velocity-time
    cone and + the part ``t < -tau``.  On each part the mild solution is
    F0(A(t), U) with A = Y - (t + tau) U, Y the contact configuration and U
    the velocity V (free parts) or its reflection.  With s = -1 on
    ``t >= -tau`` parts and +1 otherwise:

    time  : int_R F dPhi/dt = s F0(Y, U) Phi(-tau) + int_R (U.grad F0) Phi
    space : int_R F V.grad Phi = V.grad H - int_R (U.grad F0) Phi - s F0(Y, U) Phi(-tau)

    where H = int_R F0(A(t), U) Phi dt and all terms are integrated over
    positions and velocities.  V.grad H is evaluated by central differences
    of a Gauss-Legendre H.
    """
    csign, tsign = _parse_region(region)
    if side not in ("time", "space"):
        raise UnsupportedRegion(f"unknown side {side!r}")
    cone = PRE if csign == "-" else POST
    lower = tsign == "-"
    s = -1.0 if lower else 1.0
    name = f"region_identity/{side}/({csign},{tsign})"
    spec = _spec_for(spec, name)
    w0, w1 = Phi.time_window

    def in_region(X, V, t):
        codes, _, tau, _ = kernels.collision(np.ascontiguousarray(X), np.ascontiguousarray(V), float(eps), RTOL)
        return (codes == cone) & ((t >= -tau) if lower else (t < -tau))

    def g(X, V, t, X0, V0):
        mask = in_region(X, V, t)
        Z = np.concatenate([X, V], axis=1)
        val, tr = Phi.transport(Z, t)
        dt = Phi.dt(Z, t)
        lhs = dt if side == "time" else tr - dt
        f0 = F0.eval(X0, V0)
        ratio = np.einsum("ij,ij->i", V0, F0.grad_X(X0, V0)) / f0
        grad = ratio * val
        comb = lhs - grad if side == "time" else lhs + grad
        return np.stack([lhs, grad, comb], axis=1) * mask[:, None]

    lhs, G, comb = lagrangian_integrate(F0, g, (w0, w1), spec, eps, label=name + "/interior", origin=True)

    # boundary evaluation term: X = Y - tau V with Y a contact state in the support of F0
    pieces = Mixture(contact_pieces(F0, eps))
    span = w1 - w0

    def bdraw(rng, m):
        P, wt = pieces.sample(rng, m)
        y, n, V = P[:, :3], P[:, 3:6], P[:, 6:12]
        tau = -(w0 + span * rng.random(m))
        Y = np.concatenate([y, y + eps * n], axis=1)
        X = Y - tau[:, None] * V
        codes, _, tc, _ = kernels.collision(np.ascontiguousarray(X), np.ascontiguousarray(V), float(eps), RTOL)
        ok = (codes == cone) & (np.abs(tc - tau) <= 1e-8 * (1.0 + np.abs(tau)))
        free = (cone == PRE) == lower
        U = V if free else apply_scatter(V, n)
        w = V[:, 3:] - V[:, :3]
        flux = eps * eps * np.abs(np.einsum("ij,ij->i", w, n))
        out = np.zeros(m)
        if ok.any():
            Z = np.concatenate([X[ok], V[ok]], axis=1)
            out[ok] = F0.eval(Y[ok], U[ok]) * Phi.value(Z, -tau[ok]) * flux[ok] * span * wt[ok]
        return out

    B = monte_carlo(bdraw, spec.sample_count, spec.seed, name + "/contact", spec.chunk_size, spec.workers)
    notes = _provenance(spec, eps, lhs=lhs.to_dict(), gradient_term=G.to_dict(), boundary_term=B.to_dict())
    if side == "time":
        right = B.scale(s) + G
        return mc_report(name, lhs, right, residual=comb - B.scale(s), notes=notes)

    # V.grad H over phase space, sampled from reachable regions at a grid of times
    dt = span / time_nodes
    mix = Mixture([reachable_regions(F0, w0 + (k + 0.5) * dt, eps, seed=spec.seed, spread=0.5 * dt * 1.05)
                   for k in range(time_nodes)], weights=[1.0] * time_nodes)

    def hdraw(rng, m):
        P, wt = mix.sample(rng, m)
        X, V = P[:, :6], P[:, 6:]
        out = np.zeros(m)
        near = Phi.phase_box.pad(0.0, 2 * fd_step * (1 + np.abs(V).max())).contains(P)
        if near.any():
            Xn, Vn = X[near], V[near]
            hp = _region_H(F0, Phi, Xn + fd_step * Vn, Vn, cone, lower, eps)
            hm = _region_H(F0, Phi, Xn - fd_step * Vn, Vn, cone, lower, eps)
            out[near] = (hp - hm) / (2 * fd_step) * wt[near]
        return out

    DH = monte_carlo(hdraw, spec.sample_count, spec.seed, name + "/divergence", spec.chunk_size, spec.workers)
    notes["divergence_term"] = DH.to_dict()
    right = DH - G - B.scale(s)
    return mc_report(name, lhs, right, residual=comb - DH + B.scale(s), notes=notes)


# ---------------------------------------------------------------- chaos duality

def _doubled_pairing(F0, Phi, eps, spec, label, swapped=False):
    """<f, R Phi> with the doubled datum carried back to the table.

    Sheet 1 carries F0 and sheet 2 the twisted datum F0 composed with the
    involution.  Substituting the involution on sheet 2 gives

        <f, R Phi> = 1/2 int F0(Z) Phi(fold S_t (Z, 1), t)
                   + 1/2 int F0(Z) Phi(fold S_t (Sigma* Z, 2), t).

    ``swapped`` puts the twisted datum on sheet 1 and pairs with R applied
    to Phi composed with the involution, which must give the same value.
    """
    mix = Mixture(F0.support_regions())
    w0, w1 = Phi.time_window
    span = w1 - w0
    a, b = (2, 1) if swapped else (1, 2)

    def phi(X, V, s, t):
        # R applied to Phi o Sigma* sends sheet 1 through the involution
        A, B = fold_batch(X, V, 3 - s if swapped else s, eps)
        return Phi.eval(A, B, t)

    def draw(rng, m):
        P, wt = mix.sample(rng, m)
        t = w0 + span * rng.random(m)
        X, V = P[:, :6], P[:, 6:]
        f = F0.eval(X, V)
        out = np.zeros(m)
        live = f > 0
        if live.any():
            X, V, t = X[live], V[live], t[live]
            X1, s1 = doubled_flow_batch(X, V, a, t, eps, check=False)
            Xs, Vs = sigma_star_batch(X, V, eps)
            X2, s2 = doubled_flow_batch(Xs, Vs, b, t, eps, check=False)
            out[live] = (wt * f * span)[live] * 0.5 * (phi(X1, V, s1, t) + phi(X2, Vs, s2, t))
        return out

    return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)


def chaos_duality_check(phi0, Phi, eps=1.0, spec=None, name="chaos_duality"):
    """<f, R Phi> on the doubled table against <F, Phi> on the table.

    The doubled pairing is sampled along straight-line doubled trajectories
    (see ``_doubled_pairing``), <F, Phi> along hard-sphere trajectories
    with an independent stream.
    """
    F0 = phi0 if isinstance(phi0, ChaoticDatum) else make_chaotic_datum(phi0, eps)
    spec = _spec_for(spec, name)
    left = _doubled_pairing(F0, Phi, eps, spec, name + "/doubled")
    right = lagrangian_integrate(F0, lambda X, V, t: Phi.eval(X, V, t), Phi.time_window, spec, eps,
                                 label=name + "/table")
    return mc_report(name, left, right, notes=_provenance(spec, eps))


def sheet_swap_check(phi0, Phi, eps=1.0, spec=None, name="sheet_swap"):
    """<f, R Phi> is unchanged by exchanging sheets and composing Phi with the involution."""
    F0 = phi0 if isinstance(phi0, ChaoticDatum) else make_chaotic_datum(phi0, eps)
    spec = _spec_for(spec, name)
    left = _doubled_pairing(F0, Phi, eps, spec, name + "/standard")
    right = _doubled_pairing(F0, Phi, eps, spec, name + "/swapped", swapped=True)
    return mc_report(name, left, right, notes=_provenance(spec, eps))


def chaos_witness(phi0, eps=1.0, seed=42, samples=20_000, name="chaos_pointwise"):
    """Pointwise comparison of F with the free-transport product f (x) f.

    Before the first collision time t* of the support the two agree at every
    sampled state.  After it, a collided support point Z0 gives a witness
    Z = T_t Z0 at which they differ.
    """
    F0 = phi0 if isinstance(phi0, ChaoticDatum) else make_chaotic_datum(phi0, eps)
    rng = stream(check_seed(seed, name), name)
    P = sample_support(F0, rng, samples)
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    codes, _, tau, _ = kernels.collision(X, V, float(eps), RTOL)
    pre = codes == PRE
    if not pre.any():
        return exact_report(name, 0.0, 0.0, {"first_collision": None, "witness": None,
                                              "note": "no collisions in the support sample"})
    tstar = float(tau[pre].min())
    worst = 0.0
    for frac in (0.25, 0.5, 0.9):
        t = frac * tstar
        Xt, Vt = flow_batch(X, V, np.full(len(X), t), eps)
        F = mild_values(F0, Xt, Vt, np.full(len(X), t), eps)
        ff = chaotic_free(F0.phi0, Xt, Vt, np.full(len(X), t))
        worst = max(worst, float(np.max(np.abs(F - ff))))
    k = int(np.argmax(np.where(pre, F0.eval(X, V), -1.0)))
    t_after = float(tau[k]) + 0.5
    Xw, Vw = flow_batch(X[k:k + 1], V[k:k + 1], t_after, eps)
    Fw = float(mild_values(F0, Xw, Vw, np.array([t_after]), eps)[0])
    ffw = float(chaotic_free(F0.phi0, Xw, Vw, np.array([t_after]))[0])
    scale = float(F0.eval(X, V).max())
    gap = abs(Fw - ffw)
    ok = worst <= 1e-12 * scale and gap > 1e-3 * scale
    notes = {"first_collision": tstar, "max_difference_before": worst,
             "witness": {"t": t_after, "Z": np.concatenate([Xw[0], Vw[0]]).tolist(), "F": Fw, "free_product": ffw}}
    rep = exact_report(name, worst, 1e-12 * scale, notes, left=Fw, right=ffw)
    rep.passed = bool(ok)
    return rep


# ---------------------------------------------------------------- BBGKY

def bbgky_residual(F0, psi, eps=1.0, spec=None, name="bbgky"):
    """First hierarchy equation tested against a one-particle psi(x, v, t).

    LHS = int F1 (d/dt + v.grad_x) psi, fused with the marginal integral.
    RHS = -eps^2 int dx dn int_{C-(n)} |w.n| psi(x, v, t)
          [F(x, v', x - eps n, vbar', t) - F(x, v, x + eps n, vbar, t)]
    with C-(n) = {(v - vbar).n > 0} and primes the reflection through n.
    The gain term is evaluated at the antipodal contact x - eps n; the form
    with both terms at x + eps n is reported in the notes as
    ``gain_same_side`` and vanishes identically for the mild solution.
    """
    spec = _spec_for(spec, name)
    defect = symmetry_defect(F0, seed=spec.seed)
    if defect > 1e-9:
        raise AsymmetricDatum(f"datum is not symmetric under exchange (defect {defect:.2e})")
    if psi.dim != 6:
        raise ValueError("psi must be a one-particle test function")
    window = psi.time_window

    def g(X, V, t):
        _, tr = psi.transport(np.concatenate([X[:, :3], V[:, :3]], axis=1), t)
        return tr

    lhs = lagrangian_integrate(F0, g, window, spec, eps, label=name + "/lhs")
    base = [p for p in trace_pieces(F0, window, eps, seed=spec.seed) if not p.reflected]
    if not base:
        zero = _zero(spec.sample_count)
        return mc_report(name, lhs, zero, notes=_provenance(spec, eps, note="no contact in window"))

    def common(y, n, V, t):
        w = V[:, 3:] - V[:, :3]
        wn = np.einsum("ij,ij->i", w, n)
        ps = psi.value(np.concatenate([y, V[:, :3]], axis=1), t)
        return np.where(wn < 0, -wn * ps / SQRT2, 0.0)

    def loss(y, n, V, t):
        k = common(y, n, V, t)
        F = mild_values(F0, np.concatenate([y, y + eps * n], axis=1), V, t, eps)
        Fs = mild_values(F0, np.concatenate([y, y + eps * n], axis=1), _reflect_n(V, n), t, eps)
        return np.stack([k * F, k * Fs], axis=1)

    def gain(y, n, V, t):
        k = common(y, n, V, t)
        return k * mild_values(F0, np.concatenate([y, y - eps * n], axis=1), _reflect_n(V, n), t, eps)

    L, Gs = boundary_integrate(loss, eps, spec, base, label=name + "/loss")
    G = boundary_integrate(gain, eps, spec.with_(seed=check_seed(spec.seed, "gain")),
                           [MirroredPiece(p) for p in base], label=name + "/gain")
    rhs = (G - L).scale(-1.0)
    notes = _provenance(spec, eps, loss=L.to_dict(), gain=G.to_dict(), gain_same_side=Gs.to_dict(),
                        same_side_rhs=(Gs.value - L.value) * -1.0, symmetry_defect=defect,
                        convention="gain at x - eps n, C-(n) = {(v - vbar).n > 0}")
    return mc_report(name, lhs, rhs, notes=notes)


# ---------------------------------------------------------------- conservation

QUANTITIES = ("mass", "momentum_x", "momentum_y", "momentum_z",
              "angular_momentum_x", "angular_momentum_y", "angular_momentum_z", "energy")


def _moments(X, V):
    p, L, E = conserved_quantities(np.concatenate([X, V], axis=1))
    return np.column_stack([np.ones(len(X)), p, L, E])


def conservation_check(F0, times=(-2.0, -0.5, 0.5, 2.0), eps=1.0, spec=None, name="conservation"):
    """Mass, momentum, angular momentum and energy of F(., t) against F0.

    Both sides are Eulerian: F(., t) is evaluated pointwise on samples from
    ``reachable_regions``, whose density involves only shears and the
    involution, so agreement is a test of volume preservation by the flow.
    """
    spec = _spec_for(spec, name)
    reports = []

    def run(regions, fn, label):
        def draw(rng, m):
            P, wt = regions.sample(rng, m)
            X, V = P[:, :6], P[:, 6:]
            f = fn(X, V)
            out = np.zeros((m, len(QUANTITIES)))
            live = f != 0
            out[live] = (wt * f)[live, None] * _moments(X[live], V[live])
            return out

        return monte_carlo(draw, spec.sample_count, spec.seed, label, spec.chunk_size, spec.workers)

    ref = run(Mixture(F0.support_regions()), F0.eval, name + "/initial")
    for t in times:
        mix = reachable_regions(F0, t, eps, seed=spec.seed)
        tt = float(t)
        est = run(mix, lambda X, V: mild_values(F0, X, V, np.full(len(X), tt), eps), f"{name}/t={tt:g}")
        for q, a, b in zip(QUANTITIES, est, ref):
            reports.append(mc_report(f"{name}/{q}/t={tt:g}", a, b, notes=_provenance(spec, eps, time=tt)))
    return reports


# ---------------------------------------------------------------- divergence oracle

def divergence_check(eps=1.0, spec=None, flip_orientation=False, name="divergence_theorem"):
    """int_P div(g V) dX + int_dP g V.nu dH = 0 for a bump g straddling the boundary.

    Checks the surface element sqrt2 eps^2 dy dOmega and the orientation of
    nu = (1/sqrt2)[-n; n]; ``flip_orientation`` makes it fail.
    """
    spec = _spec_for(spec, name)
    sign = _orientation(flip_orientation)
    c = np.array([-0.45, 0.1, 0.0, 0.45, 0.0, 0.1]) * eps
    g = TestFunction(c, np.full(6, 0.7 * eps), 0.0, 1.0)
    Vs = np.array([[0.3, -0.2, 0.5, -0.7, 0.1, 0.4], [1.0, 0.0, 0.0, -1.0, 0.0, 0.0]])
    box = g.phase_box
    ybox = box.select([0, 1, 2])

    def interior(rng, m):
        X = box.draw(rng, m)
        ok = np.linalg.norm(X[:, 3:] - X[:, :3], axis=1) >= eps
        grad = np.zeros((m, 6))
        grad[ok] = g.grad(X[ok], np.zeros(int(ok.sum())))
        return (grad @ Vs.T) * box.volume

    def boundary(rng, m):
        y = ybox.draw(rng, m)
        u = rng.standard_normal((m, 3))
        n = u / np.linalg.norm(u, axis=1, keepdims=True)
        X = np.concatenate([y, y + eps * n], axis=1)
        val = g.value(X, np.zeros(m))
        nu = sign * np.concatenate([-n, n], axis=1) / SQRT2
        return (val[:, None] * (nu @ Vs.T)) * (SQRT2 * eps * eps * ybox.volume * 4.0 * math.pi)

    A = monte_carlo(interior, spec.sample_count, spec.seed, name + "/interior", spec.chunk_size, spec.workers)
    Bd = monte_carlo(boundary, spec.sample_count, spec.seed, name + "/boundary", spec.chunk_size, spec.workers)
    reports = []
    for k in range(len(Vs)):
        reports.append(mc_report(f"{name}/V{k}", A[k], -Bd[k],
                                 notes=_provenance(spec, eps, velocity=Vs[k].tolist(),
                                                   orientation="flipped" if flip_orientation else "standard")))
    return reports


# ---------------------------------------------------------------- deterministic identities

def random_states(rng, n, eps=1.0, kind="any", margin=0.05):
    """Random (X, V) with the relative state kept away from grazing and from the boundary.

    ``kind`` is "pre", "post", "non" or "any" (a mix of the three).
    """
    if kind == "any":
        k = rng.integers(3, size=n)
        X = np.empty((n, 6))
        V = np.empty((n, 6))
        for j, kd in enumerate(("pre", "post", "non")):
            sel = k == j
            X[sel], V[sel] = random_states(rng, int(sel.sum()), eps, kd, margin)
        return X, V
    u = rng.standard_normal((n, 3))
    what = u / np.linalg.norm(u, axis=1, keepdims=True)
    e = rng.standard_normal((n, 3))
    e -= np.einsum("ij,ij->i", e, what)[:, None] * what
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    if kind == "non":
        b = eps * (1 + margin + 2 * rng.random(n))
        d = eps * (4 * rng.random(n) - 2)
    else:
        b = eps * (1 - margin) * rng.random(n)
        r = eps * (1 + margin + 2 * rng.random(n))
        d = np.sqrt(r * r - b * b) * (1.0 if kind == "pre" else -1.0)
    y = -d[:, None] * what + b[:, None] * e
    w = what * (0.5 + 1.5 * rng.random(n))[:, None]
    x = 4 * rng.random((n, 3)) - 2
    v = 2 * rng.random((n, 3)) - 1
    return np.concatenate([x, x + y], axis=1), np.concatenate([v, v + w], axis=1)


def bisect_collision_time(X, V, eps=1.0, iters=200):
    """Collision time by bisection on |y + s w|^2 - eps^2 between 0 and the closest approach."""
    y = X[:, 3:] - X[:, :3]
    w = V[:, 3:] - V[:, :3]
    smin = -np.einsum("ij,ij->i", y, w) / np.einsum("ij,ij->i", w, w)
    lo, hi = np.zeros(len(X)), smin.copy()
    f = lambda s: np.sum((y + s[:, None] * w) ** 2, axis=1) - eps * eps
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        outside = f(mid) > 0
        lo = np.where(outside, mid, lo)
        hi = np.where(outside, hi, mid)
    return 0.5 * (lo + hi)


def _tau(X, V, eps):
    codes, _, tau, m = kernels.collision(np.ascontiguousarray(X), np.ascontiguousarray(V), float(eps), RTOL)
    return codes, tau, m


def _sigma_matrices(m):
    nu = np.concatenate([m, -m], axis=1) / SQRT2
    return np.eye(6)[None] - 2.0 * nu[:, :, None] * nu[:, None, :]


def _sigma_star_matrix(X, V, eps):
    active, _, m = kernels.extended(np.ascontiguousarray(X), np.ascontiguousarray(V), float(eps), RTOL)
    S = _sigma_matrices(m)
    S[~active] = np.eye(6)
    return S


def _fd_jacobian(fn, Z, h):
    """Central-difference Jacobian of a map R^d -> R^d on rows of Z."""
    n, d = Z.shape
    J = np.empty((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, :, k] = (fn(Z + e) - fn(Z - e)) / (2 * h)
    return J


def identity_suite(eps=1.0, seed=42, n=10_000, n_fd=1_000, spec=None, flip_orientation=False):
    """Deterministic geometric checks plus the divergence oracle."""
    reports = []
    eps = float(eps)

    def rng_for(name):
        return stream(check_seed(seed, name), name)

    # collision time against bisection
    X, V = random_states(rng_for("collision_time"), n, eps, "pre")
    Xp, Vp = random_states(rng_for("collision_time/post"), n // 2, eps, "post")
    codes, tau, _ = _tau(X, V, eps)
    codes_p, tau_p, _ = _tau(Xp, Vp, eps)
    ref = bisect_collision_time(np.concatenate([X, Xp]), np.concatenate([V, Vp]), eps)
    got = np.concatenate([tau, tau_p])
    rel = float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))
    reports.append(exact_report("collision_time_vs_bisection", rel, 1e-10, {"states": len(ref)}))

    # transport identity I: V.grad_X tau = -1
    X, V = random_states(rng_for("ID-I"), n_fd, eps, "any")
    cone = _tau(X, V, eps)[0] != NON
    X, V = X[cone], V[cone]
    h = 1e-5
    dtau = (_tau(X + h * V, V, eps)[1] - _tau(X - h * V, V, eps)[1]) / (2 * h)
    reports.append(exact_report("transport_identity_I", float(np.max(np.abs(dtau + 1.0))), 1e-6,
                                {"states": len(X), "mean": float(dtau.mean())}))

    # transport identity II: V.grad_X sigma* = 0
    X, V = random_states(rng_for("ID-II"), n_fd, eps, "any")
    dS = (_sigma_star_matrix(X + h * V, V, eps) - _sigma_star_matrix(X - h * V, V, eps)) / (2 * h)
    reports.append(exact_report("transport_identity_II", float(np.max(np.abs(dS))), 1e-6, {"states": len(X)}))

    # scattering conservation and matrix structure
    X, V = random_states(rng_for("scattering"), n, eps, "pre")
    _, tau, m = _tau(X, V, eps)
    Vs = apply_scatter(V, m)
    S = _sigma_matrices(m)
    a = 4 * rng_for("scattering/origin").random(3) - 2
    Y = X + tau[:, None] * V
    colm = np.max(np.abs((Vs[:, :3] + Vs[:, 3:]) - (V[:, :3] + V[:, 3:])))
    L0 = np.cross(Y[:, :3] - a, V[:, :3]) + np.cross(Y[:, 3:] - a, V[:, 3:])
    L1 = np.cross(Y[:, :3] - a, Vs[:, :3]) + np.cross(Y[:, 3:] - a, Vs[:, 3:])
    coam = np.max(np.abs(L1 - L0))
    coke = np.max(np.abs(0.5 * np.sum(Vs**2, axis=1) - 0.5 * np.sum(V**2, axis=1)))
    invol = np.max(np.abs(S @ S - np.eye(6)))
    symm = np.max(np.abs(S - np.transpose(S, (0, 2, 1))))
    reports.append(exact_report("COLM", colm, 1e-12))
    reports.append(exact_report("COAM", coam, 1e-12, {"origin": a.tolist()}))
    reports.append(exact_report("COKE", coke, 1e-12))
    reports.append(exact_report("sigma_involution", invol, 1e-12))
    reports.append(exact_report("sigma_symmetric", symm, 1e-12))

    # phase-space involution: involution, unit Jacobian, collision-time symmetry
    X, V = random_states(rng_for("sigma_star"), n, eps, "any")
    X1, V1 = sigma_star_batch(X, V, eps)
    X2, V2 = sigma_star_batch(X1, V1, eps)
    inv = float(max(np.max(np.abs(X2 - X)), np.max(np.abs(V2 - V))))
    reports.append(exact_report("sigma_star_involution", inv, 1e-9, {"states": len(X)}))

    def sstar(Z):
        A, B = sigma_star_batch(Z[:, :6], Z[:, 6:], eps)
        return np.concatenate([A, B], axis=1)

    Z = np.concatenate([X, V], axis=1)
    det = np.abs(np.linalg.det(_fd_jacobian(sstar, Z, 1e-6)))
    reports.append(exact_report("sigma_star_unit_jacobian", float(np.max(np.abs(det - 1.0))), 1e-6,
                                {"states": len(X)}))
    cone = _tau(X, V, eps)[0] != NON
    t0 = _tau(X[cone], V[cone], eps)[1]
    t1 = _tau(X1[cone], V1[cone], eps)[1]
    reports.append(exact_report("collision_time_symmetry", float(np.max(np.abs(t1 - t0))), 1e-9,
                                {"states": int(cone.sum())}))

    # fold of the doubled flow equals the hard-sphere flow; group property
    X, V = random_states(rng_for("fold"), n, eps, "any")
    t = 8 * rng_for("fold/times").random(n) - 4
    Xt, Vt = flow_batch(X, V, t, eps)
    Xd, sd = doubled_flow_batch(X, V, 1, t, eps)
    Xf, Vf = fold_batch(Xd, V, sd, eps)
    fold_err = float(max(np.max(np.abs(Xf - Xt)), np.max(np.abs(Vf - Vt))))
    reports.append(exact_report("fold_equivalence", fold_err, 1e-9, {"pairs": n}))
    s = 8 * rng_for("group/times").random(n) - 4
    Xa, Va = flow_batch(Xt, Vt, s, eps)
    Xb, Vb = flow_batch(X, V, s + t, eps)
    grp = float(max(np.max(np.abs(Xa - Xb)), np.max(np.abs(Va - Vb))))
    reports.append(exact_report("flow_group_property", grp, 1e-9, {"pairs": n}))

    # volume preservation of T_t away from the collision time
    X, V = random_states(rng_for("measure"), n_fd, eps, "any")
    codes, tau, _ = _tau(X, V, eps)
    t = 6 * rng_for("measure/times").random(len(X)) - 3
    far = (codes == NON) | (np.abs(t - np.nan_to_num(tau)) > 1e-2)
    X, V, t = X[far], V[far], t[far]

    def Tt(Z):
        A, B = flow_batch(Z[:, :6], Z[:, 6:], t, eps, check=False)
        return np.concatenate([A, B], axis=1)

    det = np.abs(np.linalg.det(_fd_jacobian(Tt, np.concatenate([X, V], axis=1), 1e-6)))
    reports.append(exact_report("flow_unit_jacobian", float(np.max(np.abs(det - 1.0))), 1e-6,
                                {"states": len(X)}))

    dspec = (spec or QuadratureSpec(sample_count=200_000)).with_(seed=check_seed(seed, "divergence"))
    reports.extend(divergence_check(eps, dspec, flip_orientation))
    return reports


# ---------------------------------------------------------------- Sinai billiard

def _sinai_cases(rng, n, r, max_events=5, t_max=10.0):
    cases = []
    while len(cases) < n:
        x = rng.uniform(-1.0, 1.0, 2)
        if np.hypot(*x) < r + 1e-6:
            continue
        v = rng.standard_normal(2)
        t = rng.uniform(0.0, t_max)
        try:
            st = sinai_flow(x, v, t, r)
            if st.events > max_events:
                continue
            u, chain = sinai_unfold(x, v, t, r)
        except CornerHit:
            continue
        cases.append((x, v, t, st, u, chain))
    return cases


def sinai_checks(seed=42, n=1000, r=0.5, name="sinai"):
    """Unfolding against the direct flow, reversibility, speed and the axial orbit."""
    rng = stream(check_seed(seed, name), name)
    cases = _sinai_cases(rng, n, r)
    fold_err = rev_err = 0.0
    events = []
    for x, v, t, st, u, chain in cases:
        xf, vf = fold_chain(chain, u, v)
        fold_err = max(fold_err, float(np.max(np.abs(xf - st.position))), float(np.max(np.abs(vf - st.velocity))))
        back = sinai_flow(st.position, -st.velocity, t, r)
        rev_err = max(rev_err, float(np.max(np.abs(back.position - x))), float(np.max(np.abs(back.velocity + v))))
        events.append(st.events)
    info = {"states": len(cases), "max_events": int(max(events)), "mean_events": float(np.mean(events)), "radius": r}
    reports = [exact_report(f"{name}/fold_unfold", fold_err, 1e-9, info),
               exact_report(f"{name}/reversibility", rev_err, 1e-9, info)]

    x0 = np.array([0.6, 0.3])
    v0 = np.array([np.cos(0.7), np.sin(0.7)])
    far = sinai_flow(x0, v0, 500.0, r)
    reports.append(exact_report(f"{name}/speed", abs(np.hypot(*far.velocity) - 1.0), 1e-12, {"events": far.events}))

    # axial orbit between the wall x = 1 and the scatterer, period 1 for r = 1/2
    worst = 0.0
    for k in range(6):
        for frac, vx in ((0.0, 1.0), (0.5, -1.0)):
            st = sinai_flow((0.75, 0.0), (1.0, 0.0), k + frac, 0.5)
            worst = max(worst, float(np.max(np.abs(st.position - (0.75, 0.0)))), abs(st.velocity[0] - vx),
                        abs(st.velocity[1]))
    reports.append(exact_report(f"{name}/axial_orbit", worst, 1e-15, {"period": 1.0, "start": [0.75, 0.0]}))
    return reports
