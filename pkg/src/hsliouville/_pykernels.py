"""Vectorized NumPy kernels for batched two-sphere geometry and flows.

Every function takes C-contiguous float64 arrays of shape (N, 6) for
positions X = [x, xbar] and velocities V = [v, vbar].  The compiled
``_ckernels`` module exposes the same functions with identical semantics;
``_backend`` picks one at import.

Cone codes: 0 non-colliding, 1 pre-collisional, 2 post-collisional,
-1 invalid (centres closer than eps - tol).
"""

import numpy as np

NON, PRE, POST, INVALID = 0, 1, 2, -1


def _relative(X, V):
    y = X[:, 3:] - X[:, :3]
    w = V[:, 3:] - V[:, :3]
    yy = np.einsum("ij,ij->i", y, y)
    ww = np.einsum("ij,ij->i", w, w)
    yw = np.einsum("ij,ij->i", y, w)
    return y, w, yy, ww, yw


def _root(yy, ww, yw, eps):
    # c / (-yw - s sqrt(disc)) avoids cancellation on both branches; inside
    # the ball the same expression gives the extended time.
    c = yy - eps * eps
    disc = np.maximum(yw * yw - ww * c, 0.0)
    s = np.where(yw >= 0.0, 1.0, -1.0)
    den = -yw - s * np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        return c / den


def _classify(yy, ww, yw, eps, rtol):
    ny = np.sqrt(yy)
    tol = rtol * np.maximum(1.0, ny)
    boundary = np.abs(ny - eps) <= tol
    moving = ww > 0.0
    yhw = yw / np.sqrt(np.where(moving, ww, 1.0))
    dn = yhw * yhw + eps * eps - yy
    hit = moving & (dn >= -tol) & ~(boundary & (np.abs(yhw) <= tol))
    codes = np.zeros(yy.shape, dtype=np.int8)
    codes[hit & (yw < 0.0)] = PRE
    codes[hit & (yw > 0.0)] = POST
    codes[ny < eps - tol] = INVALID
    return codes, boundary


def classify(X, V, eps, rtol):
    """Cone codes and boundary flags."""
    _, _, yy, ww, yw = _relative(X, V)
    return _classify(yy, ww, yw, eps, rtol)


def _contact(y, w, tau, eps):
    u = y + tau[:, None] * w
    return u / np.linalg.norm(u, axis=1)[:, None]


def collision(X, V, eps, rtol):
    """Cone codes, boundary flags, collision times (nan off-cone) and contact directions."""
    y, w, yy, ww, yw = _relative(X, V)
    codes, boundary = _classify(yy, ww, yw, eps, rtol)
    hit = (codes == PRE) | (codes == POST)
    tau = np.full(yy.shape, np.nan)
    m = np.zeros_like(y)
    if hit.any():
        tau[hit] = _root(yy[hit], ww[hit], yw[hit], eps)
        m[hit] = _contact(y[hit], w[hit], tau[hit], eps)
    return codes, boundary, tau, m


def reflect(A, m):
    """Apply I - 2 nu nu^T with nu = [m, -m]/sqrt2 to rows of A."""
    d = np.einsum("ij,ij->i", A[:, :3] - A[:, 3:], m)[:, None] * m
    out = A.copy()
    out[:, :3] -= d
    out[:, 3:] += d
    return out


def _switch_mask(codes, boundary, tau, t):
    with np.errstate(invalid="ignore"):
        pre = codes == PRE
        post = codes == POST
        pre_cut = np.where(boundary, np.maximum(tau, 0.0), tau)
        post_cut = np.where(boundary, np.minimum(tau, 0.0), tau)
        after = pre & (t > pre_cut)
        # boundary outgoing states keep T_0 = id, so their cut is open
        before = post & np.where(boundary, t < post_cut, t <= post_cut)
    return after | before


def flow(X, V, t, eps, rtol):
    """Hard-sphere flow of every row by its own time t[i]."""
    codes, boundary, tau, m = collision(X, V, eps, rtol)
    Xo = X + t[:, None] * V
    Vo = V.copy()
    sw = _switch_mask(codes, boundary, tau, t)
    if sw.any():
        ts = tau[sw][:, None]
        Vs = reflect(V[sw], m[sw])
        Xo[sw] = X[sw] + ts * V[sw] + (t[sw][:, None] - ts) * Vs
        Vo[sw] = Vs
    bad = codes == INVALID
    Xo[bad] = np.nan
    Vo[bad] = np.nan
    return Xo, Vo, codes


def doubled_flow(X, V, sheet, t, eps, rtol):
    """Straight-line flow on the doubled table; returns positions and sheets."""
    codes, boundary, tau, m = collision(X, V, eps, rtol)
    Xo = X + t[:, None] * V
    so = sheet.copy()
    sw = _switch_mask(codes, boundary, tau, t)
    if sw.any():
        ts = tau[sw][:, None]
        Y = X[sw] + ts * V[sw]
        Xo[sw] = np.concatenate([Y[:, 3:], Y[:, :3]], axis=1) + (t[sw][:, None] - ts) * V[sw]
        so[sw] = 3 - sheet[sw]
    Xo[codes == INVALID] = np.nan
    return Xo, so, codes


def extended(X, V, eps, rtol):
    """Extended scattering data on all of R^6 x R^6.

    Returns (active, tau, m): active marks rows where sigma* differs from the
    identity, tau the (extended) collision time, m the contact direction.
    """
    y, w, yy, ww, yw = _relative(X, V)
    codes, boundary = _classify(yy, ww, yw, eps, rtol)
    active = (codes == PRE) | (codes == POST) | ((codes == INVALID) & (ww > 0.0))
    tau = np.full(yy.shape, np.nan)
    m = np.zeros_like(y)
    if active.any():
        tau[active] = _root(yy[active], ww[active], yw[active], eps)
        m[active] = _contact(y[active], w[active], tau[active], eps)
    return active, tau, m


def sigma_star(X, V, eps, rtol):
    """Apply the extended scattering reflection to both position and velocity."""
    active, _, m = extended(X, V, eps, rtol)
    Xo = X.copy()
    Vo = V.copy()
    if active.any():
        Xo[active] = reflect(X[active], m[active])
        Vo[active] = reflect(V[active], m[active])
    return Xo, Vo
