# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample kernels mirroring ``_pykernels``.

Each loop body handles one phase point without temporaries; the
semantics (codes, tolerances, branch conventions) are identical to the
NumPy reference so the two backends agree to rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, NAN, fmax, fmin

cnp.import_array()

cdef enum:
    NON = 0
    PRE = 1
    POST = 2
    INVALID = -1


cdef struct Geo:
    int code
    int boundary
    double tau
    double m0, m1, m2


cdef inline double _root(double yy, double ww, double yw, double eps) nogil:
    cdef double c = yy - eps * eps
    cdef double disc = yw * yw - ww * c
    if disc < 0.0:
        disc = 0.0
    if yw >= 0.0:
        return c / (-yw - sqrt(disc))
    return c / (-yw + sqrt(disc))


cdef inline Geo _geo(const double* x, const double* v, double eps, double rtol, bint extend) nogil:
    cdef Geo g
    cdef double y0 = x[3] - x[0]
    cdef double y1 = x[4] - x[1]
    cdef double y2 = x[5] - x[2]
    cdef double w0 = v[3] - v[0]
    cdef double w1 = v[4] - v[1]
    cdef double w2 = v[5] - v[2]
    cdef double yy = y0 * y0 + y1 * y1 + y2 * y2
    cdef double ww = w0 * w0 + w1 * w1 + w2 * w2
    cdef double yw = y0 * w0 + y1 * w1 + y2 * w2
    cdef double ny = sqrt(yy)
    cdef double tol = rtol * fmax(1.0, ny)
    cdef double yhw, dn, u0, u1, u2, nu
    cdef bint active = False
    g.code = NON
    g.boundary = fabs(ny - eps) <= tol
    g.tau = NAN
    g.m0 = 0.0
    g.m1 = 0.0
    g.m2 = 0.0
    if ny < eps - tol:
        g.code = INVALID
        active = extend and ww > 0.0
    elif ww > 0.0:
        yhw = yw / sqrt(ww)
        dn = yhw * yhw + eps * eps - yy
        if dn >= -tol and not (g.boundary and fabs(yhw) <= tol):
            if yw < 0.0:
                g.code = PRE
            elif yw > 0.0:
                g.code = POST
        active = g.code == PRE or g.code == POST
    if active:
        g.tau = _root(yy, ww, yw, eps)
        u0 = y0 + g.tau * w0
        u1 = y1 + g.tau * w1
        u2 = y2 + g.tau * w2
        nu = sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        g.m0 = u0 / nu
        g.m1 = u1 / nu
        g.m2 = u2 / nu
    return g


cdef inline bint _switch(Geo g, double t) nogil:
    if g.code == PRE:
        if g.boundary:
            return t > fmax(g.tau, 0.0)
        return t > g.tau
    if g.code == POST:
        if g.boundary:
            return t < fmin(g.tau, 0.0)
        return t <= g.tau
    return False


cdef inline void _reflect_row(const double* a, Geo g, double* out) nogil:
    cdef double d = (a[0] - a[3]) * g.m0 + (a[1] - a[4]) * g.m1 + (a[2] - a[5]) * g.m2
    out[0] = a[0] - d * g.m0
    out[1] = a[1] - d * g.m1
    out[2] = a[2] - d * g.m2
    out[3] = a[3] + d * g.m0
    out[4] = a[4] + d * g.m1
    out[5] = a[5] + d * g.m2


def classify(const double[:, ::1] X, const double[:, ::1] V, double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i
    codes = np.empty(n, dtype=np.int8)
    boundary = np.empty(n, dtype=bool)
    cdef cnp.int8_t[::1] c = codes
    cdef cnp.npy_bool[::1] b = boundary
    cdef Geo g
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, False)
            c[i] = g.code
            b[i] = g.boundary
    return codes, boundary


def collision(const double[:, ::1] X, const double[:, ::1] V, double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i
    codes = np.empty(n, dtype=np.int8)
    boundary = np.empty(n, dtype=bool)
    tau = np.empty(n)
    m = np.empty((n, 3))
    cdef cnp.int8_t[::1] c = codes
    cdef cnp.npy_bool[::1] b = boundary
    cdef double[::1] tv = tau
    cdef double[:, ::1] mv = m
    cdef Geo g
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, False)
            c[i] = g.code
            b[i] = g.boundary
            tv[i] = g.tau
            mv[i, 0] = g.m0
            mv[i, 1] = g.m1
            mv[i, 2] = g.m2
    return codes, boundary, tau, m


def reflect(const double[:, ::1] A, const double[:, ::1] m):
    cdef Py_ssize_t n = A.shape[0], i, k
    out = np.empty((n, 6))
    cdef double[:, ::1] o = out
    cdef Geo g
    cdef double buf[6]
    with nogil:
        for i in range(n):
            g.m0 = m[i, 0]
            g.m1 = m[i, 1]
            g.m2 = m[i, 2]
            _reflect_row(&A[i, 0], g, buf)
            for k in range(6):
                o[i, k] = buf[k]
    return out


def flow(const double[:, ::1] X, const double[:, ::1] V, const double[::1] t,
         double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i, k
    Xo = np.empty((n, 6))
    Vo = np.empty((n, 6))
    codes = np.empty(n, dtype=np.int8)
    cdef double[:, ::1] xo = Xo
    cdef double[:, ::1] vo = Vo
    cdef cnp.int8_t[::1] c = codes
    cdef Geo g
    cdef double buf[6]
    cdef double ti
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, False)
            c[i] = g.code
            ti = t[i]
            if g.code == INVALID:
                for k in range(6):
                    xo[i, k] = NAN
                    vo[i, k] = NAN
            elif _switch(g, ti):
                _reflect_row(&V[i, 0], g, buf)
                for k in range(6):
                    xo[i, k] = X[i, k] + g.tau * V[i, k] + (ti - g.tau) * buf[k]
                    vo[i, k] = buf[k]
            else:
                for k in range(6):
                    xo[i, k] = X[i, k] + ti * V[i, k]
                    vo[i, k] = V[i, k]
    return Xo, Vo, codes


def doubled_flow(const double[:, ::1] X, const double[:, ::1] V,
                 const cnp.int8_t[::1] sheet, const double[::1] t,
                 double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i, k
    Xo = np.empty((n, 6))
    so = np.empty(n, dtype=np.int8)
    codes = np.empty(n, dtype=np.int8)
    cdef double[:, ::1] xo = Xo
    cdef cnp.int8_t[::1] s = so
    cdef cnp.int8_t[::1] c = codes
    cdef Geo g
    cdef double ti, yk
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, False)
            c[i] = g.code
            ti = t[i]
            s[i] = sheet[i]
            if g.code == INVALID:
                for k in range(6):
                    xo[i, k] = NAN
            elif _switch(g, ti):
                for k in range(6):
                    # contact point with the two centres exchanged
                    yk = X[i, (k + 3) % 6] + g.tau * V[i, (k + 3) % 6]
                    xo[i, k] = yk + (ti - g.tau) * V[i, k]
                s[i] = 3 - sheet[i]
            else:
                for k in range(6):
                    xo[i, k] = X[i, k] + ti * V[i, k]
    return Xo, so, codes


def extended(const double[:, ::1] X, const double[:, ::1] V, double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i
    active = np.empty(n, dtype=bool)
    tau = np.empty(n)
    m = np.empty((n, 3))
    cdef cnp.npy_bool[::1] a = active
    cdef double[::1] tv = tau
    cdef double[:, ::1] mv = m
    cdef Geo g
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, True)
            a[i] = g.tau == g.tau
            tv[i] = g.tau
            mv[i, 0] = g.m0
            mv[i, 1] = g.m1
            mv[i, 2] = g.m2
    return active, tau, m


def sigma_star(const double[:, ::1] X, const double[:, ::1] V, double eps, double rtol):
    cdef Py_ssize_t n = X.shape[0], i, k
    Xo = np.empty((n, 6))
    Vo = np.empty((n, 6))
    cdef double[:, ::1] xo = Xo
    cdef double[:, ::1] vo = Vo
    cdef Geo g
    cdef double bx[6]
    cdef double bv[6]
    with nogil:
        for i in range(n):
            g = _geo(&X[i, 0], &V[i, 0], eps, rtol, True)
            if g.tau == g.tau:
                _reflect_row(&X[i, 0], g, bx)
                _reflect_row(&V[i, 0], g, bv)
                for k in range(6):
                    xo[i, k] = bx[k]
                    vo[i, k] = bv[k]
            else:
                for k in range(6):
                    xo[i, k] = X[i, k]
                    vo[i, k] = V[i, k]
    return Xo, Vo
