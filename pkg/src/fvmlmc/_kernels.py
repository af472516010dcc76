"""Compiled structured-grid kernels for the finite volume operator.

All arrays are three dimensional; 1D and 2D problems use leading axes of
length one whose face transmissibilities are zero. ``wx`` has shape
``(n1 + 1, n2, n3)`` and holds the transmissibility of the face below each
cell along axis 0 (boundary faces included), likewise ``wy`` and ``wz``.
"""

import numpy as np
from numba import njit
from numba.typed import List


@njit(cache=True)
def diagonal(wx, wy, wz, diag):
    n1, n2, n3 = diag.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                diag[i, j, k] = wx[i, j, k] + wx[i + 1, j, k] + wy[i, j, k] + wy[i, j + 1, k] + wz[i, j, k] + wz[i, j, k + 1]


@njit(cache=True)
def residual(wx, wy, wz, diag, x, b, r):
    """r = b - A x"""
    n1, n2, n3 = x.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                s = diag[i, j, k] * x[i, j, k]
                if i > 0:
                    s -= wx[i, j, k] * x[i - 1, j, k]
                if i < n1 - 1:
                    s -= wx[i + 1, j, k] * x[i + 1, j, k]
                if j > 0:
                    s -= wy[i, j, k] * x[i, j - 1, k]
                if j < n2 - 1:
                    s -= wy[i, j + 1, k] * x[i, j + 1, k]
                if k > 0:
                    s -= wz[i, j, k] * x[i, j, k - 1]
                if k < n3 - 1:
                    s -= wz[i, j, k + 1] * x[i, j, k + 1]
                r[i, j, k] = b[i, j, k] - s


@njit(cache=True)
def _forward(wx, wy, wz, dinv, x, b):
    n1, n2, n3 = x.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                s = b[i, j, k]
                if i > 0:
                    s += wx[i, j, k] * x[i - 1, j, k]
                if i < n1 - 1:
                    s += wx[i + 1, j, k] * x[i + 1, j, k]
                if j > 0:
                    s += wy[i, j, k] * x[i, j - 1, k]
                if j < n2 - 1:
                    s += wy[i, j + 1, k] * x[i, j + 1, k]
                if k > 0:
                    s += wz[i, j, k] * x[i, j, k - 1]
                if k < n3 - 1:
                    s += wz[i, j, k + 1] * x[i, j, k + 1]
                x[i, j, k] = s * dinv[i, j, k]


@njit(cache=True)
def _backward(wx, wy, wz, dinv, x, b):
    n1, n2, n3 = x.shape
    for i in range(n1 - 1, -1, -1):
        for j in range(n2 - 1, -1, -1):
            for k in range(n3 - 1, -1, -1):
                s = b[i, j, k]
                if i > 0:
                    s += wx[i, j, k] * x[i - 1, j, k]
                if i < n1 - 1:
                    s += wx[i + 1, j, k] * x[i + 1, j, k]
                if j > 0:
                    s += wy[i, j, k] * x[i, j - 1, k]
                if j < n2 - 1:
                    s += wy[i, j + 1, k] * x[i, j + 1, k]
                if k > 0:
                    s += wz[i, j, k] * x[i, j, k - 1]
                if k < n3 - 1:
                    s += wz[i, j, k + 1] * x[i, j, k + 1]
                x[i, j, k] = s * dinv[i, j, k]


@njit(cache=True)
def sgs(wx, wy, wz, dinv, x, b, sweeps):
    """Symmetric Gauss-Seidel: each sweep is a forward then a backward pass.
    ``dinv`` is the reciprocal of the diagonal."""
    for _ in range(sweeps):
        _forward(wx, wy, wz, dinv, x, b)
        _backward(wx, wy, wz, dinv, x, b)


@njit(cache=True, inline="always")
def _weights(i, nf, nc, lo_dirichlet, hi_dirichlet):
    """Cell-centred linear interpolation weights for fine index ``i``.

    Returns ``(I0, w0, I1, w1)``; outside the domain the coarse value is
    mirrored (Neumann) or mirrored with a sign change (Dirichlet, zero on
    the face), which folds the ghost weight into ``w0``.
    """
    if nf == nc:
        return i, 1.0, i, 0.0
    ic = i // 2
    jc = ic - 1 if i % 2 == 0 else ic + 1
    if jc < 0:
        return ic, 0.5 if lo_dirichlet else 1.0, ic, 0.0
    if jc >= nc:
        return ic, 0.5 if hi_dirichlet else 1.0, ic, 0.0
    return ic, 0.75, jc, 0.25


@njit(cache=True)
def prolong_add(xc, xf, flags):
    """xf += P xc"""
    n1, n2, n3 = xf.shape
    c1, c2, c3 = xc.shape
    for i in range(n1):
        a0, p0, a1, p1 = _weights(i, n1, c1, flags[0, 0], flags[0, 1])
        for j in range(n2):
            b0, q0, b1, q1 = _weights(j, n2, c2, flags[1, 0], flags[1, 1])
            for k in range(n3):
                g0, r0, g1, r1 = _weights(k, n3, c3, flags[2, 0], flags[2, 1])
                v = p0 * (q0 * (r0 * xc[a0, b0, g0] + r1 * xc[a0, b0, g1]) + q1 * (r0 * xc[a0, b1, g0] + r1 * xc[a0, b1, g1]))
                v += p1 * (q0 * (r0 * xc[a1, b0, g0] + r1 * xc[a1, b0, g1]) + q1 * (r0 * xc[a1, b1, g0] + r1 * xc[a1, b1, g1]))
                xf[i, j, k] += v


@njit(cache=True)
def restrict(rf, rc, flags):
    """rc = P^T rf"""
    n1, n2, n3 = rf.shape
    c1, c2, c3 = rc.shape
    rc[:] = 0.0
    for i in range(n1):
        a0, p0, a1, p1 = _weights(i, n1, c1, flags[0, 0], flags[0, 1])
        for j in range(n2):
            b0, q0, b1, q1 = _weights(j, n2, c2, flags[1, 0], flags[1, 1])
            for k in range(n3):
                g0, r0, g1, r1 = _weights(k, n3, c3, flags[2, 0], flags[2, 1])
                v = rf[i, j, k]
                rc[a0, b0, g0] += v * p0 * q0 * r0
                rc[a0, b0, g1] += v * p0 * q0 * r1
                rc[a0, b1, g0] += v * p0 * q1 * r0
                rc[a0, b1, g1] += v * p0 * q1 * r1
                rc[a1, b0, g0] += v * p1 * q0 * r0
                rc[a1, b0, g1] += v * p1 * q0 * r1
                rc[a1, b1, g0] += v * p1 * q1 * r0
                rc[a1, b1, g1] += v * p1 * q1 * r1


@njit(cache=True)
def coarsen(k, d):
    """Harmonic mean over blocks of ``2**d`` children along the last ``d`` axes."""
    n1, n2, n3 = k.shape
    c1 = n1 // 2 if d == 3 else n1
    c2 = n2 // 2 if d >= 2 else n2
    c3 = n3 // 2
    f1 = 2 if d == 3 else 1
    f2 = 2 if d >= 2 else 1
    out = np.zeros((c1, c2, c3))
    for i in range(n1):
        for j in range(n2):
            for l in range(n3):
                out[i // f1, j // f2, l // 2] += 1.0 / k[i, j, l]
    nchild = f1 * f2 * 2
    for i in range(c1):
        for j in range(c2):
            for l in range(c3):
                out[i, j, l] = nchild / out[i, j, l]
    return out


@njit(cache=True, inline="always")
def _edge(a, b, harmonic):
    if harmonic:
        return 2.0 * a * b / (a + b)
    return 0.5 * (a + b)


@njit(cache=True)
def faces(k, flags, d, scale, harmonic):
    """Padded face transmissibilities for cell permeability ``k``; Dirichlet
    boundary faces get ``2 k scale``, Neumann ones zero."""
    n1, n2, n3 = k.shape
    wx = np.zeros((n1 + 1, n2, n3))
    wy = np.zeros((n1, n2 + 1, n3))
    wz = np.zeros((n1, n2, n3 + 1))
    for i in range(n1):
        for j in range(n2):
            for l in range(n3):
                kc = k[i, j, l]
                if d == 3:
                    if i > 0:
                        wx[i, j, l] = scale * _edge(k[i - 1, j, l], kc, harmonic)
                    elif flags[0, 0]:
                        wx[0, j, l] = 2.0 * kc * scale
                    if i == n1 - 1 and flags[0, 1]:
                        wx[n1, j, l] = 2.0 * kc * scale
                if d >= 2:
                    if j > 0:
                        wy[i, j, l] = scale * _edge(k[i, j - 1, l], kc, harmonic)
                    elif flags[1, 0]:
                        wy[i, 0, l] = 2.0 * kc * scale
                    if j == n2 - 1 and flags[1, 1]:
                        wy[i, n2, l] = 2.0 * kc * scale
                if l > 0:
                    wz[i, j, l] = scale * _edge(k[i, j, l - 1], kc, harmonic)
                elif flags[2, 0]:
                    wz[i, j, 0] = 2.0 * kc * scale
                if l == n3 - 1 and flags[2, 1]:
                    wz[i, j, n3] = 2.0 * kc * scale
    return wx, wy, wz


@njit(cache=True)
def dense_operator(wx, wy, wz, diag):
    n1, n2, n3 = diag.shape
    n = n1 * n2 * n3
    A = np.zeros((n, n))
    for i in range(n1):
        for j in range(n2):
            for l in range(n3):
                r = (i * n2 + j) * n3 + l
                A[r, r] = diag[i, j, l]
                if i > 0:
                    A[r, r - n2 * n3] = -wx[i, j, l]
                if i < n1 - 1:
                    A[r, r + n2 * n3] = -wx[i + 1, j, l]
                if j > 0:
                    A[r, r - n3] = -wy[i, j, l]
                if j < n2 - 1:
                    A[r, r + n3] = -wy[i, j + 1, l]
                if l > 0:
                    A[r, r - 1] = -wz[i, j, l]
                if l < n3 - 1:
                    A[r, r + 1] = -wz[i, j, l + 1]
    return A


@njit(cache=True)
def setup(wx, wy, wz, k, flags, d, h, harmonic, n_levels):
    """Level operators of the multigrid hierarchy, finest first.

    The finest level uses the given transmissibilities; each coarser level
    re-discretises the harmonically coarsened permeability. The inverse of
    the coarsest operator is returned when ``n_levels > 1``.
    """
    diag = np.empty(k.shape)
    diagonal(wx, wy, wz, diag)
    WX, WY, WZ = List([wx]), List([wy]), List([wz])
    DIAG, DINV = List([diag]), List([1.0 / diag])
    X, B, R = List([np.zeros(k.shape)]), List([np.zeros(k.shape)]), List([np.zeros(k.shape)])
    for _ in range(1, n_levels):
        k = coarsen(k, d)
        h *= 2.0
        wx, wy, wz = faces(k, flags, d, h ** (d - 2), harmonic)
        diag = np.empty(k.shape)
        diagonal(wx, wy, wz, diag)
        WX.append(wx)
        WY.append(wy)
        WZ.append(wz)
        DIAG.append(diag)
        DINV.append(1.0 / diag)
        X.append(np.zeros(k.shape))
        B.append(np.zeros(k.shape))
        R.append(np.zeros(k.shape))
    if n_levels > 1:
        coarse_inv = np.linalg.inv(dense_operator(WX[-1], WY[-1], WZ[-1], DIAG[-1]))
    else:
        coarse_inv = np.zeros((1, 1))
    return WX, WY, WZ, DIAG, DINV, X, B, R, coarse_inv


@njit(cache=True)
def precondition(WX, WY, WZ, DIAG, DINV, X, B, R, coarse_inv, flags, mode, sweeps, r, z):
    """z = M^{-1} r.

    mode 0: identity; mode 1: symmetric Gauss-Seidel on the finest level;
    mode 2: one V-cycle with ``sweeps`` symmetric Gauss-Seidel sweeps before
    and after the coarse correction and an exact solve on the coarsest level.
    """
    if mode == 0:
        z[:] = r
        return
    if mode == 1:
        z[:] = 0.0
        sgs(WX[0], WY[0], WZ[0], DINV[0], z, r, sweeps)
        return
    nl = len(X)
    B[0][:] = r
    for l in range(nl - 1):
        X[l][:] = 0.0
        sgs(WX[l], WY[l], WZ[l], DINV[l], X[l], B[l], sweeps)
        residual(WX[l], WY[l], WZ[l], DIAG[l], X[l], B[l], R[l])
        restrict(R[l], B[l + 1], flags)
    xc = X[nl - 1].reshape(-1)
    xc[:] = coarse_inv @ B[nl - 1].reshape(-1)
    for l in range(nl - 2, -1, -1):
        prolong_add(X[l + 1], X[l], flags)
        sgs(WX[l], WY[l], WZ[l], DINV[l], X[l], B[l], sweeps)
    z[:] = X[0]


@njit(cache=True)
def pcg(WX, WY, WZ, DIAG, DINV, X, B, R, coarse_inv, flags, mode, sweeps, b, tol, max_iter):
    """Preconditioned conjugate gradients from a zero initial guess.

    Returns the solution, the iteration count, the relative residual history
    and the history of ``r^T M^{-1} r`` (one entry shorter on convergence).
    """
    wx, wy, wz, diag = WX[0], WY[0], WZ[0], DIAG[0]
    x = np.zeros_like(b)
    zero = np.zeros_like(b)
    r = b.copy()
    z = np.zeros_like(b)
    q = np.zeros_like(b)
    hist = np.zeros(max_iter + 1)
    rz_hist = np.zeros(max_iter + 1)
    r0 = np.sqrt(np.sum(r * r))
    hist[0] = 1.0
    if r0 == 0.0:
        return x, 0, hist[:1], rz_hist[:1]
    precondition(WX, WY, WZ, DIAG, DINV, X, B, R, coarse_inv, flags, mode, sweeps, r, z)
    p = z.copy()
    rz = np.sum(r * z)
    rz_hist[0] = rz
    it = 0
    while it < max_iter:
        it += 1
        # q = A p, written as residual of p against a zero right-hand side
        residual(wx, wy, wz, diag, p, zero, q)
        q *= -1.0
        alpha = rz / np.sum(p * q)
        x += alpha * p
        r -= alpha * q
        rel = np.sqrt(np.sum(r * r)) / r0
        hist[it] = rel
        if rel < tol:
            break
        precondition(WX, WY, WZ, DIAG, DINV, X, B, R, coarse_inv, flags, mode, sweeps, r, z)
        rz_new = np.sum(r * z)
        rz_hist[it] = rz_new
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x, it, hist[: it + 1], rz_hist[:it]
