"""Numba kernels for the discrete-velocity collision model.

A pair block stores, for one species pair, node pairs (a, b) grouped into
classes of equal total momentum and energy.  ``offs`` delimits the classes
and ``gam`` holds the per-class weight.  For a same-species block only
pairs with a < b are stored; the mirrored pair (b, a) is implied.
"""
import numba as nb
import numpy as np

@nb.njit(cache=True, fastmath=True, boundscheck=False, nogil=True)
def gain_cross(oi, oj, Fi, Gj, Fj, Gi, a, b, offs, gam):
    """Gain parts of Q_ij(F_i, G_j) and Q_ji(F_j, G_i); arrays are (Nv, ncol)."""
    nx = Fi.shape[1]
    S1 = np.empty(nx)
    S2 = np.empty(nx)
    for c in range(offs.size - 1):
        s = offs[c]
        n = offs[c + 1] - s
        S1[:] = 0.0
        S2[:] = 0.0
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                S1[x] += Fi[ia, x] * Gj[ib, x]
                S2[x] += Fj[ib, x] * Gi[ia, x]
        g = gam[c]
        for x in range(nx):
            S1[x] *= g
            S2[x] *= g
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                oi[ia, x] += S1[x]
                oj[ib, x] += S2[x]


@nb.njit(cache=True, fastmath=True, boundscheck=False, nogil=True)
def gain_cross_sym(oi, oj, Fi, Fj, a, b, offs, gam):
    """gain_cross with G = F, where both class sums coincide."""
    nx = Fi.shape[1]
    S = np.empty(nx)
    for c in range(offs.size - 1):
        s = offs[c]
        n = offs[c + 1] - s
        S[:] = 0.0
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                S[x] += Fi[ia, x] * Fj[ib, x]
        g = gam[c]
        for x in range(nx):
            S[x] *= g
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                oi[ia, x] += S[x]
                oj[ib, x] += S[x]


@nb.njit(cache=True, fastmath=True, boundscheck=False, nogil=True)
def gain_same(o, F, G, a, b, offs, gam):
    """Gain part of Q_ii(F_i, G_i); stored pairs stand for themselves and their mirrors."""
    nx = F.shape[1]
    S = np.empty(nx)
    for c in range(offs.size - 1):
        s = offs[c]
        n = offs[c + 1] - s
        S[:] = 0.0
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                S[x] += F[ia, x] * G[ib, x] + F[ib, x] * G[ia, x]
        g = gam[c]
        for x in range(nx):
            S[x] *= g
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                o[ia, x] += S[x]
                o[ib, x] += S[x]


@nb.njit(cache=True, fastmath=True, boundscheck=False, nogil=True)
def gain_same_sym(o, F, a, b, offs, gam):
    nx = F.shape[1]
    S = np.empty(nx)
    for c in range(offs.size - 1):
        s = offs[c]
        n = offs[c + 1] - s
        S[:] = 0.0
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                S[x] += F[ia, x] * F[ib, x]
        g2 = 2.0 * gam[c]
        for x in range(nx):
            S[x] *= g2
        for k in range(n):
            ia = a[s + k]
            ib = b[s + k]
            for x in range(nx):
                o[ia, x] += S[x]
                o[ib, x] += S[x]


@nb.njit(cache=True, boundscheck=False)
def assemble(Lam, a, b, offs, w, ri, rj, same):
    """Accumulate c*w_C [ (sum u)(sum u)^T - n sum u u^T ] with u = e_(ri+a) + e_(rj+b).

    c is 2 for same-species blocks (each stored pair stands for two ordered ones).
    """
    scale = 2.0 if same else 1.0
    for c in range(offs.size - 1):
        s = offs[c]
        e = offs[c + 1]
        n = e - s
        wc = w[c] * scale
        for p in range(s, e):
            ra = ri + a[p]
            rb = rj + b[p]
            for q in range(s, e):
                qa = ri + a[q]
                qb = rj + b[q]
                Lam[ra, qa] += wc
                Lam[ra, qb] += wc
                Lam[rb, qa] += wc
                Lam[rb, qb] += wc
            Lam[ra, ra] -= n * wc
            Lam[ra, rb] -= n * wc
            Lam[rb, ra] -= n * wc
            Lam[rb, rb] -= n * wc


@nb.njit(cache=True, boundscheck=False)
def entropy_sums(x, y, offs, gam, scale, pairwise):
    """Sum over classes of scale*gam_C * sum_{p<p'} (x_p - x_p')(y_p - y_p'), per column.

    x, y have shape (npairs, ncol).  With ``pairwise`` the double sum is
    evaluated term by term, each term being a product of equally signed
    differences, so the result is nonnegative in floating point too.
    """
    ncol = x.shape[1]
    out = np.zeros(ncol)
    for c in range(offs.size - 1):
        s = offs[c]
        e = offs[c + 1]
        n = e - s
        if n < 2:
            continue
        g = gam[c] * scale
        for col in range(ncol):
            if pairwise:
                acc = 0.0
                for p in range(s, e):
                    for q in range(p + 1, e):
                        acc += (x[p, col] - x[q, col]) * (y[p, col] - y[q, col])
            else:
                sx = 0.0
                sy = 0.0
                sxy = 0.0
                for p in range(s, e):
                    sx += x[p, col]
                    sy += y[p, col]
                    sxy += x[p, col] * y[p, col]
                acc = n * sxy - sx * sy
            out[col] += g * acc
    return out


@nb.njit(cache=True, nogil=True)
def frequency(out, nodes, targets, weights, coef):
    """out[t] = sum_b coef * weights[b] * |targets[t] - nodes[b]|."""
    for t in range(targets.shape[0]):
        acc = 0.0
        for b in range(nodes.shape[0]):
            d0 = targets[t, 0] - nodes[b, 0]
            d1 = targets[t, 1] - nodes[b, 1]
            d2 = targets[t, 2] - nodes[b, 2]
            acc += weights[b] * np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        out[t] += coef * acc
