"""Compiled inner loops of the revised simplex.

Triangular solves skip zero entries, so sparse right-hand sides (the usual
case for ``B^-T e_r`` and ``B^-1 a_q``) cost little more than the nonzeros
they touch.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def lu_solve(b, perm_r, perm_c, Lp, Li, Lx, Up, Ui, Ux, Ud):
    """Solve ``B x = b`` given ``Pr B Pc = L U`` (L unit lower, both CSC)."""
    n = b.size
    y = np.empty(n)
    for i in range(n):
        y[perm_r[i]] = b[i]
    for j in range(n):
        yj = y[j]
        if yj != 0.0:
            for k in range(Lp[j], Lp[j + 1]):
                i = Li[k]
                if i > j:
                    y[i] -= Lx[k] * yj
    for j in range(n - 1, -1, -1):
        yj = y[j]
        if yj != 0.0:
            yj /= Ud[j]
            y[j] = yj
            for k in range(Up[j], Up[j + 1]):
                i = Ui[k]
                if i < j:
                    y[i] -= Ux[k] * yj
    x = np.empty(n)
    for i in range(n):
        x[i] = y[perm_c[i]]
    return x


@njit(cache=True)
def lu_solve_t(b, perm_r, perm_c, LRp, LRi, LRx, URp, URi, URx, Ud):
    """Solve ``B^T x = b``; ``LR*``/``UR*`` are the factors in CSR form."""
    n = b.size
    z = np.empty(n)
    for i in range(n):
        z[perm_c[i]] = b[i]
    for j in range(n):
        zj = z[j]
        if zj != 0.0:
            zj /= Ud[j]
            z[j] = zj
            for k in range(URp[j], URp[j + 1]):
                i = URi[k]
                if i > j:
                    z[i] -= URx[k] * zj
    for j in range(n - 1, -1, -1):
        zj = z[j]
        if zj != 0.0:
            for k in range(LRp[j], LRp[j + 1]):
                i = LRi[k]
                if i < j:
                    z[i] -= LRx[k] * zj
    x = np.empty(n)
    for i in range(n):
        x[i] = z[perm_r[i]]
    return x


@njit(cache=True)
def eta_ftran(x, count, rows, piv, ptr, idx, val):
    for k in range(count):
        r = rows[k]
        xr = x[r] / piv[k]
        if xr != 0.0:
            for t in range(ptr[k], ptr[k + 1]):
                x[idx[t]] -= xr * val[t]
        x[r] = xr


@njit(cache=True)
def eta_btran(z, count, rows, piv, ptr, idx, val):
    for k in range(count - 1, -1, -1):
        s = 0.0
        for t in range(ptr[k], ptr[k + 1]):
            s += z[idx[t]] * val[t]
        r = rows[k]
        z[r] = (z[r] - s) / piv[k]


@njit(cache=True)
def eta_push(alpha, r, count, rows, piv, ptr, idx, val):
    """Append the eta column of pivot ``(r, alpha)``; entries other than
    ``r`` are stored sparsely. Returns the new count."""
    start = ptr[count]
    t = start
    for i in range(alpha.size):
        a = alpha[i]
        if a != 0.0 and i != r:
            idx[t] = i
            val[t] = a
            t += 1
    rows[count] = r
    piv[count] = alpha[r]
    ptr[count + 1] = t
    return count + 1


@njit(cache=True)
def price(d, weights, allowed, tol, devex):
    """Entering column with the best (Devex-weighted) positive reduced cost, or -1."""
    best = -1
    best_score = 0.0
    for j in range(d.size):
        dj = d[j]
        if dj > tol and allowed[j]:
            s = dj * dj / weights[j] if devex else dj
            if s > best_score:
                best_score = s
                best = j
    return best


@njit(cache=True)
def price_bland(d, allowed, tol, rank):
    best = -1
    best_rank = np.iinfo(np.int64).max
    for j in range(d.size):
        if d[j] > tol and allowed[j] and rank[j] < best_rank:
            best_rank = rank[j]
            best = j
    return best


@njit(cache=True)
def ratio_test(xB, alpha, pivot_tol, basis, rank, use_rank):
    """Leaving row of the minimum-ratio test, or -1 if the column is unbounded.

    Near-ties (within 1e-12 relative) go to the largest pivot, or to the
    lowest-ranked basic column when ``use_rank`` is set.
    """
    theta = np.inf
    for i in range(alpha.size):
        a = alpha[i]
        if a > pivot_tol:
            x = xB[i] if xB[i] > 0.0 else 0.0
            t = x / a
            if t < theta:
                theta = t
    if theta == np.inf:
        return -1
    cut = theta + 1e-12 * max(1.0, theta)
    r = -1
    for i in range(alpha.size):
        a = alpha[i]
        if a > pivot_tol:
            x = xB[i] if xB[i] > 0.0 else 0.0
            if x / a <= cut:
                if r < 0:
                    r = i
                elif use_rank:
                    if rank[basis[i]] < rank[basis[r]]:
                        r = i
                elif a > alpha[r]:
                    r = i
    return r


@njit(cache=True)
def update_duals(rho, Ap, Ai, Ax, d, weights, acc, mark, touched, stamp,
                 alpha_r, dq, wq, devex):
    """Update reduced costs and Devex weights along the pivot row ``rho @ A``.

    ``A`` is in CSR form; only rows in the support of ``rho`` are visited.
    Returns the largest updated weight.
    """
    cnt = 0
    for i in range(rho.size):
        ri = rho[i]
        if ri != 0.0:
            for k in range(Ap[i], Ap[i + 1]):
                j = Ai[k]
                if mark[j] != stamp:
                    mark[j] = stamp
                    acc[j] = 0.0
                    touched[cnt] = j
                    cnt += 1
                acc[j] += ri * Ax[k]
    top = 0.0
    for t in range(cnt):
        j = touched[t]
        ratio = acc[j] / alpha_r
        d[j] -= dq * ratio
        if devex:
            w = ratio * ratio * wq
            if w > weights[j]:
                weights[j] = w
            if weights[j] > top:
                top = weights[j]
    return top


@njit(cache=True)
def peel_singletons(m, Cp, Ci, Cx, Rp, Ri, Rx):
    """Order a square matrix into block lower triangular form.

    Row singletons are pivoted first, column singletons (of what remains)
    last, and the rest forms the bump. Returns ``(row_order, col_order, n1,
    n2)`` where positions ``[n1, n1 + n2)`` are the bump; the bump part of
    the orders is unsorted leftovers. ``n1 < 0`` flags structural
    singularity.
    """
    row_act = np.ones(m, dtype=np.bool_)
    col_act = np.ones(m, dtype=np.bool_)
    row_order = np.empty(m, dtype=np.int64)
    col_order = np.empty(m, dtype=np.int64)
    cnt = np.empty(m, dtype=np.int64)
    queue = np.empty(m + Cp[m], dtype=np.int64)
    for i in range(m):
        cnt[i] = Rp[i + 1] - Rp[i]
        if cnt[i] == 0:
            return row_order, col_order, -1, 0
    head = 0
    tail = 0
    for i in range(m):
        if cnt[i] == 1:
            queue[tail] = i
            tail += 1
    n1 = 0
    while head < tail:
        i = queue[head]
        head += 1
        if not row_act[i] or cnt[i] != 1:
            continue
        j = -1
        for k in range(Rp[i], Rp[i + 1]):
            if col_act[Ri[k]]:
                j = Ri[k]
                if abs(Rx[k]) < 1e-9:
                    j = -2
                break
        if j < 0:
            continue
        row_act[i] = False
        col_act[j] = False
        row_order[n1] = i
        col_order[n1] = j
        n1 += 1
        for k in range(Cp[j], Cp[j + 1]):
            t = Ci[k]
            if row_act[t]:
                cnt[t] -= 1
                if cnt[t] == 1:
                    queue[tail] = t
                    tail += 1
                elif cnt[t] == 0:
                    return row_order, col_order, -1, 0
    # column singletons of the remaining submatrix, filled from the end
    head = 0
    tail = 0
    for j in range(m):
        if col_act[j]:
            c = 0
            for k in range(Cp[j], Cp[j + 1]):
                if row_act[Ci[k]]:
                    c += 1
            cnt[j] = c
            if c == 0:
                return row_order, col_order, -1, 0
            if c == 1:
                queue[tail] = j
                tail += 1
    back = m
    while head < tail:
        j = queue[head]
        head += 1
        if not col_act[j] or cnt[j] != 1:
            continue
        i = -1
        for k in range(Cp[j], Cp[j + 1]):
            if row_act[Ci[k]]:
                i = Ci[k]
                if abs(Cx[k]) < 1e-9:
                    i = -2
                break
        if i < 0:
            continue
        row_act[i] = False
        col_act[j] = False
        back -= 1
        row_order[back] = i
        col_order[back] = j
        for k in range(Rp[i], Rp[i + 1]):
            t = Ri[k]
            if col_act[t]:
                cnt[t] -= 1
                if cnt[t] == 1:
                    queue[tail] = t
                    tail += 1
                elif cnt[t] == 0:
                    return row_order, col_order, -1, 0
    p = n1
    q = n1
    for i in range(m):
        if row_act[i]:
            row_order[p] = i
            p += 1
    for j in range(m):
        if col_act[j]:
            col_order[q] = j
            q += 1
    return row_order, col_order, n1, back - n1


@njit(cache=True)
def block_solve(b, row_order, col_order, Pp, Pi, Px, diag, n1, n2,
                perm_r, perm_c, Lp, Li, Lx, Up, Ui, Ux, Ud):
    """Solve ``B x = b`` where ``P`` is ``B`` permuted by the orders of
    :func:`peel_singletons` (CSC) and the bump has LU factors."""
    m = b.size
    e2 = n1 + n2
    y = np.empty(m)
    for k in range(m):
        y[k] = b[row_order[k]]
    for j in range(n1):
        xj = y[j]
        if xj != 0.0:
            xj /= diag[j]
            y[j] = xj
            for k in range(Pp[j], Pp[j + 1]):
                i = Pi[k]
                if i > j:
                    y[i] -= Px[k] * xj
    if n2:
        x2 = lu_solve(y[n1:e2], perm_r, perm_c, Lp, Li, Lx, Up, Ui, Ux, Ud)
        for j in range(n1, e2):
            xj = x2[j - n1]
            y[j] = xj
            if xj != 0.0:
                for k in range(Pp[j], Pp[j + 1]):
                    i = Pi[k]
                    if i >= e2:
                        y[i] -= Px[k] * xj
    for j in range(e2, m):
        xj = y[j]
        if xj != 0.0:
            xj /= diag[j]
            y[j] = xj
            for k in range(Pp[j], Pp[j + 1]):
                i = Pi[k]
                if i > j:
                    y[i] -= Px[k] * xj
    x = np.empty(m)
    for k in range(m):
        x[col_order[k]] = y[k]
    return x


@njit(cache=True)
def block_solve_t(b, row_order, col_order, Pp, Pi, Px, diag, n1, n2,
                  perm_r, perm_c, LRp, LRi, LRx, URp, URi, URx, Ud):
    """Solve ``B^T x = b`` with the same block factors (bump in CSR form)."""
    m = b.size
    e2 = n1 + n2
    z = np.empty(m)
    for k in range(m):
        z[k] = b[col_order[k]]
    for j in range(m - 1, e2 - 1, -1):
        s = z[j]
        for k in range(Pp[j], Pp[j + 1]):
            i = Pi[k]
            if i > j:
                s -= Px[k] * z[i]
        z[j] = s / diag[j]
    if n2:
        r2 = z[n1:e2].copy()
        for j in range(n1, e2):
            s = r2[j - n1]
            for k in range(Pp[j], Pp[j + 1]):
                i = Pi[k]
                if i >= e2:
                    s -= Px[k] * z[i]
            r2[j - n1] = s
        x2 = lu_solve_t(r2, perm_r, perm_c, LRp, LRi, LRx, URp, URi, URx, Ud)
        for j in range(n1, e2):
            z[j] = x2[j - n1]
    for j in range(n1 - 1, -1, -1):
        s = z[j]
        for k in range(Pp[j], Pp[j + 1]):
            i = Pi[k]
            if i > j:
                s -= Px[k] * z[i]
        z[j] = s / diag[j]
    x = np.empty(m)
    for k in range(m):
        x[row_order[k]] = z[k]
    return x
