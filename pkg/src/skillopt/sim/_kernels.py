"""Compiled per-row kernels for stepping the dough and for Sinkhorn.

Each kernel processes one trajectory / one pair of clouds with plain loops,
so a row's result never depends on what else is in the batch.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INSIDE_TOL = 1e-12


# --------------------------------------------------------------------------
# hand kinematics


@njit(cache=True)
def _tips(base, rot, joints, offs, L, out):
    """Fingertip centres of one hand into ``out`` (F, 2)."""
    F, J = joints.shape
    c, s = np.cos(rot), np.sin(rot)
    for f in range(F):
        x = base[0] + c * offs[f, 0] - s * offs[f, 1]
        y = base[1] + s * offs[f, 0] + c * offs[f, 1]
        ang = rot
        for j in range(J):
            ang += joints[f, j]
            x += L[j] * np.cos(ang)
            y += L[j] * np.sin(ang)
        out[f, 0] = x
        out[f, 1] = y


@njit(cache=True)
def _clip(v, lo, hi):
    return lo if v < lo else (hi if v > hi else v)


@njit(cache=True)
def _integrate(base, rot, joints, act, scale, offs, L, r, jl, rot_lo, rot_hi, ws, discs):
    """Advance every hand by one action row (G, A) in place; write discs (G*F, 2)."""
    G, F, J = joints.shape
    tip = np.empty((F, 2))
    for g in range(G):
        a0 = _clip(act[g, 0], -1.0, 1.0) * scale[0]
        a1 = _clip(act[g, 1], -1.0, 1.0) * scale[1]
        base[g, 0] = _clip(base[g, 0] + a0, ws[0], ws[1])
        base[g, 1] = _clip(base[g, 1] + a1, ws[2], ws[3])
        rot[g] = _clip(rot[g] + _clip(act[g, 2], -1.0, 1.0) * scale[2], rot_lo, rot_hi)
        q = 3
        for f in range(F):
            for j in range(J):
                joints[g, f, j] = _clip(joints[g, f, j] + _clip(act[g, q], -1.0, 1.0) * scale[q], -jl, jl)
                q += 1
        _tips(base[g], rot[g], joints[g], offs, L, tip)
        ymin = tip[0, 1]
        for f in range(1, F):
            if tip[f, 1] < ymin:
                ymin = tip[f, 1]
        lift = r - ymin
        if lift > 0.0:
            base[g, 1] += lift
            for f in range(F):
                tip[f, 1] += lift
        for f in range(F):
            discs[g * F + f, 0] = tip[f, 0]
            discs[g * F + f, 1] = tip[f, 1]


# --------------------------------------------------------------------------
# contact projection


@njit(cache=True)
def _intersections(discs, r):
    D = discs.shape[0]
    pts = np.empty((D * (D - 1), 2))
    n = 0
    for i in range(D):
        for j in range(i + 1, D):
            vx = discs[j, 0] - discs[i, 0]
            vy = discs[j, 1] - discs[i, 1]
            Ld = np.sqrt(vx * vx + vy * vy)
            if Ld > 0.0 and Ld < 2.0 * r:
                h = np.sqrt(r * r - (Ld / 2) ** 2)
                mx = discs[i, 0] + vx / 2
                my = discs[i, 1] + vy / 2
                px, py = -vy / Ld, vx / Ld
                pts[n, 0] = mx + h * px
                pts[n, 1] = my + h * py
                pts[n + 1, 0] = mx - h * px
                pts[n + 1, 1] = my - h * py
                n += 2
    return pts[:n]


@njit(cache=True)
def _outside_all(x, y, discs, r):
    for d in range(discs.shape[0]):
        dx = x - discs[d, 0]
        dy = y - discs[d, 1]
        if np.sqrt(dx * dx + dy * dy) < r - INSIDE_TOL:
            return False
    return True


@njit(cache=True)
def project_row(p, discs, r, inter):
    """Project every penetrating particle of ``p`` (M, 2) in place; returns True if any moved."""
    M = p.shape[0]
    D = discs.shape[0]
    moved = False
    for m in range(M):
        px, py = p[m, 0], p[m, 1]
        deepest = -1
        dmin = np.inf
        for d in range(D):
            dx = px - discs[d, 0]
            dy = py - discs[d, 1]
            dist = np.sqrt(dx * dx + dy * dy)
            if dist < r - INSIDE_TOL and dist < dmin:
                dmin = dist
                deepest = d
        if deepest < 0:
            continue
        moved = True
        best = np.inf
        bx, by = 0.0, 0.0
        fx, fy = 0.0, 0.0
        for d in range(D):
            dx = px - discs[d, 0]
            dy = py - discs[d, 1]
            dist = np.sqrt(dx * dx + dy * dy)
            if dist > 0.0:
                cx = discs[d, 0] + r * dx / dist
                cy = discs[d, 1] + r * dy / dist
            else:
                cx = discs[d, 0]
                cy = discs[d, 1] + r
            if d == deepest:
                fx, fy = cx, cy
            if _outside_all(cx, cy, discs, r):
                gap = np.sqrt((cx - px) ** 2 + (cy - py) ** 2)
                if gap < best:
                    best, bx, by = gap, cx, cy
        for k in range(inter.shape[0]):
            cx, cy = inter[k, 0], inter[k, 1]
            if _outside_all(cx, cy, discs, r):
                gap = np.sqrt((cx - px) ** 2 + (cy - py) ** 2)
                if gap < best:
                    best, bx, by = gap, cx, cy
        if best < np.inf:
            p[m, 0], p[m, 1] = bx, by
        else:
            p[m, 0], p[m, 1] = fx, fy
    return moved


@njit(cache=True)
def _cohesion(p0, p1, kappa, k):
    """p1 += kappa * mean displacement of each particle's k nearest neighbours in p0."""
    M = p0.shape[0]
    disp = p1 - p0
    out = p1.copy()
    nbr_d = np.empty(k)
    nbr_i = np.empty(k, dtype=np.int64)
    for m in range(M):
        cnt = 0
        for q in range(M):
            if q == m:
                continue
            dx = p0[q, 0] - p0[m, 0]
            dy = p0[q, 1] - p0[m, 1]
            d2 = dx * dx + dy * dy
            # insertion into the sorted k-best list; ties keep the lower index
            if cnt < k:
                pos = cnt
                cnt += 1
            elif d2 < nbr_d[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and nbr_d[pos - 1] > d2:
                nbr_d[pos] = nbr_d[pos - 1]
                nbr_i[pos] = nbr_i[pos - 1]
                pos -= 1
            nbr_d[pos] = d2
            nbr_i[pos] = q
        sx, sy = 0.0, 0.0
        for j in range(cnt):
            sx += disp[nbr_i[j], 0]
            sy += disp[nbr_i[j], 1]
        if cnt > 0:
            out[m, 0] += kappa * sx / cnt
            out[m, 1] += kappa * sy / cnt
    return out


@njit(cache=True)
def _separate(p, dmin, iters):
    """Gauss-Seidel passes pushing every pair closer than ``dmin`` symmetrically apart."""
    M = p.shape[0]
    d2min = dmin * dmin
    for _ in range(iters):
        for i in range(M):
            for j in range(i + 1, M):
                dx = p[j, 0] - p[i, 0]
                dy = p[j, 1] - p[i, 1]
                d2 = dx * dx + dy * dy
                if d2 >= d2min:
                    continue
                d = np.sqrt(d2)
                if d == 0.0:
                    nx, ny = 1.0, 0.0
                else:
                    nx, ny = dx / d, dy / d
                h = 0.5 * (dmin - d)
                p[i, 0] -= h * nx
                p[i, 1] -= h * ny
                p[j, 0] += h * nx
                p[j, 1] += h * ny


@njit(cache=True)
def step_row(base, rot, joints, p, act, scale, offs, L, r, jl, rot_lo, rot_hi, ws, kappa, k, substeps,
             dmin, relax):
    """One step for one row; hands updated in place, returns new particles.

    The hand motion is split into ``substeps`` equal increments with a
    contact projection after each, so fast fingertips cannot tunnel
    through particles.  Once anything has been touched, particle pairs
    closer than ``dmin`` are relaxed apart so the dough moves as a body.
    """
    G, F, _ = joints.shape
    discs = np.empty((G * F, 2))
    sub_scale = scale / substeps
    p1 = p.copy()
    touched = False
    for _ in range(substeps):
        _integrate(base, rot, joints, act, sub_scale, offs, L, r, jl, rot_lo, rot_hi, ws, discs)
        inter = _intersections(discs, r)
        if project_row(p1, discs, r, inter):
            touched = True
        if touched and relax > 0:
            _separate(p1, dmin, relax)
            for m in range(p1.shape[0]):
                if p1[m, 1] < 0.0:
                    p1[m, 1] = 0.0
            project_row(p1, discs, r, inter)
    if touched:
        p1 = _cohesion(p, p1, kappa, k)
        project_row(p1, discs, r, inter)
    for m in range(p1.shape[0]):
        if p1[m, 1] < 0.0:
            p1[m, 1] = 0.0
    return p1


@njit(cache=True)
def rollout_rows(base, rot, joints, parts, acts, scale, offs, L, r, jl, rot_lo, rot_hi, ws, kappa, k,
                 substeps, dmin, relax, record, hist):
    """Roll out B rows of (G, T, A) actions; arrays are updated in place.

    When ``record`` is set, particle positions after every step go into
    ``hist`` (B, T, M, 2).  Returns False on a non-finite state.
    """
    B = acts.shape[0]
    T = acts.shape[2]
    for b in range(B):
        p = parts[b].copy()
        for t in range(T):
            p = step_row(base[b], rot[b], joints[b], p, acts[b, :, t], scale, offs, L, r, jl,
                         rot_lo, rot_hi, ws, kappa, k, substeps, dmin, relax)
            if record:
                hist[b, t] = p
        for m in range(p.shape[0]):
            if not (np.isfinite(p[m, 0]) and np.isfinite(p[m, 1])):
                return False
        parts[b] = p
    return True


# --------------------------------------------------------------------------
# Sinkhorn


@njit(cache=True)
def _softmin_rows(eps, C, h, out):
    """out_i = -eps * log sum_j exp(h_j - C_ij / eps)."""
    n, m = C.shape
    z = np.empty(m)
    for i in range(n):
        zmax = -np.inf
        for j in range(m):
            z[j] = h[j] - C[i, j] / eps
            if z[j] > zmax:
                zmax = z[j]
        s = 0.0
        for j in range(m):
            s += np.exp(z[j] - zmax)
        out[i] = -eps * (np.log(s) + zmax)


@njit(cache=True)
def _row_marginal_error(f, g, C, eps, la, lb):
    n, m = C.shape
    err = 0.0
    a = np.exp(la)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += np.exp((f[i] + g[j] - C[i, j]) / eps + la + lb)
        err += abs(s - a)
    return err


@njit(cache=True)
def ot_pair(C, eps_list, max_iter, tol, check_every):
    """Entropic OT between uniform measures with cost ``C`` (n, m).  Returns (value, marginal error)."""
    n, m = C.shape
    la, lb = -np.log(n), -np.log(m)
    CT = C.T.copy()
    f = np.empty(n)
    g = np.empty(m)
    fn = np.empty(n)
    gn = np.empty(m)
    e = eps_list[0]
    _softmin_rows(e, C, np.full(m, lb), f)
    _softmin_rows(e, CT, np.full(n, la), g)
    for e in eps_list:
        _softmin_rows(e, C, lb + g / e, fn)
        _softmin_rows(e, CT, la + f / e, gn)
        f = 0.5 * (f + fn)
        g = 0.5 * (g + gn)
    err = np.inf
    for it in range(1, max_iter + 1):
        _softmin_rows(e, C, lb + g / e, f)
        _softmin_rows(e, CT, la + f / e, g)
        if it % check_every == 0 or it == max_iter:
            err = _row_marginal_error(f, g, C, e, la, lb)
            if err < tol:
                break
    return f.mean() + g.mean(), err


@njit(cache=True)
def ot_self(C, eps_list, max_iter, tol, check_every):
    """Entropic OT of a uniform measure with itself via the symmetric fixed point."""
    n = C.shape[0]
    la = -np.log(n)
    f = np.empty(n)
    fn = np.empty(n)
    e = eps_list[0]
    _softmin_rows(e, C, np.full(n, la), f)
    for e in eps_list:
        _softmin_rows(e, C, la + f / e, fn)
        f = 0.5 * (f + fn)
    err = np.inf
    for it in range(1, max_iter + 1):
        _softmin_rows(e, C, la + f / e, fn)
        f = 0.5 * (f + fn)
        if it % check_every == 0 or it == max_iter:
            err = _row_marginal_error(f, f, C, e, la, la)
            if err < tol:
                break
    return 2.0 * f.mean(), err


@njit(cache=True)
def cost_matrix(x, y, p):
    n, m = x.shape[0], y.shape[0]
    C = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            dx = x[i, 0] - y[j, 0]
            dy = x[i, 1] - y[j, 1]
            d = np.sqrt(dx * dx + dy * dy)
            C[i, j] = d if p == 1.0 else d**p
    return C


@njit(cache=True)
def _x_first(x, y):
    """Canonical orientation of a pair, so OT(x, y) and OT(y, x) run the same iterations."""
    if x.shape[0] != y.shape[0]:
        return x.shape[0] < y.shape[0]
    for i in range(x.shape[0]):
        for d in range(2):
            if x[i, d] != y[i, d]:
                return x[i, d] < y[i, d]
    return True


@njit(cache=True)
def ot_cross(x, y, p, eps_list, max_iter, tol, check_every):
    if _x_first(x, y):
        return ot_pair(cost_matrix(x, y, p), eps_list, max_iter, tol, check_every)
    return ot_pair(cost_matrix(y, x, p), eps_list, max_iter, tol, check_every)


@njit(cache=True)
def divergence_rows(X, Y, yy, eps_list, max_iter, tol, check_every, p, out, conv):
    """Debiased divergence of each cloud X[b] (B, n, 2) to a fixed cloud Y, given OT(Y, Y)."""
    for b in range(X.shape[0]):
        xy, e1 = ot_cross(X[b], Y, p, eps_list, max_iter, tol, check_every)
        xx, e2 = ot_self(cost_matrix(X[b], X[b], p), eps_list, max_iter, tol, check_every)
        s = xy - 0.5 * xx - 0.5 * yy
        out[b] = s if s > 0.0 else 0.0
        conv[b] = e1 < tol and e2 < tol
