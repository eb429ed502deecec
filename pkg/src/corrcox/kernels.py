"""Hot numeric kernels for the profile (fixed-beta) hazard problem.

Unknowns are the node values ``v`` of a tent spline at the sorted distinct
observation times ``s_1 < ... < s_K``. The summed objective is

    F(v) = sum_k D_k log v_k - R_0 A_0(v_1) - sum_k R_k A_k(v_k, v_{k+1})

with ``D_k`` the event count at knot k, ``A_0`` the area of the spline on
``[0, s_1]``, ``A_k`` its area on ``[s_k, s_{k+1}]`` and ``R`` the summed
correction weights of observations still at risk over each piece. Every
``A`` is convex in ``v`` and depends on at most two neighbouring nodes, so
the Hessian is tridiagonal.

The feasible set is ``v >= floor`` and ``|v_{k+1} - v_k| <= L * gap_k``.
It is handled with a log-barrier path followed by damped Newton steps; each
step is a symmetric tridiagonal solve.

All functions here are written so that the same source runs under numba and
under plain numpy; see ``corrcox._accel``.
"""

import numpy as np

from ._accel import USE_NUMBA, jit


@jit
def boundary_piece(v1, s1, lip, floor):
    """Area on [0, s1] and its first two derivatives in ``v1``."""
    u = v1 - floor
    if u >= lip * s1:
        return u * s1 - 0.5 * lip * s1 * s1 + floor * s1, s1, 0.0
    return 0.5 * u * u / lip + floor * s1, u / lip, 1.0 / lip


@jit
def interior_pieces(v, gaps, lip, floor):
    """Areas of the interior pieces and their derivatives.

    Returns ``(area, d_left, d_right, h_ll, h_lr)`` where ``h_ll`` is the
    second derivative in either endpoint (the same for both) and ``h_lr``
    the mixed one.
    """
    ua = v[:-1] - floor
    ub = v[1:] - floor
    h = 0.5 * (ua + ub - lip * gaps)
    hp = np.maximum(h, 0.0)
    area = (ua * ua + ub * ub - 2.0 * hp * hp) / (2.0 * lip) + floor * gaps
    d_left = (ua - hp) / lip
    d_right = (ub - hp) / lip
    pos = h > 0.0
    h_ll = np.where(pos, 0.5 / lip, 1.0 / lip)
    h_lr = np.where(pos, -0.5 / lip, 0.0)
    return area, d_left, d_right, h_ll, h_lr


@jit
def knot_cumulative(v, gaps, s1, lip, floor):
    """Integral of the tent spline from 0 up to each knot."""
    a0, _, _ = boundary_piece(v[0], s1, lip, floor)
    out = np.empty(v.size)
    out[0] = a0
    if v.size > 1:
        area, _, _, _, _ = interior_pieces(v, gaps, lip, floor)
        out[1:] = a0 + np.cumsum(area)
    return out


@jit
def reduced_terms(v, events, r0, risk, gaps, s1, lip, floor):
    """Value, gradient and tridiagonal Hessian of the summed objective F."""
    k = v.size
    a0, d0, h0 = boundary_piece(v[0], s1, lip, floor)
    logs = np.zeros(k)
    for i in range(k):
        if events[i] > 0.0:
            logs[i] = events[i] * np.log(v[i])
    value = logs.sum() - r0 * a0
    grad = events / v
    hdiag = -events / (v * v)
    grad[0] -= r0 * d0
    hdiag[0] -= r0 * h0
    hoff = np.zeros(max(k - 1, 0))
    if k > 1:
        area, dl, dr, hll, hlr = interior_pieces(v, gaps, lip, floor)
        value -= np.sum(risk * area)
        grad[:-1] -= risk * dl
        grad[1:] -= risk * dr
        hdiag[:-1] -= risk * hll
        hdiag[1:] -= risk * hll
        hoff = -risk * hlr
    return value, grad, hdiag, hoff


def _barrier_value_vec(v, events, r0, risk, gaps, s1, lip, floor):
    value, _, _, _ = reduced_terms(v, events, r0, risk, gaps, s1, lip, floor)
    b = lip * gaps
    d = v[1:] - v[:-1]
    bar = (np.sum(np.log(v - floor)) + np.sum(np.log(b - d))
           + np.sum(np.log(b + d)))
    return value, bar


def _barrier_terms_vec(v, events, r0, risk, gaps, s1, lip, floor, t):
    _, g, hd, ho = reduced_terms(v, events, r0, risk, gaps, s1, lip, floor)
    g = t * g
    hd = t * hd
    ho = t * ho
    sl = v - floor
    g += 1.0 / sl
    hd -= 1.0 / (sl * sl)
    if v.size > 1:
        b = lip * gaps
        d = v[1:] - v[:-1]
        up = b - d
        dn = b + d
        gd = -1.0 / up + 1.0 / dn
        g[1:] += gd
        g[:-1] -= gd
        c = 1.0 / (up * up) + 1.0 / (dn * dn)
        hd[1:] -= c
        hd[:-1] -= c
        ho += c
    return g, hd, ho


def _barrier_value_loop(v, events, r0, risk, gaps, s1, lip, floor):
    k = v.size
    a0, _, _ = boundary_piece(v[0], s1, lip, floor)
    obj = -r0 * a0
    bar = np.log(v[k - 1] - floor)
    inv2l = 0.5 / lip
    for i in range(k):
        if events[i] > 0.0:
            obj += events[i] * np.log(v[i])
    for i in range(k - 1):
        ua = v[i] - floor
        ub = v[i + 1] - floor
        g = gaps[i]
        h = 0.5 * (ua + ub - lip * g)
        if h < 0.0:
            h = 0.0
        obj -= risk[i] * ((ua * ua + ub * ub - 2.0 * h * h) * inv2l + floor * g)
        b = lip * g
        d = v[i + 1] - v[i]
        bar += np.log(ua * (b - d) * (b + d))
    return obj, bar


def _barrier_terms_loop(v, events, r0, risk, gaps, s1, lip, floor, t):
    k = v.size
    g = np.empty(k)
    hd = np.empty(k)
    ho = np.empty(max(k - 1, 0))
    _, d0, h0 = boundary_piece(v[0], s1, lip, floor)
    for i in range(k):
        sl = v[i] - floor
        gi = 0.0
        hi = 0.0
        if events[i] > 0.0:
            gi = events[i] / v[i]
            hi = -gi / v[i]
        g[i] = t * gi + 1.0 / sl
        hd[i] = t * hi - 1.0 / (sl * sl)
    g[0] -= t * r0 * d0
    hd[0] -= t * r0 * h0
    inv_l = 1.0 / lip
    for i in range(k - 1):
        ua = v[i] - floor
        ub = v[i + 1] - floor
        h = 0.5 * (ua + ub - lip * gaps[i])
        tr = t * risk[i]
        if h > 0.0:
            g[i] -= tr * (ua - h) * inv_l
            g[i + 1] -= tr * (ub - h) * inv_l
            hll = 0.5 * inv_l
            hlr = -0.5 * inv_l
        else:
            g[i] -= tr * ua * inv_l
            g[i + 1] -= tr * ub * inv_l
            hll = inv_l
            hlr = 0.0
        b = lip * gaps[i]
        d = v[i + 1] - v[i]
        up = 1.0 / (b - d)
        dn = 1.0 / (b + d)
        gd = dn - up
        c = up * up + dn * dn
        g[i + 1] += gd
        g[i] -= gd
        hd[i] -= tr * hll + c
        hd[i + 1] -= tr * hll + c
        ho[i] = -tr * hlr + c
    return g, hd, ho


if USE_NUMBA:
    _barrier_value = jit(_barrier_value_loop)
    _barrier_terms = jit(_barrier_terms_loop)
else:
    _barrier_value = _barrier_value_vec
    _barrier_terms = _barrier_terms_vec


if USE_NUMBA:
    @jit
    def spd_tridiag_solve(diag, off, rhs):
        """Solve ``S x = rhs`` for SPD tridiagonal ``S`` (Cholesky sweep)."""
        n = diag.size
        l_diag = np.empty(n)
        l_off = np.empty(max(n - 1, 0))
        y = np.empty(n)
        l_diag[0] = np.sqrt(diag[0])
        y[0] = rhs[0] / l_diag[0]
        for i in range(1, n):
            l_off[i - 1] = off[i - 1] / l_diag[i - 1]
            l_diag[i] = np.sqrt(diag[i] - l_off[i - 1] * l_off[i - 1])
            y[i] = (rhs[i] - l_off[i - 1] * y[i - 1]) / l_diag[i]
        x = np.empty(n)
        x[n - 1] = y[n - 1] / l_diag[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = (y[i] - l_off[i] * x[i + 1]) / l_diag[i]
        return x
else:
    from scipy.linalg import solveh_banded

    def spd_tridiag_solve(diag, off, rhs):
        """Solve ``S x = rhs`` for SPD tridiagonal ``S`` (LAPACK pbsv)."""
        if diag.size == 1:
            return rhs / diag
        ab = np.empty((2, diag.size))
        ab[0, 0] = 0.0
        ab[0, 1:] = off
        ab[1] = diag
        return solveh_banded(ab, rhs, check_finite=False)


@jit
def _max_step(v, dx, gaps, lip, floor):
    step = 1.0
    sl = v - floor
    for i in range(v.size):
        if dx[i] < 0.0:
            r = sl[i] / -dx[i]
            if r < step:
                step = r
    if v.size > 1:
        b = lip * gaps
        d = v[1:] - v[:-1]
        dd = dx[1:] - dx[:-1]
        for i in range(dd.size):
            if dd[i] > 0.0:
                r = (b[i] - d[i]) / dd[i]
                if r < step:
                    step = r
            elif dd[i] < 0.0:
                r = (b[i] + d[i]) / -dd[i]
                if r < step:
                    step = r
    return step


@jit
def barrier_maximize(events, r0, risk, gaps, s1, lip, floor, v0, t0,
                     gap_tol, growth, max_newton):
    """Maximise F over the feasible cone by the barrier method.

    ``v0`` must be strictly feasible. Returns ``(v, newton_steps, gap_bound,
    converged)``, where ``gap_bound`` bounds ``max F - F(v)`` (summed scale)
    once the last centering step has converged.
    """
    v = v0.copy()
    k = v.size
    n_con = 3 * k - 2
    t = t0
    steps = 0
    obj, bar = _barrier_value(v, events, r0, risk, gaps, s1, lip, floor)
    while True:
        centred = False
        while steps < max_newton:
            phi = t * obj + bar
            g, hd, ho = _barrier_terms(v, events, r0, risk, gaps, s1, lip,
                                       floor, t)
            dx = spd_tridiag_solve(-hd, -ho, g)
            dec = np.dot(g, dx)
            if dec <= 1e-11 * max(1.0, abs(phi)) or dec <= 1e-14:
                centred = True
                break
            step = min(1.0, 0.99 * _max_step(v, dx, gaps, lip, floor))
            steps += 1
            moved = False
            vn = v
            while step > 1e-14:
                vn = v + step * dx
                on, bn = _barrier_value(vn, events, r0, risk, gaps, s1, lip,
                                        floor)
                if t * on + bn >= phi + 0.25 * step * dec:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                # no ascent left at working precision; treat as centred
                centred = True
                break
            v = vn
            obj = on
            bar = bn
        if not centred:
            return v, steps, n_con / t, False
        if n_con / t <= gap_tol:
            return v, steps, n_con / t, True
        t *= growth
