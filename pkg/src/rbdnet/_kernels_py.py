"""Pure-Python simulation kernel.

This is the reference implementation of the hot loop: one RK4 fine step of
the rigid-body equations, quaternion renormalization, and the sequential
impulse collision sweep. A Cython twin (``_kernels_c``) implements the
same arithmetic; the two must stay bit-identical, so every expression here
is written in the exact evaluation order the C code uses. Keep edits in
lockstep with ``_kernels_c.pyx``.

Array contracts (see ``bodies``): states (n, 13), params (n, 11), env (6,).
"""
from __future__ import annotations

from math import isfinite, sqrt

import numpy as np

from .errors import DegenerateContactError, IntegrationDivergedError

BACKEND_NAME = "python"

_MIN_CENTER_DISTANCE = 1e-9


def _rot(qw, qx, qy, qz, vx, vy, vz):
    # v + qw*t + q_vec x t  with  t = 2 q_vec x v
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    rx = vx + qw * tx + (qy * tz - qz * ty)
    ry = vy + qw * ty + (qz * tx - qx * tz)
    rz = vz + qw * tz + (qx * ty - qy * tx)
    return rx, ry, rz


def _derivative(y, pr, gx, gy, gz, cd, cr, out):
    n = len(y)
    for b in range(n):
        s = y[b]
        p = pr[b]
        qw = s[3]
        qx = s[4]
        qy = s[5]
        qz = s[6]
        vx = s[7]
        vy = s[8]
        vz = s[9]
        wx = s[10]
        wy = s[11]
        wz = s[12]
        m = p[0]
        ix = p[2]
        iy = p[3]
        iz = p[4]
        fx = m * gx + p[5] - cd * vx
        fy = m * gy + p[6] - cd * vy
        fz = m * gz + p[7] - cd * vz
        tx = p[8] - cr * wx
        ty = p[9] - cr * wy
        tz = p[10] - cr * wz
        o = out[b]
        o[0] = vx
        o[1] = vy
        o[2] = vz
        # dq/dt = 0.5 * (0, w_world) * q
        o[3] = -0.5 * (wx * qx + wy * qy + wz * qz)
        o[4] = 0.5 * (wx * qw + wy * qz - wz * qy)
        o[5] = 0.5 * (wy * qw + wz * qx - wx * qz)
        o[6] = 0.5 * (wz * qw + wx * qy - wy * qx)
        inv_m = 1.0 / m
        o[7] = fx * inv_m
        o[8] = fy * inv_m
        o[9] = fz * inv_m
        # world-frame Euler equation through the body frame:
        # dw = R I_b^-1 R^T (tau - w x (R I_b R^T w))
        # R comes from the normalized quaternion: RK4 stage values are not
        # unit, and an unnormalized frame transform feeds |q|^2 back into w.
        qsq = qw * qw + qx * qx + qy * qy + qz * qz
        if qsq == 0.0:  # C twin propagates inf->nan and fails the finite check
            raise IntegrationDivergedError("integration diverged")
        qn = 1.0 / sqrt(qsq)
        nw = qw * qn
        nx_ = qx * qn
        ny_ = qy * qn
        nz_ = qz * qn
        ux, uy, uz = _rot(nw, -nx_, -ny_, -nz_, wx, wy, wz)
        lbx = ix * ux
        lby = iy * uy
        lbz = iz * uz
        lwx, lwy, lwz = _rot(nw, nx_, ny_, nz_, lbx, lby, lbz)
        rx = tx - (wy * lwz - wz * lwy)
        ry = ty - (wz * lwx - wx * lwz)
        rz = tz - (wx * lwy - wy * lwx)
        bx, by, bz = _rot(nw, -nx_, -ny_, -nz_, rx, ry, rz)
        ax = bx / ix
        ay = by / iy
        az = bz / iz
        o[10], o[11], o[12] = _rot(nw, nx_, ny_, nz_, ax, ay, az)


def _rk4_inplace(y, pr, gx, gy, gz, cd, cr, h, k1, k2, k3, k4, tmp):
    n = len(y)
    half = h * 0.5
    sixth = h / 6.0
    _derivative(y, pr, gx, gy, gz, cd, cr, k1)
    for b in range(n):
        yb = y[b]
        tb = tmp[b]
        kb = k1[b]
        for c in range(13):
            tb[c] = yb[c] + half * kb[c]
    _derivative(tmp, pr, gx, gy, gz, cd, cr, k2)
    for b in range(n):
        yb = y[b]
        tb = tmp[b]
        kb = k2[b]
        for c in range(13):
            tb[c] = yb[c] + half * kb[c]
    _derivative(tmp, pr, gx, gy, gz, cd, cr, k3)
    for b in range(n):
        yb = y[b]
        tb = tmp[b]
        kb = k3[b]
        for c in range(13):
            tb[c] = yb[c] + h * kb[c]
    _derivative(tmp, pr, gx, gy, gz, cd, cr, k4)
    for b in range(n):
        yb = y[b]
        a = k1[b]
        bb = k2[b]
        cc = k3[b]
        dd = k4[b]
        for c in range(13):
            yb[c] = yb[c] + sixth * (a[c] + 2.0 * bb[c] + 2.0 * cc[c] + dd[c])


def _renormalize(y):
    """Unit-normalize every quaternion; returns the largest |1 - norm| seen."""
    max_corr = 0.0
    for b in range(len(y)):
        s = y[b]
        for c in range(13):
            if not isfinite(s[c]):
                raise IntegrationDivergedError("integration diverged")
        nrm = sqrt(s[3] * s[3] + s[4] * s[4] + s[5] * s[5] + s[6] * s[6])
        if nrm == 0.0:
            raise IntegrationDivergedError("integration diverged")
        corr = abs(nrm - 1.0)
        if corr > max_corr:
            max_corr = corr
        inv = 1.0 / nrm
        s[3] *= inv
        s[4] *= inv
        s[5] *= inv
        s[6] *= inv
    return max_corr


def _resolve(y, pr, eps, sign, max_sweeps, slop, events, fine_step):
    """Sequential impulses in ascending pair order, then position projection."""
    n = len(y)
    for _sweep in range(max_sweeps):
        any_applied = False
        for i in range(n - 1):
            si = y[i]
            pi = pr[i]
            for j in range(i + 1, n):
                sj = y[j]
                pj = pr[j]
                dx = si[0] - sj[0]
                dy = si[1] - sj[1]
                dz = si[2] - sj[2]
                rsum = pi[1] + pj[1]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 >= rsum * rsum:
                    continue
                dist = sqrt(d2)
                if dist < _MIN_CENTER_DISTANCE:
                    raise DegenerateContactError(
                        f"degenerate contact between bodies {i} and {j}")
                nx = dx / dist
                ny = dy / dist
                nz = dz / dist
                w1 = pi[1] / rsum
                cx = si[0] + w1 * (sj[0] - si[0])
                cy = si[1] + w1 * (sj[1] - si[1])
                cz = si[2] + w1 * (sj[2] - si[2])
                r1x = cx - si[0]
                r1y = cy - si[1]
                r1z = cz - si[2]
                r2x = cx - sj[0]
                r2y = cy - sj[1]
                r2z = cz - sj[2]
                rvx = (si[7] + (si[11] * r1z - si[12] * r1y)) - (sj[7] + (sj[11] * r2z - sj[12] * r2y))
                rvy = (si[8] + (si[12] * r1x - si[10] * r1z)) - (sj[8] + (sj[12] * r2x - sj[10] * r2z))
                rvz = (si[9] + (si[10] * r1y - si[11] * r1x)) - (sj[9] + (sj[10] * r2y - sj[11] * r2x))
                vn = rvx * nx + rvy * ny + rvz * nz
                if vn >= 0.0:
                    continue
                inv_mi = 1.0 / pi[0]
                inv_mj = 1.0 / pj[0]
                c1x = r1y * nz - r1z * ny
                c1y = r1z * nx - r1x * nz
                c1z = r1x * ny - r1y * nx
                b1x, b1y, b1z = _rot(si[3], -si[4], -si[5], -si[6], c1x, c1y, c1z)
                b1x = b1x / pi[2]
                b1y = b1y / pi[3]
                b1z = b1z / pi[4]
                a1x, a1y, a1z = _rot(si[3], si[4], si[5], si[6], b1x, b1y, b1z)
                t1 = (a1y * r1z - a1z * r1y) * nx + (a1z * r1x - a1x * r1z) * ny + (a1x * r1y - a1y * r1x) * nz
                c2x = r2y * nz - r2z * ny
                c2y = r2z * nx - r2x * nz
                c2z = r2x * ny - r2y * nx
                b2x, b2y, b2z = _rot(sj[3], -sj[4], -sj[5], -sj[6], c2x, c2y, c2z)
                b2x = b2x / pj[2]
                b2y = b2y / pj[3]
                b2z = b2z / pj[4]
                a2x, a2y, a2z = _rot(sj[3], sj[4], sj[5], sj[6], b2x, b2y, b2z)
                t2 = (a2y * r2z - a2z * r2y) * nx + (a2z * r2x - a2x * r2z) * ny + (a2x * r2y - a2y * r2x) * nz
                denom = inv_mi + inv_mj + t1 + t2
                jmag = sign * (-(1.0 + eps) * vn / denom)
                jx = jmag * nx
                jy = jmag * ny
                jz = jmag * nz
                si[7] += jx * inv_mi
                si[8] += jy * inv_mi
                si[9] += jz * inv_mi
                sj[7] -= jx * inv_mj
                sj[8] -= jy * inv_mj
                sj[9] -= jz * inv_mj
                d1x = r1y * jz - r1z * jy
                d1y = r1z * jx - r1x * jz
                d1z = r1x * jy - r1y * jx
                e1x, e1y, e1z = _rot(si[3], -si[4], -si[5], -si[6], d1x, d1y, d1z)
                e1x = e1x / pi[2]
                e1y = e1y / pi[3]
                e1z = e1z / pi[4]
                f1x, f1y, f1z = _rot(si[3], si[4], si[5], si[6], e1x, e1y, e1z)
                si[10] += f1x
                si[11] += f1y
                si[12] += f1z
                d2x = r2y * jz - r2z * jy
                d2y = r2z * jx - r2x * jz
                d2z = r2x * jy - r2y * jx
                e2x, e2y, e2z = _rot(sj[3], -sj[4], -sj[5], -sj[6], d2x, d2y, d2z)
                e2x = e2x / pj[2]
                e2y = e2y / pj[3]
                e2z = e2z / pj[4]
                f2x, f2y, f2z = _rot(sj[3], sj[4], sj[5], sj[6], e2x, e2y, e2z)
                sj[10] -= f2x
                sj[11] -= f2y
                sj[12] -= f2z
                events.append((fine_step, i, j, jmag))
                any_applied = True
        if not any_applied:
            break
    # position projection: push still-overlapping pairs apart, split by
    # inverse mass, leaving `slop` of residual overlap
    for i in range(n - 1):
        si = y[i]
        pi = pr[i]
        for j in range(i + 1, n):
            sj = y[j]
            pj = pr[j]
            dx = si[0] - sj[0]
            dy = si[1] - sj[1]
            dz = si[2] - sj[2]
            rsum = pi[1] + pj[1]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 >= rsum * rsum:
                continue
            dist = sqrt(d2)
            if dist < _MIN_CENTER_DISTANCE:
                raise DegenerateContactError(
                    f"degenerate contact between bodies {i} and {j}")
            corr = (rsum - dist) - slop
            if corr <= 0.0:
                continue
            nx = dx / dist
            ny = dy / dist
            nz = dz / dist
            inv_mi = 1.0 / pi[0]
            inv_mj = 1.0 / pj[0]
            push = corr / (inv_mi + inv_mj)
            si[0] += nx * (push * inv_mi)
            si[1] += ny * (push * inv_mi)
            si[2] += nz * (push * inv_mi)
            sj[0] -= nx * (push * inv_mj)
            sj[1] -= ny * (push * inv_mj)
            sj[2] -= nz * (push * inv_mj)


def _to_lists(a):
    return [list(map(float, row)) for row in np.asarray(a, dtype=np.float64)]


def _env_tuple(env):
    e = np.asarray(env, dtype=np.float64)
    return (float(e[0]), float(e[1]), float(e[2]), float(e[3]), float(e[4]), float(e[5]))


def _buffers(n):
    return ([[0.0] * 13 for _ in range(n)] for _ in range(5))


def rk4_step(states, params, env, h):
    """One RK4 step (no collision handling). Returns (new_states, max_renorm)."""
    y = _to_lists(states)
    pr = _to_lists(params)
    gx, gy, gz, cd, cr, _eps = _env_tuple(env)
    k1, k2, k3, k4, tmp = _buffers(len(y))
    _rk4_inplace(y, pr, gx, gy, gz, cd, cr, float(h), k1, k2, k3, k4, tmp)
    max_corr = _renormalize(y)
    return np.array(y, dtype=np.float64), max_corr


def resolve_collisions(states, params, restitution, sign=1.0, max_sweeps=10, slop=1e-4):
    """Impulse sweeps plus projection. Returns (new_states, [(i, j, impulse)])."""
    y = _to_lists(states)
    pr = _to_lists(params)
    events = []
    _resolve(y, pr, float(restitution), float(sign), int(max_sweeps), float(slop),
             events, 0)
    return np.array(y, dtype=np.float64), [(i, j, imp) for (_s, i, j, imp) in events]


def simulate_path(states, params, env, h, n_fine, steps_per_sample):
    """Integrate n_fine steps, resolving collisions after each fine step.

    Returns (samples, events, max_renorm) where samples has shape
    (n_fine // steps_per_sample + 1, n, 13) and events is a list of
    (fine_step, i, j, impulse) tuples.
    """
    y = _to_lists(states)
    pr = _to_lists(params)
    gx, gy, gz, cd, cr, eps = _env_tuple(env)
    h = float(h)
    n = len(y)
    n_fine = int(n_fine)
    sps = int(steps_per_sample)
    n_rec = n_fine // sps
    samples = np.empty((n_rec + 1, n, 13), dtype=np.float64)
    samples[0] = y
    events = []
    k1, k2, k3, k4, tmp = _buffers(n)
    max_corr = 0.0
    for step in range(n_fine):
        _rk4_inplace(y, pr, gx, gy, gz, cd, cr, h, k1, k2, k3, k4, tmp)
        corr = _renormalize(y)
        if corr > max_corr:
            max_corr = corr
        _resolve(y, pr, eps, 1.0, 10, 1e-4, events, step)
        if (step + 1) % sps == 0:
            samples[(step + 1) // sps] = y
    return samples, events, max_corr
