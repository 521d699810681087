# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernel.

Bit-identical twin of ``_kernels_py``: every floating-point expression is
transcribed in the same evaluation order, and the extension is built with
-ffp-contract=off so the C compiler cannot fuse multiply-adds. Keep edits
in lockstep with ``_kernels_py.py``.
"""
from libc.math cimport fabs, isfinite, sqrt

import numpy as np

from .errors import DegenerateContactError, IntegrationDivergedError

BACKEND_NAME = "compiled"

cdef double _MIN_CENTER_DISTANCE = 1e-9


cdef inline void _rot(double qw, double qx, double qy, double qz,
                      double vx, double vy, double vz,
                      double* ox, double* oy, double* oz) noexcept:
    cdef double tx = 2.0 * (qy * vz - qz * vy)
    cdef double ty = 2.0 * (qz * vx - qx * vz)
    cdef double tz = 2.0 * (qx * vy - qy * vx)
    ox[0] = vx + qw * tx + (qy * tz - qz * ty)
    oy[0] = vy + qw * ty + (qz * tx - qx * tz)
    oz[0] = vz + qw * tz + (qx * ty - qy * tx)


cdef void _derivative(double* y, double* pr, int n,
                      double gx, double gy, double gz,
                      double cd, double cr, double* out) noexcept:
    cdef int b
    cdef double* s
    cdef double* p
    cdef double* o
    cdef double qw, qx, qy, qz, vx, vy, vz, wx, wy, wz
    cdef double m, ix, iy, iz, fx, fy, fz, tx, ty, tz, inv_m
    cdef double ux, uy, uz, lbx, lby, lbz, lwx, lwy, lwz
    cdef double rx, ry, rz, bx, by, bz, ax, ay, az
    cdef double qn, nw, nx_, ny_, nz_
    for b in range(n):
        s = y + b * 13
        p = pr + b * 11
        o = out + b * 13
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
        o[0] = vx
        o[1] = vy
        o[2] = vz
        o[3] = -0.5 * (wx * qx + wy * qy + wz * qz)
        o[4] = 0.5 * (wx * qw + wy * qz - wz * qy)
        o[5] = 0.5 * (wy * qw + wz * qx - wx * qz)
        o[6] = 0.5 * (wz * qw + wx * qy - wy * qx)
        inv_m = 1.0 / m
        o[7] = fx * inv_m
        o[8] = fy * inv_m
        o[9] = fz * inv_m
        # frame transforms use the normalized quaternion: RK4 stage values
        # are not unit, and an unnormalized transform feeds |q|^2 back into w
        qn = 1.0 / sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
        nw = qw * qn
        nx_ = qx * qn
        ny_ = qy * qn
        nz_ = qz * qn
        _rot(nw, -nx_, -ny_, -nz_, wx, wy, wz, &ux, &uy, &uz)
        lbx = ix * ux
        lby = iy * uy
        lbz = iz * uz
        _rot(nw, nx_, ny_, nz_, lbx, lby, lbz, &lwx, &lwy, &lwz)
        rx = tx - (wy * lwz - wz * lwy)
        ry = ty - (wz * lwx - wx * lwz)
        rz = tz - (wx * lwy - wy * lwx)
        _rot(nw, -nx_, -ny_, -nz_, rx, ry, rz, &bx, &by, &bz)
        ax = bx / ix
        ay = by / iy
        az = bz / iz
        _rot(nw, nx_, ny_, nz_, ax, ay, az, &o[10], &o[11], &o[12])


cdef void _rk4_inplace(double* y, double* pr, int n,
                       double gx, double gy, double gz,
                       double cd, double cr, double h,
                       double* k1, double* k2, double* k3, double* k4,
                       double* tmp) noexcept:
    cdef int i
    cdef int total = n * 13
    cdef double half = h * 0.5
    cdef double sixth = h / 6.0
    _derivative(y, pr, n, gx, gy, gz, cd, cr, k1)
    for i in range(total):
        tmp[i] = y[i] + half * k1[i]
    _derivative(tmp, pr, n, gx, gy, gz, cd, cr, k2)
    for i in range(total):
        tmp[i] = y[i] + half * k2[i]
    _derivative(tmp, pr, n, gx, gy, gz, cd, cr, k3)
    for i in range(total):
        tmp[i] = y[i] + h * k3[i]
    _derivative(tmp, pr, n, gx, gy, gz, cd, cr, k4)
    for i in range(total):
        y[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


cdef double _renormalize(double* y, int n) except -1.0:
    cdef double max_corr = 0.0
    cdef double nrm, corr, inv
    cdef int b, c
    cdef double* s
    for b in range(n):
        s = y + b * 13
        for c in range(13):
            if not isfinite(s[c]):
                raise IntegrationDivergedError("integration diverged")
        nrm = sqrt(s[3] * s[3] + s[4] * s[4] + s[5] * s[5] + s[6] * s[6])
        if nrm == 0.0:
            raise IntegrationDivergedError("integration diverged")
        corr = fabs(nrm - 1.0)
        if corr > max_corr:
            max_corr = corr
        inv = 1.0 / nrm
        s[3] *= inv
        s[4] *= inv
        s[5] *= inv
        s[6] *= inv
    return max_corr


cdef int _resolve(double* y, double* pr, int n, double eps, double sign,
                  int max_sweeps, double slop, list events, long fine_step) except -1:
    cdef int i, j, _sweep
    cdef bint any_applied
    cdef double* si
    cdef double* sj
    cdef double* pi
    cdef double* pj
    cdef double dx, dy, dz, rsum, d2, dist, nx, ny, nz, w1, cx, cy, cz
    cdef double r1x, r1y, r1z, r2x, r2y, r2z, rvx, rvy, rvz, vn
    cdef double inv_mi, inv_mj
    cdef double c1x, c1y, c1z, b1x, b1y, b1z, a1x, a1y, a1z, t1
    cdef double c2x, c2y, c2z, b2x, b2y, b2z, a2x, a2y, a2z, t2
    cdef double denom, jmag, jx, jy, jz
    cdef double d1x, d1y, d1z, e1x, e1y, e1z, f1x, f1y, f1z
    cdef double d2x_, d2y_, d2z_, e2x, e2y, e2z, f2x, f2y, f2z
    cdef double corr, push
    for _sweep in range(max_sweeps):
        any_applied = False
        for i in range(n - 1):
            si = y + i * 13
            pi = pr + i * 11
            for j in range(i + 1, n):
                sj = y + j * 13
                pj = pr + j * 11
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
                _rot(si[3], -si[4], -si[5], -si[6], c1x, c1y, c1z, &b1x, &b1y, &b1z)
                b1x = b1x / pi[2]
                b1y = b1y / pi[3]
                b1z = b1z / pi[4]
                _rot(si[3], si[4], si[5], si[6], b1x, b1y, b1z, &a1x, &a1y, &a1z)
                t1 = (a1y * r1z - a1z * r1y) * nx + (a1z * r1x - a1x * r1z) * ny + (a1x * r1y - a1y * r1x) * nz
                c2x = r2y * nz - r2z * ny
                c2y = r2z * nx - r2x * nz
                c2z = r2x * ny - r2y * nx
                _rot(sj[3], -sj[4], -sj[5], -sj[6], c2x, c2y, c2z, &b2x, &b2y, &b2z)
                b2x = b2x / pj[2]
                b2y = b2y / pj[3]
                b2z = b2z / pj[4]
                _rot(sj[3], sj[4], sj[5], sj[6], b2x, b2y, b2z, &a2x, &a2y, &a2z)
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
                _rot(si[3], -si[4], -si[5], -si[6], d1x, d1y, d1z, &e1x, &e1y, &e1z)
                e1x = e1x / pi[2]
                e1y = e1y / pi[3]
                e1z = e1z / pi[4]
                _rot(si[3], si[4], si[5], si[6], e1x, e1y, e1z, &f1x, &f1y, &f1z)
                si[10] += f1x
                si[11] += f1y
                si[12] += f1z
                d2x_ = r2y * jz - r2z * jy
                d2y_ = r2z * jx - r2x * jz
                d2z_ = r2x * jy - r2y * jx
                _rot(sj[3], -sj[4], -sj[5], -sj[6], d2x_, d2y_, d2z_, &e2x, &e2y, &e2z)
                e2x = e2x / pj[2]
                e2y = e2y / pj[3]
                e2z = e2z / pj[4]
                _rot(sj[3], sj[4], sj[5], sj[6], e2x, e2y, e2z, &f2x, &f2y, &f2z)
                sj[10] -= f2x
                sj[11] -= f2y
                sj[12] -= f2z
                events.append((fine_step, i, j, jmag))
                any_applied = True
        if not any_applied:
            break
    for i in range(n - 1):
        si = y + i * 13
        pi = pr + i * 11
        for j in range(i + 1, n):
            sj = y + j * 13
            pj = pr + j * 11
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
    return 0


def _as_c(a, width):
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"expected (n, {width}) array, got {arr.shape}")
    return arr


def rk4_step(states, params, env, h):
    """One RK4 step (no collision handling). Returns (new_states, max_renorm)."""
    cdef double[:, ::1] y = _as_c(states, 13).copy()
    cdef double[:, ::1] pr = _as_c(params, 11)
    e = np.ascontiguousarray(np.asarray(env, dtype=np.float64))
    cdef int n = y.shape[0]
    scratch = np.empty((5, n, 13), dtype=np.float64)
    cdef double[:, :, ::1] sc = scratch
    _rk4_inplace(&y[0, 0], &pr[0, 0], n, e[0], e[1], e[2], e[3], e[4], float(h),
                 &sc[0, 0, 0], &sc[1, 0, 0], &sc[2, 0, 0], &sc[3, 0, 0], &sc[4, 0, 0])
    cdef double max_corr = _renormalize(&y[0, 0], n)
    return np.asarray(y), max_corr


def resolve_collisions(states, params, restitution, sign=1.0, max_sweeps=10, slop=1e-4):
    """Impulse sweeps plus projection. Returns (new_states, [(i, j, impulse)])."""
    cdef double[:, ::1] y = _as_c(states, 13).copy()
    cdef double[:, ::1] pr = _as_c(params, 11)
    cdef int n = y.shape[0]
    events = []
    _resolve(&y[0, 0], &pr[0, 0], n, float(restitution), float(sign),
             int(max_sweeps), float(slop), events, 0)
    return np.asarray(y), [(i, j, imp) for (_s, i, j, imp) in events]


def simulate_path(states, params, env, h, n_fine, steps_per_sample):
    """Integrate n_fine steps, resolving collisions after each fine step.

    Returns (samples, events, max_renorm); see the Python twin for details.
    """
    cdef double[:, ::1] y = _as_c(states, 13).copy()
    cdef double[:, ::1] pr = _as_c(params, 11)
    e = np.ascontiguousarray(np.asarray(env, dtype=np.float64))
    cdef double gx = e[0], gy = e[1], gz = e[2], cd = e[3], cr = e[4], eps = e[5]
    cdef double hh = float(h)
    cdef int n = y.shape[0]
    cdef long nf = int(n_fine)
    cdef long sps = int(steps_per_sample)
    cdef long n_rec = nf // sps
    samples = np.empty((n_rec + 1, n, 13), dtype=np.float64)
    cdef double[:, :, ::1] smp = samples
    cdef int b, c
    for b in range(n):
        for c in range(13):
            smp[0, b, c] = y[b, c]
    events = []
    scratch = np.empty((5, n, 13), dtype=np.float64)
    cdef double[:, :, ::1] sc = scratch
    cdef double max_corr = 0.0
    cdef double corr
    cdef long step
    for step in range(nf):
        _rk4_inplace(&y[0, 0], &pr[0, 0], n, gx, gy, gz, cd, cr, hh,
                     &sc[0, 0, 0], &sc[1, 0, 0], &sc[2, 0, 0], &sc[3, 0, 0], &sc[4, 0, 0])
        corr = _renormalize(&y[0, 0], n)
        if corr > max_corr:
            max_corr = corr
        _resolve(&y[0, 0], &pr[0, 0], n, eps, 1.0, 10, 1e-4, events, step)
        if (step + 1) % sps == 0:
            for b in range(n):
                for c in range(13):
                    smp[(step + 1) // sps, b, c] = y[b, c]
    return samples, events, max_corr
