"""Compiled inner loops for the serial-chain dynamics.

Plain loops over 3-vectors; numba turns them into machine code. The
Python-level API and its docs live in :mod:`transkill.dynamics`.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def forward_kinematics(origins_R, origins_p, K, K2, axes, tool_R, tool_p, q):
    n = q.shape[0]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    z = np.empty((n, 3))
    Rc = np.eye(3)
    pc = np.zeros(3)
    Rj = np.empty((3, 3))
    for i in range(n):
        pc = pc + Rc @ origins_p[i]
        s = np.sin(q[i])
        c = 1.0 - np.cos(q[i])
        for a in range(3):
            for b in range(3):
                Rj[a, b] = s * K[i, a, b] + c * K2[i, a, b]
            Rj[a, a] += 1.0
        Rc = Rc @ origins_R[i] @ Rj
        R[i] = Rc
        p[i] = pc
        z[i] = Rc @ axes[i]
    tcp_R = Rc @ tool_R
    tcp_p = pc + Rc @ tool_p
    return R, p, z, tcp_R, tcp_p


@njit(cache=True)
def jacobian_base(p, z, tcp_p):
    n = p.shape[0]
    J = np.empty((6, n))
    t = np.empty(3)
    for i in range(n):
        _cross(z[i], tcp_p - p[i], t)
        for a in range(3):
            J[a, i] = t[a]
            J[3 + a, i] = z[i, a]
    return J


@njit(cache=True)
def world_inertia(R, p, coms_local, inertias_local):
    n = p.shape[0]
    coms = np.empty((n, 3))
    inertias = np.empty((n, 3, 3))
    for i in range(n):
        coms[i] = p[i] + R[i] @ coms_local[i]
        inertias[i] = R[i] @ inertias_local[i] @ R[i].T
    return coms, inertias


@njit(cache=True)
def crba(R, p, z, masses, coms_local, inertias_local, armature):
    n = p.shape[0]
    coms, inertias = world_inertia(R, p, coms_local, inertias_local)
    M = np.zeros((n, n))
    for i in range(n):
        M[i, i] = armature[i]
    mc = 0.0
    cc = np.zeros(3)
    Ic = np.zeros((3, 3))
    h = np.empty(3)
    tmp = np.empty(3)
    r = np.empty(3)
    for j in range(n - 1, -1, -1):
        m = masses[j]
        new_mc = mc + m
        new_cc = (mc * cc + m * coms[j]) / new_mc
        d_old = cc - new_cc
        d_j = coms[j] - new_cc
        do2 = d_old @ d_old
        dj2 = d_j @ d_j
        Inew = Ic + inertias[j]
        for a in range(3):
            for b in range(3):
                Inew[a, b] -= mc * d_old[a] * d_old[b] + m * d_j[a] * d_j[b]
            Inew[a, a] += mc * do2 + m * dj2
        Ic = Inew
        mc = new_mc
        cc = new_cc
        r[:] = cc - p[j]
        _cross(z[j], r, tmp)
        h[:] = mc * tmp
        L0 = Ic @ z[j]
        for i in range(j + 1):
            r[:] = cc - p[i]
            _cross(r, h, tmp)
            v = z[i, 0] * (L0[0] + tmp[0]) + z[i, 1] * (L0[1] + tmp[1]) + z[i, 2] * (L0[2] + tmp[2])
            M[i, j] += v
            if i != j:
                M[j, i] += v
    return M


@njit(cache=True)
def rnea(R, p, z, masses, coms_local, inertias_local, qd, g):
    n = p.shape[0]
    coms, inertias = world_inertia(R, p, coms_local, inertias_local)
    w = np.zeros(3)
    wd = np.zeros(3)
    a = -g.copy()
    p_prev = np.zeros(3)
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    t1 = np.empty(3)
    t2 = np.empty(3)
    for i in range(n):
        r = p[i] - p_prev
        _cross(wd, r, t1)
        _cross(w, r, t2)
        a = a + t1
        _cross(w, t2, t1)
        a = a + t1
        zq = z[i] * qd[i]
        _cross(w, zq, t1)
        wd = wd + t1
        w = w + zq
        rc = coms[i] - p[i]
        _cross(wd, rc, t1)
        ac = a + t1
        _cross(w, rc, t2)
        _cross(w, t2, t1)
        ac = ac + t1
        F[i] = masses[i] * ac
        Iw = inertias[i] @ w
        _cross(w, Iw, t1)
        N[i] = inertias[i] @ wd + t1
        p_prev = p[i]
    tau = np.empty(n)
    f = np.zeros(3)
    m = np.zeros(3)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            _cross(p[i + 1] - p[i], f, t1)
            m = m + t1
        f = f + F[i]
        _cross(coms[i] - p[i], F[i], t1)
        m = m + N[i] + t1
        tau[i] = z[i] @ m
    return tau
