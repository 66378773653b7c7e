"""Numba-accelerated batch kernels; same contracts as numpy_backend."""

import numpy as np
from numba import njit


@njit(cache=True)
def def_grads(Bhat, ue):
    E, G = Bhat.shape[0], Bhat.shape[1]
    F = np.empty((E, G, 4))
    for e in range(E):
        for g in range(G):
            for c in range(4):
                acc = 0.0
                for d in range(12):
                    acc += Bhat[e, g, c, d] * ue[e, d]
                F[e, g, c] = acc
            F[e, g, 0] += 1.0
            F[e, g, 3] += 1.0
    return F


@njit(cache=True)
def psi_batch(Fcol, c1, c2, k):
    E, G = Fcol.shape[0], Fcol.shape[1]
    psi = np.zeros((E, G))
    minJ = 1.0e300
    for e in range(E):
        for g in range(G):
            F11, F12, F21, F22 = Fcol[e, g, 0], Fcol[e, g, 1], Fcol[e, g, 2], Fcol[e, g, 3]
            J = F11 * F22 - F12 * F21
            if J < minJ:
                minJ = J
            if J <= 0.0:
                continue
            ee = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 - 2.0
            psi[e, g] = c1 * ee + c2 * ee * ee - 2.0 * c1 * np.log(J) + 0.5 * k * (J - 1.0) ** 2
    if E == 0 or G == 0:
        minJ = 1.0
    return psi, minJ


@njit(cache=True)
def pk1_batch(Fcol, c1, c2, k):
    E, G = Fcol.shape[0], Fcol.shape[1]
    psi = np.zeros((E, G))
    P = np.zeros((E, G, 4))
    minJ = 1.0e300
    for e in range(E):
        for g in range(G):
            F11, F12, F21, F22 = Fcol[e, g, 0], Fcol[e, g, 1], Fcol[e, g, 2], Fcol[e, g, 3]
            J = F11 * F22 - F12 * F21
            if J < minJ:
                minJ = J
            if J <= 0.0:
                continue
            ee = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 - 2.0
            psi[e, g] = c1 * ee + c2 * ee * ee - 2.0 * c1 * np.log(J) + 0.5 * k * (J - 1.0) ** 2
            a = 2.0 * c1 + 4.0 * c2 * ee
            b = k * (J - 1.0) - 2.0 * c1 / J
            P[e, g, 0] = a * F11 + b * F22
            P[e, g, 1] = a * F12 - b * F21
            P[e, g, 2] = a * F21 - b * F12
            P[e, g, 3] = a * F22 + b * F11
    if E == 0 or G == 0:
        minJ = 1.0
    return psi, P, minJ


@njit(cache=True)
def tangent_batch(Fcol, c1, c2, k):
    E, G = Fcol.shape[0], Fcol.shape[1]
    psi = np.zeros((E, G))
    P = np.zeros((E, G, 4))
    D = np.zeros((E, G, 4, 4))
    Gf = np.empty(4)
    minJ = 1.0e300
    for e in range(E):
        for g in range(G):
            F11, F12, F21, F22 = Fcol[e, g, 0], Fcol[e, g, 1], Fcol[e, g, 2], Fcol[e, g, 3]
            J = F11 * F22 - F12 * F21
            if J < minJ:
                minJ = J
            if J <= 0.0:
                continue
            ee = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 - 2.0
            psi[e, g] = c1 * ee + c2 * ee * ee - 2.0 * c1 * np.log(J) + 0.5 * k * (J - 1.0) ** 2
            a = 2.0 * c1 + 4.0 * c2 * ee
            b = k * (J - 1.0) - 2.0 * c1 / J
            P[e, g, 0] = a * F11 + b * F22
            P[e, g, 1] = a * F12 - b * F21
            P[e, g, 2] = a * F21 - b * F12
            P[e, g, 3] = a * F22 + b * F11
            c3 = k * J * (2.0 * J - 1.0)
            c4 = k * J * (J - 1.0) - 2.0 * c1
            Gf[0] = F22 / J
            Gf[1] = -F21 / J
            Gf[2] = -F12 / J
            Gf[3] = F11 / J
            for r in range(4):
                i, jj = r // 2, r % 2
                for c in range(4):
                    kk, ll = c // 2, c % 2
                    v = 8.0 * c2 * Fcol[e, g, r] * Fcol[e, g, c] + c3 * Gf[r] * Gf[c]
                    if r == c:
                        v += a
                    v -= c4 * Gf[2 * i + ll] * Gf[2 * kk + jj]
                    D[e, g, r, c] = v
    if E == 0 or G == 0:
        minJ = 1.0
    return psi, P, D, minJ


@njit(cache=True)
def element_force(Bhat, wdetJ, P):
    E, G = Bhat.shape[0], Bhat.shape[1]
    fe = np.zeros((E, 12))
    for e in range(E):
        for g in range(G):
            w = wdetJ[e, g]
            for d in range(12):
                acc = 0.0
                for c in range(4):
                    acc += Bhat[e, g, c, d] * P[e, g, c]
                fe[e, d] += w * acc
    return fe


@njit(cache=True)
def element_stiffness(Bhat, wdetJ, D):
    E, G = Bhat.shape[0], Bhat.shape[1]
    Ke = np.zeros((E, 12, 12))
    DB = np.empty((4, 12))
    for e in range(E):
        for g in range(G):
            w = wdetJ[e, g]
            for c in range(4):
                for d in range(12):
                    acc = 0.0
                    for s in range(4):
                        acc += D[e, g, c, s] * Bhat[e, g, s, d]
                    DB[c, d] = acc
            for a in range(12):
                for b in range(12):
                    acc = 0.0
                    for c in range(4):
                        acc += Bhat[e, g, c, a] * DB[c, b]
                    Ke[e, a, b] += w * acc
    return Ke
