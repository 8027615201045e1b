# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chunk kernel.  Fields are evaluated node by node with the GIL
released; the two dense Gram products go to BLAS."""
import numpy as np
from libc.math cimport exp, log


def accumulate(const double[:, ::1] X, const double[::1] W, const double[::1] Kv,
               const double[:, ::1] centers, const double[:, :, ::1] frames,
               const double[::1] lams, const double[::1] alpha, double p, int level):
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t n = d - 1, q = lams.shape[0]
    cdef Py_ssize_t nb = n + 2, M = q * nb
    cdef double m = 0.5 * (n - 2)
    cdef double pstar = (n + 2.0) / (n - 2.0)
    cdef double cL = 4.0 * n * (n - 1)

    rk = np.zeros(2)
    LuT = np.zeros(M)
    KupT = np.zeros(M)
    SL = np.zeros((q, nb, nb))
    SK = np.zeros((q, nb, nb))
    cdef double[::1] rk_v = rk, LuT_v = LuT, KupT_v = KupT
    cdef double[:, :, ::1] SL_v = SL, SK_v = SK

    phi_a = np.empty(q); pm1_a = np.empty(q); D_a = np.empty(q); g_a = np.empty(q)
    C_a = np.empty(q); B_a = np.empty(q); A_a = np.empty(q)
    xi_a = np.empty((q, n)); T_a = np.empty(M); LT_a = np.empty(M)
    cdef double[::1] phi = phi_a, pm1 = pm1_a, Dv = D_a, gv = g_a, Cv = C_a, Bv = B_a, Av = A_a
    cdef double[:, ::1] xi = xi_a
    cdef double[::1] T = T_a, LT = LT_a
    cdef Py_ssize_t NM = N if level >= 2 else 0
    Tm_a = np.zeros((NM, M)); LTm_a = np.zeros((NM, M)); sTm_a = np.zeros((NM, M))
    cdef double[:, ::1] Tm = Tm_a, LTm = LTm_a, sTm = sTm_a

    cdef Py_ssize_t t, i, k, l, a
    cdef double c, Dd, g, mu, lam2, rat, u, Lu, up, w, wLu, wKup, s, ph, al
    cdef double dlamB, f01, f11, fsv, fvv, fdiag, AD
    with nogil:
        for t in range(N):
            w = W[t]
            if w == 0.0:
                continue
            u = 0.0
            Lu = 0.0
            for i in range(q):
                c = 0.0
                Dd = 0.0
                for k in range(d):
                    c = c + X[t, k] * centers[i, k]
                    s = X[t, k] - centers[i, k]
                    Dd = Dd + s * s
                lam2 = lams[i] * lams[i]
                g = 1.0 + (lam2 - 0.25) * Dd
                rat = lams[i] / g
                ph = exp(m * log(rat))
                Cv[i] = c
                Dv[i] = Dd
                gv[i] = g
                phi[i] = ph
                pm1[i] = rat * rat
                u = u + alpha[i] * ph
                Lu = Lu + alpha[i] * ph * rat * rat
            Lu = cL * Lu
            up = exp(p * log(u))
            rk_v[0] += w * u * Lu
            rk_v[1] += w * Kv[t] * up * u
            if level < 1:
                continue
            for i in range(q):
                lam2 = lams[i] * lams[i]
                mu = lam2 - 0.25
                Bv[i] = m * (1.0 - (lam2 + 0.25) * Dv[i]) / gv[i]
                Av[i] = -m * mu / gv[i]
                T[i] = phi[i]
                T[q + i] = alpha[i] * Bv[i] * phi[i]
                LT[i] = cL * pm1[i] * T[i]
                LT[q + i] = cL * pstar * pm1[i] * T[q + i]
                for k in range(n):
                    c = 0.0
                    for l in range(d):
                        c = c + X[t, l] * frames[i, k, l]
                    xi[i, k] = c
                    T[2 * q + i * n + k] = -2.0 * alpha[i] * Av[i] * phi[i] * c
                    LT[2 * q + i * n + k] = cL * pstar * pm1[i] * T[2 * q + i * n + k]
            wLu = w * Lu
            wKup = w * Kv[t] * up
            for a in range(M):
                LuT_v[a] += wLu * T[a]
                KupT_v[a] += wKup * T[a]
            if level < 2:
                continue
            s = wKup / u
            for a in range(M):
                Tm[t, a] = T[a]
                LTm[t, a] = w * LT[a]
                sTm[t, a] = s * T[a]
            for i in range(q):
                lam2 = lams[i] * lams[i]
                mu = lam2 - 0.25
                g = gv[i]
                ph = phi[i]
                al = alpha[i]
                AD = m * mu * mu / (g * g)
                f01 = Bv[i] * ph
                SL_v[i, 0, 1] += wLu * f01
                SK_v[i, 0, 1] += wKup * f01
                dlamB = -4.0 * m * lam2 * Dv[i] * (1.0 - 0.25 * Dv[i]) / (g * g)
                f11 = al * ph * (Bv[i] * Bv[i] + dlamB)
                SL_v[i, 1, 1] += wLu * f11
                SK_v[i, 1, 1] += wKup * f11
                fsv = al * ph * (-2.0 * Av[i] * Bv[i] + 4.0 * m * lam2 / (g * g))
                fvv = 4.0 * al * ph * (Av[i] * Av[i] + AD)
                fdiag = 2.0 * al * ph * Cv[i] * Av[i]
                for k in range(n):
                    c = -2.0 * Av[i] * ph * xi[i, k]
                    SL_v[i, 0, 2 + k] += wLu * c
                    SK_v[i, 0, 2 + k] += wKup * c
                    c = fsv * xi[i, k]
                    SL_v[i, 1, 2 + k] += wLu * c
                    SK_v[i, 1, 2 + k] += wKup * c
                    for l in range(k, n):
                        c = fvv * xi[i, k] * xi[i, l]
                        if l == k:
                            c = c + fdiag
                        SL_v[i, 2 + k, 2 + l] += wLu * c
                        SK_v[i, 2 + k, 2 + l] += wKup * c

    out = {"r": rk[:1].copy(), "k": rk[1:].copy()}
    if level >= 1:
        out["LuT"] = LuT
        out["KupT"] = KupT
    if level >= 2:
        out["A1"] = LTm_a.T @ Tm_a
        out["A2"] = sTm_a.T @ Tm_a
        for i in range(q):
            SL[i] = np.triu(SL[i]) + np.triu(SL[i], 1).T
            SK[i] = np.triu(SK[i]) + np.triu(SK[i], 1).T
        out["SL"] = SL
        out["SK"] = SK
    return out
