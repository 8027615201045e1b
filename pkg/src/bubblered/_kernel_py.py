"""Pure numpy chunk kernel.  Mirrors ``_kernel.pyx`` and is used when the
compiled module is unavailable."""
from __future__ import annotations

import numpy as np


def accumulate(X: np.ndarray, W: np.ndarray, Kv: np.ndarray, centers: np.ndarray,
               frames: np.ndarray, lams: np.ndarray, alpha: np.ndarray,
               p: float, level: int) -> dict[str, np.ndarray]:
    """Weighted moments of a bubble sum over one chunk of nodes.

    Parameters are ordered (alpha_i), (s_i = log lam_i), (v_{i,k}); see
    ``functional`` for the meaning of each returned block.
    """
    N, d = X.shape
    n = d - 1
    q = len(lams)
    m = 0.5 * (n - 2)
    pstar = (n + 2) / (n - 2)
    c_L = 4.0 * n * (n - 1)

    C = X @ centers.T                      # (N, q)
    # |x - a|^2 as a sum of squares: 2 - 2 x.a cancels near the center
    D = np.stack([np.sum((X - a) ** 2, axis=1) for a in centers], axis=1)
    lam2 = lams * lams
    mu = lam2 - 0.25
    g = 1.0 + mu * D
    rat = lams / g
    phi = rat ** m
    phipm1 = rat * rat                     # phi^{p*-1}
    u = phi @ alpha
    Lu = c_L * ((phi * phipm1) @ alpha)
    lu = np.log(u)
    up = np.exp(p * lu)
    Kup = Kv * up
    out: dict[str, np.ndarray] = {
        "r": np.array([np.dot(W, u * Lu)]),
        "k": np.array([np.dot(W, Kup * u)]),
    }
    if level < 1:
        return out

    M = q * (n + 2)
    B = m * (1.0 - (lam2 + 0.25) * D) / g
    A = -m * mu / g
    T = np.empty((N, M))
    T[:, :q] = phi
    T[:, q:2 * q] = alpha * B * phi
    xi = np.einsum("nd,qkd->nqk", X, frames)          # (N, q, n)
    Tv = (-2.0 * alpha * A * phi)[:, :, None] * xi
    T[:, 2 * q:] = Tv.reshape(N, q * n)
    wLu = W * Lu
    wKup = W * Kup
    out["LuT"] = wLu @ T
    out["KupT"] = wKup @ T
    if level < 2:
        return out

    scale = np.empty(M)
    scale[:q] = 1.0
    scale[q:] = pstar
    colphi = np.concatenate([phipm1, phipm1, np.repeat(phipm1, n, axis=1)], axis=1)
    LT = c_L * scale * colphi * T
    out["A1"] = (W[:, None] * LT).T @ T
    Kup1 = Kup / u
    out["A2"] = ((W * Kup1)[:, None] * T).T @ T

    # same-bubble second derivatives of u in (alpha, s, v)
    nb = n + 2
    SL = np.zeros((q, nb, nb))
    SK = np.zeros((q, nb, nb))
    AD = m * mu * mu / (g * g)
    for i in range(q):
        ph, Bi, Ai, gi = phi[:, i], B[:, i], A[:, i], g[:, i]
        a = alpha[i]
        x = xi[:, i, :]
        F = np.zeros((N, nb, nb))
        F[:, 0, 1] = Bi * ph
        F[:, 0, 2:] = (-2.0 * Ai * ph)[:, None] * x
        dlamB = -4.0 * m * lam2[i] * D[:, i] * (1.0 - 0.25 * D[:, i]) / (gi * gi)
        F[:, 1, 1] = a * ph * (Bi * Bi + dlamB)
        F[:, 1, 2:] = (a * ph * (-2.0 * Ai * Bi + 4.0 * m * lam2[i] / (gi * gi)))[:, None] * x
        F[:, 2:, 2:] = (4.0 * a * ph * (Ai * Ai + AD[:, i]))[:, None, None] * x[:, :, None] * x[:, None, :]
        diag = 2.0 * a * ph * C[:, i] * Ai
        F[:, 2:, 2:] += diag[:, None, None] * np.eye(n)
        F[:, 1, 0] = F[:, 0, 1]
        F[:, 2:, 0] = F[:, 0, 2:]
        F[:, 2:, 1] = F[:, 1, 2:]
        SL[i] = np.tensordot(wLu, F, axes=(0, 0))
        SK[i] = np.tensordot(wKup, F, axes=(0, 0))
    out["SL"] = SL
    out["SK"] = SK
    return out
