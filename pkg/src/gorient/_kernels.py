"""Fused E-step/M-step accumulators for the single-population EM loops.

Each kernel takes the pulled-back samples ``Y[i, m] = P_m^T x_i`` and the
current ``(mu, kappa)`` and returns the M-step statistic together with
``sum_i log sum_m exp(z_im)``. Samples are reduced in index order so results
do not depend on scheduling.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def vmf_plain_step(Y, mu, kappa):
    """Kernel over all ``M`` elements.

    ``|z| <= kappa`` for unit vectors, so while ``2 kappa < 700`` every
    ``exp(z - kappa)`` lies in ``[exp(-2 kappa), 1]`` and one pass per sample
    suffices; otherwise the per-sample maximum is subtracted first.
    """
    n, M, _ = Y.shape
    gamma = np.zeros(4)
    total = 0.0
    z = np.empty(M)
    one_pass = 2.0 * kappa < 700.0
    for i in range(n):
        shift = kappa
        if not one_pass:
            shift = -np.inf
            for m in range(M):
                v = kappa * (Y[i, m, 0] * mu[0] + Y[i, m, 1] * mu[1] + Y[i, m, 2] * mu[2] + Y[i, m, 3] * mu[3])
                z[m] = v
                if v > shift:
                    shift = v
        s = 0.0
        g0 = g1 = g2 = g3 = 0.0
        for m in range(M):
            if one_pass:
                v = kappa * (Y[i, m, 0] * mu[0] + Y[i, m, 1] * mu[1] + Y[i, m, 2] * mu[2] + Y[i, m, 3] * mu[3])
            else:
                v = z[m]
            e = math.exp(v - shift)
            s += e
            g0 += e * Y[i, m, 0]
            g1 += e * Y[i, m, 1]
            g2 += e * Y[i, m, 2]
            g3 += e * Y[i, m, 3]
        total += shift + math.log(s)
        gamma[0] += g0 / s
        gamma[1] += g1 / s
        gamma[2] += g2 / s
        gamma[3] += g3 / s
    return gamma, total


@njit(cache=True)
def vmf_hyperbolic_step(Yh, mu, kappa):
    """Sign-paired kernel over the first ``M/2`` elements.

    ``|z| <= kappa`` for unit vectors, so scaling sinh and cosh by
    ``exp(-kappa)`` keeps every term in ``[exp(-2 kappa), 1]``.
    """
    n, H, _ = Yh.shape
    gamma = np.zeros(4)
    total = 0.0
    split = 2.0 * kappa < 700.0
    floor = math.exp(-2.0 * kappa)
    for i in range(n):
        den = 0.0
        g0 = g1 = g2 = g3 = 0.0
        for m in range(H):
            v = kappa * (Yh[i, m, 0] * mu[0] + Yh[i, m, 1] * mu[1] + Yh[i, m, 2] * mu[2] + Yh[i, m, 3] * mu[3])
            e = math.exp(v - kappa)
            if split:
                f = floor / e
            else:
                f = math.exp(-v - kappa)
            den += e + f
            w = e - f
            g0 += w * Yh[i, m, 0]
            g1 += w * Yh[i, m, 1]
            g2 += w * Yh[i, m, 2]
            g3 += w * Yh[i, m, 3]
        total += kappa + math.log(den)
        gamma[0] += g0 / den
        gamma[1] += g1 / den
        gamma[2] += g2 / den
        gamma[3] += g3 / den
    return gamma, total


@njit(cache=True)
def watson_step(Yq, mu, kappa):
    n, M, _ = Yq.shape
    T = np.zeros((4, 4))
    total = 0.0
    z = np.empty(M)
    for i in range(n):
        zmax = -np.inf
        for m in range(M):
            d = Yq[i, m, 0] * mu[0] + Yq[i, m, 1] * mu[1] + Yq[i, m, 2] * mu[2] + Yq[i, m, 3] * mu[3]
            v = kappa * d * d
            z[m] = v
            if v > zmax:
                zmax = v
        s = 0.0
        for m in range(M):
            e = math.exp(z[m] - zmax)
            z[m] = e
            s += e
        total += zmax + math.log(s)
        for m in range(M):
            w = z[m] / s
            for p in range(4):
                wp = w * Yq[i, m, p]
                for q in range(p, 4):
                    T[p, q] += wp * Yq[i, m, q]
    for p in range(4):
        for q in range(p):
            T[p, q] = T[q, p]
    return T, total


# Mixture kernels drop components more than this far below the largest
# log-term of a sample; exp(-37) is below half an ulp of their sum (>= 1).
SKIP = 37.0


@njit(cache=True)
def vmf_mixture_step(Y, mus, kappas, logw):
    """Mixture E-step with M-step sums.

    ``logw[c] = log alpha_c + log c_p(kappa_c) - log M``. Returns the per-cluster
    resultants ``gamma[c]``, responsibility masses and ``sum_i log g(x_i)``.
    """
    n, M, _ = Y.shape
    C = mus.shape[0]
    gammas = np.zeros((C, 4))
    mass = np.zeros(C)
    total = 0.0
    z = np.empty((C, M))
    for i in range(n):
        zmax = -np.inf
        for c in range(C):
            for m in range(M):
                v = logw[c] + kappas[c] * (
                    Y[i, m, 0] * mus[c, 0] + Y[i, m, 1] * mus[c, 1]
                    + Y[i, m, 2] * mus[c, 2] + Y[i, m, 3] * mus[c, 3]
                )
                z[c, m] = v
                if v > zmax:
                    zmax = v
        s = 0.0
        for c in range(C):
            for m in range(M):
                v = z[c, m] - zmax
                e = math.exp(v) if v > -SKIP else 0.0
                z[c, m] = e
                s += e
        total += zmax + math.log(s)
        for c in range(C):
            for m in range(M):
                if z[c, m] == 0.0:
                    continue
                w = z[c, m] / s
                mass[c] += w
                for d in range(4):
                    gammas[c, d] += w * Y[i, m, d]
    return gammas, mass, total


@njit(cache=True)
def watson_mixture_step(Yq, mus, kappas, logw):
    n, M, _ = Yq.shape
    C = mus.shape[0]
    Ts = np.zeros((C, 4, 4))
    mass = np.zeros(C)
    total = 0.0
    z = np.empty((C, M))
    for i in range(n):
        zmax = -np.inf
        for c in range(C):
            for m in range(M):
                d = (
                    Yq[i, m, 0] * mus[c, 0] + Yq[i, m, 1] * mus[c, 1]
                    + Yq[i, m, 2] * mus[c, 2] + Yq[i, m, 3] * mus[c, 3]
                )
                v = logw[c] + kappas[c] * d * d
                z[c, m] = v
                if v > zmax:
                    zmax = v
        s = 0.0
        for c in range(C):
            for m in range(M):
                v = z[c, m] - zmax
                e = math.exp(v) if v > -SKIP else 0.0
                z[c, m] = e
                s += e
        total += zmax + math.log(s)
        for c in range(C):
            for m in range(M):
                if z[c, m] == 0.0:
                    continue
                w = z[c, m] / s
                mass[c] += w
                for p in range(4):
                    wp = w * Yq[i, m, p]
                    for q in range(p, 4):
                        Ts[c, p, q] += wp * Yq[i, m, q]
    for c in range(C):
        for p in range(4):
            for q in range(p):
                Ts[c, p, q] = Ts[c, q, p]
    return Ts, mass, total
