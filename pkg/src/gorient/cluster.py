"""Multi-population clustering of orientations.

``em_mixture`` fits a mixture of C group-invariant VMF or Watson clusters by
EM; ``kmeans_spherical`` gives the K-means baselines (plain arc-cosine
distance or the symmetry-aware distance); ``glrt_multimodal`` tests one
cluster against C clusters with a chi-square threshold.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import _kernels
from .density import (
    P,
    Family,
    GInvariantModel,
    MixtureModel,
    mixture_logpdf,
    vmf_log_normalizer,
    watson_log_normalizer,
)
from .errors import DegenerateResultant, DegenerateScatter, EmptyCluster
from .estimator import (
    EMConfig,
    EMReport,
    _check_finite,
    fit_single,
    ml_modified,
    ml_naive,
    pullback,
    random_start,
    vmf_mle,
    watson_mle,
)
from .sampler import as_sample, make_rng
from .specfun import KAPPA_MAX
from .symgroup import SymmetryGroup, group_distance, group_orbit, quotient_group

ALPHA_MIN = 1e-8
MAX_RESEEDS = 20
KMEANS_MAX_ITERS = 100


class KMeansMode(str, Enum):
    NAIVE = "naive"
    SYMMETRY_AWARE = "symmetry_aware"


# ---------------------------------------------------------------------------
# responsibilities (reference implementation)


def mixture_responsibilities(x, mix: MixtureModel):
    """``r[i, c, m]`` over clusters and group components, and ``log g(x_i)``.

    ``m`` runs over the whole group for VMF and over the quotient group for
    Watson.
    """
    x = np.asarray(x, dtype=float)
    logs = []
    for a, model in zip(mix.alpha, mix.clusters):
        comp = model.component_logpdf(x) - math.log(model.components.order)
        logs.append(math.log(a) + comp)
    z = np.stack(logs, axis=1)
    logg = logsumexp(z.reshape(len(x), -1), axis=1)
    return np.exp(z - logg[:, None, None]), logg


# ---------------------------------------------------------------------------
# mixture EM


def _as_mixture(m, family, g):
    if isinstance(m, MixtureModel):
        return [c.mu for c in m.clusters], [c.kappa for c in m.clusters], np.array(m.alpha)
    return [m.mu], [m.kappa], np.ones(1)


def _mixture_starts(x, g, C, family, cfg, rng, extra):
    """Starting ``(mus, kappas, alpha)`` triples, one per restart."""
    for k in range(cfg.n_restarts):
        if k == 0 and cfg.init == "provided":
            yield _as_mixture(cfg.init_model, family, g)
        elif k == 0 and cfg.init == "data":
            if C == 1:
                m = ml_modified(x, g, family, rng)
                yield [m.mu], [m.kappa], np.ones(1)
            else:
                try:
                    km = kmeans_spherical(x, C, KMeansMode.SYMMETRY_AWARE, g, rng, family=family)
                except (EmptyCluster, DegenerateResultant, DegenerateScatter):
                    yield None
                    continue
                yield [m.mu for m in km.models], [m.kappa for m in km.models], km.alpha
        else:
            draws = [random_start(family, rng) for _ in range(C)]
            yield [d[0] for d in draws], [d[1] for d in draws], np.full(C, 1.0 / C)
    for m in extra:
        yield _as_mixture(m, family, g)


class _MixtureEM:
    """E-step and M-step of the mixture EM on pulled-back samples."""

    def __init__(self, family, Y, log_m):
        self.watson = family is Family.WATSON
        self.Y = Y
        self.n = Y.shape[0]
        self.log_m = log_m
        self.lognorm = watson_log_normalizer if self.watson else vmf_log_normalizer
        self.kernel = _kernels.watson_mixture_step if self.watson else _kernels.vmf_mixture_step

    def estep(self, mus, kappas, alpha):
        """``(stat, mass, loglik)`` at the given parameters."""
        logw = np.log(alpha) + np.array([self.lognorm(k) for k in kappas]) - self.log_m
        stat, mass, ll = self.kernel(self.Y, mus, kappas, logw)
        _check_finite(ll)
        return stat, mass, ll

    def mstep(self, stat, mass, flags):
        alpha = mass / self.n
        if np.any(alpha < ALPHA_MIN):
            raise EmptyCluster(f"mixing weight fell to {alpha.min():.3g}")
        alpha = alpha / alpha.sum()
        C = len(alpha)
        mus = np.empty((C, 4))
        kappas = np.empty(C)
        for c in range(C):
            if self.watson:
                mus[c], kappas[c], ok = watson_mle(stat[c] / mass[c])
                if not ok:
                    flags.add("watson_inconsistent")
            else:
                mus[c], kappas[c] = vmf_mle(stat[c], mass[c])
        return mus, kappas, alpha

    def extrapolate(self, old, new, eta):
        """Step ``eta`` times the EM update, or ``None`` if the update flips a mean."""
        (mu0, k0, a0), (mu1, k1, a1) = old, new
        dots = np.einsum("cj,cj->c", mu0, mu1)
        if self.watson:
            mu1 = mu1 * np.where(dots < 0, -1.0, 1.0)[:, None]
        elif np.any(dots <= 0):
            return None
        mus = mu0 + eta * (mu1 - mu0)
        mus /= np.linalg.norm(mus, axis=1, keepdims=True)
        if self.watson:
            kappas = np.clip(k0 + eta * (k1 - k0), -KAPPA_MAX, KAPPA_MAX)
        else:
            if np.any(k0 <= 0) or np.any(k1 <= 0):
                return None
            kappas = np.minimum(np.exp(np.log(k0) + eta * (np.log(k1) - np.log(k0))), KAPPA_MAX)
        la = np.log(a0) + eta * (np.log(a1) - np.log(a0))
        alpha = np.exp(la - la.max())
        alpha /= alpha.sum()
        if np.any(alpha < ALPHA_MIN):
            return None
        return np.ascontiguousarray(mus), kappas, alpha


def _run_mixture(family, Y, mus, kappas, alpha, cfg, log_m, accelerate=True):
    """One mixture EM run; returns ``(mus, kappas, alpha, trace, iters, converged, flags, hist)``.

    With ``accelerate`` the parameters move ``eta`` times the EM update,
    ``eta`` doubling after every accepted move; a move that would lower the
    likelihood is replaced by the plain EM update and ``eta`` resets to 1.
    Convergence is only declared after a plain EM update, so the stopping
    rule is the one of the unaccelerated loop.
    """
    em = _MixtureEM(family, Y, log_m)
    n = em.n
    theta = (np.ascontiguousarray(np.array(mus, dtype=float)),
             np.array(kappas, dtype=float), np.array(alpha, dtype=float))
    stat, mass, ll = em.estep(*theta)
    trace, hist, flags = [ll], [], set()
    iters, converged = 0, False
    eta = 1.0
    while iters < cfg.max_iters:
        theta_em = em.mstep(stat, mass, flags)
        moved = None
        if accelerate and eta > 1:
            theta_try = em.extrapolate(theta, theta_em, eta)
            if theta_try is not None:
                s_try, m_try, ll_try = em.estep(*theta_try)
                if ll_try >= ll and np.all(m_try / n >= ALPHA_MIN):
                    moved = theta_try, s_try, m_try, ll_try
        plain = moved is None
        if plain:
            moved = (theta_em, *em.estep(*theta_em))
            eta = 1.0
        theta, stat, mass, ll_new = moved
        iters += 1
        trace.append(ll_new)
        if cfg.record:
            hist.append({"mu": theta[0].copy(), "kappa": theta[1].copy(),
                         "alpha": theta[2].copy(), "stat": np.array(stat, copy=True)})
        small = abs(ll_new - ll) / n < cfg.tol
        ll = ll_new
        if small and plain:
            converged = True
            break
        # a tiny accelerated gain says nothing about convergence: take a plain step next
        eta = 1.0 if small else 2.0 * eta if not plain else 2.0
    if "watson_inconsistent" in flags:
        converged = False
    return (*theta, trace, iters, converged, sorted(flags), hist)


def em_mixture(x, g: SymmetryGroup, C, family, cfg: EMConfig = EMConfig(), rng=None,
               extra_starts=(), accelerate=True) -> EMReport:
    """EM fit of a C-cluster mixture of group-invariant models.

    The first restart starts from symmetry-aware K-means cluster fits (or
    ``cfg.init_model``), later restarts from random parameters; models in
    ``extra_starts`` are tried as additional starts. Restarts whose mixing
    weights collapse are discarded. Clusters come back sorted by descending
    weight. ``accelerate=False`` runs the plain EM map (see ``_run_mixture``).
    """
    t0 = time.perf_counter()
    x = as_sample(x)
    family = Family(family)
    if C < 1:
        raise ValueError("C must be >= 1")
    if len(x) < 2 * C:
        raise ValueError("need at least two samples per cluster")
    comps = quotient_group(g) if family is Family.WATSON else g
    Y = pullback(x, comps.elements)
    log_m = math.log(comps.order)
    rng = make_rng(cfg.seed) if rng is None else rng
    best, traces, failures = None, [], []
    for k, start in enumerate(_mixture_starts(x, g, C, family, cfg, rng, extra_starts)):
        if start is None:
            failures.append(EmptyCluster("K-means initialisation failed"))
            traces.append([])
            continue
        try:
            res = _run_mixture(family, Y, *start, cfg, log_m, accelerate)
        except (EmptyCluster, DegenerateResultant, DegenerateScatter) as err:
            failures.append(err)
            traces.append([])
            continue
        trace = res[3]
        traces.append(trace)
        if best is None or trace[-1] > best[0][3][-1] + cfg.tol * len(x):
            best = (res, k)
    if best is None:
        err = next((e for e in failures if isinstance(e, EmptyCluster)), failures[-1])
        raise err
    (mus, kappas, alpha, trace, iters, conv, flags, hist), k = best
    order = np.argsort(-alpha, kind="stable")
    alpha = alpha[order] / alpha[order].sum()
    mix = MixtureModel(
        tuple(GInvariantModel(family, mus[c], kappas[c], g) for c in order), alpha
    )
    if failures:
        flags = sorted(set(flags) | {"restart_failed"})
    return EMReport(
        model=mix,
        loglik=trace[-1],
        iterations=iters,
        converged=conv,
        loglik_trace=trace,
        wall_time=time.perf_counter() - t0,
        restart=k,
        flags=flags,
        history=hist,
        restart_traces=traces,
        n=len(x),
    )


# ---------------------------------------------------------------------------
# K-means baselines


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    models: list
    alpha: np.ndarray
    iterations: int
    reseeds: int = 0
    mode: KMeansMode = KMeansMode.NAIVE

    def mixture(self) -> MixtureModel:
        return MixtureModel(tuple(self.models), self.alpha)


def _kmeans_geometry(x, centroids, mode, g):
    """Distances ``(n, C)`` and, for the symmetry-aware mode, the aligned images."""
    if mode is KMeansMode.NAIVE:
        return np.arccos(np.clip(x @ centroids.T, -1.0, 1.0)), None
    images = group_orbit(x, g)                       # (n, M, 4)
    dots = images @ centroids.T                      # (n, M, C)
    best = np.argmax(dots, axis=1)                   # (n, C)
    d = np.arccos(np.clip(np.take_along_axis(dots, best[:, None, :], axis=1)[:, 0, :], -1.0, 1.0))
    return d, (images, best)


def _kmeanspp(x, C, mode, g, rng):
    centroids = [x[rng.integers(len(x))]]
    for _ in range(1, C):
        d, _ = _kmeans_geometry(x, np.array(centroids), mode, g)
        w = d.min(axis=1) ** 2
        total = w.sum()
        idx = rng.integers(len(x)) if total <= 0 else rng.choice(len(x), p=w / total)
        centroids.append(x[idx])
    return np.array(centroids)


def kmeans_spherical(x, C, mode, g: SymmetryGroup | None = None, rng=None, family=Family.VMF,
                     max_iters=KMEANS_MAX_ITERS) -> KMeansResult:
    """Spherical K-means with k-means++ seeding.

    ``mode`` is ``"naive"`` (arc-cosine of the plain inner product, clusters
    fitted with ``ml_naive``) or ``"symmetry_aware"`` (group distance, members
    aligned to the centroid, clusters fitted with ``ml_modified``). A cluster
    left with fewer than two members is reseeded at the point farthest from
    its centroid, at most ``MAX_RESEEDS`` times.
    """
    x = as_sample(x)
    mode = KMeansMode(mode)
    family = Family(family)
    if C < 1:
        raise ValueError("C must be >= 1")
    if len(x) < 2 * C:
        raise ValueError("need at least two samples per cluster")
    if mode is KMeansMode.SYMMETRY_AWARE and g is None:
        raise ValueError("symmetry-aware K-means needs a group")
    rng = make_rng(0) if rng is None else rng
    centroids = _kmeanspp(x, C, mode, g, rng)
    labels = None
    reseeds = 0
    it = 0
    while it < max_iters:
        it += 1
        d, geo = _kmeans_geometry(x, centroids, mode, g)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=C)
        if np.any(counts < 2):
            if reseeds >= MAX_RESEEDS:
                raise EmptyCluster(f"K-means cluster stayed empty after {MAX_RESEEDS} reseeds")
            c = int(np.argmin(counts))
            far = int(np.argmax(d[np.arange(len(x)), new]))
            centroids[c] = x[far]
            reseeds += 1
            labels = None
            continue
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(C):
            members = labels == c
            if geo is None:
                pts = x[members]
            else:
                images, best = geo
                idx = np.flatnonzero(members)
                pts = images[idx, best[idx, c]]
            s = pts.sum(axis=0)
            norm = np.linalg.norm(s)
            if norm > 0:
                centroids[c] = s / norm
    if labels is None:
        labels = np.argmin(_kmeans_geometry(x, centroids, mode, g)[0], axis=1)
    models = []
    for c in range(C):
        members = x[labels == c]
        if mode is KMeansMode.NAIVE:
            models.append(ml_naive(members, family))
        else:
            models.append(ml_modified(members, g, family, rng))
    alpha = np.bincount(labels, minlength=C) / len(x)
    return KMeansResult(labels, centroids, models, alpha, it, reseeds, mode)


def kmeans_statistic(x, C, mode, g, rng, family=Family.VMF):
    """Likelihood-ratio score ``2 (log L_C - log L_1)`` of fitted K-means models.

    The one-cluster model is the matching baseline estimator on all samples.
    """
    x = as_sample(x)
    mode = KMeansMode(mode)
    km = kmeans_spherical(x, C, mode, g, rng, family=family)
    if mode is KMeansMode.NAIVE:
        single = ml_naive(x, family)
    else:
        single = ml_modified(x, g, family, rng)
    one = MixtureModel((single,), np.ones(1))
    return 2.0 * float(np.sum(mixture_logpdf(x, km.mixture())) - np.sum(mixture_logpdf(x, one)))


# ---------------------------------------------------------------------------
# evaluation helpers


def match_clusters(mu_hat, mu_true, g: SymmetryGroup):
    """Best one-to-one assignment of estimated to true means under summed group distance.

    Returns ``(perm, dists)`` with ``mu_hat[perm[c]]`` matched to ``mu_true[c]``.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    mu_true = np.asarray(mu_true, dtype=float)
    cost = group_distance(mu_true[:, None, :], mu_hat[None, :, :], g)
    rows, cols = linear_sum_assignment(cost)
    perm = cols[np.argsort(rows)]
    return perm, cost[np.arange(len(mu_true)), perm]


# ---------------------------------------------------------------------------
# GLRT


@dataclass
class GlrtResult:
    statistic: float
    dof: int
    threshold: float
    reject_h0: bool
    h0_fit: EMReport
    h1_fit: EMReport
    alpha_level: float
    flags: list = field(default_factory=list)


def glrt_dof(C, p=P):
    return (p + 1) * (C - 1)


def glrt_threshold(alpha_level, C, p=P):
    return float(stats.chi2.ppf(1 - alpha_level, glrt_dof(C, p)))


def glrt_multimodal(x, g: SymmetryGroup, C, family, alpha_level=0.05, cfg: EMConfig = EMConfig(),
                    rng=None) -> GlrtResult:
    """Generalised likelihood ratio test of one cluster against ``C`` clusters.

    Both hypotheses are fitted with the same ``cfg``. The ``C``-cluster fit
    also starts from ``C`` equal-weight copies of the one-cluster fit, which
    is a fixed point of the mixture EM, so the alternative never ends below
    the null.
    """
    if not 0 < alpha_level < 1:
        raise ValueError("alpha_level must lie in (0, 1)")
    if C < 2:
        raise ValueError("the test needs C >= 2")
    family = Family(family)
    rng = make_rng(cfg.seed) if rng is None else rng
    h0 = fit_single(family, x, g, cfg, rng)
    nested = MixtureModel((h0.model,) * C, np.full(C, 1.0 / C))
    h1 = em_mixture(x, g, C, family, cfg, rng, extra_starts=(nested,))
    stat = 2.0 * (h1.loglik - h0.loglik)
    flags = []
    if stat < 0:
        if stat < -1e-6:
            flags.append("suboptimal_h1")
        stat = 0.0
    thr = glrt_threshold(alpha_level, C)
    return GlrtResult(stat, glrt_dof(C), thr, bool(stat > thr), h0, h1, alpha_level, flags)
