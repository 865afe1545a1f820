"""Single-population estimators of the mean orientation and concentration.

``ml_naive`` and ``ml_modified`` are the closed-form baselines; ``em_vmf``,
``em_vmf_hyperbolic`` and ``em_watson`` maximise the group-invariant
likelihood by EM. Samples are ``(n, 4)`` arrays of unit quaternions.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .density import Family, GInvariantModel, vmf_log_normalizer, watson_log_normalizer
from .errors import DegenerateResultant, DegenerateScatter, NonFiniteLikelihood
from .sampler import as_sample, make_rng, sample_uniform_sphere
from .specfun import KAPPA_MAX, a_p_inverse, log_kummer_m, y_p_inverse
from .symgroup import (
    SymmetryGroup,
    build_sign_group,
    build_trivial_group,
    group_orbit,
    quotient_group,
)

P = 4
INIT_KAPPA_RANGE = (1.0, 100.0)


@dataclass(frozen=True)
class EMConfig:
    """Stopping rule, restarts and initialisation for the EM estimators.

    ``init`` is ``"data"`` (modified-ML start), ``"random"`` or ``"provided"``
    (use ``init_model``). Restarts after the first are always random. ``tol``
    applies to the change in mean per-sample log-likelihood.
    """

    max_iters: int = 1000
    tol: float = 1e-8
    n_restarts: int = 3
    init: str = "data"
    init_model: object = None
    seed: int = 0
    record: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.init not in ("data", "random", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "provided" and self.init_model is None:
            raise ValueError("init='provided' needs init_model")


@dataclass
class EMReport:
    model: object
    loglik: float
    iterations: int
    converged: bool
    loglik_trace: list
    wall_time: float
    restart: int = 0
    flags: list = field(default_factory=list)
    history: list = field(default_factory=list)
    restart_traces: list = field(default_factory=list)
    n: int = 0

    @property
    def mean_loglik(self):
        return self.loglik / self.n if self.n else float("nan")


# ---------------------------------------------------------------------------
# closed-form baselines


def _default_group(family):
    return build_trivial_group() if Family(family) is Family.VMF else build_sign_group()


def vmf_mle(gamma, total):
    """Closed-form VMF fit from a resultant vector over ``total`` samples; returns ``(mu, kappa)``."""
    norm = math.sqrt(float(gamma @ gamma))
    if norm == 0:
        raise DegenerateResultant("zero resultant vector")
    mu = gamma / norm
    r = norm / total
    if r >= 1 - 1e-12:
        raise DegenerateResultant(f"mean resultant length {r} is 1", mu=mu)
    return mu, min(a_p_inverse(r, P), KAPPA_MAX)


def _watson_q(kappa, t):
    return kappa * t - log_kummer_m(0.5, P / 2, kappa)


def watson_mle(scatter):
    """Watson fit from a scatter matrix; returns ``(mu, kappa, consistent)``.

    Both the bipolar (largest eigenvalue) and girdle (smallest eigenvalue)
    solutions are evaluated; the sign-consistent one is kept, and if both or
    neither are consistent the one with the larger expected log-likelihood.
    """
    vals, vecs = np.linalg.eigh(scatter)
    cands = []
    for idx, want_positive in ((-1, True), (0, False)):
        t = float(vals[idx])
        try:
            kappa = y_p_inverse(t, P)
        except DegenerateScatter:
            continue
        ok = kappa >= 0 if want_positive else kappa <= 0
        cands.append((ok, _watson_q(kappa, t), vecs[:, idx], kappa))
    if not cands:
        raise DegenerateScatter(f"scatter eigenvalues {vals} admit no Watson fit")
    consistent = [c for c in cands if c[0]]
    pool = consistent or cands
    ok, _, mu, kappa = max(pool, key=lambda c: c[1])
    return mu, kappa, bool(consistent)


def ml_naive(x, family, group=None) -> GInvariantModel:
    """Standard ML fit ignoring the symmetry group."""
    x = as_sample(x)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    family = Family(family)
    group = _default_group(family) if group is None else group
    if family is Family.VMF:
        mu, kappa = vmf_mle(x.sum(axis=0), len(x))
    else:
        mu, kappa, _ = watson_mle(x.T @ x / len(x))
    return GInvariantModel(family, mu, kappa, group)


def align_to_reference(x, ref, g: SymmetryGroup) -> np.ndarray:
    """Replace each sample by its symmetry image closest to ``ref``."""
    images = group_orbit(x, g)
    best = np.argmax(images @ ref, axis=1)
    return images[np.arange(len(x)), best]


def ml_modified(x, g: SymmetryGroup, family, rng) -> GInvariantModel:
    """Align all samples toward a randomly chosen sample, then fit naively."""
    x = as_sample(x)
    ref = x[rng.integers(len(x))]
    aligned = align_to_reference(x, ref, g)
    model = ml_naive(aligned, family)
    return GInvariantModel(model.family, model.mu, model.kappa, g)


# ---------------------------------------------------------------------------
# EM machinery shared with the mixture estimator


def pullback(x, elements) -> np.ndarray:
    """``Y[i, m] = P_m^T x_i``, shape ``(n, M, 4)``."""
    M = len(elements)
    return (x @ elements.transpose(1, 0, 2).reshape(4, M * 4)).reshape(len(x), M, 4)


def vmf_estep(Y, mu, kappa):
    """Responsibilities and per-sample log-density for the VMF mixture.

    Returns ``(r, logf)`` with ``logf[i] = log f_v(x_i)``.
    """
    z = kappa * (Y @ mu)
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    s = e.sum(axis=1, keepdims=True)
    logf = vmf_log_normalizer(kappa) + (zmax + np.log(s))[:, 0] - math.log(Y.shape[1])
    return e / s, logf


def vmf_hyperbolic_estep(Yh, mu, kappa, order):
    """Sign-paired form of :func:`vmf_estep` over the first half of the group.

    Returns ``(w, logf)`` where ``w[i, m] = r[i, m] - r[i, m + M/2]`` are the
    sinh/cosh weights of the M-step accumulator; they are not probabilities.
    """
    z = kappa * (Yh @ mu)
    c = np.abs(z).max(axis=1, keepdims=True)
    a = np.exp(z - c)
    if 2 * c.max() < 700:
        b = np.exp(-2 * c) / a
    else:
        b = np.exp(-z - c)
    den = (a + b).sum(axis=1, keepdims=True)
    logf = vmf_log_normalizer(kappa) + (c + np.log(den))[:, 0] - math.log(order)
    return (a - b) / den, logf


def watson_estep(Yq, mu, kappa):
    d = Yq @ mu
    z = kappa * d * d
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    s = e.sum(axis=1, keepdims=True)
    logf = watson_log_normalizer(kappa) + (zmax + np.log(s))[:, 0] - math.log(Yq.shape[1])
    return e / s, logf


def weighted_resultant(w, Y):
    """``sum_{i,m} w[i, m] Y[i, m]`` with a fixed reduction order."""
    return w.reshape(-1) @ Y.reshape(-1, Y.shape[-1])


def weighted_scatter(w, Y):
    flat = Y.reshape(-1, Y.shape[-1])
    return (flat * w.reshape(-1, 1)).T @ flat


def random_start(family, rng):
    mu = sample_uniform_sphere(1, rng)[0]
    kappa = rng.uniform(*INIT_KAPPA_RANGE)
    return mu, kappa


def _check_finite(ll):
    if not math.isfinite(ll):
        raise NonFiniteLikelihood(f"log-likelihood became {ll}")


def _run_single(kind, Y, mu, kappa, cfg, order):
    """One EM run from ``(mu, kappa)``; returns ``(mu, kappa, trace, iters, converged, flags, hist)``."""
    n = Y.shape[0]
    trace, hist, flags = [], [], set()
    iters, converged = 0, False
    log_m = math.log(order if kind != "watson" else Y.shape[1])
    mu = np.ascontiguousarray(mu, dtype=float)
    while True:
        if kind == "watson":
            stat, lse = _kernels.watson_step(Y, mu, kappa)
            lognorm = watson_log_normalizer(kappa)
        else:
            step = _kernels.vmf_plain_step if kind == "vmf" else _kernels.vmf_hyperbolic_step
            stat, lse = step(Y, mu, kappa)
            lognorm = vmf_log_normalizer(kappa)
        ll = n * (lognorm - log_m) + lse
        _check_finite(ll)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) / n < cfg.tol:
            converged = True
            break
        if iters >= cfg.max_iters:
            break
        if kind == "watson":
            stat /= n
            mu, kappa, ok = watson_mle(stat)
            if not ok:
                flags.add("watson_inconsistent")
        else:
            mu, kappa = vmf_mle(stat, n)
        mu = np.ascontiguousarray(mu)
        iters += 1
        if cfg.record:
            hist.append({"mu": mu.copy(), "kappa": kappa, "stat": np.array(stat, copy=True)})
    if "watson_inconsistent" in flags:
        converged = False
    return mu, kappa, trace, iters, converged, sorted(flags), hist


def _starts(x, g, family, cfg, rng):
    """Yield the starting ``(mu, kappa)`` of each restart."""
    for k in range(cfg.n_restarts):
        if k == 0 and cfg.init == "provided":
            m = cfg.init_model
            yield np.asarray(m.mu, dtype=float), float(m.kappa)
        elif k == 0 and cfg.init == "data":
            m = ml_modified(x, g, family, rng)
            yield m.mu, m.kappa
        else:
            yield random_start(family, rng)


def _fit(kind, x, g, cfg, rng):
    t0 = time.perf_counter()
    x = as_sample(x)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    family = Family.WATSON if kind == "watson" else Family.VMF
    if kind == "watson":
        Y = pullback(x, quotient_group(g).elements)
    elif kind == "hyper":
        if not g.sign_paired:
            raise ValueError("hyperbolic EM needs a sign-paired group")
        Y = pullback(x, quotient_group(g).elements)
    else:
        Y = pullback(x, g.elements)
    rng = make_rng(cfg.seed) if rng is None else rng
    best = None
    traces = []
    for k, (mu0, kappa0) in enumerate(_starts(x, g, family, cfg, rng)):
        mu, kappa, trace, iters, conv, flags, hist = _run_single(kind, Y, mu0, kappa0, cfg, g.order)
        traces.append(trace)
        # a restart must beat the incumbent by more than the convergence resolution
        if best is None or trace[-1] > best[2][-1] + cfg.tol * len(x):
            best = (mu, kappa, trace, iters, conv, flags, hist, k)
    mu, kappa, trace, iters, conv, flags, hist, k = best
    report = EMReport(
        model=GInvariantModel(family, mu, kappa, g),
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
    return report


def em_vmf(x, g: SymmetryGroup, cfg: EMConfig = EMConfig(), rng=None) -> EMReport:
    """EM fit of the group-invariant VMF model over all ``M`` group elements."""
    return _fit("vmf", x, g, cfg, rng)


def em_vmf_hyperbolic(x, g: SymmetryGroup, cfg: EMConfig = EMConfig(), rng=None) -> EMReport:
    """Same fixed-point map as :func:`em_vmf`, using sinh/cosh weights over ``M/2`` elements."""
    return _fit("hyper", x, g, cfg, rng)


def em_watson(x, g: SymmetryGroup, cfg: EMConfig = EMConfig(), rng=None) -> EMReport:
    """EM fit of the group-invariant Watson model over the quotient group."""
    return _fit("watson", x, g, cfg, rng)


def fit_single(family, x, g, cfg: EMConfig = EMConfig(), rng=None) -> EMReport:
    if Family(family) is Family.VMF:
        return em_vmf(x, g, cfg, rng)
    return em_watson(x, g, cfg, rng)
