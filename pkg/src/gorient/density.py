"""Log-densities of VMF and Watson laws on S^3 and their group-invariant mixtures.

All densities are with respect to the surface measure on the sphere, so the
uniform density on S^3 is ``1 / (2 pi^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gammaln, logsumexp

from .specfun import log_bessel_i, log_kummer_m
from .symgroup import SymmetryGroup, quotient_group, unit_quaternion

P = 4


class Family(str, Enum):
    VMF = "vmf"
    WATSON = "watson"


def log_sphere_area(p=P):
    return math.log(2.0) + (p / 2) * math.log(math.pi) - gammaln(p / 2)


def vmf_log_normalizer(kappa, p=P):
    """``log c_p(kappa)``; tends to minus the log sphere area as ``kappa -> 0``."""
    if kappa < 1e-10:
        return -log_sphere_area(p)
    nu = p / 2 - 1
    return nu * math.log(kappa) - (p / 2) * math.log(2 * math.pi) - log_bessel_i(nu, kappa)


def watson_log_normalizer(kappa, p=P):
    return -log_kummer_m(0.5, p / 2, kappa) - log_sphere_area(p)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x, x.ndim == 1


def vmf_logpdf(x, mu, kappa):
    x, single = _as_points(x)
    out = vmf_log_normalizer(kappa) + kappa * (x @ np.asarray(mu, dtype=float))
    return float(out) if single else out


def watson_logpdf(x, mu, kappa):
    x, single = _as_points(x)
    out = watson_log_normalizer(kappa) + kappa * (x @ np.asarray(mu, dtype=float)) ** 2
    return float(out) if single else out


@dataclass(frozen=True, eq=False)
class GInvariantModel:
    """Mean orientation and concentration of a group-invariant VMF or Watson law.

    For the Watson family ``group`` must be sign paired; the density sums
    over its quotient group.
    """

    family: Family
    mu: np.ndarray
    kappa: float
    group: SymmetryGroup
    _components: SymmetryGroup = field(init=False, repr=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        mu = unit_quaternion(self.mu)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        kappa = float(self.kappa)
        if not math.isfinite(kappa):
            raise ValueError("kappa must be finite")
        if family is Family.VMF:
            if kappa < 0:
                raise ValueError("VMF concentration must be non-negative")
            comps = self.group
        else:
            comps = quotient_group(self.group)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "_components", comps)

    @property
    def components(self) -> SymmetryGroup:
        """The actions summed over in the density (whole group or its quotient)."""
        return self._components

    def component_means(self) -> np.ndarray:
        return self._components.elements @ self.mu

    def log_normalizer(self) -> float:
        if self.family is Family.VMF:
            return vmf_log_normalizer(self.kappa)
        return watson_log_normalizer(self.kappa)

    def component_logpdf(self, x) -> np.ndarray:
        """Per-component log-densities, shape ``(n, M)`` (or ``(M,)``)."""
        dots = np.asarray(x, dtype=float) @ self.component_means().T
        if self.family is Family.WATSON:
            dots = dots * dots
        return self.log_normalizer() + self.kappa * dots


def ginv_logpdf(x, model: GInvariantModel):
    """Log of the equal-weight mixture over the model's group components."""
    comp = model.component_logpdf(x)
    out = logsumexp(comp, axis=-1) - math.log(model.components.order)
    return float(out) if np.ndim(out) == 0 else out


def _same_group(g, h):
    return g is h or (g.order == h.order and np.array_equal(g.elements, h.elements))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    clusters: tuple
    alpha: np.ndarray

    def __post_init__(self):
        clusters = tuple(self.clusters)
        alpha = np.asarray(self.alpha, dtype=float)
        if len(clusters) == 0 or len(clusters) != len(alpha):
            raise ValueError("need one mixing weight per cluster")
        if np.any(alpha <= 0) or abs(alpha.sum() - 1) > 1e-12:
            raise ValueError("mixing weights must be positive and sum to one")
        fam, grp = clusters[0].family, clusters[0].group
        if any(c.family is not fam or not _same_group(c.group, grp) for c in clusters):
            raise ValueError("clusters must share family and group")
        alpha.setflags(write=False)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "alpha", alpha)

    @property
    def family(self):
        return self.clusters[0].family

    @property
    def group(self):
        return self.clusters[0].group

    def __len__(self):
        return len(self.clusters)

    def cluster_logpdf(self, x) -> np.ndarray:
        """``log alpha_c + log f(x; cluster c)``; shape ``(n, C)`` (or ``(C,)``)."""
        cols = [np.log(a) + np.asarray(ginv_logpdf(x, c)) for a, c in zip(self.alpha, self.clusters)]
        return np.stack(cols, axis=-1)


def mixture_logpdf(x, mix: MixtureModel):
    if len(mix) == 1:
        return ginv_logpdf(x, mix.clusters[0])
    # sorted so the sum order, and hence the result, ignores cluster labelling
    out = logsumexp(np.sort(mix.cluster_logpdf(x), axis=-1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
