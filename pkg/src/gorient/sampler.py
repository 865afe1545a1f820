"""Random orientations from VMF and Watson laws on S^3.

A draw is built from its tangent component ``t = mu^T x`` and a direction
uniform on the 2-sphere orthogonal to ``mu``. The tangent component is drawn
by rejection sampling against one of the envelopes below:

* ``|kappa| <= 5``: uniform proposal under a constant bound found by 1-D
  maximisation of the target.
* VMF, ``kappa > 5``: in ``s = (1 - t) / 2`` a Gamma(3/2, 2 kappa) proposal,
  which dominates the target up to the factor ``sqrt(1 - s)``.
* Watson, ``kappa > 5``: in ``s = 1 - |t|`` a Gamma(3/2, kappa (2 - s_c))
  proposal on the peak plus a flat piece on ``[s_c, 1]``.
* Watson, ``kappa < -5``: in ``u = |t|`` a half-normal proposal.

All randomness comes from ``numpy.random.Generator`` objects; use
:func:`make_rng` to derive reproducible streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .density import Family
from .symgroup import SymmetryGroup, map_to_fundamental_zone

UNIFORM_KAPPA_MAX = 5.0


def make_rng(seed, *keys) -> np.random.Generator:
    """Generator seeded from ``seed`` and any integer sub-stream keys."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def as_sample(x) -> np.ndarray:
    """Validate an ``(n, 4)`` array of unit quaternions."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != 4:
        raise ValueError(f"expected an (n, 4) array of quaternions, got shape {x.shape}")
    if not np.allclose(np.einsum("ij,ij->i", x, x), 1.0, atol=1e-10):
        raise ValueError("samples must be unit quaternions")
    return x


def sample_uniform_sphere(n, rng, dim=4) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class RejectionStats:
    proposed: int
    accepted: int

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


class _Envelope:
    """Rejection envelope over a 1-D variable ``v`` on ``[lo, hi]``.

    Subclasses supply ``log_target`` (unnormalised), ``draw``, ``log_envelope``
    (same scale as the target, ``>= log_target`` on the domain), its total
    ``mass`` and the map ``to_tangent`` back to ``t``.
    """

    lo = 0.0
    hi = 1.0
    peak = None

    def log_ratio(self, v):
        inside = (v >= self.lo) & (v <= self.hi)
        out = np.full(v.shape, -np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[inside] = self.log_target(v[inside]) - self.log_envelope(v[inside])
        return out

    def target_mass(self):
        pts = [self.peak] if self.peak is not None and self.lo < self.peak < self.hi else None
        def f(v):
            with np.errstate(divide="ignore"):
                return math.exp(self.log_target(np.array([v]))[0])

        val, _ = integrate.quad(
            f, self.lo, self.hi,
            points=pts, limit=200, epsabs=0, epsrel=1e-10,
        )
        return val

    def acceptance(self):
        """Expected fraction of proposals accepted."""
        return self.target_mass() / self.mass


def _sqrt1m(x):
    # log sqrt(1 - x)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log1p(-x)


class _UniformEnvelope(_Envelope):
    def __init__(self, log_target, lo, hi, to_tangent):
        self.log_target = log_target
        self.lo, self.hi = lo, hi
        self._to_tangent = to_tangent
        res = optimize.minimize_scalar(
            lambda v: -log_target(np.array([v]))[0], bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-10},
        )
        cands = [res.x, lo + 1e-300, hi - 1e-12, 0.0 if lo < 0 < hi else lo]
        # a slightly inflated bound absorbs the optimiser's tolerance
        self.log_bound = max(float(log_target(np.array([c]))[0]) for c in cands) + 1e-9
        self.peak = float(res.x)
        self.mass = math.exp(self.log_bound) * (hi - lo)

    def draw(self, rng, m):
        return rng.uniform(self.lo, self.hi, m)

    def log_envelope(self, v):
        return np.full(v.shape, self.log_bound)

    def to_tangent(self, v, rng):
        return self._to_tangent(v, rng)


def _random_sign(u, rng):
    return np.where(rng.random(u.shape) < 0.5, -u, u)


class _VMFGammaEnvelope(_Envelope):
    """Variable ``s = (1 - t) / 2``; target ``exp(-2 kappa s) sqrt(s (1 - s))``."""

    def __init__(self, kappa):
        self.kappa = kappa
        self.rate = 2 * kappa
        self.mass = math.exp(gammaln(1.5) - 1.5 * math.log(self.rate))
        self.peak = 1 / (4 * kappa)

    def log_target(self, s):
        with np.errstate(divide="ignore"):
            return -self.rate * s + 0.5 * np.log(s) + _sqrt1m(s)

    def log_envelope(self, s):
        return -self.rate * s + 0.5 * np.log(s)

    def draw(self, rng, m):
        return rng.gamma(1.5, 1 / self.rate, m)

    def to_tangent(self, s, rng):
        return 1 - 2 * s


class _WatsonBipolarEnvelope(_Envelope):
    """Variable ``s = 1 - |t|``; target ``exp(-kappa s (2 - s)) sqrt(s (2 - s))``."""

    def __init__(self, kappa):
        self.kappa = kappa
        self.cut = min(0.5, 8.0 / kappa)
        self.rate = kappa * (2 - self.cut)
        self.peak = 1 / (4 * kappa)
        self.log_flat = -kappa * self.cut * (2 - self.cut)
        self.mass_gamma = math.exp(0.5 * math.log(2) + gammaln(1.5) - 1.5 * math.log(self.rate))
        self.mass = self.mass_gamma + math.exp(self.log_flat) * (1 - self.cut)

    def log_target(self, s):
        w = s * (2 - s)
        with np.errstate(divide="ignore"):
            return -self.kappa * w + 0.5 * np.log(w)

    def log_envelope(self, s):
        gam = 0.5 * math.log(2) + 0.5 * np.log(s) - self.rate * s
        flat = np.where(s >= self.cut, self.log_flat, -np.inf)
        return np.logaddexp(gam, flat)

    def draw(self, rng, m):
        from_gamma = rng.random(m) < self.mass_gamma / self.mass
        s = rng.uniform(self.cut, 1.0, m)
        s[from_gamma] = rng.gamma(1.5, 1 / self.rate, int(from_gamma.sum()))
        return s

    def to_tangent(self, s, rng):
        return _random_sign(1 - s, rng)


class _WatsonGirdleEnvelope(_Envelope):
    """Variable ``u = |t|``; target ``exp(kappa u^2) sqrt(1 - u^2)`` with ``kappa < 0``."""

    def __init__(self, kappa):
        self.kappa = kappa
        self.scale = math.sqrt(-0.5 / kappa)
        self.mass = 0.5 * math.sqrt(math.pi / -kappa)
        self.peak = None

    def log_target(self, u):
        return self.kappa * u * u + _sqrt1m(u * u)

    def log_envelope(self, u):
        return self.kappa * u * u

    def draw(self, rng, m):
        return np.abs(rng.normal(0.0, self.scale, m))

    def to_tangent(self, u, rng):
        return _random_sign(u, rng)


def tangent_envelope(family, kappa, p=4):
    """Rejection envelope used for the tangent component of ``family`` at ``kappa``."""
    if p != 4:
        raise NotImplementedError("tangent samplers are implemented for S^3 only")
    family = Family(family)
    kappa = float(kappa)
    if family is Family.VMF:
        if kappa < 0:
            raise ValueError("VMF concentration must be non-negative")
        if kappa <= UNIFORM_KAPPA_MAX:
            return _UniformEnvelope(
                lambda t: kappa * (t - 1) + _sqrt1m(t * t), -1.0, 1.0, lambda t, rng: t
            )
        return _VMFGammaEnvelope(kappa)
    if abs(kappa) <= UNIFORM_KAPPA_MAX:
        return _UniformEnvelope(
            lambda u: kappa * (u * u - 1) + _sqrt1m(u * u), 0.0, 1.0, _random_sign
        )
    if kappa > 0:
        return _WatsonBipolarEnvelope(kappa)
    return _WatsonGirdleEnvelope(kappa)


def rejection_sample(envelope, n, rng):
    """Draw ``n`` tangent values; returns ``(t, RejectionStats)``."""
    expected = max(envelope.acceptance(), 0.05)
    chunks, got, proposed = [], 0, 0
    while got < n:
        m = int((n - got) / expected * 1.1) + 16
        v = envelope.draw(rng, m)
        keep = np.log(rng.random(m)) < envelope.log_ratio(v)
        proposed += m
        got += int(keep.sum())
        chunks.append(v[keep])
    v = np.concatenate(chunks)
    stats = RejectionStats(proposed, len(v))
    t = envelope.to_tangent(v[:n], rng)
    return np.clip(t, -1.0, 1.0), stats


def sample_tangent_vmf(kappa, n, rng) -> np.ndarray:
    return rejection_sample(tangent_envelope(Family.VMF, kappa), n, rng)[0]


def sample_tangent_watson(kappa, n, rng) -> np.ndarray:
    return rejection_sample(tangent_envelope(Family.WATSON, kappa), n, rng)[0]


def _assemble(mu, t, rng):
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu)
    z = rng.standard_normal((len(t), len(mu)))
    z -= np.outer(z @ mu, mu)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    x = np.outer(t, mu) + np.sqrt(1 - t * t)[:, None] * z
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def sample_vmf(mu, kappa, n, rng) -> np.ndarray:
    return _assemble(mu, sample_tangent_vmf(kappa, n, rng), rng)


def sample_watson(mu, kappa, n, rng) -> np.ndarray:
    return _assemble(mu, sample_tangent_watson(kappa, n, rng), rng)


def sample_family(family, mu, kappa, n, rng) -> np.ndarray:
    if Family(family) is Family.VMF:
        return sample_vmf(mu, kappa, n, rng)
    return sample_watson(mu, kappa, n, rng)


def wrap_to_fz(x, g: SymmetryGroup) -> np.ndarray:
    """Map every sample into the cubic fundamental zone."""
    return map_to_fundamental_zone(as_sample(x), g)
