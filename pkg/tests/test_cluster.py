import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gorient.cluster import (
    KMeansMode,
    _MixtureEM,
    em_mixture,
    glrt_dof,
    glrt_multimodal,
    glrt_threshold,
    kmeans_spherical,
    kmeans_statistic,
    match_clusters,
    mixture_responsibilities,
)
from gorient.density import Family, GInvariantModel, MixtureModel, mixture_logpdf
from gorient.errors import EmptyCluster
from gorient.estimator import EMConfig, em_vmf, em_watson, fit_single, ml_modified, ml_naive, pullback
from gorient.sampler import make_rng, sample_family, sample_vmf, wrap_to_fz
from gorient.symgroup import build_cubic_group, group_distance, quotient_group

from conftest import orbit_gap, random_unit

mp.mp.dps = 50
CUBIC = build_cubic_group()


def mp_dot(a, b):
    return mp.fsum(mp.mpf(float(u)) * mp.mpf(float(v)) for u, v in zip(a, b))


def mp_log_norm(family, k):
    k = mp.mpf(float(k))
    if family is Family.VMF:
        return mp.log(k / (4 * mp.pi ** 2 * mp.besseli(1, k)))
    return -mp.log(mp.hyp1f1(0.5, 2, k) * 2 * mp.pi ** 2)


def oracle_mixture_step(x, mus, kappas, alpha, elements, family):
    """Responsibilities and M-step statistics of a mixture from the direct formulas."""
    n, C, M = len(x), len(mus), len(elements)
    mass = [mp.mpf(0)] * C
    gam = [[mp.mpf(0)] * 4 for _ in range(C)]
    T = [mp.zeros(4, 4) for _ in range(C)]
    for xi in x:
        ys = [[mp.mpf(float(v)) for v in P.T @ xi] for P in elements]
        logs = []
        for c in range(C):
            base = mp.log(mp.mpf(float(alpha[c]))) + mp_log_norm(family, kappas[c]) - mp.log(M)
            for y in ys:
                d = mp_dot(mus[c], y)
                logs.append(base + mp.mpf(float(kappas[c])) * (d * d if family is Family.WATSON else d))
        top = max(logs)
        w = [mp.exp(v - top) for v in logs]
        s = mp.fsum(w)
        for c in range(C):
            for m, y in enumerate(ys):
                r = w[c * M + m] / s
                mass[c] += r
                if family is Family.VMF:
                    for j in range(4):
                        gam[c][j] += r * y[j]
                else:
                    T[c] += r * mp.matrix(y) * mp.matrix(y).T
    return mass, gam, T


def mp_a_inv(r):
    r = mp.mpf(r)
    return mp.findroot(lambda k: mp.besseli(2, k) / mp.besseli(1, k) - r, 4 * r / (1 - r * r))


def _one_step(x, g, family, mus, kappas, alpha):
    init = MixtureModel(tuple(GInvariantModel(family, m, k, g) for m, k in zip(mus, kappas)), alpha)
    cfg = EMConfig(max_iters=1, n_restarts=1, init="provided", init_model=init, record=True)
    return em_mixture(x, g, len(mus), family, cfg, accelerate=False).history[0]


def test_vmf_mixture_one_step_oracle(sign):
    rng = make_rng(200)
    x = random_unit(rng, 4)
    mus, kappas, alpha = random_unit(rng, 2), np.array([2.0, 5.0]), np.array([0.3, 0.7])
    mass, gam, _ = oracle_mixture_step(x, mus, kappas, alpha, sign.elements, Family.VMF)
    h = _one_step(x, sign, Family.VMF, mus, kappas, alpha)
    stat, _, _ = _MixtureEM(Family.VMF, pullback(x, sign.elements), math.log(2)).estep(
        np.ascontiguousarray(mus), kappas, alpha)
    np.testing.assert_allclose(h["alpha"], [float(m / 4) for m in mass], rtol=0, atol=1e-12)
    for c in range(2):
        g = np.array([float(v) for v in gam[c]])
        np.testing.assert_allclose(stat[c], g, rtol=0, atol=1e-12)
        np.testing.assert_allclose(h["mu"][c], g / np.linalg.norm(g), rtol=0, atol=1e-12)
        ref = mp_a_inv(mp.sqrt(mp.fsum(v * v for v in gam[c])) / mass[c])
        assert h["kappa"][c] == pytest.approx(float(ref), rel=1e-10)


def test_watson_mixture_one_step_oracle():
    rng = make_rng(201)
    x = random_unit(rng, 6)
    mus, kappas, alpha = random_unit(rng, 2), np.array([-3.0, 6.0]), np.array([0.45, 0.55])
    mass, _, T = oracle_mixture_step(x, mus, kappas, alpha, CUBIC.elements[:24], Family.WATSON)
    em = _MixtureEM(Family.WATSON, pullback(x, CUBIC.elements[:24]), math.log(24))
    stat, got_mass, ll = em.estep(np.ascontiguousarray(mus), kappas, alpha)
    np.testing.assert_allclose(got_mass, [float(m) for m in mass], rtol=0, atol=1e-12)
    for c in range(2):
        np.testing.assert_allclose(stat[c], np.array(T[c].tolist(), dtype=float), rtol=0, atol=1e-12)
    mix = MixtureModel(tuple(GInvariantModel(Family.WATSON, m, k, CUBIC) for m, k in zip(mus, kappas)), alpha)
    assert ll == pytest.approx(float(np.sum(mixture_logpdf(x, mix))), rel=1e-12)


def test_responsibilities_simplex():
    rng = make_rng(202)
    x = random_unit(rng, 50)
    for family in (Family.VMF, Family.WATSON):
        mix = MixtureModel((GInvariantModel(family, random_unit(rng), 30.0, CUBIC),
                            GInvariantModel(family, random_unit(rng), 8.0, CUBIC)), [0.25, 0.75])
        r, logg = mixture_responsibilities(x, mix)
        assert r.min() >= 0
        assert np.abs(r.sum(axis=(1, 2)) - 1).max() < 1e-10
        np.testing.assert_allclose(logg, mixture_logpdf(x, mix), rtol=1e-12)


@pytest.mark.parametrize("family", [Family.VMF, Family.WATSON])
def test_single_cluster_matches_single_em(family):
    rng = make_rng(203)
    x = wrap_to_fz(sample_family(family, random_unit(rng), 30.0, 500, rng), CUBIC)
    init = GInvariantModel(family, random_unit(rng), 10.0, CUBIC)
    cfg = EMConfig(n_restarts=1, init="provided", init_model=init)
    single = fit_single(family, x, CUBIC, cfg)
    mix = em_mixture(x, CUBIC, 1, family, cfg, accelerate=False)
    assert mix.iterations == single.iterations
    assert abs(mix.loglik - single.loglik) < 1e-8 * abs(single.loglik)
    c = mix.model.clusters[0]
    assert orbit_gap(c.mu, single.model.mu, CUBIC) < 1e-8
    assert c.kappa == pytest.approx(single.model.kappa, rel=1e-9)
    np.testing.assert_allclose(mix.loglik_trace, single.loglik_trace, rtol=1e-12)


def two_cluster_set(seed, kappa=50.0, n=1000, family=Family.VMF, min_sep=0.3):
    rng = make_rng(seed)
    mu1 = random_unit(rng)
    while True:
        mu2 = random_unit(rng)
        if group_distance(mu1, mu2, CUBIC) > min_sep:
            break
    z = rng.random(n) < 0.5
    x = np.empty((n, 4))
    x[z] = sample_family(family, mu1, kappa, int(z.sum()), rng)
    x[~z] = sample_family(family, mu2, kappa, int((~z).sum()), rng)
    return wrap_to_fz(x, CUBIC), np.stack([mu1, mu2]), rng


@pytest.mark.parametrize("family", [Family.VMF, Family.WATSON])
def test_two_cluster_recovery(family):
    x, means, rng = two_cluster_set(204, family=family)
    rep = em_mixture(x, CUBIC, 2, family, EMConfig(), rng)
    perm, d = match_clusters([c.mu for c in rep.model.clusters], means, CUBIC)
    assert d.mean() < 0.02
    a = rep.model.alpha
    assert abs(a.sum() - 1) < 1e-12 and np.all(a > 0) and a[0] >= a[1]
    for tr in rep.restart_traces:
        assert len(tr) == 0 or np.diff(tr).min() >= -1e-9


def test_label_symmetry():
    x, _, rng = two_cluster_set(205)
    rep = em_mixture(x, CUBIC, 2, Family.VMF, EMConfig(n_restarts=1), rng)
    mix = rep.model
    swapped = MixtureModel(mix.clusters[::-1], mix.alpha[::-1])
    np.testing.assert_array_equal(mixture_logpdf(x, mix), mixture_logpdf(x, swapped))


def test_mixture_rejects_bad_input():
    x = random_unit(make_rng(0), 3)
    with pytest.raises(ValueError):
        em_mixture(x, CUBIC, 0, Family.VMF)
    with pytest.raises(ValueError):
        em_mixture(x, CUBIC, 2, Family.VMF)


def test_empty_cluster_after_all_restarts_fail():
    # tight cloud, a second start parked far away loses all its mass
    rng = make_rng(206)
    mu = np.array([1.0, 0, 0, 0])
    x = sample_vmf(mu, 5000.0, 40, rng)
    init = MixtureModel((GInvariantModel(Family.VMF, mu, 5000.0, CUBIC),
                         GInvariantModel(Family.VMF, [0.2, 0.9, 0.3, 0.2], 5000.0, CUBIC)), [0.5, 0.5])
    with pytest.raises(EmptyCluster):
        em_mixture(x, CUBIC, 2, Family.VMF, EMConfig(n_restarts=1, init="provided", init_model=init))


def test_kmeans_single_cluster():
    rng = make_rng(207)
    x = wrap_to_fz(sample_vmf(random_unit(rng), 40.0, 300, rng), CUBIC)
    km = kmeans_spherical(x, 1, KMeansMode.NAIVE, rng=make_rng(1))
    assert np.all(km.labels == 0) and km.alpha[0] == 1
    naive = ml_naive(x, Family.VMF)
    np.testing.assert_array_equal(km.models[0].mu, naive.mu)
    km = kmeans_spherical(x, 1, KMeansMode.SYMMETRY_AWARE, CUBIC, make_rng(2))
    # replay the stream: one seeding draw, then the reference draw of ml_modified
    replay = make_rng(2)
    replay.integers(len(x))
    ref = ml_modified(x, CUBIC, Family.VMF, replay)
    assert np.all(km.labels == 0)
    np.testing.assert_array_equal(km.models[0].mu, ref.mu)
    assert km.models[0].kappa == ref.kappa


def test_kmeans_symmetry_clones_collapse():
    rng = make_rng(208)
    mu = random_unit(rng)
    a = sample_vmf(mu, 1e5, 200, rng)
    P = CUBIC.elements[7]
    x = np.concatenate([a, sample_vmf(P @ mu, 1e5, 200, rng)])
    km = kmeans_spherical(x, 2, KMeansMode.SYMMETRY_AWARE, CUBIC, rng)
    assert group_distance(km.centroids[0], km.centroids[1], CUBIC) < 0.01
    kn = kmeans_spherical(x, 2, KMeansMode.NAIVE, rng=rng)
    assert set(np.unique(kn.labels)) == {0, 1}
    assert group_distance(kn.centroids[0], kn.centroids[1], CUBIC) < 0.01
    assert abs(kn.centroids[0] @ kn.centroids[1]) < 0.99


def test_kmeans_naive_splits_wrapped_cloud():
    # a cloud straddling an FZ face wraps into pieces; naive K-means separates them
    mu = np.array([math.cos(math.pi / 8), math.sin(math.pi / 8), 0.0, 0.0])
    rng = make_rng(209)
    x = wrap_to_fz(sample_vmf(mu, 100.0, 1000, rng), CUBIC)
    kn = kmeans_spherical(x, 2, KMeansMode.NAIVE, rng=rng)
    c0, c1 = kn.centroids
    assert c0 @ c1 < 0.9
    # both pieces are halves of the one cloud around mu
    assert group_distance(kn.centroids, mu, CUBIC).max() < 0.15
    ks = kmeans_spherical(x, 2, KMeansMode.SYMMETRY_AWARE, CUBIC, rng)
    assert kmeans_statistic(x, 2, KMeansMode.NAIVE, CUBIC, make_rng(3)) > glrt_threshold(0.05, 2)
    assert ks.iterations >= 1


def test_kmeans_validation():
    x = random_unit(make_rng(0), 10)
    with pytest.raises(ValueError):
        kmeans_spherical(x, 2, KMeansMode.SYMMETRY_AWARE)
    with pytest.raises(ValueError):
        kmeans_spherical(x, 6, KMeansMode.NAIVE)


def test_match_clusters():
    rng = make_rng(210)
    truth = random_unit(rng, 3)
    est = np.stack([CUBIC.elements[4] @ truth[2], truth[0], CUBIC.elements[40] @ truth[1]])
    perm, d = match_clusters(est, truth, CUBIC)
    np.testing.assert_array_equal(perm, [1, 2, 0])
    assert d.max() < 1e-7


def test_glrt_dof_and_threshold():
    assert glrt_dof(2) == 5 and glrt_dof(3) == 10
    assert glrt_threshold(0.05, 2) == pytest.approx(11.0704976935, rel=1e-9)
    thr = [glrt_threshold(a, 2) for a in (0.01, 0.05, 0.1, 0.5)]
    assert all(b < a for a, b in zip(thr, thr[1:]))
    with pytest.raises(ValueError):
        glrt_multimodal(random_unit(make_rng(0), 10), CUBIC, 1, Family.VMF)
    with pytest.raises(ValueError):
        glrt_multimodal(random_unit(make_rng(0), 10), CUBIC, 2, Family.VMF, alpha_level=1.0)


@pytest.mark.parametrize("family", [Family.VMF, Family.WATSON])
def test_glrt_nesting_and_power(family):
    rng = make_rng(211)
    x0 = wrap_to_fz(sample_family(family, random_unit(rng), 50.0, 600, rng), CUBIC)
    res = glrt_multimodal(x0, CUBIC, 2, family, cfg=EMConfig(n_restarts=2), rng=rng)
    assert res.statistic >= 0
    assert res.h1_fit.loglik >= res.h0_fit.loglik - 1e-6
    assert res.dof == 5 and "suboptimal_h1" not in res.flags
    x1, _, rng = two_cluster_set(212, n=600, family=family)
    res1 = glrt_multimodal(x1, CUBIC, 2, family, cfg=EMConfig(n_restarts=2), rng=rng)
    assert res1.reject_h0 and res1.statistic > 100


def test_glrt_threshold_monotone_on_same_data():
    x, _, rng = two_cluster_set(213, kappa=8.0, n=300, min_sep=0.0)
    res = glrt_multimodal(x, CUBIC, 2, Family.VMF, cfg=EMConfig(n_restarts=1), rng=make_rng(1))
    rejects = [res.statistic > glrt_threshold(a, 2) for a in (0.001, 0.01, 0.05, 0.2, 0.9)]
    assert rejects == sorted(rejects)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(2.0, 80.0), st.sampled_from([Family.VMF, Family.WATSON]))
def test_mixture_monotone_property(seed, kappa, family):
    x, _, rng = two_cluster_set(seed, kappa=kappa, n=200, family=family, min_sep=0.0)
    rep = em_mixture(x, CUBIC, 2, family, EMConfig(n_restarts=2), rng)
    for tr in rep.restart_traces:
        assert len(tr) == 0 or np.diff(tr).min() >= -1e-9
    assert abs(rep.model.alpha.sum() - 1) < 1e-12 and np.all(rep.model.alpha > 0)
