import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gorient.density import Family, GInvariantModel, ginv_logpdf
from gorient.errors import DegenerateResultant
from gorient.estimator import (
    EMConfig,
    align_to_reference,
    em_vmf,
    em_vmf_hyperbolic,
    em_watson,
    fit_single,
    ml_modified,
    ml_naive,
    pullback,
    vmf_estep,
    vmf_hyperbolic_estep,
    watson_estep,
    watson_mle,
    weighted_resultant,
)
from gorient.sampler import make_rng, sample_family, sample_vmf, sample_watson, wrap_to_fz
from gorient.specfun import KAPPA_MAX, a_p
from gorient.symgroup import build_cubic_group, group_distance, quotient_group

from conftest import orbit_gap, random_unit

mp.mp.dps = 50
CUBIC = build_cubic_group()


def mp_dot(a, b):
    return mp.fsum(mp.mpf(float(u)) * mp.mpf(float(v)) for u, v in zip(a, b))


def mp_a_inv(r):
    r = mp.mpf(r)
    return mp.findroot(lambda k: mp.besseli(2, k) / mp.besseli(1, k) - r, 4 * r / (1 - r * r))


def mp_y_inv(t, guess):
    # Y_4 is strictly increasing, so the root near any guess is the root
    t = mp.mpf(t)
    y = lambda k: mp.hyp1f1(1.5, 3, k) / mp.hyp1f1(0.5, 2, k) / 4 - t
    return mp.findroot(y, mp.mpf(guess))


def oracle_vmf_step(x, mu, kappa, elements):
    """One E+M step from the plain responsibility formulas in extended precision."""
    n = len(x)
    gamma = [mp.mpf(0)] * 4
    for xi in x:
        ys = [[mp.mpf(float(v)) for v in P.T @ xi] for P in elements]
        w = [mp.exp(kappa * mp_dot(mu, y)) for y in ys]
        s = mp.fsum(w)
        for wm, y in zip(w, ys):
            for j in range(4):
                gamma[j] += wm / s * y[j]
    norm = mp.sqrt(mp.fsum(g * g for g in gamma))
    return [g for g in gamma], [g / norm for g in gamma], mp_a_inv(norm / n)


def oracle_watson_step(x, mu, kappa, elements):
    n = len(x)
    T = mp.zeros(4, 4)
    for xi in x:
        ys = [[mp.mpf(float(v)) for v in P.T @ xi] for P in elements]
        w = [mp.exp(kappa * mp_dot(mu, y) ** 2) for y in ys]
        s = mp.fsum(w)
        for wm, y in zip(w, ys):
            T += (wm / s / n) * mp.matrix(y) * mp.matrix(y).T
    return T


def one_step(fit, x, g, mu0, kappa0, family):
    cfg = EMConfig(max_iters=1, n_restarts=1, init="provided", record=True,
                   init_model=GInvariantModel(family, mu0, kappa0, g))
    return fit(x, g, cfg).history[0]


@pytest.mark.parametrize("g_name", ["sign", "cubic"])
def test_vmf_one_step_oracle(g_name, sign):
    g = sign if g_name == "sign" else CUBIC
    rng = make_rng(100)
    x = random_unit(rng, 3)
    mu0 = random_unit(rng)
    gamma, mu, kappa = oracle_vmf_step(x, mu0, 3.0, g.elements)
    for fit in (em_vmf, em_vmf_hyperbolic):
        h = one_step(fit, x, g, mu0, 3.0, Family.VMF)
        np.testing.assert_allclose(h["stat"], [float(v) for v in gamma], rtol=0, atol=1e-12)
        np.testing.assert_allclose(h["mu"], [float(v) for v in mu], rtol=0, atol=1e-12)
        # kappa inherits the root finder's 1e-12 forward residual
        assert h["kappa"] == pytest.approx(float(kappa), rel=1e-10)


@pytest.mark.parametrize("g_name", ["sign", "cubic"])
@pytest.mark.parametrize("n", [3, 6])
def test_watson_one_step_oracle(g_name, n, sign):
    g = sign if g_name == "sign" else CUBIC
    rng = make_rng(101)
    x = random_unit(rng, n)
    mu0 = random_unit(rng)
    T = oracle_watson_step(x, mu0, 4.0, quotient_group(g).elements)
    h = one_step(em_watson, x, g, mu0, 4.0, Family.WATSON)
    np.testing.assert_allclose(h["stat"], np.array(T.tolist(), dtype=float), rtol=0, atol=1e-12)
    vals, vecs = mp.eigsy(T)
    if g_name == "sign" and n == 3:
        # three points span a 3-space: the girdle along its normal is unbounded
        assert h["kappa"] == -KAPPA_MAX
        assert np.abs(x @ h["mu"]).max() < 1e-12
        return
    j = 3 if h["kappa"] > 0 else 0
    assert abs(abs(np.dot([float(v) for v in vecs.column(j)], h["mu"])) - 1) < 1e-12
    assert h["kappa"] == pytest.approx(float(mp_y_inv(vals[j], h["kappa"])), rel=1e-10)


def test_trivial_group_first_iteration_is_naive(trivial):
    rng = make_rng(102)
    x = sample_vmf(random_unit(rng), 20.0, 200, rng)
    h = one_step(em_vmf, x, trivial, random_unit(rng), 5.0, Family.VMF)
    naive = ml_naive(x, Family.VMF)
    np.testing.assert_allclose(h["mu"], naive.mu, atol=1e-14)
    assert h["kappa"] == pytest.approx(naive.kappa, rel=1e-13)


def test_watson_sign_group_matches_naive(sign):
    rng = make_rng(103)
    for k in (30.0, -15.0):
        x = sample_watson(random_unit(rng), k, 500, rng)
        rep = em_watson(x, sign, EMConfig(n_restarts=2), rng)
        naive = ml_naive(x, Family.WATSON)
        assert abs(abs(rep.model.mu @ naive.mu) - 1) < 1e-12
        assert rep.model.kappa == pytest.approx(naive.kappa, rel=1e-10)
        assert rep.iterations == 1


def test_ml_naive_degenerate():
    mu0 = np.array([0.5, 0.5, 0.5, 0.5])
    with pytest.raises(DegenerateResultant) as err:
        ml_naive(np.tile(mu0, (10, 1)), Family.VMF)
    np.testing.assert_array_equal(err.value.mu, mu0)


def test_ml_naive_unwrapped_consistent():
    rng = make_rng(104)
    mu0 = random_unit(rng)
    m = ml_naive(sample_vmf(mu0, 50.0, 1000, rng), Family.VMF)
    assert abs(m.mu @ mu0) > 0.999


def test_ml_modified_identity_alignment():
    rng = make_rng(105)
    mu0 = np.array([0.97, 0.1, -0.15, 0.12])
    mu0 /= np.linalg.norm(mu0)
    x = sample_vmf(mu0, 2000.0, 200, rng)
    np.testing.assert_array_equal(align_to_reference(x, x[0], CUBIC), x)
    m = ml_modified(x, CUBIC, Family.VMF, rng)
    n = ml_naive(x, Family.VMF)
    np.testing.assert_array_equal(m.mu, n.mu)
    assert m.kappa == n.kappa and m.group is CUBIC


def test_estep_rows_sum_to_one():
    rng = make_rng(106)
    x = wrap_to_fz(sample_vmf(random_unit(rng), 30.0, 100, rng), CUBIC)
    mu = random_unit(rng)
    r, _ = vmf_estep(pullback(x, CUBIC.elements), mu, 30.0)
    assert r.min() >= 0 and np.abs(r.sum(axis=1) - 1).max() < 1e-10
    r, _ = watson_estep(pullback(x, CUBIC.elements[:24]), mu, -8.0)
    assert r.min() >= 0 and np.abs(r.sum(axis=1) - 1).max() < 1e-10


def test_estep_loglik_matches_density():
    rng = make_rng(107)
    x = random_unit(rng, 50)
    mu = random_unit(rng)
    _, logf = vmf_estep(pullback(x, CUBIC.elements), mu, 40.0)
    np.testing.assert_allclose(logf, ginv_logpdf(x, GInvariantModel(Family.VMF, mu, 40.0, CUBIC)), rtol=1e-12)
    _, logf = watson_estep(pullback(x, CUBIC.elements[:24]), mu, 40.0)
    np.testing.assert_allclose(logf, ginv_logpdf(x, GInvariantModel(Family.WATSON, mu, 40.0, CUBIC)),
                               rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 200.0))
def test_hyperbolic_gamma_property(seed, kappa):
    rng = make_rng(seed)
    x = random_unit(rng, 40)
    mu = random_unit(rng)
    r, logf = vmf_estep(pullback(x, CUBIC.elements), mu, kappa)
    Yh = pullback(x, CUBIC.elements[:24])
    w, logf_h = vmf_hyperbolic_estep(Yh, mu, kappa, 48)
    g_plain = weighted_resultant(r, pullback(x, CUBIC.elements))
    g_hyp = weighted_resultant(w, Yh)
    assert np.linalg.norm(g_plain - g_hyp) <= 1e-9 * np.linalg.norm(g_plain)
    np.testing.assert_allclose(logf, logf_h, rtol=1e-12)


def test_hyperbolic_iterates_match_plain():
    rng = make_rng(108)
    x = wrap_to_fz(sample_vmf(random_unit(rng), 50.0, 1000, rng), CUBIC)
    cfg = EMConfig(n_restarts=1, record=True, seed=3)
    a = em_vmf(x, CUBIC, cfg, make_rng(5))
    b = em_vmf_hyperbolic(x, CUBIC, cfg, make_rng(5))
    assert a.iterations == b.iterations
    for ha, hb in zip(a.history, b.history):
        assert np.linalg.norm(ha["stat"] - hb["stat"]) <= 1e-9 * np.linalg.norm(ha["stat"])
    assert np.abs(a.model.mu - b.model.mu).max() < 1e-8
    assert abs(a.model.kappa - b.model.kappa) < 1e-8


def test_hyperbolic_needs_sign_pairs(trivial):
    with pytest.raises(ValueError):
        em_vmf_hyperbolic(random_unit(make_rng(0), 10), trivial)


@pytest.mark.parametrize("family", [Family.VMF, Family.WATSON])
def test_equivariance(family):
    rng = make_rng(109)
    x = wrap_to_fz(sample_family(family, random_unit(rng), 25.0, 400, rng), CUBIC)
    init = GInvariantModel(family, random_unit(rng), 10.0, CUBIC)
    cfg = EMConfig(n_restarts=1, init="provided", init_model=init)
    base = fit_single(family, x, CUBIC, cfg)
    for idx in (5, 17, 30):
        P = CUBIC.elements[idx]
        moved = fit_single(family, x @ P.T, CUBIC, cfg)
        assert orbit_gap(base.model.mu, moved.model.mu, CUBIC) < 1e-8
        assert abs(base.model.kappa - moved.model.kappa) < 1e-8


@pytest.mark.parametrize("family", [Family.VMF, Family.WATSON])
def test_recovers_wrapped_parameters(family):
    rng = make_rng(110)
    mu0 = random_unit(rng)
    x = wrap_to_fz(sample_family(family, mu0, 50.0, 1000, rng), CUBIC)
    rep = fit_single(family, x, CUBIC, EMConfig(), rng)
    assert group_distance(mu0, rep.model.mu, CUBIC) < 0.01
    assert abs(rep.model.kappa - 50) / 50 < 0.05
    assert rep.converged and rep.n == 1000
    assert rep.mean_loglik == pytest.approx(rep.loglik / 1000)


def test_monotone_traces():
    rng = make_rng(111)
    for family in (Family.VMF, Family.WATSON):
        for k in (2.0, 20.0, 90.0):
            x = wrap_to_fz(sample_family(family, random_unit(rng), k, 300, rng), CUBIC)
            rep = fit_single(family, x, CUBIC, EMConfig(n_restarts=3), rng)
            for tr in rep.restart_traces:
                assert np.diff(tr).min() >= -1e-9


def test_loglik_matches_density():
    rng = make_rng(112)
    x = wrap_to_fz(sample_vmf(random_unit(rng), 15.0, 300, rng), CUBIC)
    rep = em_vmf(x, CUBIC, EMConfig(n_restarts=1), rng)
    # the trace records the likelihood of the parameters entering the last step
    assert rep.loglik == pytest.approx(np.sum(ginv_logpdf(x, rep.model)), abs=1e-6 * 300)


def test_best_restart_selected():
    rng = make_rng(113)
    x = wrap_to_fz(sample_vmf(random_unit(rng), 5.0, 200, rng), CUBIC)
    rep = em_vmf(x, CUBIC, EMConfig(n_restarts=4), rng)
    finals = [t[-1] for t in rep.restart_traces]
    assert len(finals) == 4
    assert rep.loglik >= max(finals) - 1e-8 * 200


def test_config_validation():
    for kw in ({"max_iters": 0}, {"tol": 0.0}, {"n_restarts": 0}, {"init": "bogus"}, {"init": "provided"}):
        with pytest.raises(ValueError):
            EMConfig(**kw)


def test_watson_mle_chooses_consistent_solution():
    rng = make_rng(114)
    mu0 = random_unit(rng)
    x = sample_watson(mu0, -30.0, 2000, rng)
    mu, kappa, ok = watson_mle(x.T @ x / len(x))
    assert ok and kappa < 0 and abs(mu @ mu0) > 0.99
    x = sample_watson(mu0, 30.0, 2000, rng)
    mu, kappa, ok = watson_mle(x.T @ x / len(x))
    assert ok and kappa > 0 and abs(mu @ mu0) > 0.99
