import math

import numpy as np
import pytest

import pvsense as pv
from pvsense.feeder import shared_path_matrix
from pvsense.moments import (MomentError, PowerChangeModel, aggregate_moments,
                             cross_actor_covariance, multi_actor_moments,
                             real_imag_covariance, single_actor_moments)
from pvsense.montecarlo import _psd_factor, joint_actor_covariance
from pvsense.sensitivity import (default_candidates, path_statistics,
                                 phase_pattern_vectors)

SQRT3 = math.sqrt(3.0)


def candidate_z_vectors(net, obs, phase):
    cands = default_candidates(net)
    z = shared_path_matrix(net, obs, cands, effective=True) / net.z_base
    return phase_pattern_vectors(z.real, z.imag, phase)


def make_pcm(net, **kw):
    args = dict(sigma_p2_kw2=[5.0, 0, 0], sigma_q2_kvar2=[0.5, 0, 0],
                rho_p=0.2, rho_q=0.2, rho_pq=-0.5)
    args.update(kw)
    return PowerChangeModel.from_phase_params(net.s_base, **args)


def sample_ds(pcm, n, rng):
    fac = _psd_factor(pcm.sigma)
    return pcm.mu + rng.standard_normal((n, 6)) @ fac.T


def sample_ds_pair(pcm, n, rng):
    cov = joint_actor_covariance(pcm, 2)
    fac = _psd_factor(cov)
    flat = np.tile(pcm.mu, 2) + rng.standard_normal((n, 12)) @ fac.T
    return flat[:, :6], flat[:, 6:]


def se_mean(x):
    return x.std(ddof=1) / math.sqrt(len(x))


def se_var(x):
    xc = x - x.mean()
    m2 = (xc ** 2).mean()
    m4 = (xc ** 4).mean()
    return math.sqrt(max(m4 - m2 ** 2, 0.0) / len(x))


def se_cov(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    prod = xc * yc
    return math.sqrt(max((prod ** 2).mean() - prod.mean() ** 2, 0.0) / len(x))


# --- trivial identities --------------------------------------------------------

def test_zero_mean_power_zero_mean_voltage(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    mom = single_actor_moments(st, make_pcm(net37))
    assert mom.mu_r == 0.0 and mom.mu_i == 0.0


def test_deterministic_power_variance(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37, sigma_p2_kw2=0.0, sigma_q2_kvar2=0.0,
                   rho_p=0, rho_q=0, rho_pq=0, mu_p_kw=[10.0, 0, 0])
    mom = single_actor_moments(st, pcm)
    expected = float(pcm.mu @ st.cov_z_r @ pcm.mu)
    assert mom.var_r == pytest.approx(expected, rel=1e-12)


def test_zero_correlations_zero_cross_covariances(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37, rho_p=0, rho_q=0, rho_pq=0)
    assert cross_actor_covariance(st, pcm, "real") == 0.0
    assert cross_actor_covariance(st, pcm, "imag") == 0.0
    assert real_imag_covariance(st, pcm) == 0.0


def test_phase_a_only_closed_forms(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    rho_p, rho_q = 0.3, 0.15
    s2p, s2q = 4.0, 0.8
    pcm = make_pcm(net37, sigma_p2_kw2=[s2p, 0, 0], sigma_q2_kvar2=[s2q, 0, 0],
                   rho_p=rho_p, rho_q=rho_q, rho_pq=0)
    scale = (1e3 / net37.s_base) ** 2
    mu_r_aa, mu_x_aa = st.mu_r[0, 0], st.mu_x[0, 0]
    expected_ri = (rho_p * s2p - rho_q * s2q) * scale * mu_r_aa * mu_x_aa
    assert real_imag_covariance(st, pcm) == pytest.approx(expected_ri, rel=1e-12)
    expected_rr = rho_p * s2p * scale * mu_r_aa ** 2 \
        + rho_q * s2q * scale * mu_x_aa ** 2
    assert cross_actor_covariance(st, pcm, "real") == pytest.approx(
        expected_rr, rel=1e-12)


def test_real_imag_covariance_matches_printed_nine_terms(net37):
    # literal transcription of the cross-multiplied expression, with the
    # decimal coefficients read as exact radicals
    st = pv.path_statistics(net37, "711", "a", default_candidates(net37))
    sp2 = np.array([5.0, 4.0, 3.0])
    sq2 = np.array([0.5, 0.7, 0.2])
    rp = np.array([0.2, 0.1, 0.3])
    rq = np.array([0.25, 0.15, 0.05])
    rpq = np.array([-0.5, 0.4, -0.2])
    pcm = PowerChangeModel.from_phase_params(
        net37.s_base, sigma_p2_kw2=sp2, sigma_q2_kvar2=sq2, rho_p=rp,
        rho_q=rq, rho_pq=rpq, rho_pq_cross=True)
    k = (1e3 / net37.s_base) ** 2
    sp2, sq2 = sp2 * k, sq2 * k
    sp, sq = np.sqrt(sp2), np.sqrt(sq2)
    mr, mx = st.mu_r, st.mu_x
    expected = (
        rp[0] * sp2[0] * mr[0, 0] * mx[0, 0]
        - rq[0] * sq2[0] * mr[0, 0] * mx[0, 0]
        + rp[1] * sp2[1] * (SQRT3 / 4 * mr[0, 1] ** 2 - 0.5 * mr[0, 1] * mx[0, 1]
                            - SQRT3 / 4 * mx[0, 1] ** 2)
        + rp[2] * sp2[2] * (-SQRT3 / 4 * mr[0, 2] ** 2 - 0.5 * mr[0, 2] * mx[0, 2]
                            + SQRT3 / 4 * mx[0, 2] ** 2)
        + rq[1] * sq2[1] * (-SQRT3 / 4 * mr[0, 1] ** 2 + 0.5 * mr[0, 1] * mx[0, 1]
                            + SQRT3 / 4 * mx[0, 1] ** 2)
        + rq[2] * sq2[2] * (SQRT3 / 4 * mr[0, 2] ** 2 + 0.5 * mr[0, 2] * mx[0, 2]
                            - SQRT3 / 4 * mx[0, 2] ** 2)
        + rpq[0] * sp[0] * sq[0] * (-mr[0, 0] ** 2 + mx[0, 0] ** 2)
        + rpq[1] * sp[1] * sq[1] * (0.5 * mr[0, 1] ** 2
                                    + SQRT3 * mr[0, 1] * mx[0, 1]
                                    - 0.5 * mx[0, 1] ** 2)
        + rpq[2] * sp[2] * sq[2] * (0.5 * mr[0, 2] ** 2
                                    - SQRT3 * mr[0, 2] * mx[0, 2]
                                    - 0.5 * mx[0, 2] ** 2))
    assert real_imag_covariance(st, pcm) == pytest.approx(expected, rel=1e-12)


# --- Monte-Carlo oracles ---------------------------------------------------------

N_MC = 400_000


def test_single_actor_moments_vs_sampling(net37):
    rng = np.random.default_rng(101)
    zr, zi = candidate_z_vectors(net37, "709", "a")
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37, sigma_p2_kw2=[5.0, 2.0, 1.0],
                   sigma_q2_kvar2=[0.5, 0.3, 0.1],
                   rho_pq=[-0.5, 0.2, 0.0],
                   mu_p_kw=[3.0, -1.0, 0.5], mu_q_kvar=[0.2, 0.0, -0.1])
    mom = single_actor_moments(st, pcm)

    ds = sample_ds(pcm, N_MC, rng)
    pick = rng.integers(0, len(zr), size=N_MC)
    xr = np.einsum("ij,ij->i", zr[pick], ds)
    xi = np.einsum("ij,ij->i", zi[pick], ds)
    assert abs(xr.mean() - mom.mu_r) < 3 * se_mean(xr)
    assert abs(xi.mean() - mom.mu_i) < 3 * se_mean(xi)
    assert abs(xr.var() - mom.var_r) < 3 * se_var(xr)
    assert abs(xi.var() - mom.var_i) < 3 * se_var(xi)
    cov = np.cov(xr, xi)[0, 1]
    assert abs(cov - mom.c) < 3 * se_cov(xr, xi)


def test_cross_actor_covariance_vs_sampling(net37):
    rng = np.random.default_rng(103)
    zr, zi = candidate_z_vectors(net37, "709", "a")
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37)
    ds1, ds2 = sample_ds_pair(pcm, N_MC, rng)
    p1 = rng.integers(0, len(zr), size=N_MC)
    p2 = rng.integers(0, len(zr), size=N_MC)
    xr1 = np.einsum("ij,ij->i", zr[p1], ds1)
    xr2 = np.einsum("ij,ij->i", zr[p2], ds2)
    xi2 = np.einsum("ij,ij->i", zi[p2], ds2)
    cov_rr = np.cov(xr1, xr2)[0, 1]
    assert abs(cov_rr - cross_actor_covariance(st, pcm, "real")) \
        < 3 * se_cov(xr1, xr2)
    cov_ri = np.cov(xr1, xi2)[0, 1]
    assert abs(cov_ri - real_imag_covariance(st, pcm)) < 3 * se_cov(xr1, xi2)


def test_aggregate_moments_vs_sampling(net37):
    rng = np.random.default_rng(107)
    n_actors = 9
    zr, zi = candidate_z_vectors(net37, "709", "a")
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37, mu_p_kw=[1.0, 0, 0])
    mom = multi_actor_moments(st, pcm, n_actors)

    n = 150_000
    fac = _psd_factor(joint_actor_covariance(pcm, n_actors))
    flat = np.tile(pcm.mu, n_actors) + rng.standard_normal((n, 6 * n_actors)) @ fac.T
    ds = flat.reshape(n, n_actors, 6)
    pick = rng.integers(0, len(zr), size=(n, n_actors))
    xr = np.einsum("skj,skj->s", zr[pick], ds)
    xi = np.einsum("skj,skj->s", zi[pick], ds)
    assert abs(xr.mean() - mom.mu_r) < 3 * se_mean(xr)
    assert abs(xi.mean() - mom.mu_i) < 3 * se_mean(xi)
    assert abs(xr.var() - mom.var_r) < 3 * se_var(xr)
    assert abs(xi.var() - mom.var_i) < 3 * se_var(xi)
    cov = np.cov(xr, xi)[0, 1]
    assert abs(cov - mom.c) < 3 * se_cov(xr, xi)


# --- aggregation algebra ---------------------------------------------------------

def test_aggregate_identity_n1(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    single = single_actor_moments(st, make_pcm(net37))
    agg = aggregate_moments(single, 1e-9, 1e-9, 1, 1e-9)
    assert agg.mu_r == single.mu_r and agg.var_r == single.var_r
    assert agg.c == single.c


def test_aggregate_independent_actors_linear(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    single = single_actor_moments(st, make_pcm(net37, rho_p=0, rho_q=0))
    for n in (2, 5, 20):
        agg = aggregate_moments(single, 0.0, 0.0, n)
        assert agg.var_r == pytest.approx(n * single.var_r, rel=1e-12)
        assert agg.var_i == pytest.approx(n * single.var_i, rel=1e-12)


def test_aggregate_quadratic_covariance_growth(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    pcm = make_pcm(net37)
    single = single_actor_moments(st, pcm)
    cov_rr = cross_actor_covariance(st, pcm, "real")
    for n in (2, 7, 12):
        agg = aggregate_moments(single, cov_rr, 0.0, n)
        assert agg.var_r == pytest.approx(
            n * single.var_r + n * (n - 1) * cov_rr, rel=1e-12)


def test_aggregate_negative_variance_raises(net37):
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    single = single_actor_moments(st, make_pcm(net37))
    with pytest.raises(MomentError, match="negative"):
        aggregate_moments(single, -single.var_r, 0.0, 5)


def test_non_psd_input_rejected(net37):
    with pytest.raises(MomentError):
        PowerChangeModel.from_phase_params(
            net37.s_base, sigma_p2_kw2=1.0, sigma_q2_kvar2=1.0, rho_pq=1.5)
