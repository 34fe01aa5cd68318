"""Moments of the linearized voltage change under joint randomness of actor
locations and actor power.

The power-change vector dS of each actor is Gaussian with mean ``mu`` and
within-actor covariance ``sigma`` (6x6, per-unit).  Pairs of distinct
actors are coupled through the cross-actor covariance matrix ``cross``:
``cross[j, k] = Cov(dS1[j], dS2[k])``, identical for every ordered pair.
Actor locations are independent uniform draws from a candidate set, which
makes the z vectors of distinct actors independent and identically
distributed with the sample moments in ``ImpedanceStats``.

Single-actor moments (z and dS independent):

    mu    = mu_z . mu_S
    var   = mu_z' Sig_S mu_z + mu_S' Sig_z mu_S + tr(Sig_z Sig_S)
    c     = mu_zr' Sig_S mu_zi + mu_S' C_ri mu_S + tr(C_ri' Sig_S)

Cross-actor covariances factor through the z means because distinct
actors' z draws are independent:

    cov_xy(A1, A2) = mu_zx' cross mu_zy     for x, y in {r, i}

For n actors the aggregate follows from bilinearity:

    mu_tot  = n mu
    var_tot = n var + n (n-1) cov_xx
    c_tot   = n c + n (n-1) cov_ri
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensitivity import ImpedanceStats

# Slot order of the 6-vector.
_P = slice(0, 3)
_Q = slice(3, 6)


class MomentError(ValueError):
    """Inconsistent distribution parameters (non-PSD input, negative
    aggregate variance)."""


@dataclass(frozen=True)
class PowerChangeModel:
    """Gaussian model of per-actor power change, per-unit.

    ``sigma_p2_kw2``/``sigma_q2_kvar2`` keep the user-facing per-phase
    variances for reporting; ``mu``, ``sigma`` and ``cross`` are the
    derived per-unit quantities actually used by the algebra.
    """

    mu: np.ndarray       # (6,)
    sigma: np.ndarray    # (6,6) within-actor covariance
    cross: np.ndarray    # (6,6) cross-actor covariance
    rho_p: np.ndarray    # (3,)
    rho_q: np.ndarray
    rho_pq: np.ndarray
    sigma_p2_kw2: np.ndarray
    sigma_q2_kvar2: np.ndarray

    def __post_init__(self):
        w = np.linalg.eigvalsh((self.sigma + self.sigma.T) / 2)
        if w.min() < -1e-9 * max(np.trace(self.sigma), 1e-30):
            raise MomentError("within-actor covariance is not PSD")

    @classmethod
    def from_phase_params(cls, s_base: float, *, sigma_p2_kw2, sigma_q2_kvar2,
                          rho_p=0.0, rho_q=0.0, rho_pq=0.0,
                          mu_p_kw=0.0, mu_q_kvar=0.0, v_mag_pu=None,
                          rho_pq_cross=None) -> "PowerChangeModel":
        """Build from per-phase parameters in kW / kvar units.

        ``rho_p``/``rho_q`` correlate the same quantity across two distinct
        actors; ``rho_pq`` couples P and Q within one actor.  The paper's
        cross-multiplied covariance terms also carry a P-Q coupling across
        actors; it defaults to zero because a shared negative rho_pq
        across many actors has no valid joint Gaussian (see
        ``rho_pq_cross``), but it can be set explicitly.
        """
        def vec3(x):
            return np.broadcast_to(np.asarray(x, dtype=float), (3,)).copy()

        sp2 = vec3(sigma_p2_kw2)
        sq2 = vec3(sigma_q2_kvar2)
        rp, rq, rpq = vec3(rho_p), vec3(rho_q), vec3(rho_pq)
        rpqx = rpq.copy() if rho_pq_cross is True else vec3(
            0.0 if rho_pq_cross is None else rho_pq_cross)
        mp = vec3(mu_p_kw)
        mq = vec3(mu_q_kvar)
        vm = np.ones(3) if v_mag_pu is None else vec3(v_mag_pu)
        if np.abs(np.concatenate([rp, rq, rpq, rpqx])).max() > 1.0:
            raise MomentError("correlation coefficients must lie in [-1, 1]")

        scale = 1e3 / s_base                      # kW -> pu
        sp = np.sqrt(sp2) * scale / vm            # std dev of P entry, pu
        sq = np.sqrt(sq2) * scale / vm
        mu = np.concatenate([mp * scale / vm, mq * scale / vm])

        sigma = np.zeros((6, 6))
        cross = np.zeros((6, 6))
        for h in range(3):
            sigma[h, h] = sp[h] ** 2
            sigma[3 + h, 3 + h] = sq[h] ** 2
            sigma[h, 3 + h] = sigma[3 + h, h] = rpq[h] * sp[h] * sq[h]
            cross[h, h] = rp[h] * sp[h] ** 2
            cross[3 + h, 3 + h] = rq[h] * sq[h] ** 2
            cross[h, 3 + h] = cross[3 + h, h] = rpqx[h] * sp[h] * sq[h]
        return cls(mu=mu, sigma=sigma, cross=cross, rho_p=rp, rho_q=rq,
                   rho_pq=rpq, sigma_p2_kw2=sp2, sigma_q2_kvar2=sq2)

    def with_mean(self, mu_p_kw, mu_q_kvar, s_base: float) -> "PowerChangeModel":
        """Copy with a new mean (kW / kvar, consumption-positive)."""
        scale = 1e3 / s_base
        mp = np.broadcast_to(np.asarray(mu_p_kw, dtype=float), (3,))
        mq = np.broadcast_to(np.asarray(mu_q_kvar, dtype=float), (3,))
        mu = np.concatenate([mp, mq]) * scale
        return PowerChangeModel(
            mu=mu, sigma=self.sigma, cross=self.cross, rho_p=self.rho_p,
            rho_q=self.rho_q, rho_pq=self.rho_pq,
            sigma_p2_kw2=self.sigma_p2_kw2, sigma_q2_kvar2=self.sigma_q2_kvar2)


@dataclass(frozen=True)
class VoltageChangeMoments:
    """First/second moments of the in-frame real and imaginary parts of the
    voltage change at one observation node and phase (per-unit)."""

    mu_r: float
    mu_i: float
    var_r: float
    var_i: float
    c: float          # Cov(real, imag)
    n_actors: int

    def __post_init__(self):
        if self.var_r < 0 or self.var_i < 0:
            raise MomentError("negative variance")
        bound = np.sqrt(self.var_r * self.var_i) + 1e-12
        if abs(self.c) > bound:
            raise MomentError("real-imag covariance exceeds Cauchy-Schwarz bound")


def single_actor_moments(z: ImpedanceStats, pcm: PowerChangeModel) -> VoltageChangeMoments:
    """Moments of z_r.dS and z_i.dS for one randomly placed actor."""
    mu_s, sig_s = pcm.mu, pcm.sigma
    mu_r = float(z.mu_z_r @ mu_s)
    mu_i = float(z.mu_z_i @ mu_s)
    var_r = float(z.mu_z_r @ sig_s @ z.mu_z_r + mu_s @ z.cov_z_r @ mu_s
                  + np.trace(z.cov_z_r @ sig_s))
    var_i = float(z.mu_z_i @ sig_s @ z.mu_z_i + mu_s @ z.cov_z_i @ mu_s
                  + np.trace(z.cov_z_i @ sig_s))
    c = float(z.mu_z_r @ sig_s @ z.mu_z_i + mu_s @ z.cov_ri @ mu_s
              + np.trace(z.cov_ri.T @ sig_s))
    return VoltageChangeMoments(mu_r=mu_r, mu_i=mu_i,
                                var_r=max(var_r, 0.0), var_i=max(var_i, 0.0),
                                c=c, n_actors=1)


def cross_actor_covariance(z: ImpedanceStats, pcm: PowerChangeModel,
                           part: str = "real") -> float:
    """Covariance of the same component between two distinct actors.

    ``part`` selects real-real or imag-imag.  Distinct actors' z draws are
    independent, so the covariance is the bilinear form of the z means
    with the cross-actor power covariance.
    """
    if part == "real":
        mu_z = z.mu_z_r
    elif part == "imag":
        mu_z = z.mu_z_i
    else:
        raise ValueError("part must be 'real' or 'imag'")
    return float(mu_z @ pcm.cross @ mu_z)


def real_imag_covariance(z: ImpedanceStats, pcm: PowerChangeModel) -> float:
    """Cross-actor covariance between one actor's real part and another's
    imaginary part: the cross-multiplied nine-term expression."""
    return float(z.mu_z_r @ pcm.cross @ z.mu_z_i)


def aggregate_moments(single: VoltageChangeMoments, cov_rr: float,
                      cov_ii: float, n: int,
                      cov_ri: float = 0.0) -> VoltageChangeMoments:
    """Moments of the sum over ``n`` actors with identical pairwise
    covariances.  Raises MomentError if a correlation configuration makes
    an aggregate variance negative."""
    if n < 1:
        raise ValueError("n must be >= 1")
    var_r = n * single.var_r + n * (n - 1) * cov_rr
    var_i = n * single.var_i + n * (n - 1) * cov_ii
    if var_r < -1e-18 or var_i < -1e-18:
        raise MomentError(
            f"aggregate variance negative for n={n}; cross-actor correlations "
            "are inconsistent with the per-actor variances")
    c = n * single.c + n * (n - 1) * cov_ri
    return VoltageChangeMoments(
        mu_r=n * single.mu_r, mu_i=n * single.mu_i,
        var_r=max(var_r, 0.0), var_i=max(var_i, 0.0), c=c, n_actors=n)


def multi_actor_moments(z: ImpedanceStats, pcm: PowerChangeModel,
                        n: int) -> VoltageChangeMoments:
    """Convenience wrapper: single-actor moments aggregated over n actors."""
    single = single_actor_moments(z, pcm)
    return aggregate_moments(
        single,
        cov_rr=cross_actor_covariance(z, pcm, "real"),
        cov_ii=cross_actor_covariance(z, pcm, "imag"),
        n=n,
        cov_ri=real_imag_covariance(z, pcm))
