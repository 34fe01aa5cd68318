"""Linearized voltage change at an observation node from power changes at
actor nodes, and shared-path impedance statistics over candidate actor sets.

The six-entry power-change vector for an actor node is

    dS = [dP_a/|V_a|, dP_b/|V_b|, dP_c/|V_c|, dQ_a/|V_a|, dQ_b/|V_b|, dQ_c/|V_c|]

with the sign convention of the expanded drop equations: positive dP/dQ is
added *consumption* and lowers voltage; a PV injection enters with a
negative sign (use ``PowerChangeVector.from_injection_kw``), which raises
voltage.  All quantities here are per-unit on the feeder base.

For observation phase p the change splits into in-phase-frame real and
imaginary parts  dV_r = z_r . dS,  dV_i = z_i . dS  where the z vectors
combine shared-path resistance/reactance entries under the assumption of
exact 120-degree spacing between phase angles.  The phase-b and phase-c
vectors are cyclic permutations of the phase-a pattern.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .feeder import PHASE_INDEX, REFERENCE_PU, FeederError, NetworkModel, \
    shared_path_impedance, shared_path_matrix

SQRT3 = math.sqrt(3.0)


def phase_pattern_vectors(r: np.ndarray, x: np.ndarray, phase: str):
    """Build (z_r, z_i) from shared-path resistance/reactance matrices.

    ``r`` and ``x`` have shape (..., 3, 3); the result vectors have shape
    (..., 6) in the fixed slot order [P_a P_b P_c Q_a Q_b Q_c].  Works on
    ohms or per-unit alike.
    """
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    p = PHASE_INDEX[phase]
    n = (p + 1) % 3   # phase at -120deg relative to p
    m = (p + 2) % 3   # phase at +120deg relative to p
    zr = np.zeros(r.shape[:-2] + (6,))
    zi = np.zeros_like(zr)
    zr[..., p] = -r[..., p, p]
    zr[..., n] = r[..., p, n] / 2 - SQRT3 * x[..., p, n] / 2
    zr[..., m] = r[..., p, m] / 2 + SQRT3 * x[..., p, m] / 2
    zr[..., 3 + p] = -x[..., p, p]
    zr[..., 3 + n] = SQRT3 * r[..., p, n] / 2 + x[..., p, n] / 2
    zr[..., 3 + m] = -SQRT3 * r[..., p, m] / 2 + x[..., p, m] / 2
    zi[..., p] = -x[..., p, p]
    zi[..., n] = SQRT3 * r[..., p, n] / 2 + x[..., p, n] / 2
    zi[..., m] = -SQRT3 * r[..., p, m] / 2 + x[..., p, m] / 2
    zi[..., 3 + p] = r[..., p, p]
    zi[..., 3 + n] = -r[..., p, n] / 2 + SQRT3 * x[..., p, n] / 2
    zi[..., 3 + m] = -r[..., p, m] / 2 - SQRT3 * x[..., p, m] / 2
    return zr, zi


@dataclass(frozen=True)
class ZVectors:
    z_r: np.ndarray   # (6,) per-unit
    z_i: np.ndarray


def z_vectors(net: NetworkModel, o: str, a: str, phase: str) -> ZVectors:
    """Per-unit impedance combination vectors for one (o, a, phase) triple."""
    z = shared_path_impedance(net, o, a) / net.z_base
    zr, zi = phase_pattern_vectors(z.real, z.imag, phase)
    return ZVectors(z_r=zr, z_i=zi)


@dataclass(frozen=True)
class PowerChangeVector:
    """Per-unit power-change-over-voltage vector for one actor node."""

    values: np.ndarray   # (6,) per-unit, consumption-positive

    @classmethod
    def from_consumption_kw(cls, net: NetworkModel, dp_kw, dq_kvar,
                            v_mag_pu=None) -> "PowerChangeVector":
        dp = np.asarray(dp_kw, dtype=float) * 1e3 / net.s_base
        dq = np.asarray(dq_kvar, dtype=float) * 1e3 / net.s_base
        vm = np.ones(3) if v_mag_pu is None else np.asarray(v_mag_pu, dtype=float)
        if (vm == 0).any() and ((dp != 0) | (dq != 0))[vm == 0].any():
            raise ValueError("power change on a phase with zero voltage")
        safe = np.where(vm == 0, 1.0, vm)
        return cls(values=np.concatenate([dp / safe, dq / safe]))

    @classmethod
    def from_injection_kw(cls, net: NetworkModel, dp_kw, dq_kvar,
                          v_mag_pu=None) -> "PowerChangeVector":
        """Generation-positive constructor: a PV injection raises voltage."""
        pcv = cls.from_consumption_kw(net, dp_kw, dq_kvar, v_mag_pu)
        return cls(values=-pcv.values)


def nominal_phasors() -> np.ndarray:
    return REFERENCE_PU.copy()


def delta_v_single(net: NetworkModel, o: str, a: str,
                   ds: PowerChangeVector, v_a=None) -> np.ndarray:
    """Complex per-unit voltage change at all three phases of ``o`` caused
    by one actor, using the actor's actual phasors ``v_a`` (pu)."""
    if v_a is None:
        v_a = nominal_phasors()
    v_a = np.asarray(v_a, dtype=complex)
    z = shared_path_impedance(net, o, a) / net.z_base
    vm = np.abs(v_a)
    loaded = (np.abs(ds.values[:3]) > 0) | (np.abs(ds.values[3:]) > 0)
    if (loaded & (vm == 0)).any():
        raise ValueError("zero voltage on a phase carrying power change")
    s = (ds.values[:3] + 1j * ds.values[3:]) * vm   # complex power, pu
    ang = v_a / np.where(vm == 0, 1.0, vm)          # unit phasors e^{j theta}
    dv = np.empty(3, dtype=complex)
    for p in range(3):
        dv[p] = -np.sum(np.conj(s) * z[p, :] * ang)
    return dv


def delta_v_multi(net: NetworkModel, o: str, actors) -> np.ndarray:
    """Sum of single-actor changes; actors: iterable of (node, PowerChangeVector,
    v_a or None)."""
    dv = np.zeros(3, dtype=complex)
    for a, ds, v_a in actors:
        dv += delta_v_single(net, o, a, ds, v_a)
    return dv


def delta_v_real_imag(net: NetworkModel, o: str, a: str,
                      ds: PowerChangeVector):
    """(real, imag) parts per phase under the 120-degree assumption.

    Components are expressed in each phase's own frame (phase b rotated by
    +120 degrees, phase c by -120), which matches Re/Im of
    ``delta_v_single`` evaluated at exactly balanced phasors.
    """
    out_r = np.empty(3)
    out_i = np.empty(3)
    for phase in "abc":
        zv = z_vectors(net, o, a, phase)
        p = PHASE_INDEX[phase]
        out_r[p] = zv.z_r @ ds.values
        out_i[p] = zv.z_i @ ds.values
    return out_r, out_i


@dataclass(frozen=True)
class ImpedanceStats:
    """First and second moments of the z vectors over a candidate actor set,
    for one observation node and phase.  All per-unit.

    ``cov_ri[j, k] = Cov(z_r[j], z_i[k])`` over candidates; ``mu_r``/``mu_x``
    are the mean shared-path resistance/reactance matrices.
    """

    mu_z_r: np.ndarray    # (6,)
    mu_z_i: np.ndarray    # (6,)
    cov_z_r: np.ndarray   # (6,6)
    cov_z_i: np.ndarray   # (6,6)
    cov_ri: np.ndarray    # (6,6)
    mu_r: np.ndarray      # (3,3)
    mu_x: np.ndarray      # (3,3)
    rho_rx: float
    n_candidates: int


def path_statistics(net: NetworkModel, o: str, phase: str,
                    candidates, *, effective: bool = True) -> ImpedanceStats:
    """Sample statistics of the z vectors over a candidate actor set.

    Covariances are population-style (ddof 0), which is the distribution
    of a single actor drawn uniformly from the candidate set.  By default
    the matrices are referred through regulator ratios (see
    ``shared_path_matrix``); on regulator-free feeders this equals the
    plain shared-path sum.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate set")
    z = shared_path_matrix(net, o, candidates, effective=effective) / net.z_base
    zr, zi = phase_pattern_vectors(z.real, z.imag, phase)

    mu_z_r = zr.mean(axis=0)
    mu_z_i = zi.mean(axis=0)
    joint = np.concatenate([zr, zi], axis=1)       # (m, 12)
    dev = joint - joint.mean(axis=0)
    cov = dev.T @ dev / len(candidates)
    cov = _joint_psd_repair(cov)

    p = PHASE_INDEX[phase]
    rpp = z.real[:, p, p]
    xpp = z.imag[:, p, p]
    if len(candidates) > 1 and rpp.std() > 0 and xpp.std() > 0:
        rho_rx = float(np.corrcoef(rpp, xpp)[0, 1])
    else:
        rho_rx = 0.0
    return ImpedanceStats(
        mu_z_r=mu_z_r, mu_z_i=mu_z_i,
        cov_z_r=cov[:6, :6], cov_z_i=cov[6:, 6:], cov_ri=cov[:6, 6:],
        mu_r=z.real.mean(axis=0), mu_x=z.imag.mean(axis=0),
        rho_rx=rho_rx, n_candidates=len(candidates))


def _joint_psd_repair(cov: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh((cov + cov.T) / 2)
    floor = -1e-9 * max(np.trace(cov), 1e-30)
    if (w < floor).any():
        raise ValueError("sample covariance unexpectedly indefinite")
    w = np.clip(w, 0.0, None)
    return (q * w) @ q.T


def default_candidates(net: NetworkModel, *, three_phase_only: bool = False):
    """All nodes except the source; optionally only fully three-phase ones."""
    out = []
    for i, nid in enumerate(net.nodes):
        if nid == net.source:
            continue
        if three_phase_only and not net.phase_mask[i].all():
            continue
        out.append(nid)
    return out
