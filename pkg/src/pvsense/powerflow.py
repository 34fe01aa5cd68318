"""Unbalanced three-phase power flow for radial feeders.

Backward/forward sweep with constant-PQ loads.  The source node is pinned
at the reference phasors; all other voltages follow from repeated
current-summation (backward) and voltage-drop (forward) passes.  The
reported residual is the worst per-phase complex-power mismatch between
the PQ constraint and the final (V, I) pair, so convergence certifies the
solution independent of the sweep internals.

Sign convention: ``injections_kw/kvar`` are net generation added at a
node (a PV plant is positive).  Node consumption is ``load - injection``.

Regulator branches apply their ideal per-phase ratio after the series
impedance drop: ``V_child = gain * (V_parent - Z J)`` with the parent-side
current ``gain * J``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import REFERENCE_PU, NetworkModel


class PowerFlowError(RuntimeError):
    """Load flow failed to reach the mismatch tolerance."""


@dataclass(frozen=True)
class VoltageSolution:
    """Converged load-flow state.

    ``v`` holds complex node voltages in volts, indexed like the network
    arrays; entries on absent phases are placeholders (the source
    reference scaled by the cumulative regulator ratio) and must be
    ignored via the network's phase mask.
    """

    v: np.ndarray            # (n,3) complex volts
    iterations: int
    residual_pu: float       # max per-phase power mismatch, pu of s_base
    residual_kva: float
    injections_kw: np.ndarray
    injections_kvar: np.ndarray

    def v_pu(self, v_base: float) -> np.ndarray:
        return self.v / v_base


def _levels(net: NetworkModel) -> list[np.ndarray]:
    """Node indices grouped by tree depth (root level excluded)."""
    out = []
    d = 1
    while True:
        idx = np.flatnonzero(net.depth == d)
        if idx.size == 0:
            return out
        out.append(idx)
        d += 1


def _as_batch(net, arr):
    if arr is None:
        return np.zeros((1, net.n_nodes, 3))
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    return arr


def solve_batch(net: NetworkModel, injections_kw=None, injections_kvar=None,
                *, tol: float = 1e-6, max_iter: int = 100):
    """Sweep solver over a batch of injection scenarios.

    Returns ``(v, iterations, residual_pu)`` with ``v`` of shape
    (batch, n, 3) in volts and per-scenario residuals.  Does not raise on
    non-convergence; callers inspect the residuals.
    """
    inj_kw = _as_batch(net, injections_kw)
    inj_kvar = _as_batch(net, injections_kvar)
    if inj_kw.shape != inj_kvar.shape or inj_kw.shape[1:] != (net.n_nodes, 3):
        raise ValueError("injection arrays must be (batch, n_nodes, 3)")
    batch = inj_kw.shape[0]

    mask = net.phase_mask
    s_cons = ((net.load_kw - inj_kw) + 1j * (net.load_kvar - inj_kvar)) * 1e3
    s_cons = np.where(mask, s_cons, 0.0)

    levels = _levels(net)
    ref = net.v_base * REFERENCE_PU
    v = np.broadcast_to(ref * net.gain_cum, (batch, net.n_nodes, 3)).copy()

    parent = net.parent
    gain = net.parent_gain
    z = net.parent_z
    residual = np.full(batch, np.inf)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        i_load = np.conj(s_cons / v) * mask
        # Backward: accumulate child-side branch currents toward the source.
        a = i_load.copy()
        for idx in reversed(levels):
            np.add.at(a, (slice(None), parent[idx]),
                      gain[idx] * a[:, idx, :])
        # Forward: push voltages down, one depth level at a time.
        v_new = v.copy()
        for idx in levels:
            drop = np.einsum("kpq,bkq->bkp", z[idx], gain[idx] * a[:, idx, :])
            v_new[:, idx, :] = gain[idx] * (v_new[:, parent[idx], :] - drop)
        # Mismatch of the PQ constraint with the updated voltages.
        mism = np.abs(s_cons - v_new * np.conj(i_load))
        residual = mism.max(axis=(1, 2)) / net.s_base
        v = v_new
        if (residual < tol).all():
            break
    return v, iterations, residual


def solve(net: NetworkModel, injections_kw=None, injections_kvar=None,
          *, tol: float = 1e-6, max_iter: int = 100) -> VoltageSolution:
    """Solve one loading case; raises PowerFlowError on non-convergence."""
    inj_kw = _as_batch(net, injections_kw)[0]
    inj_kvar = _as_batch(net, injections_kvar)[0]
    avail = (inj_kw != 0) | (inj_kvar != 0)
    if (avail & ~net.phase_mask).any():
        i, p = np.argwhere(avail & ~net.phase_mask)[0]
        raise ValueError(
            f"injection on absent phase {'abc'[p]} of node {net.nodes[i]}")
    v, iterations, residual = solve_batch(
        net, inj_kw[None], inj_kvar[None], tol=tol, max_iter=max_iter)
    if residual[0] >= tol:
        s_cons = ((net.load_kw - inj_kw) + 1j * (net.load_kvar - inj_kvar)) * 1e3
        i_load = np.conj(s_cons / v[0]) * net.phase_mask
        mism = np.abs(s_cons - v[0] * np.conj(i_load))
        worst = np.unravel_index(np.argmax(mism), mism.shape)
        raise PowerFlowError(
            f"no convergence in {max_iter} iterations; worst mismatch "
            f"{mism[worst] / 1e3:.3g} kVA at node {net.nodes[worst[0]]} "
            f"phase {'abc'[worst[1]]}")
    return VoltageSolution(
        v=v[0], iterations=iterations, residual_pu=float(residual[0]),
        residual_kva=float(residual[0]) * net.s_base / 1e3,
        injections_kw=inj_kw.copy(), injections_kvar=inj_kvar.copy())


def source_power_va(net: NetworkModel, v: np.ndarray) -> np.ndarray:
    """Per-phase complex power entering the feeder at the source (VA)."""
    s_cons = (net.load_kw + 1j * net.load_kvar) * 1e3
    i_load = np.conj(s_cons / v) * net.phase_mask
    a = i_load.astype(complex)
    for idx in reversed(_levels(net)):
        np.add.at(a, (net.parent[idx],), net.parent_gain[idx] * a[idx, :])
    return v[net.index[net.source]] * np.conj(a[net.index[net.source]])


def total_losses_va(net: NetworkModel, v: np.ndarray) -> complex:
    """Series losses summed over branches, from a solved voltage profile."""
    s_cons = (net.load_kw + 1j * net.load_kvar) * 1e3
    i_load = np.conj(s_cons / v) * net.phase_mask
    a = i_load.astype(complex)
    loss = 0.0 + 0.0j
    for idx in reversed(_levels(net)):
        np.add.at(a, (net.parent[idx],), net.parent_gain[idx] * a[idx, :])
    for j in range(net.n_nodes):
        if net.parent[j] < 0:
            continue
        jpri = net.parent_gain[j] * a[j]
        drop = net.parent_z[j] @ jpri
        loss += drop @ np.conj(jpri)
    return loss


def voltage_change_oracle(net: NetworkModel, base: VoltageSolution,
                          delta_kw=None, delta_kvar=None,
                          *, tol: float = 1e-6, max_iter: int = 100) -> np.ndarray:
    """Exact complex voltage change (volts) from extra injections.

    Re-solves the feeder with ``delta`` added to the base case's
    injections and returns the element-wise phasor difference.
    """
    dkw = _as_batch(net, delta_kw)[0]
    dkvar = _as_batch(net, delta_kvar)[0]
    sol = solve(net, base.injections_kw + dkw, base.injections_kvar + dkvar,
                tol=tol, max_iter=max_iter)
    return sol.v - base.v


def voltage_change_oracle_batch(net: NetworkModel, base: VoltageSolution,
                                delta_kw, delta_kvar,
                                *, tol: float = 1e-6, max_iter: int = 100):
    """Batched oracle. Returns (dv, residual_pu); no raise on failures."""
    dkw = _as_batch(net, delta_kw)
    dkvar = _as_batch(net, delta_kvar)
    v, _, residual = solve_batch(
        net, base.injections_kw + dkw, base.injections_kvar + dkvar,
        tol=tol, max_iter=max_iter)
    return v - base.v, residual
