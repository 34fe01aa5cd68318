"""Empirical voltage-change distributions via the load-flow oracle, and
distribution distance metrics.

Sampling is reproducible and thread-count independent: work is split into
fixed-size chunks, each chunk derives its own generator from
``(seed, chunk_index)``, and chunk results are merged in order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .feeder import PHASE_INDEX, NetworkModel
from .moments import MomentError, PowerChangeModel
from .powerflow import VoltageSolution, solve, voltage_change_oracle_batch
from .sensitivity import default_candidates

JS_FLOOR = 1e-12


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin histogram."""

    edges: np.ndarray    # (k+1,) strictly increasing
    counts: np.ndarray   # (k,) non-negative
    n: int

    def __post_init__(self):
        if (np.diff(self.edges) <= 0).any():
            raise ValueError("bin edges must be strictly increasing")
        if int(self.counts.sum()) != self.n:
            raise ValueError("counts must sum to n")

    @classmethod
    def from_samples(cls, samples, bins: int = 200, lo: float = 0.0,
                     hi: float | None = None) -> "Histogram":
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise ValueError("empty sample set")
        if hi is None:
            hi = 1.2 * float(samples.max())
            if hi <= lo:
                hi = lo + 1.0   # degenerate all-equal samples
        counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
        return cls(edges=edges, counts=counts, n=int(samples.size))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return (self.edges[:-1] + self.edges[1:]) / 2

    def masses(self) -> np.ndarray:
        return self.counts / self.n

    def density(self) -> np.ndarray:
        return self.masses() / self.widths

    def rebinned(self, edges: np.ndarray) -> np.ndarray:
        """Masses redistributed onto foreign edges by interval overlap."""
        edges = np.asarray(edges, dtype=float)
        out = np.zeros(len(edges) - 1)
        m = self.masses()
        for i, (a, b) in enumerate(zip(self.edges[:-1], self.edges[1:])):
            if m[i] == 0:
                continue
            lo_idx = np.searchsorted(edges, a, side="right") - 1
            hi_idx = np.searchsorted(edges, b, side="left")
            for j in range(max(lo_idx, 0), min(hi_idx, len(out))):
                overlap = min(b, edges[j + 1]) - max(a, edges[j])
                if overlap > 0:
                    out[j] += m[i] * overlap / (b - a)
        return out


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic independent generator for (seed, key...)."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))))


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, q = np.linalg.eigh((cov + cov.T) / 2)
        if w.min() < -1e-9 * max(np.trace(cov), 1e-30):
            raise MomentError("covariance is not positive semidefinite") from None
        return q * np.sqrt(np.clip(w, 0.0, None))


def sample_power_changes(pcm: PowerChangeModel, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """(n, 6) Gaussian draws of one actor's power-change vector (pu)."""
    fac = _psd_factor(pcm.sigma)
    return pcm.mu + rng.standard_normal((n, fac.shape[1])) @ fac.T


def joint_actor_covariance(pcm: PowerChangeModel, m: int) -> np.ndarray:
    """(6m, 6m) covariance of m actors' stacked power-change vectors."""
    eye = np.eye(m)
    return np.kron(eye, pcm.sigma - pcm.cross) + np.kron(np.ones((m, m)), pcm.cross)


def sample_joint_power_changes(pcm: PowerChangeModel, m: int, n: int,
                               rng: np.random.Generator) -> np.ndarray:
    """(n, m, 6) draws over m actors with the cross-actor correlations."""
    if m == 1:
        return sample_power_changes(pcm, n, rng)[:, None, :]
    fac = _psd_factor(joint_actor_covariance(pcm, m))
    flat = np.tile(pcm.mu, m) + rng.standard_normal((n, fac.shape[1])) @ fac.T
    return flat.reshape(n, m, 6)


@dataclass(frozen=True)
class ScenarioConfig:
    """One empirical-distribution experiment.

    ``actors`` fixes the actor nodes; when None, ``n_actors`` nodes are
    redrawn uniformly without replacement from ``candidates`` for every
    sample, which matches the location-marginal the analytical
    distribution describes.
    """

    observation_node: str
    phase: str = "a"
    n_actors: int = 9
    pcm: PowerChangeModel | None = None
    n_samples: int = 100_000
    seed: int = 0
    actors: tuple | None = None
    candidates: tuple | None = None
    bins: int = 200
    chunk_size: int = 8192

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("sample count must be >= 1")
        if self.actors is not None and len(self.actors) == 0:
            raise ValueError("actor set must be non-empty")
        if self.n_actors < 1:
            raise ValueError("n_actors must be >= 1")


@dataclass(frozen=True)
class EmpiricalDistribution:
    dv_pu: np.ndarray           # |dV| samples at the observation node, pu
    v_future_pu: np.ndarray     # |V_base + dV| samples, pu
    n_failed: int
    n_total: int
    bins: int

    def dv_histogram(self, bins: int | None = None) -> Histogram:
        return Histogram.from_samples(self.dv_pu, bins=bins or self.bins)

    def v_future_histogram(self, bins: int | None = None) -> Histogram:
        return Histogram.from_samples(self.v_future_pu, bins=bins or self.bins)


def empirical_voltage_distribution(net: NetworkModel, cfg: ScenarioConfig,
                                   base: VoltageSolution | None = None,
                                   threads: int = 1) -> EmpiricalDistribution:
    """Monte-Carlo |dV| (and |V_future|) at the observation node.

    Draws correlated per-actor power changes, runs the load-flow oracle
    for each sample, and collects per-unit magnitudes.  Solver failures
    are counted; more than 1% aborts the run.
    """
    if cfg.pcm is None:
        raise ValueError("ScenarioConfig.pcm is required")
    if base is None:
        base = solve(net)
    obs = net.node_index(cfg.observation_node)
    pix = PHASE_INDEX[cfg.phase]
    if not net.phase_mask[obs, pix]:
        raise ValueError(f"phase {cfg.phase} absent at {cfg.observation_node}")
    candidates = list(cfg.candidates) if cfg.candidates is not None \
        else default_candidates(net)
    cand_idx = np.array([net.node_index(c) for c in candidates])
    m = cfg.n_actors if cfg.actors is None else len(cfg.actors)
    if cfg.actors is None and m > len(candidates):
        raise ValueError("more actors than candidate nodes")
    fixed_idx = None
    if cfg.actors is not None:
        fixed_idx = np.array([net.node_index(a) for a in cfg.actors])

    fac = _psd_factor(joint_actor_covariance(cfg.pcm, m)) if m > 1 \
        else _psd_factor(cfg.pcm.sigma)
    mu_flat = np.tile(cfg.pcm.mu, m)
    kw_scale = net.s_base / 1e3
    base_v_obs = base.v[obs, pix]

    n_chunks = math.ceil(cfg.n_samples / cfg.chunk_size)

    def run_chunk(ci: int):
        n_here = min(cfg.chunk_size, cfg.n_samples - ci * cfg.chunk_size)
        rng = substream(cfg.seed, ci)
        draws = mu_flat + rng.standard_normal((n_here, fac.shape[1])) @ fac.T
        draws = draws.reshape(n_here, m, 6)
        if fixed_idx is not None:
            place = np.broadcast_to(fixed_idx, (n_here, m))
        else:
            # Uniform without replacement per sample.
            keys = rng.random((n_here, len(cand_idx)))
            place = cand_idx[np.argpartition(keys, m - 1, axis=1)[:, :m]]
        # Consumption-positive pu -> generation-positive kW deltas.
        dkw = np.zeros((n_here, net.n_nodes, 3))
        dkvar = np.zeros((n_here, net.n_nodes, 3))
        rows = np.arange(n_here)[:, None]
        np.add.at(dkw, (rows, place), -draws[:, :, 0:3] * kw_scale)
        np.add.at(dkvar, (rows, place), -draws[:, :, 3:6] * kw_scale)
        avail = net.phase_mask[None, :, :]
        dkw *= avail
        dkvar *= avail
        dv, residual = voltage_change_oracle_batch(net, base, dkw, dkvar)
        ok = residual < 1e-6
        dv_obs = np.abs(dv[ok, obs, pix]) / net.v_base
        vf_obs = np.abs(base_v_obs + dv[ok, obs, pix]) / net.v_base
        return dv_obs, vf_obs, int((~ok).sum())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, range(n_chunks)))
    else:
        parts = [run_chunk(ci) for ci in range(n_chunks)]

    dv = np.concatenate([p[0] for p in parts])
    vf = np.concatenate([p[1] for p in parts])
    n_failed = sum(p[2] for p in parts)
    if n_failed > 0.01 * cfg.n_samples:
        raise RuntimeError(
            f"{n_failed} of {cfg.n_samples} load flows failed to converge")
    return EmpiricalDistribution(dv_pu=dv, v_future_pu=vf, n_failed=n_failed,
                                 n_total=cfg.n_samples, bins=cfg.bins)


def _js_divergence(p: np.ndarray, q: np.ndarray, base: float = 2.0) -> float:
    p = np.maximum(p, JS_FLOOR)
    q = np.maximum(q, JS_FLOOR)
    p = p / p.sum()
    q = q / q.sum()
    mid = (p + q) / 2
    kl_p = np.sum(p * np.log(p / mid))
    kl_q = np.sum(q * np.log(q / mid))
    return float((kl_p + kl_q) / (2 * np.log(base)))


def js_distance(p: Histogram, q, *, base: float = 2.0) -> float:
    """Jensen-Shannon distance between a histogram and a second histogram
    or a density object (anything with a ``pdf`` method).

    The density is discretized on p's bins by the midpoint rule; with the
    base-2 convention the result lies in [0, 1].
    """
    if p.n == 0:
        raise ValueError("empty histogram")
    if isinstance(q, Histogram):
        if q.n == 0:
            raise ValueError("empty histogram")
        if np.array_equal(q.edges, p.edges):
            pm, qm = p.masses(), q.masses()
        else:
            # rebin both onto a shared uniform grid spanning the union of
            # supports, so disjoint histograms come out maximally distant
            lo = min(p.edges[0], q.edges[0])
            hi = max(p.edges[-1], q.edges[-1])
            edges = np.linspace(lo, hi, max(len(p.edges), len(q.edges)))
            pm, qm = p.rebinned(edges), q.rebinned(edges)
    elif hasattr(q, "pdf"):
        pm = p.masses()
        qm = np.asarray(q.pdf(p.centers), dtype=float) * p.widths
        tot = qm.sum()
        if tot < 1e-12:
            return 1.0   # density lives entirely outside the histogram
        qm = qm / tot
    else:
        raise TypeError("q must be a Histogram or expose pdf()")
    return math.sqrt(_js_divergence(pm, qm, base=base))
