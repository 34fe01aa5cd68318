"""PV hosting capacity by two routes: a scenario-based load-flow sweep and
the analytical future-voltage distribution scan.

Penetration levels run 1..100% of total feeder demand in 1% steps and are
grouped into bands; each band k deploys at least

    N_k = ceil(band midpoint % * total demand / max PV size)

units.  When a level's power split over N_k units would exceed the maximum
PV size, more units are deployed instead of capping the level's total
power (the unit count grows, the per-unit injection never exceeds the
maximum size).  Injections are unity-power-factor and split equally over
the three phases of each chosen node.

Load-flow route: per scenario and level, units are placed independently
and uniformly at random (with replacement, matching the analytical
assumption of independent locations); the scenario's capacity is the
first level whose violation count reaches the threshold, and the feeder
capacity is the minimum over scenarios.

Analytical route: per level, the future-voltage Rician at every node and
phase gives a violation probability; the first level where any node
exceeds the probability threshold is the capacity.  This route is fully
deterministic.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .feeder import PHASES, PHASE_INDEX, REFERENCE_PU, NetworkModel
from .moments import MomentError, PowerChangeModel
from .montecarlo import substream
from .powerflow import solve, solve_batch
from .sensitivity import default_candidates, path_statistics

DEFAULT_BANDS = ((0, 20), (21, 40), (41, 60), (61, 80), (81, 100))


def load_pv_size_table(path=None):
    """(sizes_kw, probabilities) of the bundled or given PV size table."""
    if path is None:
        text = resources.files("pvsense.data").joinpath("pv_sizes.csv") \
            .read_text(encoding="utf-8")
        rows = list(csv.DictReader(text.splitlines()))
    else:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    sizes = np.array([float(r["size_kw"]) for r in rows])
    probs = np.array([float(r["probability"]) for r in rows])
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("PV size probabilities must sum to 1")
    if (sizes <= 0).any() or (probs < 0).any():
        raise ValueError("PV size table entries must be positive")
    return sizes, probs


@dataclass(frozen=True)
class HCConfig:
    v_min: float = 0.95
    v_max: float = 1.05
    bands: tuple = DEFAULT_BANDS
    count_threshold: int = 1          # load-flow route: violating nodes
    prob_threshold: float = 0.5       # analytical route
    max_pv_size_kw: float | None = None   # None: maximum of the size table
    pv_table_path: str | None = None
    scenarios: int = 1000
    seed: int = 0
    sigma_p2_kw2: float = 5.0
    sigma_q2_kvar2: float = 0.5
    rho_p: float = 0.2
    rho_q: float = 0.2
    rho_pq: float = -0.5
    three_phase_candidates: bool = True
    levels: tuple = tuple(range(1, 101))
    scenario_chunk: int = 256

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise ValueError("require 0 < v_min < v_max")
        if not 0 <= self.prob_threshold <= 1:
            raise ValueError("prob_threshold must lie in [0, 1]")
        if self.count_threshold < 1:
            raise ValueError("count_threshold must be >= 1")
        lo_expected = 0
        for lo, hi in self.bands:
            if lo != lo_expected or hi <= lo:
                raise ValueError("bands must partition (0, 100] in order")
            lo_expected = hi + 1 if lo == 0 else hi + 1
        if self.bands[-1][1] != 100:
            raise ValueError("bands must end at 100")

    def resolve_max_pv(self) -> float:
        if self.max_pv_size_kw is not None:
            return self.max_pv_size_kw
        sizes, _ = load_pv_size_table(self.pv_table_path)
        return float(sizes.max())


@dataclass(frozen=True)
class LevelRecord:
    level: int
    n_units: int
    unit_kw: float
    violations: float          # node count (load flow) or max probability
    worst_node: str


@dataclass(frozen=True)
class HCResult:
    hc_percent: float
    method: str
    seconds: float
    records: tuple
    scenarios: int = 0
    discarded: int = 0

    def to_dict(self, include_timing: bool = False) -> dict:
        """Plain-dict form; timing is optional so that seeded runs stay
        byte-reproducible (wall-clock goes to the run manifest)."""
        out = {
            "hc_percent": self.hc_percent,
            "method": self.method,
            "scenarios": self.scenarios,
            "discarded": self.discarded,
            "levels": [
                {"level": r.level, "n_units": r.n_units,
                 "unit_kw": r.unit_kw, "violations": r.violations,
                 "worst_node": r.worst_node}
                for r in self.records],
        }
        if include_timing:
            out["seconds"] = self.seconds
        return out


def band_of(level: int, bands) -> tuple:
    for lo, hi in bands:
        if level <= hi:
            return (lo, hi)
    raise ValueError(f"level {level} beyond the last band")


def pv_units_for_band(band: tuple, total_demand_kw: float,
                      max_pv_size_kw: float) -> int:
    """Minimum unit count for a band: band-midpoint power over max size."""
    if max_pv_size_kw <= 0:
        raise ValueError("max PV size must be positive")
    lo, hi = band
    midpoint_kw = (lo + hi) / 2 / 100.0 * total_demand_kw
    return max(1, math.ceil(midpoint_kw / max_pv_size_kw))


def units_for_level(level: int, total_demand_kw: float, cfg: HCConfig,
                    max_pv: float):
    """(unit count, per-unit kW) at a level; per-unit never exceeds max."""
    p_level = level / 100.0 * total_demand_kw
    n = pv_units_for_band(band_of(level, cfg.bands), total_demand_kw, max_pv)
    n = max(n, math.ceil(p_level / max_pv))
    return n, p_level / n


def _base_pcm(net: NetworkModel, cfg: HCConfig) -> PowerChangeModel:
    return PowerChangeModel.from_phase_params(
        net.s_base, sigma_p2_kw2=cfg.sigma_p2_kw2,
        sigma_q2_kvar2=cfg.sigma_q2_kvar2, rho_p=cfg.rho_p, rho_q=cfg.rho_q,
        rho_pq=cfg.rho_pq)


class _AnalyticScan:
    """Per-node coefficient tables for the level sweep.

    With the level mean ``mu = unit_kw * w`` along a fixed direction w,
    each node's moments are linear/quadratic in unit_kw with constant
    coefficients, so the whole feeder scan is plain array arithmetic per
    level.  Produces exactly the same numbers as chaining the public
    operations (see tests).
    """

    def __init__(self, net: NetworkModel, cfg: HCConfig):
        base = solve(net)
        v_pu = base.v / net.v_base
        candidates = default_candidates(
            net, three_phase_only=cfg.three_phase_candidates)
        pcm0 = _base_pcm(net, cfg)
        self.sigma = pcm0.sigma
        self.pcm0 = pcm0
        # unity-pf injection split over three phases, consumption-negative
        w = np.zeros(6)
        w[:3] = -(1.0 / 3.0) * 1e3 / net.s_base
        self.w = w

        labels, rows = [], []
        for i, nid in enumerate(net.nodes):
            if nid == net.source:
                continue
            for p, pix in PHASE_INDEX.items():
                if not net.phase_mask[i, pix]:
                    continue
                st = path_statistics(net, nid, p, candidates)
                frame = v_pu[i, pix] * np.conj(REFERENCE_PU[pix])
                labels.append(f"{nid}.{p}")
                rows.append((st, frame))
        self.labels = labels
        s = self.sigma
        cx = pcm0.cross
        n = len(rows)
        self.base_re = np.array([c.real for _, c in rows])
        self.base_im = np.array([c.imag for _, c in rows])
        self.a_r = np.empty(n)
        self.a_i = np.empty(n)
        self.q_r = np.empty(n)
        self.q_i = np.empty(n)
        self.q_ri = np.empty(n)
        self.t_r = np.empty(n)
        self.t_i = np.empty(n)
        self.t_ri = np.empty(n)
        self.cov_rr = np.empty(n)
        self.cov_ii = np.empty(n)
        self.cov_ri = np.empty(n)
        for k, (st, _) in enumerate(rows):
            self.a_r[k] = st.mu_z_r @ w
            self.a_i[k] = st.mu_z_i @ w
            self.q_r[k] = w @ st.cov_z_r @ w
            self.q_i[k] = w @ st.cov_z_i @ w
            self.q_ri[k] = w @ st.cov_ri @ w
            self.t_r[k] = st.mu_z_r @ s @ st.mu_z_r + np.trace(st.cov_z_r @ s)
            self.t_i[k] = st.mu_z_i @ s @ st.mu_z_i + np.trace(st.cov_z_i @ s)
            self.t_ri[k] = st.mu_z_r @ s @ st.mu_z_i + np.trace(st.cov_ri.T @ s)
            self.cov_rr[k] = st.mu_z_r @ cx @ st.mu_z_r
            self.cov_ii[k] = st.mu_z_i @ cx @ st.mu_z_i
            self.cov_ri[k] = st.mu_z_r @ cx @ st.mu_z_i

    def violation_probabilities(self, n_units: int, unit_kw: float,
                                v_min: float, v_max: float) -> np.ndarray:
        from .distributions import VAR_FLOOR, rice_cdf, rice_sf
        n, u = n_units, unit_kw
        pair = n * (n - 1)
        mu_r = self.base_re + n * u * self.a_r
        mu_i = self.base_im + n * u * self.a_i
        var_r = n * (u * u * self.q_r + self.t_r) + pair * self.cov_rr
        var_i = n * (u * u * self.q_i + self.t_i) + pair * self.cov_ii
        if (var_r < -1e-18).any() or (var_i < -1e-18).any():
            raise MomentError("aggregate variance negative; inconsistent "
                              "cross-actor correlations")
        w_r = np.maximum(var_r, VAR_FLOOR)
        w_i = np.maximum(var_i, VAR_FLOOR)
        d_r2 = mu_r ** 2 / w_r
        d_i2 = mu_i ** 2 / w_i
        a_r = 1.0 + 2.0 * d_r2
        a_i = 1.0 + 2.0 * d_i2
        num = w_r * a_r + w_i * a_i
        den = w_r ** 2 * a_r + w_i ** 2 * a_i
        lam = den / num
        w_nc = np.maximum((w_r * d_r2 + w_i * d_i2) * num / den, 0.0)
        sigma = np.sqrt(lam)
        nu = np.sqrt(w_nc) * sigma
        prob = rice_cdf(nu, sigma, v_min) + rice_sf(nu, sigma, v_max)
        return np.minimum(prob, 1.0)


def hc_stpvsa(net: NetworkModel, cfg: HCConfig | None = None) -> HCResult:
    """Analytical hosting capacity from the future-voltage distributions."""
    cfg = cfg or HCConfig()
    t0 = time.perf_counter()
    max_pv = cfg.resolve_max_pv()
    demand = net.total_demand_kw
    scan = _AnalyticScan(net, cfg)

    records = []
    hc = 100.0
    for level in cfg.levels:
        n_units, unit_kw = units_for_level(level, demand, cfg, max_pv)
        probs = scan.violation_probabilities(n_units, unit_kw,
                                             cfg.v_min, cfg.v_max)
        worst = int(np.argmax(probs))
        records.append(LevelRecord(level=level, n_units=n_units,
                                   unit_kw=unit_kw,
                                   violations=float(probs[worst]),
                                   worst_node=scan.labels[worst]))
        if probs[worst] > cfg.prob_threshold:
            hc = float(level)
            break
    return HCResult(hc_percent=hc, method="stpvsa",
                    seconds=time.perf_counter() - t0, records=tuple(records))


def hc_loadflow(net: NetworkModel, cfg: HCConfig | None = None,
                threads: int = 1) -> HCResult:
    """Scenario-based load-flow hosting capacity (minimum over scenarios)."""
    cfg = cfg or HCConfig()
    t0 = time.perf_counter()
    max_pv = cfg.resolve_max_pv()
    demand = net.total_demand_kw
    solve(net)   # certifies the base case converges
    candidates = default_candidates(
        net, three_phase_only=cfg.three_phase_candidates)
    cand_idx = np.array([net.node_index(c) for c in candidates])
    cand_nphase = net.phase_mask[cand_idx].sum(axis=1)

    rngs = [substream(cfg.seed, s) for s in range(cfg.scenarios)]
    scen_hc = np.full(cfg.scenarios, 101, dtype=int)
    discarded = np.zeros(cfg.scenarios, dtype=bool)
    records = []

    for level in cfg.levels:
        alive = np.flatnonzero((scen_hc > 100) & ~discarded)
        if alive.size == 0:
            break
        n_units, unit_kw = units_for_level(level, demand, cfg, max_pv)
        delta_kw = np.zeros((alive.size, net.n_nodes, 3))
        for row, s in enumerate(alive):
            place = rngs[s].integers(0, len(cand_idx), size=n_units)
            nodes = cand_idx[place]
            per_phase = unit_kw / cand_nphase[place]
            np.add.at(delta_kw[row], (nodes,),
                      per_phase[:, None] * net.phase_mask[nodes])

        def solve_rows(rows):
            return solve_batch(net, delta_kw[rows], np.zeros_like(delta_kw[rows]))

        if threads > 1 and alive.size > cfg.scenario_chunk:
            chunks = [np.arange(i, min(i + cfg.scenario_chunk, alive.size))
                      for i in range(0, alive.size, cfg.scenario_chunk)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(solve_rows, chunks))
            v = np.concatenate([o[0] for o in outs])
            residual = np.concatenate([o[2] for o in outs])
        else:
            v, _, residual = solve_rows(np.arange(alive.size))

        failed = residual >= 1e-6
        if failed.any():
            discarded[alive[failed]] = True
            if discarded.sum() > 0.01 * cfg.scenarios:
                raise RuntimeError(
                    f"{int(discarded.sum())} scenarios discarded for "
                    "non-convergence (> 1%)")
        vm = np.abs(v) / net.v_base
        out_of_band = ((vm < cfg.v_min) | (vm > cfg.v_max)) & net.phase_mask
        node_bad = out_of_band.any(axis=2)
        counts = node_bad.sum(axis=1)
        counts[failed] = 0
        hit = counts >= cfg.count_threshold
        scen_hc[alive[hit]] = level

        worst_node = ""
        if hit.any():
            r = int(np.argmax(counts))
            i = int(np.argmax(node_bad[r]))
            worst_node = net.nodes[i]
        records.append(LevelRecord(
            level=level, n_units=n_units, unit_kw=unit_kw,
            violations=float(counts.mean()), worst_node=worst_node))

    valid = scen_hc[~discarded]
    hc = float(min(valid.min(), 100)) if valid.size else 100.0
    return HCResult(hc_percent=hc, method="loadflow",
                    seconds=time.perf_counter() - t0, records=tuple(records),
                    scenarios=cfg.scenarios, discarded=int(discarded.sum()))
