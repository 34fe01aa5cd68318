"""Unbalanced radial feeder model and the feeder file format.

A feeder is a radial (tree) network of three-phase nodes.  Each branch
carries a 3x3 complex series impedance matrix in ohms, row/column order
``a, b, c``; entries of phases a branch does not carry are exactly zero.
Loads are constant-PQ, per node and phase, in kW / kvar.  The source node
is held at the reference phasors ``1/0, 1/-120, 1/+120`` pu of the
line-to-neutral base voltage.

Voltage-regulator branches additionally carry a per-phase ideal voltage
ratio ("gain"): the downstream voltage is ``gain * (V_up - Z J)``.  Plain
lines have gain 1.

File format (structured text, ``#`` starts a comment)::

    [meta]
    name = ieee37
    v_nominal_kv = 4.8          # system line-to-line kV
    source = 799

    [nodes]                     # id  phases
    799  abc

    [branches]                  # from to  then 9 entries r+jx in ohms,
    799  701  0.10+j0.07 ...    # row-major phase order aa ab ac ba .. cc

    [loads]                     # node  phase  kw  kvar
    701  a  245.0  122.5

    [regulators]                # from  to  gain_a  gain_b  gain_c
    799  701  1.04375 1.04375 1.04375

The ``[regulators]`` section is an optional extension; files without it
parse unchanged.
"""
from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass
from importlib import resources

import numpy as np

PHASES = "abc"
PHASE_INDEX = {"a": 0, "b": 1, "c": 2}

#: Source reference phasors in pu: 1/0, 1/-120, 1/+120 degrees.
REFERENCE_PU = np.exp(1j * np.deg2rad([0.0, -120.0, 120.0]))

#: Default per-phase power base, volt-ampere.
DEFAULT_S_BASE = 1.0e6


class FeederError(ValueError):
    """Invalid feeder description: syntax or electrical consistency."""


@dataclass(frozen=True)
class Branch:
    u: str
    v: str
    z: np.ndarray      # (3,3) complex ohms
    gain: np.ndarray   # (3,) real ideal voltage ratios, 1.0 for plain lines


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Validated radial feeder. Immutable; safe to share across workers.

    Arrays are indexed by ``index[node_id]``.  ``z_cum[i]`` is the summed
    branch impedance from the source down to node i, so the shared-path
    impedance of two nodes is ``z_cum`` at their deepest common ancestor.
    Entries of ``v`` arrays on absent phases are meaningless; consult
    ``phase_mask``.
    """

    name: str
    nodes: tuple[str, ...]
    source: str
    v_base: float                 # line-to-neutral volts
    s_base: float                 # per-phase VA
    phase_mask: np.ndarray        # (n,3) bool
    load_kw: np.ndarray           # (n,3)
    load_kvar: np.ndarray         # (n,3)
    branches: tuple[Branch, ...]
    index: dict
    parent: np.ndarray            # (n,) int, -1 at source
    parent_z: np.ndarray          # (n,3,3) complex ohms, zeros at source
    parent_gain: np.ndarray       # (n,3) real, ones at source
    depth: np.ndarray             # (n,) int
    order: np.ndarray             # (n,) int, topological from source
    z_cum: np.ndarray             # (n,3,3) complex ohms
    z_cum_eff: np.ndarray         # (n,3,3) ohms referred through regulator ratios
    gain_cum: np.ndarray          # (n,3) real, cumulative ratio to source

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def z_base(self) -> float:
        return self.v_base ** 2 / self.s_base

    @property
    def total_demand_kw(self) -> float:
        return float(self.load_kw.sum())

    def phases_of(self, node: str) -> str:
        i = self.node_index(node)
        return "".join(p for p in PHASES if self.phase_mask[i, PHASE_INDEX[p]])

    def node_index(self, node: str) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise FeederError(f"unknown node id {node!r}") from None


def _build(name, node_ids, node_phases, source, v_base, s_base,
           branches, loads) -> NetworkModel:
    n = len(node_ids)
    index = {nid: i for i, nid in enumerate(node_ids)}
    if source not in index:
        raise FeederError(f"source node {source!r} is not in [nodes]")

    phase_mask = np.zeros((n, 3), dtype=bool)
    for nid, ph in node_phases.items():
        for p in ph:
            phase_mask[index[nid], PHASE_INDEX[p]] = True

    # Adjacency; detect cycles and disconnection by BFS from the source.
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for bi, br in enumerate(branches):
        iu, iv = index[br.u], index[br.v]
        adj[iu].append((iv, bi))
        adj[iv].append((iu, bi))

    parent = np.full(n, -1, dtype=int)
    parent_branch = np.full(n, -1, dtype=int)
    depth = np.zeros(n, dtype=int)
    visited = np.zeros(n, dtype=bool)
    src = index[source]
    visited[src] = True
    frontier = [src]
    order = [src]
    while frontier:
        nxt = []
        for i in frontier:
            for j, bi in adj[i]:
                if bi == parent_branch[i]:
                    continue
                if visited[j]:
                    raise FeederError(
                        f"cycle detected through branch {branches[bi].u}-{branches[bi].v}")
                visited[j] = True
                parent[j] = i
                parent_branch[j] = bi
                depth[j] = depth[i] + 1
                nxt.append(j)
                order.append(j)
        frontier = nxt
    if not visited.all():
        missing = [node_ids[i] for i in np.flatnonzero(~visited)]
        raise FeederError(f"disconnected node(s): {', '.join(missing[:5])}")
    if len(branches) != n - 1:
        raise FeederError(
            f"{len(branches)} branches for {n} nodes; a radial feeder needs {n - 1}")

    # Orient branch data parent -> child.
    parent_z = np.zeros((n, 3, 3), dtype=complex)
    parent_gain = np.ones((n, 3))
    for j in range(n):
        bi = parent_branch[j]
        if bi < 0:
            continue
        br = branches[bi]
        parent_z[j] = br.z
        parent_gain[j] = br.gain
        b_mask = np.abs(np.diag(br.z)) > 0
        # A branch with an all-zero matrix (ideal jumper) carries the phases
        # of its shallower endpoint.
        if not b_mask.any():
            b_mask = phase_mask[parent[j]]
        if (phase_mask[j] & ~b_mask).any():
            raise FeederError(
                f"node {node_ids[j]} declares phases its supply branch "
                f"{br.u}-{br.v} does not carry")
        if (b_mask & ~phase_mask[parent[j]]).any():
            raise FeederError(
                f"branch {br.u}-{br.v} carries phases absent at {node_ids[parent[j]]}")

    order = np.asarray(order, dtype=int)
    z_cum = np.zeros((n, 3, 3), dtype=complex)
    z_cum_eff = np.zeros((n, 3, 3), dtype=complex)
    gain_cum = np.ones((n, 3))
    for j in order[1:]:
        z_cum[j] = z_cum[parent[j]] + parent_z[j]
        gain_cum[j] = gain_cum[parent[j]] * parent_gain[j]
        # Impedance seen from the source side of upstream regulators:
        # an ideal ratio g refers a downstream Z as Z / g^2.
        inv_g = 1.0 / gain_cum[parent[j]]
        z_cum_eff[j] = z_cum_eff[parent[j]] \
            + inv_g[:, None] * parent_z[j] * inv_g[None, :]

    load_kw = np.zeros((n, 3))
    load_kvar = np.zeros((n, 3))
    for (nid, p), (kw, kvar) in loads.items():
        i, pi = index[nid], PHASE_INDEX[p]
        if not phase_mask[i, pi]:
            raise FeederError(f"load on absent phase {p!r} of node {nid}")
        load_kw[i, pi] += kw
        load_kvar[i, pi] += kvar

    return NetworkModel(
        name=name, nodes=tuple(node_ids), source=source,
        v_base=v_base, s_base=s_base, phase_mask=phase_mask,
        load_kw=load_kw, load_kvar=load_kvar, branches=tuple(branches),
        index=index, parent=parent, parent_z=parent_z, parent_gain=parent_gain,
        depth=depth, order=order, z_cum=z_cum, z_cum_eff=z_cum_eff,
        gain_cum=gain_cum)


_COMPLEX_RE = re.compile(r"^([^j]+?)([+-])j([0-9.eE+-]+)$")


def parse_complex(token: str) -> complex:
    m = _COMPLEX_RE.match(token)
    if not m:
        raise ValueError(f"expected r+jx, got {token!r}")
    re_part = float(m.group(1))
    im_part = float(m.group(3))
    return complex(re_part, im_part if m.group(2) == "+" else -im_part)


def format_complex(z: complex) -> str:
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real:.6g}{sign}j{abs(z.imag):.6g}"


def load_feeder(source: str, *, s_base: float = DEFAULT_S_BASE) -> NetworkModel:
    """Parse feeder file content (the text itself, not a path).

    Raises FeederError with a line number on malformed input, and on
    electrical inconsistencies (cycles, disconnected nodes, loads on
    absent phases, asymmetric impedance matrices).
    """
    meta: dict[str, str] = {}
    node_ids: list[str] = []
    node_phases: dict[str, str] = {}
    branch_rows: list[tuple[int, list[str]]] = []
    load_rows: list[tuple[int, list[str]]] = []
    reg_rows: list[tuple[int, list[str]]] = []
    section = None
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise FeederError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip().lower()
            if section not in ("meta", "nodes", "branches", "loads", "regulators"):
                raise FeederError(f"line {lineno}: unknown section {section!r}")
            continue
        if section == "meta":
            if "=" not in line:
                raise FeederError(f"line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
        elif section == "nodes":
            parts = line.split()
            if len(parts) != 2:
                raise FeederError(f"line {lineno}: expected 'id phases'")
            nid, ph = parts
            if nid in node_phases:
                raise FeederError(f"line {lineno}: duplicate node {nid!r}")
            if not ph or any(c not in PHASES for c in ph):
                raise FeederError(f"line {lineno}: bad phase set {ph!r}")
            node_ids.append(nid)
            node_phases[nid] = ph
        elif section == "branches":
            branch_rows.append((lineno, line.split()))
        elif section == "loads":
            load_rows.append((lineno, line.split()))
        elif section == "regulators":
            reg_rows.append((lineno, line.split()))
        else:
            raise FeederError(f"line {lineno}: content before any section")

    for key in ("name", "v_nominal_kv", "source"):
        if key not in meta:
            raise FeederError(f"[meta] is missing {key!r}")
    try:
        v_ll_kv = float(meta["v_nominal_kv"])
    except ValueError:
        raise FeederError(f"bad v_nominal_kv {meta['v_nominal_kv']!r}") from None
    if v_ll_kv <= 0:
        raise FeederError("v_nominal_kv must be positive")
    v_base = v_ll_kv * 1e3 / math.sqrt(3.0)

    gains: dict[tuple[str, str], np.ndarray] = {}
    for lineno, parts in reg_rows:
        if len(parts) != 5:
            raise FeederError(f"line {lineno}: expected 'from to gain_a gain_b gain_c'")
        try:
            g = np.array([float(x) for x in parts[2:]])
        except ValueError:
            raise FeederError(f"line {lineno}: bad gain value") from None
        if (g <= 0).any():
            raise FeederError(f"line {lineno}: gains must be positive")
        gains[(parts[0], parts[1])] = g

    branches: list[Branch] = []
    seen_pairs = set()
    for lineno, parts in branch_rows:
        if len(parts) != 11:
            raise FeederError(
                f"line {lineno}: expected 'from to' + 9 impedance entries, got "
                f"{len(parts)} fields")
        u, v = parts[0], parts[1]
        for end in (u, v):
            if end not in node_phases:
                raise FeederError(f"line {lineno}: unknown node id {end!r}")
        key = (u, v) if u <= v else (v, u)
        if key in seen_pairs:
            raise FeederError(f"line {lineno}: duplicate branch {u}-{v}")
        seen_pairs.add(key)
        try:
            entries = [parse_complex(tok) for tok in parts[2:]]
        except ValueError as exc:
            raise FeederError(f"line {lineno}: {exc}") from None
        z = np.array(entries, dtype=complex).reshape(3, 3)
        if not np.allclose(z, z.T, rtol=0, atol=1e-12):
            raise FeederError(f"line {lineno}: impedance matrix is not symmetric")
        if (z.real.diagonal() < -1e-12).any():
            raise FeederError(f"line {lineno}: negative branch resistance")
        diag_absent = np.abs(np.diag(z)) == 0
        off = z.copy()
        np.fill_diagonal(off, 0)
        if np.abs(off[diag_absent]).any() or np.abs(off[:, diag_absent]).any():
            raise FeederError(
                f"line {lineno}: mutual terms present for an absent phase")
        g = gains.pop((u, v), None)
        if g is None:
            g = gains.pop((v, u), None)
        branches.append(Branch(u=u, v=v, z=z, gain=g if g is not None else np.ones(3)))
    if gains:
        u, v = next(iter(gains))
        raise FeederError(f"[regulators] entry {u}-{v} does not match any branch")

    loads: dict[tuple[str, str], tuple[float, float]] = {}
    for lineno, parts in load_rows:
        if len(parts) != 4:
            raise FeederError(f"line {lineno}: expected 'node phase kw kvar'")
        nid, p = parts[0], parts[1]
        if nid not in node_phases:
            raise FeederError(f"line {lineno}: unknown node id {nid!r}")
        if p not in PHASE_INDEX:
            raise FeederError(f"line {lineno}: bad phase {p!r}")
        try:
            kw, kvar = float(parts[2]), float(parts[3])
        except ValueError:
            raise FeederError(f"line {lineno}: bad load value") from None
        prev = loads.get((nid, p), (0.0, 0.0))
        loads[(nid, p)] = (prev[0] + kw, prev[1] + kvar)

    return _build(meta["name"], node_ids, node_phases, meta["source"],
                  v_base, s_base, branches, loads)


def load_feeder_path(path, *, s_base: float = DEFAULT_S_BASE) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return load_feeder(fh.read(), s_base=s_base)


def bundled_feeder_text(name: str) -> str:
    """Text of a bundled feeder ('ieee37' or 'ieee123')."""
    ref = resources.files("pvsense.data").joinpath(f"{name}.feeder")
    if not ref.is_file():
        raise FeederError(f"no bundled feeder named {name!r}")
    return ref.read_text(encoding="utf-8")


def load_bundled(name: str, *, s_base: float = DEFAULT_S_BASE) -> NetworkModel:
    return load_feeder(bundled_feeder_text(name), s_base=s_base)


def dump_feeder(net: NetworkModel, v_ll_kv: float | None = None) -> str:
    """Serialize a model back to the feeder file format."""
    if v_ll_kv is None:
        v_ll_kv = net.v_base * math.sqrt(3.0) / 1e3
    out = [
        "[meta]",
        f"name = {net.name}",
        f"v_nominal_kv = {v_ll_kv:g}",
        f"source = {net.source}",
        "",
        "[nodes]",
        "# id  phases",
    ]
    for nid in net.nodes:
        out.append(f"{nid}  {net.phases_of(nid)}")
    out += ["", "[branches]", "# from  to  z_aa..z_cc [ohm, row-major]"]
    regs = []
    for br in net.branches:
        entries = " ".join(format_complex(z) for z in br.z.ravel())
        out.append(f"{br.u}  {br.v}  {entries}")
        if not np.allclose(br.gain, 1.0):
            regs.append(f"{br.u}  {br.v}  " + "  ".join(f"{g:.6f}" for g in br.gain))
    out += ["", "[loads]", "# node  phase  kw  kvar"]
    for i, nid in enumerate(net.nodes):
        for p, pi in PHASE_INDEX.items():
            kw, kvar = net.load_kw[i, pi], net.load_kvar[i, pi]
            if kw or kvar:
                out.append(f"{nid}  {p}  {kw:g}  {kvar:g}")
    if regs:
        out += ["", "[regulators]", "# from  to  gain_a  gain_b  gain_c"]
        out += regs
    return "\n".join(out) + "\n"


def lca_index(net: NetworkModel, i: int, j: int) -> int:
    """Deepest common ancestor of two node indices."""
    while net.depth[i] > net.depth[j]:
        i = net.parent[i]
    while net.depth[j] > net.depth[i]:
        j = net.parent[j]
    while i != j:
        i = net.parent[i]
        j = net.parent[j]
    return i


_LCA_TABLES = weakref.WeakKeyDictionary()


def lca_table(net: NetworkModel) -> np.ndarray:
    """(n, n) matrix of deepest-common-ancestor indices, cached per model."""
    tab = _LCA_TABLES.get(net)
    if tab is None:
        n = net.n_nodes
        tab = np.empty((n, n), dtype=int)
        for i in range(n):
            tab[i, i] = i
            for j in range(i + 1, n):
                tab[i, j] = tab[j, i] = lca_index(net, i, j)
        _LCA_TABLES[net] = tab
    return tab


def shared_path_impedance(net: NetworkModel, o: str, a: str) -> np.ndarray:
    """3x3 impedance (ohms) of the common part of the source->o and
    source->a paths."""
    i, j = net.node_index(o), net.node_index(a)
    return net.z_cum[lca_index(net, i, j)].copy()


def shared_path_matrix(net: NetworkModel, o: str, candidates, *,
                       effective: bool = False) -> np.ndarray:
    """Stack of shared-path impedance matrices (m,3,3) for one observation
    node against each candidate actor node.

    With ``effective=True`` the branch impedances are referred through the
    regulator ratios (Z / g_cum^2 per segment, then scaled by the
    observation node's cumulative ratio on its rows), which is the kernel
    the linearized sensitivity actually sees.  Identical to the plain sum
    on feeders without regulators.
    """
    i = net.node_index(o)
    src = net.z_cum_eff if effective else net.z_cum
    cand_idx = np.array([net.node_index(a) for a in candidates])
    out = src[lca_table(net)[i, cand_idx]].copy()
    if effective:
        out *= net.gain_cum[i][None, :, None]
    return out
