"""Independent nodal-admittance load flow used as a cross-check oracle.

Implicit Z-bus fixed point on the (node, phase) unknowns:
V <- Y_LL^-1 (I_inj(V) - Y_LS V_S).  Completely separate machinery from
the sweep solver: no tree traversal, no branch ordering.  Regulator gains
are not supported; use it on gain-free networks only.
"""
import numpy as np


def ybus_solve(net, injections_kw=None, injections_kvar=None,
               tol=1e-10, max_iter=400):
    assert np.allclose(net.parent_gain, 1.0), "oracle handles plain lines only"
    n = net.n_nodes
    unk = []           # (node, phase) unknowns
    for i in range(n):
        for p in range(3):
            if net.phase_mask[i, p]:
                unk.append((i, p))
    pos = {ip: k for k, ip in enumerate(unk)}
    m = len(unk)
    y = np.zeros((m, m), dtype=complex)
    for j in range(n):
        if net.parent[j] < 0:
            continue
        i = net.parent[j]
        z = net.parent_z[j]
        ph = np.flatnonzero(np.abs(np.diag(z)) > 0)
        if ph.size == 0:
            ph = np.flatnonzero(net.phase_mask[j])
            zsub = np.eye(ph.size) * 1e-9
        else:
            zsub = z[np.ix_(ph, ph)]
        ysub = np.linalg.inv(zsub)
        idx_i = [pos[(i, p)] for p in ph]
        idx_j = [pos[(j, p)] for p in ph]
        y[np.ix_(idx_i, idx_i)] += ysub
        y[np.ix_(idx_j, idx_j)] += ysub
        y[np.ix_(idx_i, idx_j)] -= ysub
        y[np.ix_(idx_j, idx_i)] -= ysub

    src = net.index[net.source]
    from pvsense.feeder import REFERENCE_PU
    vs = net.v_base * REFERENCE_PU
    s_idx = [k for k, (i, p) in enumerate(unk) if i == src]
    l_idx = [k for k, (i, p) in enumerate(unk) if i != src]
    y_ll = y[np.ix_(l_idx, l_idx)]
    y_ls = y[np.ix_(l_idx, s_idx)]
    v_s = np.array([vs[p] for (i, p) in (unk[k] for k in s_idx)])

    inj_kw = np.zeros((n, 3)) if injections_kw is None else np.asarray(injections_kw)
    inj_kvar = np.zeros((n, 3)) if injections_kvar is None else np.asarray(injections_kvar)
    s_cons = ((net.load_kw - inj_kw) + 1j * (net.load_kvar - inj_kvar)) * 1e3
    s_l = np.array([s_cons[i, p] for (i, p) in (unk[k] for k in l_idx)])

    lu = np.linalg.inv(y_ll)
    rhs_fixed = -y_ls @ v_s
    v_l = np.array([vs[p] for (i, p) in (unk[k] for k in l_idx)])
    for _ in range(max_iter):
        i_inj = -np.conj(s_l / v_l)
        v_new = lu @ (i_inj + rhs_fixed)
        if np.abs(v_new - v_l).max() / net.v_base < tol:
            v_l = v_new
            break
        v_l = v_new

    v = np.tile(vs, (n, 1)).astype(complex)
    for k, idx in enumerate(l_idx):
        i, p = unk[idx]
        v[i, p] = v_l[k]
    return v
