import numpy as np
import pytest

import pvsense as pv
from pvsense.feeder import (FeederError, lca_index, load_feeder, parse_complex,
                            shared_path_impedance, dump_feeder)

from conftest import SMALL_FEEDER


def test_parse_complex_forms():
    assert parse_complex("0.29+j0.19") == pytest.approx(0.29 + 0.19j)
    assert parse_complex("0.06-j0.03") == pytest.approx(0.06 - 0.03j)
    assert parse_complex("0+j0") == 0
    assert parse_complex("-1.5e-2+j2e-3") == pytest.approx(-0.015 + 0.002j)
    with pytest.raises(ValueError):
        parse_complex("1.0")


def test_small_feeder_parses(small_net):
    assert small_net.n_nodes == 5
    assert small_net.source == "s"
    assert small_net.phases_of("3") == "a"
    assert small_net.total_demand_kw == pytest.approx(330.0)
    assert small_net.v_base == pytest.approx(4160 / np.sqrt(3))


def test_ieee37_shape(net37):
    assert net37.n_nodes == 37
    assert len(net37.branches) == 36
    assert net37.source == "799"
    assert net37.v_base == pytest.approx(4800 / np.sqrt(3))
    # all-underground three-phase feeder
    assert net37.phase_mask.all()
    assert net37.total_demand_kw == pytest.approx(2457.0)


def test_ieee123_shape(net123):
    assert net123.n_nodes == 123
    assert len(net123.branches) == 122
    counts = net123.phase_mask.sum(axis=1)
    # mixed 1/2/3-phase laterals
    assert (counts == 1).any() and (counts == 2).any() and (counts == 3).any()
    assert net123.total_demand_kw == pytest.approx(3490.0)


def test_cycle_detected():
    bad = SMALL_FEEDER + "\n[branches]\n2  4  0.1+j0.1 0+j0 0+j0 0+j0 0.1+j0.1 0+j0 0+j0 0+j0 0.1+j0.1\n"
    with pytest.raises(FeederError, match="cycle"):
        load_feeder(bad)


def test_disconnected_node():
    bad = SMALL_FEEDER.replace("1  4  0.25+j0.5", "# cut ")
    bad = "\n".join(l for l in bad.splitlines() if not l.startswith("# cut"))
    with pytest.raises(FeederError, match="disconnected|branches"):
        load_feeder(bad)


def test_load_on_absent_phase():
    bad = SMALL_FEEDER + "\n[loads]\n3  b  10  5\n"
    with pytest.raises(FeederError, match="absent phase"):
        load_feeder(bad)


def test_asymmetric_impedance_rejected():
    bad = SMALL_FEEDER.replace(
        "1  4  0.25+j0.5 0.08+j0.15 0.08+j0.15 0.08+j0.15",
        "1  4  0.25+j0.5 0.09+j0.15 0.08+j0.15 0.08+j0.15")
    with pytest.raises(FeederError, match="symmetric"):
        load_feeder(bad)


def test_parse_error_reports_line():
    bad = SMALL_FEEDER.replace("2  a  100  50", "2  a  oops  50")
    with pytest.raises(FeederError, match=r"line \d+"):
        load_feeder(bad)


def test_unknown_node_in_branch():
    bad = SMALL_FEEDER + "\n[branches]\n1  99  0+j0 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0\n"
    with pytest.raises(FeederError, match="unknown node"):
        load_feeder(bad)


def test_dump_roundtrip(small_net):
    text = dump_feeder(small_net)
    again = load_feeder(text)
    assert again.nodes == small_net.nodes
    assert np.allclose(again.load_kw, small_net.load_kw)
    for b1, b2 in zip(again.branches, small_net.branches):
        assert np.allclose(b1.z, b2.z)


def test_dump_roundtrip_with_regulators(net37):
    again = load_feeder(dump_feeder(net37))
    assert np.allclose(again.gain_cum, net37.gain_cum)


# --- shared-path impedance ---------------------------------------------------

def _paths_to_source(net, node):
    path = []
    i = net.node_index(node)
    while net.parent[i] >= 0:
        path.append(i)
        i = net.parent[i]
    return path  # node indices whose supply branches form the path


def brute_force_shared(net, o, a):
    po = set(_paths_to_source(net, o))
    pa = set(_paths_to_source(net, a))
    z = np.zeros((3, 3), dtype=complex)
    for j in po & pa:
        z = z + net.parent_z[j]
    return z


def test_shared_path_source_is_zero(net37):
    z = shared_path_impedance(net37, net37.source, "741")
    assert np.all(z == 0)


def test_shared_path_symmetry(net37):
    rng = np.random.default_rng(7)
    nodes = list(net37.nodes)
    for _ in range(25):
        o, a = rng.choice(nodes, size=2, replace=True)
        assert np.allclose(shared_path_impedance(net37, o, a),
                           shared_path_impedance(net37, a, o))


def test_shared_path_matches_brute_force(net37, net123):
    rng = np.random.default_rng(11)
    for net in (net37, net123):
        nodes = list(net.nodes)
        for _ in range(40):
            o, a = rng.choice(nodes, size=2, replace=True)
            assert np.allclose(shared_path_impedance(net, o, a),
                               brute_force_shared(net, o, a)), (o, a)


def test_shared_path_ancestor_full_path(net37):
    # for a on the source->o path, shared(o, a) equals a's own full path
    o = "741"
    i = net37.node_index(o)
    while net37.parent[i] >= 0:
        a = net37.nodes[i]
        assert np.allclose(shared_path_impedance(net37, o, a),
                           shared_path_impedance(net37, a, a))
        i = net37.parent[i]


def test_shared_path_monotone_toward_source(net37):
    # moving the actor one branch closer to the source never increases
    # any diagonal magnitude of the shared-path matrix
    o = "741"
    for a in ("741", "738", "734", "708", "709"):
        i = net37.node_index(a)
        j = net37.parent[i]
        if j < 0:
            continue
        z_here = np.abs(np.diag(shared_path_impedance(net37, o, a)))
        z_up = np.abs(np.diag(shared_path_impedance(net37, o, net37.nodes[j])))
        assert (z_up <= z_here + 1e-12).all()


def test_unknown_node_raises(net37):
    with pytest.raises(FeederError, match="unknown node"):
        shared_path_impedance(net37, "nope", "741")


# --- path statistics ---------------------------------------------------------

def test_single_candidate_zero_covariance(net37):
    st = pv.path_statistics(net37, "709", "a", ["741"])
    assert np.allclose(st.cov_z_r, 0)
    assert np.allclose(st.cov_z_i, 0)
    assert np.allclose(st.cov_ri, 0)


def test_path_statistics_empty_candidates(net37):
    with pytest.raises(ValueError, match="empty candidate"):
        pv.path_statistics(net37, "709", "a", [])


def test_path_statistics_mean_matches_direct_average(net37):
    from pvsense.sensitivity import phase_pattern_vectors, default_candidates
    from pvsense.feeder import shared_path_matrix
    cands = default_candidates(net37)
    st = pv.path_statistics(net37, "738", "b", cands)
    z = shared_path_matrix(net37, "738", cands, effective=True) / net37.z_base
    zr, zi = phase_pattern_vectors(z.real, z.imag, "b")
    assert np.allclose(st.mu_z_r, zr.mean(axis=0))
    assert np.allclose(st.mu_z_i, zi.mean(axis=0))
    assert np.allclose(st.mu_r, z.real.mean(axis=0))


def test_path_statistics_order_invariant(net37):
    from pvsense.sensitivity import default_candidates
    cands = default_candidates(net37)
    st1 = pv.path_statistics(net37, "709", "a", cands)
    st2 = pv.path_statistics(net37, "709", "a", list(reversed(cands)))
    assert np.allclose(st1.mu_z_r, st2.mu_z_r)
    assert np.allclose(st1.cov_z_r, st2.cov_z_r)
    assert np.allclose(st1.cov_ri, st2.cov_ri)


def test_rho_rx_ieee37(net37):
    # resistance/reactance correlation over all candidate nodes
    from pvsense.sensitivity import default_candidates
    st = pv.path_statistics(net37, "709", "a", default_candidates(net37))
    assert st.rho_rx == pytest.approx(0.99, abs=0.01)


def test_covariances_positive_semidefinite(net37):
    from pvsense.sensitivity import default_candidates
    st = pv.path_statistics(net37, "711", "c", default_candidates(net37))
    for cov in (st.cov_z_r, st.cov_z_i):
        w = np.linalg.eigvalsh(cov)
        assert w.min() >= -1e-15
