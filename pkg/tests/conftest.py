import pytest

import pvsense as pv

# Small mixed-phase radial fixture: source s, three-phase trunk 1-2,
# a single-phase lateral 2-3, and a short three-phase spur 1-4.
SMALL_FEEDER = """
[meta]
name = small4
v_nominal_kv = 4.16
source = s

[nodes]
# id  phases
s  abc
1  abc
2  abc
3  a
4  abc

[branches]
# from  to  z row-major, ohms
s  1  0.3+j0.6 0.1+j0.2 0.1+j0.2 0.1+j0.2 0.3+j0.6 0.1+j0.2 0.1+j0.2 0.1+j0.2 0.3+j0.6
1  2  0.2+j0.4 0.05+j0.1 0.05+j0.1 0.05+j0.1 0.2+j0.4 0.05+j0.1 0.05+j0.1 0.05+j0.1 0.2+j0.4
2  3  0.5+j0.5 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0 0+j0
1  4  0.25+j0.5 0.08+j0.15 0.08+j0.15 0.08+j0.15 0.25+j0.5 0.08+j0.15 0.08+j0.15 0.08+j0.15 0.25+j0.5

[loads]
# node  phase  kw  kvar
2  a  100  50
2  b  80  40
2  c  60  30
3  a  50  20
4  c  40  10
"""


@pytest.fixture(scope="session")
def small_net():
    return pv.load_feeder(SMALL_FEEDER)


@pytest.fixture(scope="session")
def net37():
    return pv.load_bundled("ieee37")


@pytest.fixture(scope="session")
def net123():
    return pv.load_bundled("ieee123")


@pytest.fixture(scope="session")
def base37(net37):
    return pv.solve(net37)


@pytest.fixture(scope="session")
def net37_plain():
    """The 37-node data with the regulator section removed."""
    text = pv.feeder.bundled_feeder_text("ieee37")
    head, _, _ = text.partition("[regulators]")
    return pv.load_feeder(head)
