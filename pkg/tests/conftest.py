import numpy as np
import pytest

from phaseid.feeder import load_bundled_feeder
from phaseid.network import parse_network
from phaseid.study import prepare_network


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def raw_feeder():
    return load_bundled_feeder()


@pytest.fixture(scope="session")
def feeder(raw_feeder):
    return prepare_network(raw_feeder)


def chain_doc(n=4, z=0.01 + 0.02j, wires=4, devices=(), switches=(), references=()):
    """Straight chain 1-2-...-n with bus 1 as slack."""
    zm = np.eye(wires) * z + (np.ones((wires, wires)) - np.eye(wires)) * (z * 0.25)
    branches = []
    for k in range(1, n):
        sw = k in switches
        m = np.zeros_like(zm) if sw else zm
        branches.append({"from": k, "to": k + 1, "r": m.real.tolist(), "x": m.imag.tolist(), "switch": sw})
    return {
        "base": {"s_va": 100e3, "v_volt": 400.0},
        "buses": [{"id": k, "slack": k == 1} for k in range(1, n + 1)],
        "branches": branches,
        "devices": [dict(d) for d in devices],
        "references": list(references),
    }


@pytest.fixture
def chain():
    return lambda **kw: parse_network(chain_doc(**kw))
