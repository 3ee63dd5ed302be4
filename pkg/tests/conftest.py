"""Configuration for pytest."""
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from backend.attack_graph import load_graph  # noqa: E402
from backend.floodgen import gen_flood  # noqa: E402
from backend.models import Alert, FloodSpec  # noqa: E402

FLOOD_COUNT = 300_000
FLOOD_SECONDS = 41


# Add command line options
def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run slow tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="need --run-slow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolate_handler_filters(caplog):
    # pytest reuses its capture handlers across tests; restore their filters so
    # filters added by one test (or by app.configure_logging) don't leak.
    handlers = set(logging.getLogger().handlers) | {caplog.handler}
    saved = {h: list(h.filters) for h in handlers}
    yield
    for h in set(logging.getLogger().handlers) | handlers:
        h.filters[:] = saved.get(h, [])


def chain_document(length=3):
    """e1 -> c1 -> e2 -> c2 -> ... with an initial prerequisite c0 on e1."""
    exploits = [{"id": f"e{i}", "vuln": f"vuln{i}", "src": "*", "dst": "*"} for i in range(1, length + 1)]
    conditions = [{"id": "c0", "predicate": "network_access", "host": "*", "initial": True}]
    edges = [["c0", "e1"]]
    for i in range(1, length + 1):
        conditions.append({"id": f"c{i}", "predicate": f"stage{i}", "host": "*", "initial": False})
        edges.append([f"e{i}", f"c{i}"])
        if i < length:
            edges.append([f"c{i}", f"e{i + 1}"])
    mapping = [{"signature": f"sig{i}", "exploit": f"e{i}"} for i in range(1, length + 1)]
    return {"exploits": exploits, "conditions": conditions, "edges": edges, "mapping": mapping}


def join_document():
    """Two exploits whose consequences both enter root_privileges, which enables a third."""
    return {
        "exploits": [
            {"id": "sadmind", "vuln": "sadmind_overflow", "src": "*", "dst": "10.0.0.2"},
            {"id": "sendmail", "vuln": "sendmail_exploit", "src": "*", "dst": "10.0.0.2"},
            {"id": "ddos", "vuln": "mstream_ddos", "src": "10.0.0.2", "dst": "*"},
        ],
        "conditions": [
            {"id": "rpc_access", "predicate": "rpc_access", "host": "10.0.0.2", "initial": True},
            {"id": "smtp_access", "predicate": "smtp_access", "host": "10.0.0.2", "initial": True},
            {"id": "root_privileges", "predicate": "root_privileges", "host": "10.0.0.2", "initial": False},
            {"id": "ddos_launched", "predicate": "ddos_launched", "host": "*", "initial": False},
        ],
        "edges": [
            ["rpc_access", "sadmind"],
            ["smtp_access", "sendmail"],
            ["sadmind", "root_privileges"],
            ["sendmail", "root_privileges"],
            ["root_privileges", "ddos"],
            ["ddos", "ddos_launched"],
        ],
        "mapping": [
            {"signature": "sadmind_overflow", "exploit": "sadmind"},
            {"signature": "sendmail_exploit", "exploit": "sendmail"},
            {"signature": "mstream_zombie", "exploit": "ddos"},
        ],
    }


def make_graph(document):
    return load_graph(json.dumps(document))


def make_alert(alert_id, signature, ts, src="10.0.0.1", dst="10.0.0.2", **attrs):
    return Alert(id=alert_id, sig=signature, src=src, dst=dst, ts=ts, attrs=attrs)


@pytest.fixture
def chain_graph():
    return make_graph(chain_document())


@pytest.fixture
def join_graph():
    return make_graph(join_document())


@pytest.fixture(scope="session")
def flood_spec():
    """300,000 alerts spread evenly over 41 virtual seconds (about 7,317/s)."""
    return FloodSpec(
        signature="ICMP PING NMAP",
        rate=Fraction(FLOOD_COUNT, FLOOD_SECONDS),
        duration=FLOOD_SECONDS,
        dst="10.0.0.2",
        seed=1,
    )


@pytest.fixture(scope="session")
def flood_alerts(flood_spec):
    return list(gen_flood(flood_spec))
