"""Tests for attack-graph loading, validation and alert mapping."""
import json
import random

import pytest
from conftest import chain_document, join_document, make_alert, make_graph

from backend.attack_graph import load_graph, map_alert, render
from backend.exceptions import GraphParseError, GraphValidationError


def test_smallest_legal_graph():
    graph = make_graph({
        "exploits": [{"id": "e1", "vuln": "ftp_bounce", "src": "*", "dst": "*"}],
        "conditions": [
            {"id": "pre", "predicate": "ftp_access", "host": "*", "initial": True},
            {"id": "post", "predicate": "user_shell", "host": "*", "initial": False},
        ],
        "edges": [["pre", "e1"], ["e1", "post"]],
        "mapping": [],
    })
    assert len(graph.exploits) + len(graph.conditions) == 3
    assert len(graph.document.edges) == 2
    assert graph.prerequisites("e1") == ("pre",)
    assert graph.consequences("e1") == ("post",)
    assert graph.initial_conditions() == {"pre"}


def test_disjunctive_join_loads(join_graph):
    assert set(join_graph.graph.predecessors("root_privileges")) == {"sadmind", "sendmail"}
    assert join_graph.exploit_predecessors("ddos") == ("sadmind", "sendmail")
    assert join_graph.exploit_successors("sadmind") == ("ddos",)
    assert join_graph.shared_conditions("sendmail", "ddos") == ("root_privileges",)


def test_exploit_to_exploit_edge_rejected():
    document = chain_document(2)
    document["edges"].append(["e1", "e2"])
    with pytest.raises(GraphValidationError) as excinfo:
        make_graph(document)
    assert excinfo.value.identifier == "e1->e2"
    assert "exploit->exploit" in str(excinfo.value)


def test_condition_to_condition_edge_rejected():
    document = chain_document(2)
    document["edges"].append(["c0", "c1"])
    with pytest.raises(GraphValidationError) as excinfo:
        make_graph(document)
    assert excinfo.value.identifier == "c0->c1"


def test_cycle_is_named():
    document = chain_document(2)
    document["edges"].append(["c2", "e1"])
    with pytest.raises(GraphValidationError) as excinfo:
        make_graph(document)
    message = str(excinfo.value)
    assert "Cycle found" in message
    for vertex in ("e1", "c1", "e2", "c2"):
        assert vertex in message


def test_dangling_endpoint_rejected():
    document = chain_document(1)
    document["edges"].append(["e1", "ghost"])
    with pytest.raises(GraphValidationError) as excinfo:
        make_graph(document)
    assert "ghost" in str(excinfo.value)


def test_duplicate_id_across_namespaces_rejected():
    document = chain_document(1)
    document["conditions"].append({"id": "e1", "predicate": "dup", "host": "*", "initial": False})
    with pytest.raises(GraphValidationError) as excinfo:
        make_graph(document)
    assert excinfo.value.identifier == "e1"


def test_mapping_to_condition_rejected():
    document = chain_document(1)
    document["mapping"].append({"signature": "oops", "exploit": "c1"})
    with pytest.raises(GraphValidationError):
        make_graph(document)


@pytest.mark.parametrize("text", ["{not json", "[]", '{"exploits": [{"id": "e1"}]}', '{"bogus": []}'])
def test_malformed_documents(text):
    with pytest.raises(GraphParseError):
        load_graph(text)


def test_bad_host_pattern_is_parse_error():
    document = chain_document(1)
    document["exploits"][0]["dst"] = "10.0.0.0/8"
    with pytest.raises(GraphParseError):
        make_graph(document)


def test_render_round_trip(join_graph, chain_graph):
    for graph in (join_graph, chain_graph):
        assert load_graph(render(graph)) == graph
        assert render(load_graph(render(graph))) == render(graph)


def test_load_is_order_insensitive():
    document = chain_document(3)
    shuffled = json.loads(json.dumps(document))
    for key in ("exploits", "conditions", "edges", "mapping"):
        random.Random(7).shuffle(shuffled[key])
    assert make_graph(shuffled) == make_graph(document)


def test_topological_order(chain_graph):
    order = chain_graph.topological_order()
    assert order.index("e1") < order.index("c1") < order.index("e2") < order.index("e3")


# map_alert


def _sadmind_graph(*vertices):
    return make_graph({
        "exploits": [{"id": vid, "vuln": "sadmind", "src": src, "dst": dst} for vid, src, dst in vertices],
        "conditions": [],
        "edges": [],
        "mapping": [{"signature": "sadmind_overflow", "exploit": vid} for vid, _, _ in vertices],
    })


def test_map_direct_rule_and_pattern():
    graph = _sadmind_graph(("sadmind", "*", "10.0.0.2"))
    alert = make_alert(1, "sadmind_overflow", 0, src="10.0.0.1", dst="10.0.0.2")
    assert map_alert(graph, alert) == "sadmind"


def test_map_host_not_vulnerable():
    graph = _sadmind_graph(("sadmind", "*", "10.0.0.2"))
    alert = make_alert(1, "sadmind_overflow", 0, src="10.0.0.1", dst="10.0.0.9")
    assert map_alert(graph, alert) is None


def test_map_unknown_signature():
    graph = _sadmind_graph(("sadmind", "*", "*"))
    assert map_alert(graph, make_alert(1, "ICMP PING", 0)) is None


def test_map_prefers_more_specific_vertex():
    graph = _sadmind_graph(("any", "*", "*"), ("target", "*", "10.0.0.2"))
    alert = make_alert(1, "sadmind_overflow", 0, src="10.0.0.1", dst="10.0.0.2")
    assert map_alert(graph, alert) == "target"


def test_map_ties_broken_by_smallest_id():
    graph = _sadmind_graph(("zeta", "10.0.0.1", "*"), ("alpha", "*", "10.0.0.2"))
    alert = make_alert(1, "sadmind_overflow", 0, src="10.0.0.1", dst="10.0.0.2")
    assert map_alert(graph, alert) == "alpha"


@pytest.mark.parametrize("seed", range(25))
def test_map_matches_brute_force(seed):
    rng = random.Random(seed)
    hosts = ["10.0.0.1", "10.0.0.2", "10.0.0.3"]
    vertices = [
        (f"v{i}", rng.choice(hosts + ["*"]), rng.choice(hosts + ["*"]))
        for i in range(rng.randint(1, 8))
    ]
    graph = _sadmind_graph(*vertices)
    for alert_id in range(20):
        alert = make_alert(alert_id, "sadmind_overflow", alert_id, src=rng.choice(hosts), dst=rng.choice(hosts))
        matches = [
            (vid, (src != "*") + (dst != "*"))
            for vid, src, dst in vertices
            if src in ("*", alert.src) and dst in ("*", alert.dst)
        ]
        result = map_alert(graph, alert)
        if not matches:
            assert result is None
            continue
        best = max(score for _, score in matches)
        assert result in {vid for vid, _ in matches}
        assert dict(matches)[result] == best
        assert result == min(vid for vid, score in matches if score == best)
        assert map_alert(graph, alert) == result
