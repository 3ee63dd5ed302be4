"""Attack-graph model, document loading and the alert-to-exploit mapping."""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import networkx as nx
from pydantic import ValidationError

from backend.exceptions import GraphParseError, GraphValidationError
from backend.models import (
    WILDCARD,
    Alert,
    AttackGraphDocument,
    ConditionVertex,
    ExploitVertex,
    MappingRule,
)

logger = logging.getLogger(__name__)

EXPLOIT = "exploit"
CONDITION = "condition"


def _host_matches(pattern: str, address: str) -> bool:
    return pattern == WILDCARD or pattern == address


class AttackGraph:
    """
    Validated, immutable attack graph.

    Exploit and condition vertices alternate along every edge: condition ->
    exploit edges are prerequisites, exploit -> condition edges are
    consequences. The graph is a DAG.
    """

    def __init__(self, document: AttackGraphDocument):
        self.document = document.normalized()
        self.exploits: Dict[str, ExploitVertex] = {v.id: v for v in self.document.exploits}
        self.conditions: Dict[str, ConditionVertex] = {v.id: v for v in self.document.conditions}
        self.mapping: Tuple[MappingRule, ...] = self.document.mapping
        self._validate_ids()

        graph = nx.DiGraph()
        for vertex_id in self.exploits:
            graph.add_node(vertex_id, kind=EXPLOIT)
        for vertex_id in self.conditions:
            graph.add_node(vertex_id, kind=CONDITION)
        for source, target in self.document.edges:
            self._validate_edge(source, target)
            graph.add_edge(source, target)
        self._check_acyclic(graph)
        self.graph = nx.freeze(graph)

        self._prerequisites = {
            e: tuple(sorted(self.graph.predecessors(e))) for e in self.exploits
        }
        self._consequences = {
            e: tuple(sorted(self.graph.successors(e))) for e in self.exploits
        }

        # Exploit-level projection: e1 -> c -> e2 becomes e1 -> e2
        projection = nx.DiGraph()
        projection.add_nodes_from(sorted(self.exploits))
        for exploit_id, consequences in self._consequences.items():
            for condition_id in consequences:
                for successor in self.graph.successors(condition_id):
                    projection.add_edge(exploit_id, successor)
        self.exploit_graph = nx.freeze(projection)

        rules: Dict[str, List[ExploitVertex]] = defaultdict(list)
        for rule in self.mapping:
            target = self.exploits.get(rule.exploit_id)
            if target is None:
                kind = "condition" if rule.exploit_id in self.conditions else "unknown vertex"
                raise GraphValidationError(
                    f"Mapping rule for signature '{rule.signature}' targets {kind} '{rule.exploit_id}'",
                    identifier=rule.exploit_id,
                )
            rules[rule.signature].append(target)
        self._rules_by_signature: Dict[str, Tuple[ExploitVertex, ...]] = {
            signature: tuple(targets) for signature, targets in rules.items()
        }

        logger.debug(
            f"Loaded attack graph: {len(self.exploits)} exploits, "
            f"{len(self.conditions)} conditions, {len(self.document.edges)} edges"
        )

    def _validate_ids(self) -> None:
        seen = set()
        for vertex in (*self.document.exploits, *self.document.conditions):
            if vertex.id in seen:
                raise GraphValidationError(f"Duplicate vertex id '{vertex.id}'", identifier=vertex.id)
            seen.add(vertex.id)

    def _validate_edge(self, source: str, target: str) -> None:
        edge_name = f"{source}->{target}"
        for endpoint in (source, target):
            if endpoint not in self.exploits and endpoint not in self.conditions:
                raise GraphValidationError(
                    f"Edge {edge_name} names unknown vertex '{endpoint}'", identifier=edge_name
                )
        if (source in self.exploits) == (target in self.exploits):
            kind = "exploit->exploit" if source in self.exploits else "condition->condition"
            raise GraphValidationError(
                f"Edge {edge_name} is {kind}; edges must alternate exploits and conditions",
                identifier=edge_name,
            )

    @staticmethod
    def _check_acyclic(graph: nx.DiGraph) -> None:
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return
        path = [source for source, _ in cycle] + [cycle[0][0]]
        raise GraphValidationError(f"Cycle found: {' -> '.join(path)}", identifier=path[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AttackGraph):
            return NotImplemented
        return self.document == other.document

    def __hash__(self) -> int:
        return hash(self.document)

    def __repr__(self) -> str:
        return f"AttackGraph(exploits={len(self.exploits)}, conditions={len(self.conditions)})"

    def prerequisites(self, exploit_id: str) -> Tuple[str, ...]:
        return self._prerequisites[exploit_id]

    def consequences(self, exploit_id: str) -> Tuple[str, ...]:
        return self._consequences[exploit_id]

    def exploit_predecessors(self, exploit_id: str) -> Tuple[str, ...]:
        return tuple(sorted(self.exploit_graph.predecessors(exploit_id)))

    def exploit_successors(self, exploit_id: str) -> Tuple[str, ...]:
        return tuple(sorted(self.exploit_graph.successors(exploit_id)))

    def shared_conditions(self, upstream: str, downstream: str) -> Tuple[str, ...]:
        """Conditions produced by `upstream` that `downstream` requires."""
        required: FrozenSet[str] = frozenset(self._prerequisites[downstream])
        return tuple(c for c in self._consequences[upstream] if c in required)

    def initial_conditions(self) -> FrozenSet[str]:
        return frozenset(c.id for c in self.conditions.values() if c.initial)

    def topological_order(self) -> List[str]:
        return list(nx.lexicographical_topological_sort(self.graph))

    def matching_exploits(self, alert: Alert) -> List[ExploitVertex]:
        """Every exploit vertex the alert could map to, unordered by preference."""
        return [
            vertex
            for vertex in self._rules_by_signature.get(alert.signature, ())
            if _host_matches(vertex.src, alert.src) and _host_matches(vertex.dst, alert.dst)
        ]


def map_alert(graph: AttackGraph, alert: Alert) -> Optional[str]:
    """
    Map an alert to its best-matching exploit vertex.

    A vertex matches when a mapping rule links the alert's signature to it and
    its host patterns accept the alert's endpoints. More exact host fields win;
    ties go to the smallest vertex id.

    Args:
        graph: Validated attack graph
        alert: Alert to map

    Returns:
        Optional[str]: Exploit vertex id, or None when nothing matches
    """
    candidates = graph.matching_exploits(alert)
    if not candidates:
        return None
    best = min(candidates, key=lambda vertex: (-vertex.specificity, vertex.id))
    return best.id


def load_graph(text: Union[str, bytes]) -> AttackGraph:
    """
    Parse and validate an attack-graph JSON document.

    Raises:
        GraphParseError: If the document is not well-formed
        GraphValidationError: If the graph breaks an invariant
    """
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise GraphParseError(f"Malformed attack-graph document: {e}") from e
    if not isinstance(raw, dict):
        raise GraphParseError("Attack-graph document must be a JSON object")
    try:
        document = AttackGraphDocument.model_validate(raw)
    except ValidationError as e:
        raise GraphParseError(f"Invalid attack-graph document: {e}") from e
    return AttackGraph(document)


def load_graph_file(path: Union[str, Path]) -> AttackGraph:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise GraphParseError(f"Attack-graph document is not valid UTF-8: {e.reason} at byte {e.start}") from e
    return load_graph(text)


def render(graph: AttackGraph) -> str:
    """Render the canonical JSON document for a graph; inverse of load_graph."""
    payload = graph.document.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
