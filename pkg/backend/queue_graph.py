"""
Queue graph: latest-alert slots per exploit vertex plus precomputed pointer layers.

Only the newest accepted alert is kept for each exploit vertex, so memory is
bounded by the size of the attack graph no matter how long the stream runs.
Each exploit vertex owns a backward and a forward breadth-first tree over the
exploit-level projection of the attack graph; correlation walks the backward
tree, prediction reads the forward one.
"""
import logging
from collections import deque
from typing import Dict, FrozenSet, Hashable, List, Optional, Set, Tuple

import networkx as nx
from pydantic import BaseModel, Field

from backend.attack_graph import AttackGraph
from backend.exceptions import DuplicateAlertError, TimeRegressionError, UnknownVertexError
from backend.models import (
    MICROS,
    Alert,
    CorrelationEdge,
    CorrelationGraph,
    CorrelationNode,
    NodeKind,
)
from backend.throttle import RleCounter

logger = logging.getLogger(__name__)


class PointerLayer:
    """Breadth-first tree rooted at one exploit vertex, in one direction."""

    def __init__(self, projection: nx.DiGraph, root: str, backward: bool):
        self.root = root
        self.backward = backward
        walk_graph = projection.reverse(copy=False) if backward else projection
        tree = nx.bfs_tree(walk_graph, root, sort_neighbors=sorted)
        self.parent: Dict[str, Optional[str]] = {root: None}
        for parent, child in tree.edges():
            self.parent[child] = parent
        self.layers: Tuple[Tuple[str, ...], ...] = tuple(
            tuple(sorted(layer)) for layer in nx.bfs_layers(walk_graph, root)
        )
        self.members: FrozenSet[str] = frozenset(self.parent)
        # Every neighbour of a member is itself a member, so links stay inside the tree
        self.links: Dict[str, Tuple[str, ...]] = {
            vertex: tuple(sorted(walk_graph.successors(vertex))) for vertex in self.members
        }

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, vertex_id: object) -> bool:
        return vertex_id in self.members


class QueueSlot:
    """Latest-alert slot of one exploit vertex."""

    __slots__ = ("vertex_id", "latest", "node_id", "rle")

    def __init__(self, vertex_id: str):
        self.vertex_id = vertex_id
        self.latest: Optional[Alert] = None
        self.node_id: Optional[str] = None
        self.rle: Optional[RleCounter] = None

    @property
    def occupied(self) -> bool:
        return self.latest is not None


class CorrelationResult(BaseModel):
    nodes: List[CorrelationNode] = Field(default_factory=list)
    edges: List[CorrelationEdge] = Field(default_factory=list)
    satisfied: List[str] = Field(default_factory=list)
    visited: int = 0


class QueueGraph:
    """
    Runtime correlation structure over one attack graph.

    Single writer: enqueue calls must be serialized in stream order.
    """

    def __init__(self, graph: AttackGraph, tolerance: float = 1.0, record_conditions: bool = False):
        self.graph = graph
        self.tolerance_us = int(round(tolerance * MICROS))
        self.record_conditions = record_conditions
        self.backward: Dict[str, PointerLayer] = {}
        self.forward: Dict[str, PointerLayer] = {}
        for vertex_id in sorted(graph.exploits):
            self.backward[vertex_id] = PointerLayer(graph.exploit_graph, vertex_id, backward=True)
            self.forward[vertex_id] = PointerLayer(graph.exploit_graph, vertex_id, backward=False)
        self.slots: Dict[str, QueueSlot] = {v: QueueSlot(v) for v in sorted(graph.exploits)}
        self.satisfied: Set[str] = set(graph.initial_conditions())

        self._nodes: Dict[str, CorrelationNode] = {}
        self._edges: List[CorrelationEdge] = []
        self._edge_set: Set[Tuple[str, str]] = set()
        self._hyp_index: Dict[Hashable, str] = {}
        self._clock_us: Optional[int] = None
        self._stored = 0
        self.peak_stored = 0
        self.last_visit_count = 0

    @property
    def stored_count(self) -> int:
        """Number of alerts currently held in slots."""
        return self._stored

    @property
    def clock_us(self) -> Optional[int]:
        return self._clock_us

    def backward_size(self, vertex_id: str) -> int:
        return len(self._layer(self.backward, vertex_id))

    def slot(self, vertex_id: str) -> QueueSlot:
        try:
            return self.slots[vertex_id]
        except KeyError:
            raise UnknownVertexError(vertex_id) from None

    def _layer(self, layers: Dict[str, PointerLayer], vertex_id: str) -> PointerLayer:
        try:
            return layers[vertex_id]
        except KeyError:
            raise UnknownVertexError(vertex_id) from None

    def check_time(self, ts_us: int) -> None:
        """Raise TimeRegressionError if ts_us is older than stream time beyond the tolerance."""
        if self._clock_us is not None and ts_us < self._clock_us - self.tolerance_us:
            raise TimeRegressionError(ts_us, self._clock_us)

    def enqueue(self, vertex_id: str, alert: Alert, hypothesize: bool = True) -> CorrelationResult:
        """
        Store an alert in its vertex's slot and correlate it with earlier alerts.

        The backward tree is walked breadth-first. A predecessor whose slot holds
        an earlier alert is linked to the new alert and its branch ends there. An
        empty predecessor either ends the branch or, with `hypothesize`, becomes a
        hypothesized step and the walk carries on beneath it.

        Args:
            vertex_id: Exploit vertex the alert maps to
            alert: Alert that already passed the throttle
            hypothesize: Insert hypothesized alerts for empty predecessors

        Returns:
            CorrelationResult: Nodes and edges added to the correlation graph

        Raises:
            UnknownVertexError: If vertex_id is not an exploit vertex
            TimeRegressionError: If the alert is too old for the stream
            DuplicateAlertError: If an alert with the same id was already enqueued
        """
        layer = self._layer(self.backward, vertex_id)
        self.check_time(alert.ts_us)
        if f"a{alert.id}" in self._nodes:
            raise DuplicateAlertError(alert.id)
        if self._clock_us is None or alert.ts_us > self._clock_us:
            self._clock_us = alert.ts_us

        result = CorrelationResult()
        root_node = self._add_node(
            CorrelationNode(
                id=f"a{alert.id}",
                kind=NodeKind.ALERT,
                vertex_id=vertex_id,
                alert_id=alert.id,
                signature=alert.signature,
                ts=alert.ts,
            ),
            result,
        )

        # Walk the backward tree; found[v] is the node standing for v, None for a pending hypothesis
        found: Dict[str, Optional[str]] = {vertex_id: root_node}
        visited = {vertex_id}
        links: List[Tuple[str, str]] = []
        queue = deque([vertex_id])
        while queue:
            current = queue.popleft()
            for pred in layer.links[current]:
                if pred in visited:
                    if hypothesize and pred in found:
                        links.append((pred, current))
                    continue
                visited.add(pred)
                slot = self.slots[pred]
                if slot.occupied:
                    if slot.latest.ts_us < alert.ts_us:
                        found[pred] = slot.node_id
                        links.append((pred, current))
                elif hypothesize:
                    found[pred] = None
                    links.append((pred, current))
                    queue.append(pred)
        result.visited = len(visited) - 1
        self.last_visit_count = result.visited

        if hypothesize:
            self._resolve_hypotheses(found, links, result)
        for upstream, downstream in links:
            self._link(found[upstream], upstream, found[downstream], downstream, result)

        slot = self.slots[vertex_id]
        if not slot.occupied:
            self._stored += 1
            self.peak_stored = max(self.peak_stored, self._stored)
        slot.latest = alert
        slot.node_id = root_node

        for condition_id in self.graph.consequences(vertex_id):
            if condition_id not in self.satisfied:
                self.satisfied.add(condition_id)
                result.satisfied.append(condition_id)
        return result

    def _resolve_hypotheses(
        self,
        found: Dict[str, Optional[str]],
        links: List[Tuple[str, str]],
        result: CorrelationResult,
    ) -> None:
        # A hypothesized step is identified by its vertex and what lies beneath it,
        # so repeated alerts over the same gap reuse one node
        upstream: Dict[str, List[str]] = {}
        for source, target in links:
            upstream.setdefault(target, []).append(source)
        keys: Dict[str, Hashable] = {}

        def key_of(vertex: str) -> Hashable:
            if vertex in keys:
                return keys[vertex]
            node_id = found[vertex]
            if node_id is not None:
                key: Hashable = ("node", node_id)
            else:
                key = ("hyp", vertex, frozenset(key_of(u) for u in upstream.get(vertex, ())))
            keys[vertex] = key
            return key

        for vertex in sorted(v for v, node_id in found.items() if node_id is None):
            key = key_of(vertex)
            node_id = self._hyp_index.get(key)
            if node_id is None:
                node_id = f"h{len(self._hyp_index) + 1}"
                self._hyp_index[key] = node_id
                self._add_node(
                    CorrelationNode(id=node_id, kind=NodeKind.HYPOTHESIZED, vertex_id=vertex),
                    result,
                )
            found[vertex] = node_id

    def _add_node(self, node: CorrelationNode, result: CorrelationResult) -> str:
        if node.id not in self._nodes:
            self._nodes[node.id] = node
            result.nodes.append(node)
        return node.id

    def _add_edge(self, source: str, target: str, result: CorrelationResult) -> None:
        if (source, target) in self._edge_set:
            return
        self._edge_set.add((source, target))
        edge = CorrelationEdge(source=source, target=target)
        self._edges.append(edge)
        result.edges.append(edge)

    def _link(self, source: str, source_vertex: str, target: str, target_vertex: str, result: CorrelationResult) -> None:
        if self.record_conditions:
            shared = self.graph.shared_conditions(source_vertex, target_vertex)
            if shared:
                for condition_id in shared:
                    condition_node = self._add_node(
                        CorrelationNode(id=f"c:{condition_id}", kind=NodeKind.CONDITION, vertex_id=condition_id),
                        result,
                    )
                    self._add_edge(source, condition_node, result)
                    self._add_edge(condition_node, target, result)
                return
        self._add_edge(source, target, result)

    def predict(self, vertex_id: str) -> Set[str]:
        """Exploit vertices reachable forward from vertex_id: the possible next attack steps."""
        layer = self._layer(self.forward, vertex_id)
        return set(layer.members - {vertex_id})

    def snapshot(self) -> CorrelationGraph:
        return CorrelationGraph(nodes=tuple(self._nodes.values()), edges=tuple(self._edges))


def build(graph: AttackGraph, tolerance: float = 1.0, record_conditions: bool = False) -> QueueGraph:
    """Build an empty queue graph with pointer layers for every exploit vertex."""
    queue_graph = QueueGraph(graph, tolerance=tolerance, record_conditions=record_conditions)
    logger.debug(f"Built queue graph with {len(queue_graph.slots)} slots")
    return queue_graph
