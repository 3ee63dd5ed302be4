"""Correlation-graph export as Graphviz DOT and JSON."""
import json
from pathlib import Path
from typing import Union

from backend.models import CorrelationGraph, CorrelationNode, NodeKind

DOT_TEMPLATE = """digraph correlation {
  rankdir="LR";
  node [fontname="Helvetica", fontsize=10];

  // Nodes
%s

  // Edges
%s
}
"""


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _node_line(node: CorrelationNode) -> str:
    if node.kind == NodeKind.CONDITION:
        attrs = f"shape=square, label={_quote(node.vertex_id)}"
    elif node.kind == NodeKind.HYPOTHESIZED:
        attrs = f"shape=circle, style=dashed, label={_quote(node.vertex_id + '?')}"
    else:
        label = f"{node.signature}\n#{node.alert_id} @{node.ts:.6f}\n{node.vertex_id}"
        attrs = f"shape=circle, label={_quote(label)}"
    return f"  {_quote(node.id)} [{attrs}];"


def to_dot(graph: CorrelationGraph) -> str:
    """Render alerts as circles (hypothesized ones dashed) and conditions as squares."""
    nodes = "\n".join(_node_line(node) for node in graph.nodes)
    edges = "\n".join(f"  {_quote(edge.source)} -> {_quote(edge.target)};" for edge in graph.edges)
    return DOT_TEMPLATE % (nodes, edges)


def to_json(graph: CorrelationGraph) -> str:
    payload = graph.model_dump(mode="json")
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_correlation(path: Union[str, Path]) -> CorrelationGraph:
    return CorrelationGraph.model_validate_json(Path(path).read_text(encoding="utf-8"))
