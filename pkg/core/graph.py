"""
iac-analysis Resource Graph
Directed dataflow graph: nodes are resources, an edge s → t means s
induces requests on t
"""

import json
import logging
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .catalog import ANY_ROUTE, Catalog, Classification, EdgeKind
from .template import ReferenceMap, TemplateModel, get_path, path_startswith, resolve_references

logger = logging.getLogger("iac.graph")

Edge = Tuple[str, str]
EdgeMap = Dict[Edge, FrozenSet[str]]


@dataclass(frozen=True)
class NodeRecord:
    logical_id: str
    type_name: str
    classification: Classification
    properties: Dict[str, Any] = field(default_factory=dict, compare=False)
    routes: Dict[str, Tuple[str, ...]] = field(default_factory=dict, compare=False)

    @property
    def supported(self) -> bool:
        return self.classification == Classification.SUPPORTED

    def routes_to(self, destination: str) -> Tuple[str, ...]:
        return self.routes.get(destination, ())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.logical_id,
            "type": self.type_name,
            "classification": self.classification.value,
        }


@dataclass(frozen=True)
class ResourceGraph:
    nodes: Tuple[NodeRecord, ...] = ()
    edges: Tuple[Edge, ...] = ()

    def __post_init__(self):
        ids = {n.logical_id for n in self.nodes}
        for s, t in self.edges:
            if s not in ids or t not in ids:
                raise ValueError(f"edge {s} -> {t} references a missing node")
            if s == t:
                raise ValueError(f"self-loop on {s}")

    @property
    def node_ids(self) -> List[str]:
        return [n.logical_id for n in self.nodes]

    def node(self, logical_id: str) -> Optional[NodeRecord]:
        for n in self.nodes:
            if n.logical_id == logical_id:
                return n
        return None

    def has_edge(self, source: str, destination: str) -> bool:
        return (source, destination) in self.edges

    def predecessors(self, logical_id: str) -> List[str]:
        return [s for s, t in self.edges if t == logical_id]

    def successors(self, logical_id: str) -> List[str]:
        return [t for s, t in self.edges if s == logical_id]

    def in_degree(self, logical_id: str) -> int:
        return len(self.predecessors(logical_id))

    def neighbours(self, logical_id: str) -> Set[str]:
        return set(self.predecessors(logical_id)) | set(self.successors(logical_id))

    # ─── Surgery ───

    def without_node(self, logical_id: str) -> "ResourceGraph":
        nodes = []
        for n in self.nodes:
            if n.logical_id == logical_id:
                continue
            if logical_id in n.routes:
                routes = {k: v for k, v in n.routes.items() if k != logical_id}
                n = replace(n, routes=routes)
            nodes.append(n)
        edges = tuple(e for e in self.edges if logical_id not in e)
        return ResourceGraph(tuple(nodes), edges)

    def with_node(self, record: NodeRecord, edges: Iterable[Edge] = ()) -> "ResourceGraph":
        if self.node(record.logical_id) is not None:
            raise ValueError(f"node {record.logical_id} already exists")
        nodes = tuple(sorted(self.nodes + (record,), key=lambda n: n.logical_id))
        merged = tuple(sorted(set(self.edges) | set(edges)))
        return ResourceGraph(nodes, merged)


# ════════════════════════════════════════════════════════════════════
#  Edge inference
# ════════════════════════════════════════════════════════════════════

def _references_under(references: ReferenceMap, owner: str, prefix: str) -> List[str]:
    return sorted({
        target for (ref_owner, path), target in references.items()
        if ref_owner == owner and path_startswith(path, prefix)
    })


def _type_of(model: TemplateModel, logical_id: str) -> Optional[str]:
    decl = model.resources.get(logical_id)
    return decl.type_name if decl else None


def _route_label(properties: Dict[str, Any], path: Optional[str]) -> Optional[str]:
    if not path:
        return None
    value = get_path(properties, path)
    if isinstance(value, str) and value:
        return value.upper()
    # unresolvable method: the edge may carry any of them
    return ANY_ROUTE


def infer_edges(node: NodeRecord, model: TemplateModel, references: ReferenceMap,
                catalog: Catalog) -> EdgeMap:
    """Edges contributed by one node's configuration, with their route labels"""
    found: Dict[Edge, Set[str]] = defaultdict(set)

    def add(source: str, destination: str, label: Optional[str]):
        labels = found[(source, destination)]
        if label:
            labels.add(label)

    for rule in catalog.edge_rules_for(node.type_name):
        if rule.kind == EdgeKind.OUTBOUND:
            for prefix in rule.paths:
                for target in _references_under(references, node.logical_id, prefix):
                    if rule.target_types and _type_of(model, target) not in rule.target_types:
                        continue
                    add(node.logical_id, target, rule.label)

        elif rule.kind == EdgeKind.BINDING:
            sources = _references_under(references, node.logical_id, rule.source)
            destinations = _references_under(references, node.logical_id, rule.destination)
            for source in sources:
                for destination in destinations:
                    add(source, destination, None)

        elif rule.kind == EdgeKind.VIA:
            for decl in model.of_type(rule.resource):
                if node.logical_id not in _references_under(references, decl.logical_id, rule.link):
                    continue
                label = _route_label(decl.properties, rule.label_from)
                for prefix in rule.paths:
                    for target in _references_under(references, decl.logical_id, prefix):
                        add(node.logical_id, target, label)

    return {edge: frozenset(labels) for edge, labels in found.items()}


def build_graph(model: TemplateModel, catalog: Catalog,
                references: Optional[ReferenceMap] = None) -> ResourceGraph:
    """Resource graph of every non-NonDataflow resource, sorted by logical-id"""
    references = references if references is not None else resolve_references(model)

    records: Dict[str, NodeRecord] = {}
    for logical_id in sorted(model.resources):
        decl = model.resources[logical_id]
        classification = catalog.classify(decl.type_name)
        if classification == Classification.NON_DATAFLOW:
            continue
        records[logical_id] = NodeRecord(logical_id, decl.type_name, classification, decl.properties)

    labels: Dict[Edge, Set[str]] = defaultdict(set)
    for logical_id, record in records.items():
        for (source, destination), found in infer_edges(record, model, references, catalog).items():
            if source == destination or source not in records or destination not in records:
                continue
            labels[(source, destination)] |= found

    edges = tuple(sorted(labels))
    routes: Dict[str, Dict[str, Tuple[str, ...]]] = defaultdict(dict)
    for (source, destination), found in labels.items():
        if found:
            routes[source][destination] = tuple(sorted(found))

    nodes = tuple(
        replace(record, routes=dict(sorted(routes[logical_id].items())))
        for logical_id, record in records.items()
    )
    logger.debug(f"Graph: {len(nodes)} nodes, {len(edges)} edges")
    return ResourceGraph(nodes, edges)


# ════════════════════════════════════════════════════════════════════
#  Statistics & export
# ════════════════════════════════════════════════════════════════════

def graph_stats(graph: ResourceGraph) -> Dict[str, Any]:
    supported = [n.logical_id for n in graph.nodes if n.supported]
    degrees = [graph.in_degree(n) for n in supported]
    return {
        "node_count": len(graph.nodes),
        "edge_count": len(graph.edges),
        "supported_node_count": len(supported),
        "mean_in_degree": statistics.fmean(degrees) if degrees else 0.0,
        "stddev_in_degree": statistics.pstdev(degrees) if degrees else 0.0,
    }


def _dot_id(text: str) -> str:
    return json.dumps(text)


def to_dot(graph: ResourceGraph) -> str:
    lines = ["digraph resources {", "  rankdir=LR;", "  node [shape=box];"]
    for n in graph.nodes:
        label = _dot_id(f"{n.logical_id}\n{n.type_name}")
        style = "" if n.supported else ", style=dashed"
        lines.append(f"  {_dot_id(n.logical_id)} [label={label}{style}];")
    for s, t in graph.edges:
        routes = graph.node(s).routes_to(t)
        attrs = f" [label={_dot_id(','.join(routes))}]" if routes else ""
        lines.append(f"  {_dot_id(s)} -> {_dot_id(t)}{attrs};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(graph: ResourceGraph) -> Dict[str, Any]:
    return {
        "nodes": [n.to_dict() for n in graph.nodes],
        "edges": [
            {"source": s, "target": t, "routes": list(graph.node(s).routes_to(t))}
            for s, t in graph.edges
        ],
    }
