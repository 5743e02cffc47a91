"""Undirected plan graph over assertion groups; edges carry the predicates two groups both define."""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping

import networkx as nx

from planner.partitioner import PartitionSet, group_sort_key
from planner.rml_model import ANY_CLASS_KEY, is_class_key, predicate_label


def build_plan_graph(p: PartitionSet) -> nx.Graph:
    return graph_from_predicates(p.predicates())


def graph_from_predicates(predicates: Mapping[str, Iterable[str]]) -> nx.Graph:
    """Node per group id; edge (a, b) labelled with the frozenset of shared predicate keys."""
    graph = nx.Graph()
    by_predicate: dict[str, list[str]] = defaultdict(list)
    for gid in sorted(predicates, key=group_sort_key):
        graph.add_node(gid)
        for key in predicates[gid]:
            by_predicate[key].append(gid)

    shared: dict[tuple[str, str], set[str]] = defaultdict(set)
    for key, owners in by_predicate.items():
        for i, a in enumerate(owners):
            for b in owners[i + 1:]:
                shared[(a, b)].add(key)
    for key, owners in by_predicate.items():
        if key == ANY_CLASS_KEY or not is_class_key(key):
            continue
        for a in by_predicate.get(ANY_CLASS_KEY, ()):
            for b in owners:
                if a != b:
                    shared[tuple(sorted((a, b), key=group_sort_key))].add(key)
    for (a, b), keys in shared.items():
        graph.add_edge(a, b, label=frozenset(keys))
    return graph


def label(graph: nx.Graph, a: str, b: str) -> frozenset[str]:
    if not graph.has_edge(a, b):
        return frozenset()
    return graph.edges[a, b]["label"]


def to_dot(graph: nx.Graph) -> str:
    lines = ["graph plan {"]
    for node in sorted(graph.nodes, key=group_sort_key):
        lines.append(f'  "{node}";')
    edges = sorted((tuple(sorted((a, b), key=group_sort_key)) for a, b in graph.edges), key=lambda e: tuple(map(group_sort_key, e)))
    for a, b in edges:
        names = ",".join(sorted(predicate_label(k) for k in label(graph, a, b)))
        lines.append(f'  "{a}" -- "{b}" [label="{names}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
