"""Greedy hyper-node agglomeration over the plan graph, producing a DR/NDR bushy tree.

Every group starts as its own hyper-node. The ordered list OL is sorted once by descending
degree, descending shared-predicate count and ascending group id. The planner repeatedly takes
the head HN of OL and merges it with the neighboring hyper-node that shares the most
predicates (DR), or, when HN has no neighbor left, with the hyper-node with the most
connections (NDR). The merged node goes to the end of OL without re-sorting.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

import networkx as nx

from planner.partitioner import group_sort_key
from planner.rml_model import shared_keys

logger = logging.getLogger(__name__)

T = TypeVar("T")


class UnionOp(str, Enum):
    DR = "DR"
    NDR = "NDR"


@dataclass(frozen=True)
class Leaf:
    group: str


@dataclass(frozen=True)
class Node:
    op: UnionOp
    left: "BushyTree"
    right: "BushyTree"


BushyTree = Leaf | Node


def fold(tree: BushyTree, on_leaf: Callable[[Leaf], T], on_node: Callable[[Node, T, T], T]) -> T:
    """Bottom-up evaluation in post-order, iterative so deep trees are fine."""
    stack: list[tuple[BushyTree, bool]] = [(tree, False)]
    results: list[T] = []
    while stack:
        current, expanded = stack.pop()
        if isinstance(current, Leaf):
            results.append(on_leaf(current))
        elif expanded:
            right = results.pop()
            left = results.pop()
            results.append(on_node(current, left, right))
        else:
            stack.append((current, True))
            stack.append((current.right, False))
            stack.append((current.left, False))
    return results[0]


def leaves(tree: BushyTree) -> list[str]:
    return fold(tree, lambda leaf: [leaf.group], lambda node, l, r: l + r)


def producible_predicates(tree: BushyTree, predicates: Mapping[str, Iterable[str]]) -> frozenset[str]:
    return fold(tree, lambda leaf: frozenset(predicates[leaf.group]), lambda node, l, r: l | r)


def annotate(tree: BushyTree, predicates: Mapping[str, Iterable[str]]) -> BushyTree:
    """Re-derive every union operator from overlap of the children's producible predicates."""
    def on_node(node, left, right):
        op = UnionOp.DR if shared_keys(left[1], right[1]) else UnionOp.NDR
        return Node(op, left[0], right[0]), left[1] | right[1]

    return fold(tree, lambda leaf: (leaf, frozenset(predicates[leaf.group])), on_node)[0]


def left_linear(order: Sequence[str], predicates: Mapping[str, Iterable[str]]) -> BushyTree:
    tree: BushyTree = Leaf(order[0])
    for gid in order[1:]:
        tree = Node(UnionOp.NDR, tree, Leaf(gid))
    return annotate(tree, predicates)


def right_linear(order: Sequence[str], predicates: Mapping[str, Iterable[str]]) -> BushyTree:
    tree: BushyTree = Leaf(order[-1])
    for gid in reversed(order[:-1]):
        tree = Node(UnionOp.NDR, Leaf(gid), tree)
    return annotate(tree, predicates)


def lazy_variant(tree: BushyTree, predicates: Mapping[str, Iterable[str]]) -> BushyTree:
    """Same shape with duplicate removal postponed: NDR everywhere below a DR root."""
    eager = annotate(tree, predicates)
    if isinstance(eager, Leaf):
        return eager
    needs_dr = count_ops(eager)[UnionOp.DR.value] > 0
    flat = fold(eager, lambda leaf: leaf, lambda node, l, r: Node(UnionOp.NDR, l, r))
    return Node(UnionOp.DR if needs_dr else UnionOp.NDR, flat.left, flat.right)


def count_ops(tree: BushyTree) -> dict[str, int]:
    counts = {UnionOp.DR.value: 0, UnionOp.NDR.value: 0, "leaves": 0}

    def on_leaf(leaf):
        counts["leaves"] += 1

    def on_node(node, left, right):
        counts[node.op.value] += 1

    fold(tree, on_leaf, on_node)
    return counts


def node_ids(tree: BushyTree) -> list[tuple[str, BushyTree]]:
    """(id, subtree) in post-order: leaves are named by group, unions U1, U2, ..."""
    numbered: list[tuple[str, BushyTree]] = []
    counter = itertools.count(1)

    def on_leaf(leaf):
        numbered.append((leaf.group, leaf))
        return leaf.group

    def on_node(node, left, right):
        name = f"U{next(counter)}"
        numbered.append((name, node))
        return name

    fold(tree, on_leaf, on_node)
    return numbered


def format_tree(tree: BushyTree) -> str:
    return fold(tree, lambda leaf: leaf.group, lambda node, l, r: f"{node.op.value}({l}, {r})")


def render_text(tree: BushyTree) -> str:
    lines = []
    stack: list[tuple[BushyTree, int]] = [(tree, 0)]
    while stack:
        current, depth = stack.pop()
        if isinstance(current, Leaf):
            lines.append("  " * depth + current.group)
        else:
            lines.append("  " * depth + current.op.value)
            stack.append((current.right, depth + 1))
            stack.append((current.left, depth + 1))
    return "\n".join(lines) + "\n"


def tree_to_dot(tree: BushyTree) -> str:
    lines = ["digraph plan {"]
    ids: dict[int, str] = {}
    for name, sub in node_ids(tree):
        ids[id(sub)] = name
        if isinstance(sub, Leaf):
            lines.append(f'  "{name}" [shape=box];')
        else:
            lines.append(f'  "{name}" [label="{sub.op.value}"];')
            lines.append(f'  "{name}" -> "{ids[id(sub.left)]}";')
            lines.append(f'  "{name}" -> "{ids[id(sub.right)]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def tree_to_json(tree: BushyTree) -> dict[str, Any]:
    return fold(
        tree,
        lambda leaf: {"group": leaf.group},
        lambda node, l, r: {"op": node.op.value, "left": l, "right": r},
    )


def tree_from_json(data: Mapping[str, Any]) -> BushyTree:
    if "group" in data:
        return Leaf(data["group"])
    return Node(UnionOp(data["op"]), tree_from_json(data["left"]), tree_from_json(data["right"]))


# --- greedy construction ---

@dataclass(frozen=True)
class HyperNode:
    tree: BushyTree
    covered_groups: frozenset[str]
    degree: int
    shared_count: int


@dataclass
class _Adjacency:
    labels: set[str] = field(default_factory=set)
    # the neighbor's groups adjacent to this hyper-node
    groups: set[str] = field(default_factory=set)
    edge_labels: int = 0

    def absorb(self, other: "_Adjacency") -> "_Adjacency":
        return _Adjacency(self.labels | other.labels, self.groups | other.groups, self.edge_labels + other.edge_labels)


@dataclass
class _Hyper:
    key: int
    tree: BushyTree
    covered: frozenset[str]
    first: tuple[int, str]
    adj: dict[int, _Adjacency] = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return sum(len(a.groups) for a in self.adj.values())

    @property
    def shared_count(self) -> int:
        return sum(a.edge_labels for a in self.adj.values())

    def snapshot(self) -> HyperNode:
        return HyperNode(self.tree, self.covered, self.degree, self.shared_count)


def generate_bushy_tree(graph: nx.Graph, trace: Callable[[HyperNode], None] | None = None) -> BushyTree:
    """Greedy bushy tree over a plan graph whose edges carry a `label` set of shared predicates."""
    if graph.number_of_nodes() == 0:
        raise ValueError("the plan graph has no groups")

    order = sorted(graph.nodes, key=group_sort_key)
    key_of = {gid: k for k, gid in enumerate(order)}
    hypers: dict[int, _Hyper] = {}
    for gid in order:
        hypers[key_of[gid]] = _Hyper(key_of[gid], Leaf(gid), frozenset((gid,)), group_sort_key(gid))
    for a, b, data in graph.edges(data=True):
        labels = set(data["label"])
        hypers[key_of[a]].adj[key_of[b]] = _Adjacency(set(labels), {b}, len(labels))
        hypers[key_of[b]].adj[key_of[a]] = _Adjacency(set(labels), {a}, len(labels))
    if trace is not None:
        for h in hypers.values():
            trace(h.snapshot())

    ol = deque(h.key for h in sorted(hypers.values(), key=lambda h: (-h.degree, -h.shared_count, h.first)))
    by_connections = [(-h.degree, h.first, h.key) for h in hypers.values()]
    heapq.heapify(by_connections)
    next_key = len(order)

    while len(hypers) > 1:
        hn = hypers.get(ol.popleft())
        if hn is None:
            continue
        if hn.adj:
            best_key = min(hn.adj, key=lambda k: (-len(hn.adj[k].labels), hypers[k].first))
            op = UnionOp.DR
        else:
            while True:
                _, _, best_key = heapq.heappop(by_connections)
                if best_key in hypers and best_key != hn.key:
                    break
            op = UnionOp.NDR
        best = hypers.pop(best_key)
        del hypers[hn.key]

        # concatenations keep the lower group ids on the left
        left, right = (best, hn) if op is UnionOp.NDR and best.first < hn.first else (hn, best)
        merged = _Hyper(next_key, Node(op, left.tree, right.tree), hn.covered | best.covered, min(hn.first, best.first))
        next_key += 1
        for part in (hn, best):
            for neighbor_key, adjacency in part.adj.items():
                if neighbor_key in (hn.key, best.key):
                    continue
                current = merged.adj.get(neighbor_key)
                merged.adj[neighbor_key] = adjacency if current is None else current.absorb(adjacency)
                back = hypers[neighbor_key].adj.pop(part.key)
                seen = hypers[neighbor_key].adj.get(merged.key)
                hypers[neighbor_key].adj[merged.key] = back if seen is None else seen.absorb(back)
        hypers[merged.key] = merged
        ol.append(merged.key)
        heapq.heappush(by_connections, (-merged.degree, merged.first, merged.key))
        if trace is not None:
            trace(merged.snapshot())
        logger.debug("hyper-node %s: %s", merged.key, op.value)

    (root,) = hypers.values()
    return root.tree
