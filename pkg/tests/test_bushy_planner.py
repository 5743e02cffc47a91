from __future__ import annotations

import networkx as nx
import pytest

from planner.bushy_planner import (
    Leaf,
    Node,
    UnionOp,
    annotate,
    count_ops,
    format_tree,
    generate_bushy_tree,
    lazy_variant,
    leaves,
    left_linear,
    node_ids,
    producible_predicates,
    render_text,
    right_linear,
    tree_from_json,
    tree_to_dot,
    tree_to_json,
)
from planner.plan_graph import build_plan_graph, graph_from_predicates


def test_motivating_example_tree(motivating_partitions) -> None:
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))

    assert format_tree(tree) == "NDR(NDR(G1, DR(G2, G4)), G3)"
    assert count_ops(tree) == {"DR": 1, "NDR": 2, "leaves": 4}


def test_greedy_tree_annotation_matches_predicate_overlap(motivating_partitions) -> None:
    predicates = motivating_partitions.predicates()
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))

    assert annotate(tree, predicates) == tree
    assert sorted(leaves(tree)) == motivating_partitions.ids
    assert producible_predicates(tree, predicates) == frozenset().union(*predicates.values())


def test_trace_sees_every_hyper_node(motivating_partitions) -> None:
    created = []
    generate_bushy_tree(build_plan_graph(motivating_partitions), trace=created.append)

    assert len(created) == 2 * 4 - 1
    assert created[4].covered_groups == {"G2", "G4"}
    assert created[-1].covered_groups == {"G1", "G2", "G3", "G4"}
    assert created[-1].degree == 0


def test_edgeless_graph_yields_concatenations_only() -> None:
    graph = graph_from_predicates({"G1": {"a"}, "G2": {"b"}, "G3": {"c"}, "G4": {"d"}})
    tree = generate_bushy_tree(graph)

    assert format_tree(tree) == "NDR(NDR(NDR(G1, G2), G3), G4)"


def test_single_group_and_empty_graph() -> None:
    graph = nx.Graph()
    with pytest.raises(ValueError):
        generate_bushy_tree(graph)
    graph.add_node("G1")
    assert generate_bushy_tree(graph) == Leaf("G1")


def test_largest_shared_label_is_merged_first() -> None:
    graph = graph_from_predicates({"G1": {"a", "b", "x"}, "G2": {"a"}, "G3": {"a", "b"}})
    tree = generate_bushy_tree(graph)

    # G1 has the highest degree and shares {a, b} with G3 but only {a} with G2
    assert format_tree(tree) == "DR(G2, DR(G1, G3))"


def test_linear_baselines_and_lazy_variant(motivating_partitions) -> None:
    predicates = motivating_partitions.predicates()
    order = motivating_partitions.ids

    assert format_tree(left_linear(order, predicates)) == "DR(NDR(NDR(G1, G2), G3), G4)"
    assert format_tree(right_linear(order, predicates)) == "NDR(G1, DR(G2, NDR(G3, G4)))"
    greedy = generate_bushy_tree(build_plan_graph(motivating_partitions))
    assert format_tree(lazy_variant(greedy, predicates)) == "DR(NDR(G1, NDR(G2, G4)), G3)"


def test_node_ids_are_post_order(motivating_partitions) -> None:
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))

    assert [name for name, _ in node_ids(tree)] == ["G1", "G2", "G4", "U1", "U2", "G3", "U3"]


def test_renderings() -> None:
    tree = Node(UnionOp.NDR, Leaf("G3"), Node(UnionOp.DR, Leaf("G1"), Leaf("G2")))

    assert render_text(tree) == "NDR\n  G3\n  DR\n    G1\n    G2\n"
    assert '"U2" -> "G3";' in tree_to_dot(tree)
    assert tree_from_json(tree_to_json(tree)) == tree
