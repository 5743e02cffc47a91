from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from planner.bushy_planner import Leaf, Node, UnionOp, generate_bushy_tree, lazy_variant, left_linear
from planner.cost_model import (
    CostMode,
    CostModel,
    PlanCoster,
    collect_stats,
    delta,
    fu,
    load_stats,
    phi,
    read_stats,
    stats_to_json,
)
from planner.partitioner import partition
from planner.plan_graph import build_plan_graph
from utils.errors import CostModelError


def test_union_costs() -> None:
    assert phi(UnionOp.NDR, 3, 5) == 8
    assert phi(UnionOp.NDR, 3, 5, concat_cost=0.0) == 0
    assert phi(UnionOp.DR, 4, 4) == 24
    assert phi(UnionOp.DR, 0, 1) == 1
    with pytest.raises(CostModelError):
        phi(UnionOp.DR, -1, 2)


def test_leaf_costs_of_running_example(running_example) -> None:
    stats = collect_stats(running_example)
    first, second = partition(running_example).groups

    assert stats["S1.csv"].rows == 3 and stats["S3.csv"].rows == 3
    assert delta(first, running_example, stats) == 15
    # the join reads both sources
    assert delta(second, running_example, stats) == 12


def test_duplicate_rate(tmp_path: Path) -> None:
    path = tmp_path / "dups.csv"
    path.write_text("a,b\n1,2\n1,2\n3,4\n", encoding="utf-8")

    stats = read_stats(str(path))
    assert stats.rows == 3
    assert stats.duplicate_rate == pytest.approx(1 / 3)


def test_stats_file_is_reloaded(running_example, tmp_path: Path) -> None:
    stats = collect_stats(running_example)
    path = tmp_path / "stats.json"
    path.write_text(json.dumps(stats_to_json(stats)), encoding="utf-8")

    assert load_stats(path) == stats
    with pytest.raises(CostModelError):
        load_stats(tmp_path / "absent.json")


def test_breakdown_sums_to_total(motivating_example, motivating_partitions) -> None:
    coster = PlanCoster(motivating_partitions, motivating_example, collect_stats(motivating_example))
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))
    estimate = coster.estimate(tree)

    assert estimate.value == pytest.approx(math.fsum(estimate.breakdown.values()))
    assert estimate.value == pytest.approx(coster.value(tree))
    assert list(estimate.breakdown) == ["G1", "G2", "G4", "U1", "U2", "G3", "U3"]
    assert estimate.kinds["U1"] == "DR"
    assert "total" in estimate.table()


def test_single_leaf_and_one_concatenation(motivating_example, motivating_partitions) -> None:
    coster = PlanCoster(motivating_partitions, motivating_example, collect_stats(motivating_example))

    assert coster.value(Leaf("G1")) == coster.delta["G1"] == 12
    pair = Node(UnionOp.NDR, Leaf("G1"), Leaf("G3"))
    assert coster.value(pair) == 12 + 12 + (9 + 9)


def test_bushy_plan_beats_left_linear(motivating_example, motivating_partitions) -> None:
    coster = PlanCoster(
        motivating_partitions, motivating_example, collect_stats(motivating_example), CostModel.abstract_ops()
    )
    predicates = motivating_partitions.predicates()
    bushy = generate_bushy_tree(build_plan_graph(motivating_partitions))

    assert coster.value(bushy) <= coster.value(left_linear(motivating_partitions.ids, predicates))
    assert coster.value(bushy) <= coster.value(lazy_variant(bushy, predicates))


def test_measured_mode_needs_every_group(motivating_example, motivating_partitions) -> None:
    stats = collect_stats(motivating_example)
    model = CostModel(CostMode.MEASURED, measurements={"G1": 1.5})
    with pytest.raises(CostModelError):
        PlanCoster(motivating_partitions, motivating_example, stats, model)

    model = CostModel(CostMode.MEASURED, measurements={"G1": 1.5, "G2": 2.0, "G3": 0.5, "G4": 1.0})
    coster = PlanCoster(motivating_partitions, motivating_example, stats, model)
    assert coster.value(Node(UnionOp.NDR, Leaf("G1"), Leaf("G2"))) == 1.5 + 2.0 + (9 + 12)


def test_cost_mode_parsing() -> None:
    assert CostMode.parse("AbstractOps") is CostMode.ABSTRACT
    assert CostMode.parse("measuredseconds") is CostMode.MEASURED
    with pytest.raises(CostModelError):
        CostMode.parse("memory")
    with pytest.raises(CostModelError):
        CostModel(row_cost=-1.0)


def test_fu_matches_the_coster(motivating_example, motivating_partitions) -> None:
    stats = collect_stats(motivating_example)
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))
    estimate = fu(tree, motivating_partitions, motivating_example, stats)

    assert estimate.value == PlanCoster(motivating_partitions, motivating_example, stats).estimate(tree).value
    # G1 concatenated with the 12 + 15 triples of DR(G2, G4)
    assert estimate.breakdown["U2"] == 9 + 27
