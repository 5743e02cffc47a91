"""Exhaustive plan space: enumeration, exact optimum, and all-plans output equivalence."""
from __future__ import annotations

import filecmp
import logging
import math
import shutil
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from config.settings import ENUMERATION_LIMIT
from engine.materializer import TripleSet, execute_tree, materialize_all, materialize_group
from planner.bushy_planner import BushyTree, Leaf, Node, UnionOp, format_tree, generate_bushy_tree, leaves
from planner.cost_model import CostModel, PlanCoster, collect_stats
from planner.partitioner import PartitionSet, partition
from planner.plan_graph import build_plan_graph
from planner.rml_model import AssertionKind, DataIntegrationSystem, shared_keys
from utils.errors import EnumerationLimitError, KGPlannerError

logger = logging.getLogger(__name__)


def plan_count(n: int) -> int:
    """Ordered binary trees over n labelled leaves: (2n-2)!/(n-1)!."""
    if n < 1:
        raise ValueError("a plan needs at least one group")
    return math.factorial(2 * n - 2) // math.factorial(n - 1)


@dataclass(frozen=True)
class PlanSpace:
    groups: tuple[str, ...]
    count: int
    _factory: Callable[[], Iterator[BushyTree]] = field(repr=False, compare=False)

    def __iter__(self) -> Iterator[BushyTree]:
        return self._factory()

    @classmethod
    def of(cls, trees: Iterable[BushyTree]) -> "PlanSpace":
        """A space over explicitly given trees."""
        trees = tuple(trees)
        groups = tuple(sorted({leaf for t in trees for leaf in leaves(t)}))
        return cls(groups, len(trees), lambda: iter(trees))


def enumerate_trees(groups: Sequence[str], predicates: Mapping[str, Iterable[str]],
                    limit: int = ENUMERATION_LIMIT) -> PlanSpace:
    """Every ordered full binary tree over `groups`, unions annotated by predicate overlap."""
    groups = tuple(groups)
    n = len(groups)
    if n < 1:
        raise EnumerationLimitError("cannot enumerate plans over zero groups")
    if n > limit:
        raise EnumerationLimitError(
            f"{n} groups span {plan_count(n)} plans; the enumeration limit is {limit} groups"
        )
    full = (1 << n) - 1
    produced: dict[int, frozenset[str]] = {}

    def predicates_of(mask: int) -> frozenset[str]:
        if mask not in produced:
            produced[mask] = frozenset().union(
                *(frozenset(predicates[groups[i]]) for i in range(n) if mask >> i & 1)
            )
        return produced[mask]

    def trees(mask: int) -> Iterator[BushyTree]:
        if mask & (mask - 1) == 0:
            yield Leaf(groups[mask.bit_length() - 1])
            return
        left = (mask - 1) & mask
        while left:
            right = mask ^ left
            op = UnionOp.DR if shared_keys(predicates_of(left), predicates_of(right)) else UnionOp.NDR
            for lt in trees(left):
                for rt in trees(right):
                    yield Node(op, lt, rt)
            left = (left - 1) & mask

    return PlanSpace(groups, plan_count(n), lambda: trees(full))


def optimal_plan(space: PlanSpace, coster: PlanCoster) -> tuple[BushyTree, float]:
    """Exhaustive minimum of fu; the first tree in enumeration order wins ties."""
    best, best_cost = None, math.inf
    for tree in space:
        cost = coster.value(tree)
        if cost < best_cost:
            best, best_cost = tree, cost
    if best is None:
        raise EnumerationLimitError("empty plan space")
    return best, best_cost


@dataclass
class EquivalenceReport:
    tree_count: int = 0
    reference_triples: int = 0
    mismatches: list[dict[str, Any]] = field(default_factory=list)
    errors: list[dict[str, Any]] = field(default_factory=list)

    @property
    def equivalent(self) -> bool:
        return not self.mismatches and not self.errors

    def to_json(self) -> dict[str, Any]:
        return {
            "tree_count": self.tree_count,
            "equivalent": self.equivalent,
            "reference_triples": self.reference_triples,
            "mismatches": self.mismatches,
            "errors": self.errors,
        }


def _first_difference(reference: Path, candidate: Path) -> tuple[str, str]:
    expected = Counter(reference.read_text(encoding="utf-8").splitlines())
    actual = Counter(candidate.read_text(encoding="utf-8").splitlines())
    missing = sorted((expected - actual).elements())
    extra = sorted((actual - expected).elements())
    if missing and (not extra or missing[0] <= extra[0]):
        return "missing", missing[0]
    if extra:
        return "unexpected", extra[0]
    return "order", ""


def check_equivalence(space: PlanSpace, partitions: PartitionSet, dis: DataIntegrationSystem,
                      work_dir: str | Path, *, stop_at_first: bool = True) -> EquivalenceReport:
    """Execute every tree and compare its output byte for byte with the unpartitioned execution."""
    work_dir = Path(work_dir)
    reference = materialize_all(dis, work_dir / "reference.nt")
    leaf_sets: dict[str, TripleSet] = {
        g.id: materialize_group(g, dis, work_dir / "leaves" / f"{g.id}.nt") for g in partitions.groups
    }
    report = EquivalenceReport(reference_triples=reference.cardinality)
    for index, tree in enumerate(space):
        report.tree_count += 1
        run_dir = work_dir / f"plan{index}"
        try:
            result = execute_tree(tree, partitions, dis, run_dir, leaf_results=leaf_sets, parallelism=1)
        except KGPlannerError as exc:
            report.errors.append({"plan": index, "tree": format_tree(tree), "error": exc.message})
            logger.info("plan %d failed: %s", index, exc.message)
        else:
            if not filecmp.cmp(reference.path, result.output, shallow=False):
                side, line = _first_difference(Path(reference.path), Path(result.output))
                report.mismatches.append(
                    {"plan": index, "tree": format_tree(tree), "against": "unpartitioned", side: line}
                )
        finally:
            shutil.rmtree(run_dir, ignore_errors=True)
        if stop_at_first and not report.equivalent:
            break
    return report


def greedy_optimality_violations(dis: DataIntegrationSystem) -> list[str]:
    """Reasons the greedy plan may miss the optimum; empty when both conditions hold.

    1. all multi-source roles into a source come from a single child source;
    2. every predicate (class keys included) is defined by at most one assertion.
    """
    violations = []
    children: dict[str, set[str]] = defaultdict(set)
    for a in dis.assertions:
        if a.kind is AssertionKind.MULTI_SOURCE_ROLE:
            children[a.parent_source].add(a.child_source)
    for parent, sources in sorted(children.items()):
        if len(sources) > 1:
            violations.append(f"{parent} is referenced from {', '.join(sorted(sources))}")
    defined = Counter(a.predicate_key for a in dis.assertions)
    for key, count in sorted(defined.items()):
        if count > 1:
            violations.append(f"{key} is defined by {count} assertions")
    return violations


def verify_dis(dis: DataIntegrationSystem, work_dir: str | Path, *, model: CostModel | None = None,
               limit: int = ENUMERATION_LIMIT, check_outputs: bool = True,
               partitions: PartitionSet | None = None) -> dict[str, Any]:
    partitions = partitions or partition(dis)
    predicates = partitions.predicates()
    greedy = generate_bushy_tree(build_plan_graph(partitions))
    coster = PlanCoster(partitions, dis, collect_stats(dis), model or CostModel.abstract_ops())
    space = enumerate_trees(partitions.ids, predicates, limit)
    best, optimal_cost = optimal_plan(space, coster)
    greedy_cost = coster.value(greedy)
    violations = greedy_optimality_violations(dis)
    report = {
        "n": len(partitions),
        "tree_count": space.count,
        "equivalent": None,
        "greedy_cost": greedy_cost,
        "optimal_cost": optimal_cost,
        "gap": greedy_cost - optimal_cost,
        "theorem1_conditions_met": not violations,
        "greedy_tree": format_tree(greedy),
        "optimal_tree": format_tree(best),
        "violations": violations,
    }
    if check_outputs:
        equivalence = check_equivalence(space, partitions, dis, work_dir)
        report["equivalent"] = equivalence.equivalent
        report["equivalence"] = equivalence.to_json()
    return report
