"""Plan utility fu: leaf execution cost delta plus union cost phi, summed over the tree."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from planner.bushy_planner import BushyTree, Leaf, UnionOp, fold, node_ids
from planner.partitioner import AssertionGroup, PartitionSet
from planner.rml_model import AssertionKind, DataIntegrationSystem
from utils.errors import CostModelError, SourceReadError

logger = logging.getLogger(__name__)


class CostMode(str, Enum):
    ABSTRACT = "AbstractOps"
    MEASURED = "MeasuredSeconds"

    @classmethod
    def parse(cls, text: str) -> "CostMode":
        lowered = str(text).lower()
        for mode in cls:
            if lowered in (mode.value.lower(), mode.name.lower()):
                return mode
        if lowered in ("abstract", "ops"):
            return cls.ABSTRACT
        if lowered in ("measured", "seconds"):
            return cls.MEASURED
        raise CostModelError(f"Unknown cost mode {text!r}; use AbstractOps or MeasuredSeconds")


@dataclass(frozen=True)
class CostModel:
    mode: CostMode = CostMode.ABSTRACT
    row_cost: float = 1.0
    join_cost: float = 1.0
    dedup_cost: float = 1.0
    concat_cost: float = 1.0
    # group id -> seconds, for MeasuredSeconds
    measurements: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("row_cost", "join_cost", "dedup_cost", "concat_cost"):
            if getattr(self, name) < 0:
                raise CostModelError(f"{name} must be nonnegative")

    @classmethod
    def abstract_ops(cls, row_cost: float = 1.0, join_cost: float = 1.0, dedup_cost: float = 1.0) -> "CostModel":
        """Counts comparisons and insertions; concatenation performs neither."""
        return cls(CostMode.ABSTRACT, row_cost, join_cost, dedup_cost, concat_cost=0.0)

    def coefficients(self) -> dict[str, float]:
        return {
            "row_cost": self.row_cost,
            "join_cost": self.join_cost,
            "dedup_cost": self.dedup_cost,
            "concat_cost": self.concat_cost,
        }


@dataclass(frozen=True)
class SourceStats:
    rows: int
    duplicate_rate: float = 0.0


def read_stats(path: str) -> SourceStats:
    """Row count and share of rows repeating an earlier row."""
    try:
        with open(path, newline="", encoding="utf-8-sig") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            seen = set()
            rows = 0
            for row in reader:
                rows += 1
                seen.add(tuple(row))
    except OSError as exc:
        raise SourceReadError(f"Cannot read {path}: {exc}") from exc
    return SourceStats(rows, (rows - len(seen)) / rows if rows else 0.0)


def collect_stats(dis: DataIntegrationSystem) -> dict[str, SourceStats]:
    return {sid: read_stats(source.path) for sid, source in sorted(dis.sources.items())}


def stats_to_json(stats: Mapping[str, SourceStats]) -> dict[str, Any]:
    return {sid: {"rows": s.rows, "duplicate_rate": s.duplicate_rate} for sid, s in sorted(stats.items())}


def load_stats(path: str | Path) -> dict[str, SourceStats]:
    """Statistics saved by a previous `plan` (stats.json), so sources need not be rescanned."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return {
            sid: SourceStats(int(entry["rows"]), float(entry.get("duplicate_rate", 0.0)))
            for sid, entry in data.items()
        }
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CostModelError(f"Cannot read source statistics {path}: {exc}") from exc


def _rows(stats: Mapping[str, SourceStats], source: str) -> int:
    try:
        return stats[source].rows
    except KeyError:
        raise CostModelError(f"No statistics for source {source}") from None


def delta(g: AssertionGroup, dis: DataIntegrationSystem, stats: Mapping[str, SourceStats],
          model: CostModel = CostModel()) -> float:
    if model.mode is CostMode.MEASURED:
        if g.id not in model.measurements:
            raise CostModelError(f"No measured execution time for group {g.id}")
        return float(model.measurements[g.id])
    total = []
    for aid in sorted(g.executed):
        a = dis.assertion(aid)
        if a.kind is AssertionKind.MULTI_SOURCE_ROLE:
            # hash join: build over the parent, probe with the child
            total.append(model.join_cost * (_rows(stats, a.child_source) + _rows(stats, a.parent_source)))
        else:
            total.append(model.row_cost * _rows(stats, a.child_source))
    return math.fsum(total)


def phi(op: UnionOp, left_cardinality: float, right_cardinality: float,
        dedup_cost: float = 1.0, concat_cost: float = 1.0) -> float:
    if left_cardinality < 0 or right_cardinality < 0:
        raise CostModelError("cardinalities must be nonnegative")
    n = left_cardinality + right_cardinality
    if op is UnionOp.DR:
        return dedup_cost * n * math.log2(max(n, 2))
    return concat_cost * n


def leaf_cardinality(g: AssertionGroup, dis: DataIntegrationSystem, stats: Mapping[str, SourceStats]) -> float:
    return float(sum(_rows(stats, dis.assertion(a).child_source) for a in g.executed))


@dataclass(frozen=True)
class CostEstimate:
    value: float
    breakdown: dict[str, float]
    cardinalities: dict[str, float] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)

    def table(self) -> str:
        width = max([len(n) for n in self.breakdown] + [4])
        lines = [f"{'node':<{width}}  {'kind':<5}  {'cardinality':>12}  {'cost':>14}"]
        for name, cost in self.breakdown.items():
            lines.append(
                f"{name:<{width}}  {self.kinds.get(name, ''):<5}  {self.cardinalities.get(name, 0):>12.1f}  {cost:>14.2f}"
            )
        lines.append(f"{'total':<{width}}  {'':<5}  {'':>12}  {self.value:>14.2f}")
        return "\n".join(lines)

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "breakdown": self.breakdown,
            "cardinalities": self.cardinalities,
            "kinds": self.kinds,
        }


class PlanCoster:
    """Evaluates fu for trees over one partition set; leaf deltas are computed once."""

    def __init__(self, partitions: PartitionSet, dis: DataIntegrationSystem,
                 stats: Mapping[str, SourceStats], model: CostModel = CostModel()):
        self.model = model
        self.groups = {g.id: g for g in partitions.groups}
        self.stats = stats
        self.delta = {gid: delta(g, dis, stats, model) for gid, g in self.groups.items()}
        self.cardinality = {gid: leaf_cardinality(g, dis, stats) for gid, g in self.groups.items()}

    def _retained(self, footprint: frozenset[str]) -> float:
        rates = [self.stats[s].duplicate_rate for s in sorted(footprint) if s in self.stats]
        return 1.0 - (sum(rates) / len(rates) if rates else 0.0)

    def value(self, tree: BushyTree) -> float:
        """fu without the per-node bookkeeping, for exhaustive search."""
        def on_leaf(leaf):
            g = self.groups[leaf.group]
            return self.delta[leaf.group], self.cardinality[leaf.group], g.source_footprint

        def on_node(node, left, right):
            cost = left[0] + right[0] + phi(node.op, left[1], right[1], self.model.dedup_cost, self.model.concat_cost)
            footprint = left[2] | right[2]
            card = left[1] + right[1]
            if node.op is UnionOp.DR:
                card *= self._retained(footprint)
            return cost, card, footprint

        return fold(tree, on_leaf, on_node)[0]

    def estimate(self, tree: BushyTree) -> CostEstimate:
        breakdown: dict[str, float] = {}
        cards: dict[str, float] = {}
        kinds: dict[str, str] = {}
        footprints: dict[int, frozenset[str]] = {}
        names: dict[int, str] = {}
        for name, sub in node_ids(tree):
            names[id(sub)] = name
            if isinstance(sub, Leaf):
                breakdown[name] = self.delta[sub.group]
                cards[name] = self.cardinality[sub.group]
                kinds[name] = "leaf"
                footprints[id(sub)] = self.groups[sub.group].source_footprint
                continue
            left, right = names[id(sub.left)], names[id(sub.right)]
            breakdown[name] = phi(sub.op, cards[left], cards[right], self.model.dedup_cost, self.model.concat_cost)
            footprint = footprints[id(sub.left)] | footprints[id(sub.right)]
            footprints[id(sub)] = footprint
            card = cards[left] + cards[right]
            cards[name] = card * self._retained(footprint) if sub.op is UnionOp.DR else card
            kinds[name] = sub.op.value
        return CostEstimate(math.fsum(breakdown.values()), breakdown, cards, kinds)


def fu(tree: BushyTree, partitions: PartitionSet, dis: DataIntegrationSystem,
       stats: Mapping[str, SourceStats], model: CostModel = CostModel()) -> CostEstimate:
    return PlanCoster(partitions, dis, stats, model).estimate(tree)
