"""Intra-/inter-source partitioning of mapping assertions and the merge fixed point.

Initial partitions: one Intra group per source with its single-source assertions, one Inter
group per (child source, parent source) with the multi-source roles between them. An Inter
group also executes a copy ("borrowed") of the parent's concept assertion; ownership stays
with the parent's Intra group until an Inter group absorbs it.

Merge rules, applied until nothing changes:

* absorb: an Inter group takes the Intra group of the source it references; when several
  reference the same source, the smallest (child, parent) pair wins.
* combine: two intra-only groups join when the result spans at most two sources and no Inter
  group links those sources.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from planner.rml_model import AssertionKind, DataIntegrationSystem, local_name

logger = logging.getLogger(__name__)


class GroupKind(str, Enum):
    INTRA = "Intra"
    INTER = "Inter"
    MERGED = "Merged"


@dataclass(frozen=True)
class AssertionGroup:
    id: str
    kind: GroupKind
    members: frozenset[str]
    source_footprint: frozenset[str]
    defined_predicates: frozenset[str]
    borrowed: frozenset[str] = frozenset()
    inter_links: frozenset[tuple[str, str]] = frozenset()
    intra_sources: frozenset[str] = frozenset()

    @property
    def executed(self) -> frozenset[str]:
        """Assertion ids this group runs: its own members plus borrowed parent concepts."""
        return self.members | self.borrowed

    @property
    def number(self) -> int:
        return int(self.id[1:])

    def describe(self) -> str:
        footprint = ",".join(sorted(self.source_footprint))
        members = ",".join(sorted(self.members))
        predicates = ",".join(sorted(local_name(p) for p in self.defined_predicates))
        line = f"{self.id} {self.kind.value} [{footprint}] members={{{members}}} predicates={{{predicates}}}"
        if self.borrowed:
            line += f" borrowed={{{','.join(sorted(self.borrowed))}}}"
        return line


def group_sort_key(group_id: str) -> tuple[int, str]:
    digits = group_id[1:]
    return (int(digits), group_id) if digits.isdigit() else (1 << 62, group_id)


@dataclass(frozen=True)
class PartitionSet:
    groups: tuple[AssertionGroup, ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(sorted(self.groups, key=lambda g: group_sort_key(g.id))))

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def ids(self) -> list[str]:
        return [g.id for g in self.groups]

    def group(self, group_id: str) -> AssertionGroup:
        for g in self.groups:
            if g.id == group_id:
                return g
        raise KeyError(group_id)

    def predicates(self) -> dict[str, frozenset[str]]:
        return {g.id: g.defined_predicates for g in self.groups}

    def describe(self) -> str:
        return "\n".join(g.describe() for g in self.groups)


def predicate_keys(dis: DataIntegrationSystem, assertion_ids: Iterable[str]) -> frozenset[str]:
    return frozenset(dis.assertion(a).predicate_key for a in assertion_ids)


def partition_violations(p: PartitionSet, assertion_ids: Iterable[str]) -> list[str]:
    """Broken partition laws over owned members: coverage of M and pairwise disjointness."""
    problems = []
    seen: dict[str, str] = {}
    for g in p.groups:
        for a in g.members:
            if a in seen:
                problems.append(f"{a} is owned by both {seen[a]} and {g.id}")
            seen[a] = g.id
    expected = set(assertion_ids)
    missing = expected - seen.keys()
    extra = seen.keys() - expected
    if missing:
        problems.append("unassigned assertions: " + ", ".join(sorted(missing)))
    if extra:
        problems.append("unknown assertions: " + ", ".join(sorted(extra)))
    return problems


def _greedy_optimality_flags(dis: DataIntegrationSystem) -> list[str]:
    children: dict[str, set[str]] = defaultdict(set)
    for a in dis.assertions:
        if a.kind is AssertionKind.MULTI_SOURCE_ROLE and a.referenced_assertion:
            children[a.referenced_assertion].add(a.child_source)
    return [
        f"{concept} is referenced from {len(sources)} child sources; "
        "the data integration system is outside the greedy optimality conditions"
        for concept, sources in sorted(children.items())
        if len(sources) > 1
    ]


def initial_partitions(dis: DataIntegrationSystem) -> PartitionSet:
    intra: dict[str, list[str]] = defaultdict(list)
    inter: dict[tuple[str, str], list[str]] = defaultdict(list)
    parents: dict[str, set[str]] = defaultdict(set)
    for a in dis.assertions:
        if a.single_source:
            intra[a.child_source].append(a.id)
        else:
            inter[(a.child_source, a.parent_source)].append(a.id)
            parents[a.child_source].add(a.parent_source)

    groups = []

    def add(kind, members, borrowed, footprint, links, intra_sources):
        members = frozenset(members)
        groups.append(AssertionGroup(
            id=f"G{len(groups) + 1}",
            kind=kind,
            members=members,
            source_footprint=frozenset(footprint),
            defined_predicates=predicate_keys(dis, members | borrowed),
            borrowed=frozenset(borrowed),
            inter_links=frozenset(links),
            intra_sources=frozenset(intra_sources),
        ))

    for source in sorted(dis.sources):
        if intra.get(source):
            add(GroupKind.INTRA, intra[source], frozenset(), {source}, (), {source})
        for parent in sorted(parents.get(source, ())):
            members = inter[(source, parent)]
            borrowed = frozenset(
                dis.assertion(a).referenced_assertion for a in members
                if dis.assertion(a).referenced_assertion is not None
            )
            add(GroupKind.INTER, members, borrowed, {source, parent}, {(source, parent)}, ())

    flags = _greedy_optimality_flags(dis)
    for flag in flags:
        logger.warning(flag)
    return PartitionSet(tuple(groups), tuple(flags))


def _merge(keep: AssertionGroup, other: AssertionGroup) -> AssertionGroup:
    members = keep.members | other.members
    return AssertionGroup(
        id=keep.id,
        kind=GroupKind.MERGED,
        members=members,
        source_footprint=keep.source_footprint | other.source_footprint,
        defined_predicates=keep.defined_predicates | other.defined_predicates,
        borrowed=(keep.borrowed | other.borrowed) - members,
        inter_links=keep.inter_links | other.inter_links,
        intra_sources=keep.intra_sources | other.intra_sources,
    )


def _absorb_sweep(groups: dict[str, AssertionGroup], notify) -> bool:
    changed = False
    referencing: dict[str, list[AssertionGroup]] = defaultdict(list)
    for g in groups.values():
        if g.kind is GroupKind.INTER:
            (link,) = g.inter_links
            referencing[link[1]].append(g)
    for gid in sorted(groups, key=group_sort_key):
        g = groups.get(gid)
        if g is None or g.kind is not GroupKind.INTRA:
            continue
        (source,) = g.intra_sources
        candidates = [c for c in referencing.get(source, ()) if groups.get(c.id) is c]
        if not candidates:
            continue
        winner = min(candidates, key=lambda c: min(c.inter_links))
        groups[winner.id] = _merge(winner, g)
        del groups[g.id]
        changed = True
        logger.debug("%s absorbs intra-source group %s", winner.id, g.id)
        notify()
    return changed


def _combine_sweep(groups: dict[str, AssertionGroup], notify) -> bool:
    links = {frozenset(link) for g in groups.values() for link in g.inter_links if link[0] != link[1]}
    changed = False
    order = sorted((gid for gid, g in groups.items() if not g.inter_links), key=group_sort_key)
    for i, first in enumerate(order):
        for second in order[i + 1:]:
            a, b = groups.get(first), groups.get(second)
            if a is None or b is None:
                continue
            footprint = a.source_footprint | b.source_footprint
            if len(footprint) > 2:
                continue
            if any(frozenset((x, y)) in links for x in footprint for y in footprint if x != y):
                continue
            groups[a.id] = _merge(a, b)
            del groups[b.id]
            changed = True
            logger.debug("intra-only groups %s and %s combined", a.id, b.id)
            notify()
    return changed


def renumber(groups: Iterable[AssertionGroup]) -> tuple[AssertionGroup, ...]:
    ordered = sorted(groups, key=lambda g: group_sort_key(g.id))
    return tuple(replace(g, id=f"G{i}") for i, g in enumerate(ordered, start=1))


def merge_to_fixed_point(
    p: PartitionSet, on_step: Callable[[PartitionSet], None] | None = None
) -> PartitionSet:
    """Apply the absorb and combine rules until neither fires, then renumber G1..Gk."""
    groups = {g.id: g for g in p.groups}

    def notify():
        if on_step is not None:
            on_step(PartitionSet(tuple(groups.values()), p.flags))

    while _absorb_sweep(groups, notify) | _combine_sweep(groups, notify):
        pass
    result = PartitionSet(renumber(groups.values()), p.flags)
    logger.info("partitioned into %d group(s) from %d initial partition(s)", len(result), len(p))
    return result


def partition(dis: DataIntegrationSystem, on_step=None) -> PartitionSet:
    return merge_to_fixed_point(initial_partitions(dis), on_step)


def no_partition(dis: DataIntegrationSystem) -> PartitionSet:
    """All of M in a single group."""
    if not dis.assertions:
        return PartitionSet(())
    members = frozenset(a.id for a in dis.assertions)
    footprint = frozenset(s for a in dis.assertions for s in a.sources)
    links = frozenset((a.child_source, a.parent_source) for a in dis.assertions if not a.single_source)
    group = AssertionGroup(
        id="G1",
        kind=GroupKind.INTRA if len(footprint) == 1 and not links else GroupKind.MERGED,
        members=members,
        source_footprint=footprint,
        defined_predicates=predicate_keys(dis, members),
        inter_links=links,
        intra_sources=frozenset(a.child_source for a in dis.assertions if a.single_source),
    )
    return PartitionSet((group,), tuple(_greedy_optimality_flags(dis)))


def partitions_to_json(p: PartitionSet) -> dict[str, Any]:
    return {
        "groups": [
            {
                "id": g.id,
                "kind": g.kind.value,
                "members": sorted(g.members),
                "borrowed": sorted(g.borrowed),
                "source_footprint": sorted(g.source_footprint),
                "defined_predicates": sorted(g.defined_predicates),
                "inter_links": sorted([list(link) for link in g.inter_links]),
                "intra_sources": sorted(g.intra_sources),
            }
            for g in p.groups
        ],
        "flags": list(p.flags),
    }


def partitions_from_json(data: Mapping[str, Any]) -> PartitionSet:
    groups = tuple(
        AssertionGroup(
            id=g["id"],
            kind=GroupKind(g["kind"]),
            members=frozenset(g["members"]),
            source_footprint=frozenset(g["source_footprint"]),
            defined_predicates=frozenset(g["defined_predicates"]),
            borrowed=frozenset(g.get("borrowed", ())),
            inter_links=frozenset(tuple(link) for link in g.get("inter_links", ())),
            intra_sources=frozenset(g.get("intra_sources", ())),
        )
        for g in data["groups"]
    )
    return PartitionSet(groups, tuple(data.get("flags", ())))
