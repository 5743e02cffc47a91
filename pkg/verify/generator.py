"""Seeded data integration systems for the verification suites.

`random_dis` writes CSV sources plus one RML document and loads them back, so every generated
system goes through the same parser as user mappings.
"""
from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from planner.partitioner import PartitionSet, partition
from planner.rml_model import (
    RDF_TYPE,
    AssertionKind,
    DataIntegrationSystem,
    JoinCondition,
    LogicalSource,
    MappingAssertion,
    TemplateFunction,
    attach_headers,
    load_mappings,
)

logger = logging.getLogger(__name__)

EX = "http://example.com/"
PREFIXES = (
    "@prefix rr: <http://www.w3.org/ns/r2rml#> .\n"
    "@prefix rml: <http://semweb.mmlab.be/ns/rml#> .\n"
    "@prefix ql: <http://semweb.mmlab.be/ns/ql#> .\n"
    "@prefix ex: <http://example.com/> .\n\n"
)
COLUMNS = ["ID", "A1", "A2", "A3", "A4", "Ref"]


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def attribute_pom(predicate: str, column: str) -> str:
    return f'[ rr:predicate ex:{predicate} ; rr:objectMap [ rml:reference "{column}" ] ]'


def template_pom(predicate: str, template: str) -> str:
    return f'[ rr:predicate ex:{predicate} ; rr:objectMap [ rr:template "{template}" ] ]'


def join_pom(predicate: str, parent_map: str, child: str, parent: str) -> str:
    return (
        f"[ rr:predicate ex:{predicate} ; rr:objectMap [ rr:parentTriplesMap <#{parent_map}> ; "
        f'rr:joinCondition [ rr:child "{child}" ; rr:parent "{parent}" ] ] ]'
    )


@dataclass
class TriplesMapText:
    name: str
    source: str
    subject: str
    classes: list[str] = field(default_factory=list)
    poms: list[str] = field(default_factory=list)

    def turtle(self) -> str:
        subject_map = f'[ rr:template "{self.subject}"'
        subject_map += "".join(f" ; rr:class ex:{c}" for c in self.classes) + " ]"
        lines = [
            f"<#{self.name}> a rr:TriplesMap ;",
            f'  rml:logicalSource [ rml:source "{self.source}" ; rml:referenceFormulation ql:CSV ] ;',
            f"  rr:subjectMap {subject_map}",
        ]
        for pom in self.poms:
            lines[-1] += " ;"
            lines.append(f"  rr:predicateObjectMap {pom}")
        lines[-1] += " ."
        return "\n".join(lines) + "\n"


def write_mapping(path: str | Path, maps: Sequence[TriplesMapText]) -> None:
    Path(path).write_text(PREFIXES + "\n".join(m.turtle() for m in maps if m.classes or m.poms), encoding="utf-8")


def _rows(rng: random.Random, count: int, max_rows: int) -> list[list[str]]:
    rows = []
    for _ in range(count):
        values = ["" if rng.random() < 0.05 else f"v{rng.randint(0, 9)}" for _ in range(4)]
        rows.append([str(rng.randint(1, count)), *values, str(rng.randint(1, max_rows))])
    return rows


def _draw(rng: random.Random, sources, assertions, msr_probability, shared_probability,
          max_rows, greedy_optimal) -> tuple[dict[str, list[list[str]]], list[TriplesMapText], list[TriplesMapText]]:
    names = [f"S{i}" for i in range(1, rng.randint(*sources) + 1)]
    data = {name: _rows(rng, rng.randint(5, max_rows), max_rows) for name in names}
    maps = [TriplesMapText(f"TM_{n}", f"{n}.csv", f"{EX}{n}/{{ID}}", [f"C_{n}"]) for n in names]
    shared = [TriplesMapText(f"TM_{n}_shared", f"{n}.csv", f"{EX}shared/{{ID}}") for n in names]
    child_of: dict[str, str] = {}
    for i, name in enumerate(names):
        for j in range(rng.randint(*assertions)):
            column = f"A{rng.randint(1, 4)}"
            if len(names) > 1 and rng.random() < msr_probability:
                candidates = [p for p in names if p != name and (not greedy_optimal or child_of.get(p, name) == name)]
                if candidates:
                    parent = rng.choice(candidates)
                    child_of.setdefault(parent, name)
                    maps[i].poms.append(join_pom(f"link_{name}_{j}", f"TM_{parent}", "Ref", "ID"))
                    continue
            if not greedy_optimal and rng.random() < shared_probability:
                shared[i].poms.append(attribute_pom(f"shared{rng.randint(0, 2)}", column))
            elif rng.random() < 0.25:
                maps[i].poms.append(template_pom(f"p_{name}_{j}", f"{EX}value/{{{column}}}"))
            else:
                maps[i].poms.append(attribute_pom(f"p_{name}_{j}", column))
    return data, maps, shared


def _materialize(directory: Path, data, maps, shared) -> DataIntegrationSystem:
    directory.mkdir(parents=True, exist_ok=True)
    for name, rows in data.items():
        write_csv(directory / f"{name}.csv", COLUMNS, rows)
    write_mapping(directory / "mapping.rml.ttl", [*maps, *shared])
    return attach_headers(load_mappings([directory / "mapping.rml.ttl"]))


def _overlap_groups(dis: DataIntegrationSystem, predicate: str) -> int:
    return sum(1 for g in partition(dis).groups if predicate in g.defined_predicates)


def random_dis(seed: int, directory: str | Path, *, sources: tuple[int, int] = (2, 6),
               assertions: tuple[int, int] = (1, 5), msr_probability: float = 0.3,
               shared_probability: float = 0.2, max_rows: int = 100, greedy_optimal: bool = False,
               overlap_pair: bool = False, max_groups: int | None = None) -> DataIntegrationSystem:
    """A seeded random system written under `directory` (CSV sources and `mapping.rml.ttl`).

    With `greedy_optimal` every predicate is defined once and each source is joined from at most
    one child; `overlap_pair` then adds one predicate defined in exactly two groups.
    """
    rng = random.Random(seed)
    directory = Path(directory)
    for attempt in range(100):
        data, maps, shared = _draw(rng, sources, assertions, msr_probability, shared_probability, max_rows, greedy_optimal)
        dis = _materialize(directory, data, maps, shared)
        if overlap_pair:
            names = sorted(data)
            pairs = [(a, b) for a in names for b in names if a < b]
            rng.shuffle(pairs)
            dis = None
            for a, b in pairs:
                for name in (a, b):
                    shared[int(name[1:]) - 1].poms.append(attribute_pom("overlap", "A1"))
                candidate = _materialize(directory, data, maps, shared)
                if _overlap_groups(candidate, f"{EX}overlap") == 2:
                    dis = candidate
                    break
                for name in (a, b):
                    shared[int(name[1:]) - 1].poms.pop()
            if dis is None:
                continue
        if max_groups is None or len(partition(dis)) <= max_groups:
            logger.debug("random system for seed %d after %d attempt(s)", seed, attempt + 1)
            return dis
    raise ValueError(f"no random system for seed {seed} satisfies the requested shape")


def genomic_rows(n: int, duplicate_rate: float, seed: int = 0) -> list[list[str]]:
    """Unique rows plus records repeated 20 times, n * duplicate_rate rows in total."""
    duplicated = round(n * duplicate_rate / 20)
    unique = n - 20 * duplicated
    rows = [[f"G{i}", f"gene{i % 997}", str(i % 13)] for i in range(unique)]
    for d in range(duplicated):
        rows.extend([f"D{d}", f"gene{d % 997}", str(d % 13)] for _ in range(20))
    random.Random(seed).shuffle(rows)
    return rows


def genomic_dis(directory: str | Path, rows: int = 100_000, duplicate_rate: float = 0.25,
                seed: int = 0) -> DataIntegrationSystem:
    """Four sources joined in a cycle (four groups); S1 and S3 also both instantiate ex:Sample."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = genomic_rows(rows, duplicate_rate, seed)
    names = ["S1", "S2", "S3", "S4"]
    maps = []
    for i, name in enumerate(names):
        write_csv(directory / f"{name}.csv", ["ID", "Gene", "Value", "Ref"], [[*r, r[0]] for r in base])
        parent = names[(i + 1) % len(names)]
        maps.append(TriplesMapText(
            f"TM_{name}", f"{name}.csv", f"{EX}{name}/{{ID}}", [f"{name}Record"],
            [
                attribute_pom(f"{name}_gene", "Gene"),
                attribute_pom(f"{name}_value", "Value"),
                join_pom(f"{name}_next", f"TM_{parent}", "Ref", "ID"),
            ],
        ))
        if name in ("S1", "S3"):
            maps.append(TriplesMapText(
                f"TM_{name}_sample", f"{name}.csv", f"{EX}sample/{{ID}}", ["Sample"],
                [attribute_pom("sampleGene", "Gene")],
            ))
    write_mapping(directory / "mapping.rml.ttl", maps)
    return attach_headers(load_mappings([directory / "mapping.rml.ttl"]))


def synthetic_dis(n: int, edge_probability: float = 0.1, seed: int = 0) -> DataIntegrationSystem:
    """In-memory system of n sources joined in a cycle, so partitioning yields n groups.

    Sources are never read; this is for planning only.
    """
    rng = random.Random(seed)
    names = [f"S{i}" for i in range(1, n + 1)]
    subjects = {name: TemplateFunction.template(f"{EX}{name}/{{ID}}") for name in names}
    assertions: list[MappingAssertion] = []
    shared: dict[str, list[str]] = {name: [] for name in names}
    for i, name in enumerate(names):
        if rng.random() < edge_probability:
            shared[name].append(f"{EX}shared{i}")
            shared[names[rng.randrange(n)]].append(f"{EX}shared{i}")

    for i, name in enumerate(names):
        tm = f"{EX}map#TM_{name}"
        concept = f"TM_{name}/C_{name}"
        assertions.append(MappingAssertion(
            concept, AssertionKind.CONCEPT, tm, subjects[name], RDF_TYPE,
            TemplateFunction.constant(f"{EX}C_{name}"), (name,),
        ))
        assertions.append(MappingAssertion(
            f"TM_{name}/p_{name}", AssertionKind.ATTRIBUTE, tm, subjects[name], f"{EX}p_{name}",
            TemplateFunction.reference("A1"), (name,),
        ))
        for k, predicate in enumerate(shared[name]):
            assertions.append(MappingAssertion(
                f"TM_{name}/shared#{k}", AssertionKind.ATTRIBUTE, tm, subjects[name], predicate,
                TemplateFunction.reference("A2"), (name,),
            ))
    for i, name in enumerate(names):
        if n < 2:
            break
        parent = names[(i + 1) % n]
        assertions.append(MappingAssertion(
            f"TM_{name}/link_{name}", AssertionKind.MULTI_SOURCE_ROLE, f"{EX}map#TM_{name}", subjects[name],
            f"{EX}link_{name}", subjects[parent], (name, parent), JoinCondition("Ref", "ID"),
            referenced_assertion=f"TM_{parent}/C_{parent}", parent_map=f"{EX}map#TM_{parent}",
        ))

    predicates = frozenset(a.object.parts[0] if a.kind is AssertionKind.CONCEPT else a.predicate for a in assertions)
    sources = {name: LogicalSource(name, f"{name}.csv", attributes=tuple(COLUMNS)) for name in names}
    dis = DataIntegrationSystem(predicates, sources, tuple(assertions))
    dis.validate()
    return dis


def synthetic_groups(n: int, edge_probability: float = 0.1, seed: int = 0) -> PartitionSet:
    return partition(synthetic_dis(n, edge_probability, seed))
