"""RML/R2RML subset: triples-map parsing and mapping-assertion classification.

A triples map contributes one Concept assertion per `rr:class` and one assertion per
predicate-object map. Role assertions are split by where their object comes from:

* an `rr:template` (or IRI constant) over the same row -> SingleSourceRole
* an `rr:parentTriplesMap` over the same logical source, no join -> ReferencedSourceRole
* an `rr:parentTriplesMap` with an `rr:joinCondition` -> MultiSourceRole

`rml:reference` / `rr:column` objects (and literal constants) are Attribute assertions.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from rdflib import Graph, Literal, URIRef
from rdflib.namespace import RDF, Namespace
from rdflib.plugins.parsers.notation3 import BadSyntax

from utils.errors import (
    DanglingReferenceError,
    MappingError,
    MappingSyntaxError,
    MissingColumnError,
    MissingJoinConditionError,
    MissingLogicalSourceError,
    SourceReadError,
    UnknownVocabularyError,
    UnsupportedFormulationError,
    VacuousObjectMapError,
)

logger = logging.getLogger(__name__)

RR = Namespace("http://www.w3.org/ns/r2rml#")
RML = Namespace("http://semweb.mmlab.be/ns/rml#")
QL = Namespace("http://semweb.mmlab.be/ns/ql#")
RDF_TYPE = str(RDF.type)

DEFAULT_BASE = "http://kgplanner.local/mapping"

ACCEPTED_PREDICATES = frozenset({
    RML["logicalSource"], RML["source"], RML["referenceFormulation"],
    RR["subjectMap"], RR["template"], RML["reference"], RR["column"], RR["constant"],
    RR["predicateObjectMap"], RR["predicate"], RR["objectMap"],
    RR["parentTriplesMap"], RR["joinCondition"], RR["child"], RR["parent"], RR["class"],
})
ACCEPTED_TYPES = frozenset({RR["TriplesMap"]})
_VOCABULARIES = (str(RR), str(RML), str(QL))

_REFERENCE = re.compile(r"\{([^{}]*)\}")


def local_name(iri: str) -> str:
    """Fragment or last path segment of an IRI."""
    for sep in ("#", "/", ":"):
        head, found, tail = iri.rpartition(sep)
        if found and tail:
            return tail
    return iri


def class_key(class_iri: str) -> str:
    """The predicate key of a class: rdf:type paired with the class IRI."""
    return f"{RDF_TYPE} {class_iri}"


ANY_CLASS_KEY = f"{RDF_TYPE} *"


def is_class_key(key: str) -> bool:
    return key.startswith(RDF_TYPE + " ")


def shared_keys(left: Iterable[str], right: Iterable[str]) -> frozenset[str]:
    """Predicate keys both sides can produce; `rdf:type *` overlaps every class key."""
    left, right = frozenset(left), frozenset(right)
    common = set(left & right)
    if ANY_CLASS_KEY in left:
        common.update(k for k in right if is_class_key(k))
    if ANY_CLASS_KEY in right:
        common.update(k for k in left if is_class_key(k))
    return frozenset(common)


def predicate_label(key: str) -> str:
    """Short display form of a predicate key (`a C1` for class keys)."""
    if " " in key:
        return "a " + local_name(key.split(" ", 1)[1])
    return local_name(key)


# --- domain types ---

class SourceFormat(str, Enum):
    CSV = "CSV"


@dataclass(frozen=True)
class LogicalSource:
    id: str
    path: str
    format: SourceFormat = SourceFormat.CSV
    attributes: tuple[str, ...] = ()


class TermKind(str, Enum):
    IRI_TEMPLATE = "IRI-template"
    REFERENCE = "plain reference"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Reference:
    column: str


@dataclass(frozen=True)
class TemplateFunction:
    kind: TermKind
    parts: tuple[str | Reference, ...]
    literal: bool = False

    @classmethod
    def template(cls, text: str) -> TemplateFunction:
        parts: list[str | Reference] = []
        pos = 0
        for match in _REFERENCE.finditer(text):
            if match.start() > pos:
                parts.append(text[pos:match.start()])
            if not match.group(1):
                raise MappingError(f"Empty attribute reference in template {text!r}")
            parts.append(Reference(match.group(1)))
            pos = match.end()
        if pos < len(text):
            parts.append(text[pos:])
        if not parts:
            raise MappingError("Empty rr:template")
        if any("{" in p or "}" in p for p in parts if isinstance(p, str)):
            raise MappingError(f"Unbalanced braces in template {text!r}")
        return cls(TermKind.IRI_TEMPLATE, tuple(parts))

    @classmethod
    def reference(cls, column: str) -> TemplateFunction:
        return cls(TermKind.REFERENCE, (Reference(column),), literal=True)

    @classmethod
    def constant(cls, value: str, literal: bool = False) -> TemplateFunction:
        return cls(TermKind.CONSTANT, (value,), literal=literal)

    def references(self) -> tuple[str, ...]:
        return tuple(p.column for p in self.parts if isinstance(p, Reference))

    def text(self) -> str:
        """The term as written in a mapping document (template string, column or constant)."""
        if self.kind is TermKind.REFERENCE:
            return self.parts[0].column
        return "".join("{%s}" % p.column if isinstance(p, Reference) else p for p in self.parts)


@dataclass(frozen=True)
class JoinCondition:
    child_attribute: str
    parent_attribute: str


class AssertionKind(str, Enum):
    CONCEPT = "Concept"
    ATTRIBUTE = "Attribute"
    SINGLE_SOURCE_ROLE = "SingleSourceRole"
    REFERENCED_SOURCE_ROLE = "ReferencedSourceRole"
    MULTI_SOURCE_ROLE = "MultiSourceRole"


@dataclass(frozen=True)
class MappingAssertion:
    id: str
    kind: AssertionKind
    triples_map: str
    subject: TemplateFunction
    predicate: str
    # class constant for Concept, the parent's subject template for referencing roles
    object: TemplateFunction
    sources: tuple[str, ...]
    join: JoinCondition | None = None
    referenced_assertion: str | None = None
    parent_map: str | None = None

    @property
    def predicate_key(self) -> str:
        if self.kind is AssertionKind.CONCEPT:
            return class_key(self.object.parts[0])
        if self.predicate == RDF_TYPE:
            if self.object.kind is TermKind.CONSTANT and not self.object.literal:
                return class_key(self.object.parts[0])
            return ANY_CLASS_KEY
        return self.predicate

    @property
    def child_source(self) -> str:
        return self.sources[0]

    @property
    def parent_source(self) -> str:
        return self.sources[-1]

    @property
    def single_source(self) -> bool:
        return self.kind is not AssertionKind.MULTI_SOURCE_ROLE


@dataclass(frozen=True)
class DataIntegrationSystem:
    ontology_predicates: frozenset[str]
    sources: Mapping[str, LogicalSource]
    assertions: tuple[MappingAssertion, ...]
    flags: tuple[str, ...] = ()

    @cached_property
    def by_id(self) -> dict[str, MappingAssertion]:
        return {a.id: a for a in self.assertions}

    def assertion(self, assertion_id: str) -> MappingAssertion:
        return self.by_id[assertion_id]

    def source(self, source_id: str) -> LogicalSource:
        return self.sources[source_id]

    def kind_counts(self) -> dict[AssertionKind, int]:
        counts = {kind: 0 for kind in AssertionKind}
        for a in self.assertions:
            counts[a.kind] += 1
        return counts

    def validate(self) -> None:
        for a in self.assertions:
            for sid in a.sources:
                if sid not in self.sources:
                    raise MappingError(f"Assertion {a.id} uses unknown source {sid}")
            is_msr = a.kind is AssertionKind.MULTI_SOURCE_ROLE
            if is_msr != (a.join is not None) or is_msr != (len(a.sources) == 2):
                raise MappingError(f"Assertion {a.id} has a join/source shape inconsistent with {a.kind.value}")
            if a.referenced_assertion is not None:
                ref = self.by_id.get(a.referenced_assertion)
                if ref is None or ref.kind is not AssertionKind.CONCEPT:
                    raise MappingError(f"Assertion {a.id} references {a.referenced_assertion}, not a Concept assertion")
                if a.kind is AssertionKind.REFERENCED_SOURCE_ROLE and ref.sources != a.sources:
                    raise MappingError(f"Referenced-source role {a.id} crosses logical sources")


# --- parsed records ---

@dataclass(frozen=True)
class ObjectMapRecord:
    term: TemplateFunction | None = None
    parent_map: str | None = None
    joins: tuple[JoinCondition, ...] = ()


@dataclass(frozen=True)
class PredicateObjectMapRecord:
    predicate: str
    object_map: ObjectMapRecord


@dataclass(frozen=True)
class TriplesMapRecord:
    id: str
    source: str
    subject: TemplateFunction
    classes: tuple[str, ...] = ()
    predicate_object_maps: tuple[PredicateObjectMapRecord, ...] = ()
    base_dir: str | None = None


# --- parsing ---

class _DocumentGraph(Graph):
    """A graph remembering the order the parser added its triples in."""

    def __init__(self):
        super().__init__()
        self.positions: dict = {}
        self._subjects: dict = {}

    def add(self, triple):
        position = self.positions.setdefault(triple, len(self.positions))
        self._subjects.setdefault(triple[0], position)
        return super().add(triple)

    def first_seen(self, node) -> tuple[int, str]:
        return self._subjects.get(node, len(self.positions)), str(node)

    def ordered_objects(self, subject, predicate) -> list:
        return sorted(
            self.objects(subject, predicate),
            key=lambda o: (self.positions.get((subject, predicate, o), len(self.positions)), str(o)),
        )


def _syntax_position(exc: BadSyntax) -> tuple[int | None, int | None]:
    lines = getattr(exc, "lines", None)
    line = lines + 1 if isinstance(lines, int) else None
    text = getattr(exc, "_str", None)
    index = getattr(exc, "_i", None)
    if isinstance(text, bytes):
        text = text.decode("utf-8", "replace")
    if not isinstance(text, str) or not isinstance(index, int):
        return line, None
    return line, index - (text.rfind("\n", 0, index) + 1) + 1


def _in_vocabulary(term) -> bool:
    return isinstance(term, URIRef) and str(term).startswith(_VOCABULARIES)


def _check_vocabulary(graph: Graph) -> None:
    unknown = set()
    for _, p, o in graph:
        if _in_vocabulary(p) and p not in ACCEPTED_PREDICATES:
            unknown.add(p)
        if p == RDF.type and _in_vocabulary(o) and o not in ACCEPTED_TYPES:
            unknown.add(o)
    if unknown:
        raise UnknownVocabularyError(unknown)


def _term_map(graph: Graph, node) -> TemplateFunction | None:
    template = graph.value(node, RR["template"])
    if template is not None:
        return TemplateFunction.template(str(template))
    reference = graph.value(node, RML["reference"])
    if reference is None:
        reference = graph.value(node, RR["column"])
    if reference is not None:
        return TemplateFunction.reference(str(reference))
    constant = graph.value(node, RR["constant"])
    if constant is not None:
        return TemplateFunction.constant(str(constant), literal=isinstance(constant, Literal))
    return None


def _object_map(graph: Graph, tm, predicate: str, node) -> ObjectMapRecord:
    parent = graph.value(node, RR["parentTriplesMap"])
    if parent is not None:
        joins = []
        for jc in graph.objects(node, RR["joinCondition"]):
            child, parent_attr = graph.value(jc, RR["child"]), graph.value(jc, RR["parent"])
            if child is None or parent_attr is None:
                raise MappingError(f"Join condition of {predicate} in {tm} needs both rr:child and rr:parent")
            joins.append(JoinCondition(str(child), str(parent_attr)))
        return ObjectMapRecord(parent_map=str(parent), joins=tuple(sorted(joins, key=lambda j: (j.child_attribute, j.parent_attribute))))
    term = _term_map(graph, node)
    if term is None:
        raise VacuousObjectMapError(
            f"Object map of {predicate} in {tm} has no rr:template, rml:reference, "
            "rr:constant or rr:parentTriplesMap"
        )
    return ObjectMapRecord(term=term)


def _triples_map(graph: _DocumentGraph, node, base_dir: str | None) -> TriplesMapRecord:
    logical_source = graph.value(node, RML["logicalSource"])
    if logical_source is None:
        raise MissingLogicalSourceError(f"Triples map {node} has no rml:logicalSource")
    source = graph.value(logical_source, RML["source"])
    if source is None:
        raise MissingLogicalSourceError(f"Logical source of {node} has no rml:source")
    formulation = graph.value(logical_source, RML["referenceFormulation"])
    if formulation is not None and formulation != QL["CSV"]:
        raise UnsupportedFormulationError(f"Triples map {node} uses {formulation}; only ql:CSV is accepted")

    subject_map = graph.value(node, RR["subjectMap"])
    if subject_map is None:
        raise MappingError(f"Triples map {node} has no rr:subjectMap")
    subject = _term_map(graph, subject_map)
    if subject is not None and subject.kind is TermKind.REFERENCE:
        subject = replace(subject, literal=False)
    if subject is None or subject.literal:
        raise MappingError(f"Subject map of {node} must define an IRI by rr:template, rml:reference or rr:constant")
    classes = tuple(str(c) for c in graph.ordered_objects(subject_map, RR["class"]))

    poms = []
    for pom in graph.ordered_objects(node, RR["predicateObjectMap"]):
        predicates = list(graph.objects(pom, RR["predicate"]))
        object_maps = list(graph.objects(pom, RR["objectMap"]))
        if len(predicates) != 1 or len(object_maps) != 1:
            raise MappingError(
                f"Predicate-object map in {node} must carry exactly one rr:predicate and one rr:objectMap"
            )
        predicate = str(predicates[0])
        poms.append(PredicateObjectMapRecord(predicate, _object_map(graph, node, predicate, object_maps[0])))
    return TriplesMapRecord(str(node), str(source), subject, classes, tuple(poms), base_dir)


def parse_mappings(document: str, base: str | None = None, base_dir: str | None = None) -> list[TriplesMapRecord]:
    """Parse an RML document into one record per triples map, in document order."""
    if not document.strip():
        return []
    graph = _DocumentGraph()
    try:
        graph.parse(data=document, format="turtle", publicID=base or DEFAULT_BASE)
    except BadSyntax as exc:
        line, column = _syntax_position(exc)
        raise MappingSyntaxError(getattr(exc, "_why", str(exc)), line, column) from exc
    except Exception as exc:
        raise MappingSyntaxError(str(exc)) from exc

    _check_vocabulary(graph)
    nodes = set(graph.subjects(RML["logicalSource"], None))
    nodes.update(graph.subjects(RR["subjectMap"], None))
    nodes.update(graph.subjects(RDF.type, RR["TriplesMap"]))
    return [_triples_map(graph, node, base_dir) for node in sorted(nodes, key=graph.first_seen)]


# --- extraction ---

class _IdAllocator:
    def __init__(self):
        self.used: set[str] = set()

    def allocate(self, triples_map: str, term: str) -> str:
        base = f"{local_name(triples_map)}/{local_name(term)}"
        candidate, k = base, 1
        while candidate in self.used:
            k += 1
            candidate = f"{base}#{k}"
        self.used.add(candidate)
        return candidate


def _source_path(record: TriplesMapRecord, source_root: str | None) -> str:
    path = Path(record.source)
    if path.is_absolute():
        return str(path)
    root = source_root or record.base_dir
    return str((Path(root) / path).resolve()) if root else record.source


def _classify(record: TriplesMapRecord, pom: PredicateObjectMapRecord,
              maps: Mapping[str, TriplesMapRecord]) -> tuple[AssertionKind, TriplesMapRecord | None]:
    om = pom.object_map
    if om.parent_map is None:
        if om.term.literal:
            return AssertionKind.ATTRIBUTE, None
        return AssertionKind.SINGLE_SOURCE_ROLE, None
    parent = maps.get(om.parent_map)
    if parent is None:
        raise DanglingReferenceError(
            f"{pom.predicate} in {record.id} references unknown triples map {om.parent_map}"
        )
    if len(om.joins) > 1:
        raise MappingError(f"{pom.predicate} in {record.id} has several join conditions; one is supported")
    if om.joins:
        # a same-source join is a self-join and is executed like the multi-source case
        return AssertionKind.MULTI_SOURCE_ROLE, parent
    if parent.source != record.source:
        raise MissingJoinConditionError(
            f"{pom.predicate} in {record.id} references {parent.id} over a different source "
            "without rr:joinCondition"
        )
    return AssertionKind.REFERENCED_SOURCE_ROLE, parent


def extract_assertions(records: Sequence[TriplesMapRecord], source_root: str | None = None) -> DataIntegrationSystem:
    """Classify every class and predicate-object map of `records` into mapping assertions."""
    maps: dict[str, TriplesMapRecord] = {}
    for record in records:
        if record.id in maps and maps[record.id] != record:
            raise MappingError(f"Triples map {record.id} is defined twice")
        maps[record.id] = record

    sources: dict[str, LogicalSource] = {}
    for record in maps.values():
        path = _source_path(record, source_root)
        known = sources.get(record.source)
        if known is not None and known.path != path:
            raise MappingError(f"Source {record.source} resolves to both {known.path} and {path}")
        sources[record.source] = LogicalSource(record.source, path)

    ids = _IdAllocator()
    assertions: list[MappingAssertion] = []
    flags: list[str] = []
    concept_of: dict[str, str] = {}
    for record in maps.values():
        if len(record.classes) > 1:
            flags.append(f"{local_name(record.id)} declares {len(record.classes)} classes; one Concept assertion each")
        for cls in record.classes:
            assertion = MappingAssertion(
                id=ids.allocate(record.id, cls),
                kind=AssertionKind.CONCEPT,
                triples_map=record.id,
                subject=record.subject,
                predicate=RDF_TYPE,
                object=TemplateFunction.constant(cls),
                sources=(record.source,),
            )
            assertions.append(assertion)
            concept_of.setdefault(record.id, assertion.id)

    for record in maps.values():
        for pom in record.predicate_object_maps:
            kind, parent = _classify(record, pom, maps)
            aid = ids.allocate(record.id, pom.predicate)
            if parent is None:
                assertions.append(MappingAssertion(
                    aid, kind, record.id, record.subject, pom.predicate, pom.object_map.term, (record.source,),
                ))
                continue
            join = pom.object_map.joins[0] if pom.object_map.joins else None
            assertions.append(MappingAssertion(
                id=aid,
                kind=kind,
                triples_map=record.id,
                subject=record.subject,
                predicate=pom.predicate,
                object=parent.subject,
                sources=(record.source, parent.source) if join else (record.source,),
                join=join,
                referenced_assertion=concept_of.get(parent.id),
                parent_map=parent.id,
            ))

    predicates = frozenset(
        a.object.parts[0] if a.kind is AssertionKind.CONCEPT else a.predicate for a in assertions
    )
    dis = DataIntegrationSystem(predicates, sources, tuple(assertions), tuple(flags))
    dis.validate()
    for flag in flags:
        logger.warning(flag)
    logger.debug("extracted %d assertions over %d sources", len(assertions), len(sources))
    return dis


def load_mappings(paths: Iterable[str | Path], source_root: str | None = None) -> DataIntegrationSystem:
    """Parse mapping files and extract one data integration system from all of them."""
    records: list[TriplesMapRecord] = []
    for path in paths:
        path = Path(path).resolve()
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise MappingError(f"Cannot read mapping file {path}: {exc}") from exc
        records.extend(parse_mappings(text, base=path.as_uri(), base_dir=str(path.parent)))
    return extract_assertions(records, source_root)


def read_header(source: LogicalSource) -> tuple[str, ...]:
    try:
        with open(source.path, newline="", encoding="utf-8-sig") as handle:
            header = next(csv.reader(handle), None)
    except OSError as exc:
        raise SourceReadError(f"Cannot read source {source.id} at {source.path}: {exc}") from exc
    if not header:
        raise SourceReadError(f"Source {source.id} has no header row")
    return tuple(header)


def _columns_by_source(a: MappingAssertion) -> dict[str, set[str]]:
    needed = {a.child_source: set(a.subject.references())}
    if a.kind is AssertionKind.MULTI_SOURCE_ROLE:
        needed.setdefault(a.parent_source, set()).update(a.object.references())
        needed[a.child_source].add(a.join.child_attribute)
        needed[a.parent_source].add(a.join.parent_attribute)
    else:
        needed[a.child_source].update(a.object.references())
    return needed


def attach_headers(dis: DataIntegrationSystem) -> DataIntegrationSystem:
    """Read each source header and check every referenced column exists."""
    sources = {sid: replace(s, attributes=read_header(s)) for sid, s in dis.sources.items()}
    for a in dis.assertions:
        for sid, columns in _columns_by_source(a).items():
            missing = columns - set(sources[sid].attributes)
            if missing:
                raise MissingColumnError(sid, missing)
    return replace(dis, sources=sources)
