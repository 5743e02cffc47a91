"""Physical plans for external engines: one RML document per group and a POSIX shell script.

Script layout:

    #!/bin/sh
    timeout <T> <engine call> &                   one line per leaf
    wait
    LC_ALL=C sort -u <left> <right> > <node> &    DR, grouped by tree level
    cat <left> <right> > <node> &                 NDR
    wait
    mv <root_file> <final_output>
"""
from __future__ import annotations

import configparser
import io
import logging
import os
import shlex
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from rdflib import BNode, Graph, Literal, URIRef
from rdflib.namespace import RDF

from config.run_config import EngineProfile
from config.settings import DEFAULT_TIMEOUT
from planner.bushy_planner import BushyTree, Leaf, UnionOp, fold, node_ids
from planner.partitioner import PartitionSet
from planner.rml_model import (
    QL,
    RML,
    RR,
    AssertionKind,
    DataIntegrationSystem,
    MappingAssertion,
    TemplateFunction,
    TermKind,
)
from utils.errors import MappingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalPlan:
    script: str
    group_mapping_files: dict[str, str]
    final_output: str
    config_files: dict[str, str] = field(default_factory=dict)
    script_path: str | None = None


def _term(graph: Graph, node, term: TemplateFunction) -> None:
    if term.kind is TermKind.IRI_TEMPLATE:
        graph.add((node, RR["template"], Literal(term.text())))
    elif term.kind is TermKind.REFERENCE:
        graph.add((node, RML["reference"], Literal(term.text())))
    elif term.literal:
        graph.add((node, RR["constant"], Literal(term.parts[0])))
    else:
        graph.add((node, RR["constant"], URIRef(term.parts[0])))


class _DocumentBuilder:
    def __init__(self, dis: DataIntegrationSystem):
        self.dis = dis
        self.graph = Graph()
        for prefix, ns in (("rr", RR), ("rml", RML), ("ql", QL)):
            self.graph.bind(prefix, ns)
        self.subject_maps: dict[str, BNode] = {}

    def triples_map(self, iri: str, source_id: str, subject: TemplateFunction) -> BNode:
        if iri in self.subject_maps:
            return self.subject_maps[iri]
        node = URIRef(iri)
        logical_source, subject_map = BNode(), BNode()
        self.graph.add((node, RDF.type, RR["TriplesMap"]))
        self.graph.add((node, RML["logicalSource"], logical_source))
        self.graph.add((logical_source, RML["source"], Literal(self.dis.source(source_id).path)))
        self.graph.add((logical_source, RML["referenceFormulation"], QL["CSV"]))
        self.graph.add((node, RR["subjectMap"], subject_map))
        _term(self.graph, subject_map, subject)
        self.subject_maps[iri] = subject_map
        return subject_map

    def add(self, a: MappingAssertion) -> None:
        subject_map = self.triples_map(a.triples_map, a.child_source, a.subject)
        if a.kind is AssertionKind.CONCEPT:
            self.graph.add((subject_map, RR["class"], URIRef(a.object.parts[0])))
            return
        pom, object_map = BNode(), BNode()
        self.graph.add((URIRef(a.triples_map), RR["predicateObjectMap"], pom))
        self.graph.add((pom, RR["predicate"], URIRef(a.predicate)))
        self.graph.add((pom, RR["objectMap"], object_map))
        if a.parent_map is None:
            _term(self.graph, object_map, a.object)
            return
        if a.kind not in (AssertionKind.REFERENCED_SOURCE_ROLE, AssertionKind.MULTI_SOURCE_ROLE):
            raise MappingError(f"Cannot serialize {a.id} of kind {a.kind.value}")
        # the parent needs only its logical source and subject map
        self.triples_map(a.parent_map, a.parent_source, a.object)
        self.graph.add((object_map, RR["parentTriplesMap"], URIRef(a.parent_map)))
        if a.join is not None:
            condition = BNode()
            self.graph.add((object_map, RR["joinCondition"], condition))
            self.graph.add((condition, RR["child"], Literal(a.join.child_attribute)))
            self.graph.add((condition, RR["parent"], Literal(a.join.parent_attribute)))

    def serialize(self) -> str:
        return self.graph.serialize(format="turtle")


def split_mappings(p: PartitionSet, dis: DataIntegrationSystem) -> dict[str, str]:
    """A standalone RML document per group holding the assertions the group executes."""
    documents = {}
    for g in p.groups:
        builder = _DocumentBuilder(dis)
        for aid in sorted(g.executed):
            builder.add(dis.assertion(aid))
        documents[g.id] = builder.serialize()
    return documents


def engine_call(profile: EngineProfile, mapping_file: str, output_file: str, config_file: str | None = None) -> str:
    command = profile.command_template
    for placeholder, value in (
        ("{mapping_file}", mapping_file),
        ("{output_file}", output_file),
        ("{config_file}", config_file),
    ):
        if placeholder in command:
            command = command.replace(placeholder, shlex.quote(value or ""))
    return command


def engine_config(profile: EngineProfile, group_id: str, mapping_file: str, output_file: str) -> str:
    """Per-leaf engine configuration for engines driven by a config file."""
    parser = configparser.ConfigParser()
    output_dir = os.path.dirname(output_file)
    if profile.config_style == "rdfizer":
        parser["default"] = {"main_directory": output_dir}
        parser["datasets"] = {
            "number_of_datasets": "1",
            "output_folder": output_dir,
            "all_in_one_file": "no",
            "remove_duplicate": "yes",
            "enrichment": "yes",
            "name": group_id,
            "ordered": "yes",
        }
        parser["dataset1"] = {"name": group_id, "mapping": mapping_file}
    else:
        parser["CONFIGURATION"] = {"output_file": output_file, "output_format": "N-TRIPLES"}
        parser["DataSource1"] = {"mappings": mapping_file}
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def _levels(tree: BushyTree) -> dict[str, int]:
    heights: dict[str, int] = {}
    names = iter(name for name, _ in node_ids(tree))

    def on_leaf(leaf):
        heights[next(names)] = 0
        return 0

    def on_node(node, left, right):
        height = 1 + max(left, right)
        heights[next(names)] = height
        return height

    fold(tree, on_leaf, on_node)
    return heights


def gamma(tree: BushyTree, profile: EngineProfile, files: Mapping[str, str], run_dir: str | Path,
          final_output: str | Path, config_files: Mapping[str, str] | None = None) -> PhysicalPlan:
    """Lower a bushy tree to a shell script over `<run_dir>/<node_id>.nt` files."""
    run_dir = Path(run_dir)
    config_files = config_files or {}
    numbered = node_ids(tree)
    name_of = {id(sub): name for name, sub in numbered}
    levels = _levels(tree)

    def node_file(name: str) -> str:
        return shlex.quote(str(run_dir / f"{name}.nt"))

    lines = ["#!/bin/sh"]
    for name, sub in numbered:
        if isinstance(sub, Leaf):
            if name not in files:
                raise MappingError(f"No mapping file for group {name}")
            call = engine_call(profile, files[name], str(run_dir / f"{name}.nt"), config_files.get(name))
            lines.append(f"timeout {profile.timeout_seconds or DEFAULT_TIMEOUT} {call} &")
    lines.append("wait")

    by_level: dict[int, list[str]] = defaultdict(list)
    for name, sub in numbered:
        if not isinstance(sub, Leaf):
            left, right = node_file(name_of[id(sub.left)]), node_file(name_of[id(sub.right)])
            command = "LC_ALL=C sort -u" if sub.op is UnionOp.DR else "cat"
            by_level[levels[name]].append(f"{command} {left} {right} > {node_file(name)} &")
    for level in sorted(by_level):
        lines.extend(by_level[level])
        lines.append("wait")

    lines.append(f"mv {node_file(numbered[-1][0])} {shlex.quote(str(final_output))}")
    return PhysicalPlan(
        script="\n".join(lines) + "\n",
        group_mapping_files=dict(files),
        final_output=str(final_output),
        config_files=dict(config_files),
    )


def emit_physical_plan(tree: BushyTree, p: PartitionSet, dis: DataIntegrationSystem, profile: EngineProfile,
                       run_dir: str | Path, final_output: str | Path) -> PhysicalPlan:
    """Write group mapping files, engine configs and `plan.sh` under `run_dir`."""
    run_dir = Path(run_dir).resolve()
    mapping_dir = run_dir / "mappings"
    mapping_dir.mkdir(parents=True, exist_ok=True)
    files, configs = {}, {}
    for gid, document in split_mappings(p, dis).items():
        path = mapping_dir / f"{gid}.rml.ttl"
        path.write_text(document, encoding="utf-8")
        files[gid] = str(path)
        if profile.uses_config_file:
            config_path = mapping_dir / f"{gid}.ini"
            config_path.write_text(engine_config(profile, gid, str(path), str(run_dir / f"{gid}.nt")), encoding="utf-8")
            configs[gid] = str(config_path)

    plan = gamma(tree, profile, files, run_dir, Path(final_output).resolve(), configs)
    script_path = run_dir / "plan.sh"
    script_path.write_text(plan.script, encoding="utf-8")
    script_path.chmod(0o755)
    logger.info("physical plan for %s written to %s", profile.name, script_path)
    return PhysicalPlan(plan.script, plan.group_mapping_files, plan.final_output, plan.config_files, str(script_path))
