from __future__ import annotations

from pathlib import Path

import pytest

from config.run_config import EngineProfile, build_run_config
from engine.plan_emitter import emit_physical_plan, engine_call, engine_config, gamma, split_mappings
from planner.bushy_planner import Leaf, Node, UnionOp, generate_bushy_tree
from planner.partitioner import partition
from planner.plan_graph import build_plan_graph
from planner.rml_model import extract_assertions, parse_mappings
from utils.errors import MappingError

EX = "http://example.com/"


def _emit(motivating_example, motivating_partitions, run_dir: Path, engine: str = "rmlmapper"):
    profile = build_run_config(engine=engine).engine_profile()
    tree = generate_bushy_tree(build_plan_graph(motivating_partitions))
    return emit_physical_plan(tree, motivating_partitions, motivating_example, profile, run_dir, run_dir / "kg.nt")


def test_script_grammar_for_motivating_tree(motivating_example, motivating_partitions, tmp_path: Path) -> None:
    plan = _emit(motivating_example, motivating_partitions, tmp_path)
    lines = plan.script.splitlines()

    assert lines[0] == "#!/bin/sh"
    engine_lines = [line for line in lines if line.startswith("timeout ")]
    assert len(engine_lines) == 4
    assert all(line.endswith("&") and "java -jar rmlmapper.jar" in line for line in engine_lines)
    assert sum(line.startswith("LC_ALL=C sort -u ") for line in lines) == 1
    assert sum(line.startswith("cat ") for line in lines) == 2
    assert sum(line.startswith("mv ") for line in lines) == 1
    assert lines[-1] == f"mv {tmp_path.resolve() / 'U3.nt'} {tmp_path.resolve() / 'kg.nt'}"
    # each union level waits for the one below it
    sort_line = next(i for i, line in enumerate(lines) if line.startswith("LC_ALL=C sort -u "))
    first_cat = next(i for i, line in enumerate(lines) if line.startswith("cat "))
    assert sort_line < first_cat and lines[sort_line + 1] == "wait"
    assert Path(plan.script_path).read_text(encoding="utf-8") == plan.script


def test_script_is_regenerated_identically(motivating_example, motivating_partitions, tmp_path: Path) -> None:
    first = _emit(motivating_example, motivating_partitions, tmp_path)
    second = _emit(motivating_example, motivating_partitions, tmp_path)

    assert first.script == second.script
    assert first.group_mapping_files == second.group_mapping_files


def test_group_documents_hold_the_executed_assertions(motivating_example, motivating_partitions) -> None:
    documents = split_mappings(motivating_partitions, motivating_example)
    records = parse_mappings(documents["G1"])

    classes = {c for r in records for c in r.classes}
    predicates = {pom.predicate for r in records for pom in r.predicate_object_maps}
    assert classes == {EX + "C3"}
    assert predicates == {EX + "p2", EX + "p6"}
    assert sorted(documents) == ["G1", "G2", "G3", "G4"]


def test_config_style_engines_get_one_config_per_leaf(motivating_example, motivating_partitions, tmp_path: Path) -> None:
    plan = _emit(motivating_example, motivating_partitions, tmp_path, engine="morph-kgc")

    assert sorted(plan.config_files) == ["G1", "G2", "G3", "G4"]
    config = Path(plan.config_files["G1"]).read_text(encoding="utf-8")
    assert "[CONFIGURATION]" in config
    assert plan.group_mapping_files["G1"] in config
    assert f"python3 -m morph_kgc {plan.config_files['G1']}" in plan.script


def test_rdfizer_config_removes_duplicates() -> None:
    profile = EngineProfile("sdm-rdfizer", "python3 -m rdfizer -c {config_file}", config_style="rdfizer")
    config = engine_config(profile, "G2", "/tmp/run/mappings/G2.rml.ttl", "/tmp/run/G2.nt")

    assert "remove_duplicate = yes" in config
    assert "mapping = /tmp/run/mappings/G2.rml.ttl" in config


def test_engine_call_quotes_paths() -> None:
    profile = EngineProfile("custom", "engine -m {mapping_file} -o {output_file}")

    assert engine_call(profile, "/data/my map.ttl", "/out/G1.nt") == "engine -m '/data/my map.ttl' -o /out/G1.nt"


def test_missing_group_file_is_an_error(tmp_path: Path) -> None:
    profile = EngineProfile("custom", "engine {mapping_file} {output_file}", timeout_seconds=5)
    tree = Node(UnionOp.NDR, Leaf("G1"), Leaf("G2"))

    with pytest.raises(MappingError):
        gamma(tree, profile, {"G1": "g1.ttl"}, tmp_path, tmp_path / "kg.nt")
    plan = gamma(tree, profile, {"G1": "g1.ttl", "G2": "g2.ttl"}, tmp_path, tmp_path / "kg.nt")
    assert plan.script.splitlines()[1] == f"timeout 5 engine g1.ttl {tmp_path / 'G1.nt'} &"


def test_unions_of_one_level_run_in_the_background(tmp_path: Path) -> None:
    profile = EngineProfile("custom", "engine {mapping_file} {output_file}", timeout_seconds=5)
    tree = Node(UnionOp.NDR, Node(UnionOp.DR, Leaf("G1"), Leaf("G2")), Node(UnionOp.NDR, Leaf("G3"), Leaf("G4")))
    files = {gid: f"{gid.lower()}.ttl" for gid in ("G1", "G2", "G3", "G4")}
    lines = gamma(tree, profile, files, tmp_path, tmp_path / "kg.nt").script.splitlines()

    assert lines[5:] == [
        "wait",
        f"LC_ALL=C sort -u {tmp_path / 'G1.nt'} {tmp_path / 'G2.nt'} > {tmp_path / 'U1.nt'} &",
        f"cat {tmp_path / 'G3.nt'} {tmp_path / 'G4.nt'} > {tmp_path / 'U2.nt'} &",
        "wait",
        f"cat {tmp_path / 'U1.nt'} {tmp_path / 'U2.nt'} > {tmp_path / 'U3.nt'} &",
        "wait",
        f"mv {tmp_path / 'U3.nt'} {tmp_path / 'kg.nt'}",
    ]


def _signatures(assertions) -> set[tuple]:
    return {
        (a.triples_map, a.kind, a.predicate_key, a.subject.text(), a.object.text(), a.join)
        for a in assertions
    }


@pytest.mark.parametrize("example", ["running_example", "motivating_example"])
def test_group_documents_reparse_to_the_whole_mapping(example: str, request) -> None:
    dis = request.getfixturevalue(example)
    documents = split_mappings(partition(dis), dis)

    reparsed = set()
    for document in documents.values():
        reparsed |= _signatures(extract_assertions(parse_mappings(document)).assertions)
    assert reparsed == _signatures(dis.assertions)
