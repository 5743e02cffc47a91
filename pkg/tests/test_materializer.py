from __future__ import annotations

import random
from pathlib import Path

import pytest

from engine.materializer import (
    ResourceDictionary,
    TripleSet,
    assertion_triples,
    decode_base36,
    encode_base36,
    execute_tree,
    materialize_all,
    materialize_group,
    read_source,
    sort_unique,
    union_triples,
)
from engine.ntriples import expand, literal
from planner.bushy_planner import Leaf, Node, UnionOp, generate_bushy_tree, left_linear
from planner.partitioner import partition
from planner.plan_graph import build_plan_graph
from planner.rml_model import TemplateFunction
from utils.errors import PlanSoundnessError

EX = "http://example.com/"


def _greedy(partitions):
    return generate_bushy_tree(build_plan_graph(partitions))


def test_base36_resource_ids() -> None:
    assert encode_base36(95634785) == "1KXS9T"
    assert decode_base36("1KXS9T") == 95634785
    assert encode_base36(0) == "0"
    assert encode_base36(35) == "Z"
    assert encode_base36(36) == "10"
    with pytest.raises(ValueError):
        encode_base36(-1)
    with pytest.raises(ValueError):
        decode_base36("1kx")


def test_resource_dictionary_reuses_ids() -> None:
    dictionary = ResourceDictionary()
    line = dictionary.encode_triple("<http://a>", "<http://p>", "<http://a>")

    assert line == "0 1 0\n"
    assert dictionary.decode_line(line) == "<http://a> <http://p> <http://a> .\n"
    assert len(dictionary) == 2


def test_terms_are_canonical() -> None:
    template = TemplateFunction.template("http://example.com/{Name}")

    assert expand(template, {"Name": "a b/c"}) == "<http://example.com/a%20b%2Fc>"
    assert expand(template, {"Name": ""}) is None
    assert literal('say "hi"\n') == '"say \\"hi\\"\\n"'


def test_external_sort_with_small_runs(tmp_path: Path) -> None:
    rng = random.Random(7)
    lines = [f"<http://e/{rng.randrange(200)}> <http://p> <http://o> .\n" for _ in range(1000)]
    source = tmp_path / "in.nt"
    source.write_text("".join(lines), encoding="utf-8")

    count = sort_unique(source, tmp_path / "out.nt", memory_limit=7)
    assert (tmp_path / "out.nt").read_text(encoding="utf-8") == "".join(sorted(set(lines)))
    assert count == len(set(lines))


def test_duplicate_removing_union_of_unsorted_inputs(tmp_path: Path) -> None:
    left, right = tmp_path / "l.nt", tmp_path / "r.nt"
    left.write_text("c .\na .\n", encoding="utf-8")
    right.write_text("b .\na .\n", encoding="utf-8")

    merged = union_triples(UnionOp.DR, TripleSet(str(left), 2), TripleSet(str(right), 2), tmp_path / "u.nt")
    assert merged.cardinality == 3 and merged.sorted
    assert (tmp_path / "u.nt").read_text(encoding="utf-8") == "a .\nb .\nc .\n"

    with pytest.raises(PlanSoundnessError):
        union_triples(UnionOp.NDR, TripleSet(str(left), 2), TripleSet(str(right), 2), tmp_path / "n.nt")


def test_running_example_output(running_example, tmp_path: Path) -> None:
    p = partition(running_example)
    reference = materialize_all(running_example, tmp_path / "all.nt")
    report = execute_tree(_greedy(p), p, running_example, tmp_path / "run")

    assert reference.cardinality == 23
    assert report.final_triples == 23
    assert Path(report.output).read_bytes() == (tmp_path / "all.nt").read_bytes()


def test_join_produces_only_matching_pairs(running_example, tmp_path: Path) -> None:
    p = partition(running_example)
    merged = next(g for g in p.groups if "TriplesMap2/p4" in g.members)
    materialize_group(merged, running_example, tmp_path / "g.nt")

    joined = [line for line in (tmp_path / "g.nt").read_text(encoding="utf-8").splitlines() if "/p4>" in line]
    assert sorted(joined) == [
        "<http://example.com/C2/1> <http://example.com/p4> <http://example.com/C3/a> .",
        "<http://example.com/C2/2> <http://example.com/p4> <http://example.com/C3/a> .",
    ]


def test_bushy_and_linear_plans_match_unpartitioned_output(motivating_example, motivating_partitions,
                                                           tmp_path: Path) -> None:
    materialize_all(motivating_example, tmp_path / "all.nt")
    expected = (tmp_path / "all.nt").read_bytes()
    bushy = execute_tree(_greedy(motivating_partitions), motivating_partitions, motivating_example,
                         tmp_path / "bushy", parallelism=2)
    linear = execute_tree(left_linear(motivating_partitions.ids, motivating_partitions.predicates()),
                          motivating_partitions, motivating_example, tmp_path / "linear")

    assert bushy.final_triples == 39
    assert bushy.triple_counts["G4"] == 14 and bushy.triple_counts["G2"] == 11
    assert bushy.triple_counts["U1"] == 21
    assert Path(bushy.output).read_bytes() == expected
    assert Path(linear.output).read_bytes() == expected
    assert sorted(bushy.leaf_seconds) == ["G1", "G2", "G3", "G4"]
    assert 1 <= bushy.peak_parallelism <= 2


def test_concatenating_overlapping_groups_is_rejected(motivating_example, motivating_partitions,
                                                      tmp_path: Path) -> None:
    wrong = Node(UnionOp.NDR, Leaf("G2"), Leaf("G4"))

    with pytest.raises(PlanSoundnessError) as excinfo:
        execute_tree(wrong, motivating_partitions, motivating_example, tmp_path)
    assert excinfo.value.exit_code == 3


def test_timed_out_leaf_leaves_a_partial_graph(motivating_example, motivating_partitions, tmp_path: Path) -> None:
    report = execute_tree(_greedy(motivating_partitions), motivating_partitions, motivating_example,
                          tmp_path, leaf_timeouts={"G3": 0.0})

    assert report.partial
    assert report.failed_leaves == ["G3"]
    assert report.final_triples == 30
    assert report.completion_percent == pytest.approx(80.0)
    assert report.to_json()["failed_leaves"] == ["G3"]


def test_dictionary_encoding_does_not_change_the_output(motivating_example, motivating_partitions,
                                                        tmp_path: Path) -> None:
    tree = _greedy(motivating_partitions)
    plain = execute_tree(tree, motivating_partitions, motivating_example, tmp_path / "plain")
    packed = execute_tree(tree, motivating_partitions, motivating_example, tmp_path / "packed",
                          compress=True, memory_limit=5)

    assert Path(packed.output).read_bytes() == Path(plain.output).read_bytes()
    # intermediate files hold base-36 ids
    assert (tmp_path / "packed" / "G1.nt").read_text(encoding="utf-8").split("\n")[0].count("<") == 0


def test_empty_plan_writes_an_empty_graph(motivating_partitions, motivating_example, tmp_path: Path) -> None:
    report = execute_tree(None, motivating_partitions, motivating_example, tmp_path)

    assert report.final_triples == 0
    assert Path(report.output).read_text(encoding="utf-8") == ""


_TYPED_BY_ROLE = """
<#Things> rml:logicalSource [ rml:source "a.csv" ] ;
    rr:subjectMap [ rr:template "http://example.com/x/{ID}" ; rr:class ex:C ] .
<#Others> rml:logicalSource [ rml:source "b.csv" ] ;
    rr:subjectMap [ rr:template "http://example.com/y/{ID}" ; rr:class ex:D ] .
<#Typed> rml:logicalSource [ rml:source "c.csv" ] ;
    rr:subjectMap [ rr:template "http://example.com/x/{ID}" ] ;
    rr:predicateObjectMap [ rr:predicate <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> ;
        rr:objectMap [ %s ] ] .
"""


@pytest.mark.parametrize("object_map", ['rr:constant ex:C', 'rr:template "http://example.com/{Kind}"'])
def test_rdf_type_roles_are_unioned_with_class_assertions(make_dis, tmp_path: Path, object_map: str) -> None:
    dis = make_dis(
        _TYPED_BY_ROLE % object_map,
        {"a.csv": "ID\n1\n2\n", "b.csv": "ID\n1\n", "c.csv": "ID,Kind\n1,C\n3,C\n"},
    )
    p = partition(dis)
    tree = _greedy(p)

    assert p.ids == ["G1", "G2"]
    assert tree == Node(UnionOp.DR, Leaf("G1"), Leaf("G2"))
    report = execute_tree(tree, p, dis, tmp_path / "run")
    materialize_all(dis, tmp_path / "all.nt")
    assert report.final_triples == 4
    assert Path(report.output).read_bytes() == (tmp_path / "all.nt").read_bytes()


def test_base36_round_trips_random_ids() -> None:
    rng = random.Random(36)
    numbers = {rng.randrange(0, 36 ** 8) for _ in range(10_000)}
    codes = {n: encode_base36(n) for n in numbers}

    assert all(decode_base36(code) == n for n, code in codes.items())
    assert len(set(codes.values())) == len(numbers)
    ordered = sorted(numbers)
    assert [codes[n] for n in ordered] == sorted(codes.values(), key=lambda c: (len(c), c))


def test_compressed_leaf_holds_only_resource_ids(running_example, tmp_path: Path) -> None:
    p = partition(running_example)
    dictionary = ResourceDictionary()
    result = materialize_group(p.groups[0], running_example, tmp_path / "g.nt", dictionary=dictionary)
    lines = (tmp_path / "g.nt").read_text(encoding="utf-8").splitlines()

    assert len(dictionary) > 0
    assert len(lines) == result.cardinality
    assert all(len(line.split()) == 3 and "<" not in line for line in lines)
    assert all(dictionary.decode_line(line).startswith("<http://example.com/") for line in lines)


_JOINED = """
<#Parent> rml:logicalSource [ rml:source "parent.csv" ] ;
    rr:subjectMap [ rr:template "http://example.com/p/{ID}" ; rr:class ex:P ] .
<#Child> rml:logicalSource [ rml:source "child.csv" ] ;
    rr:subjectMap [ rr:template "http://example.com/c/{ID}" ] ;
    rr:predicateObjectMap [ rr:predicate ex:ref ; rr:objectMap [ rr:parentTriplesMap <#Parent> ;
        rr:joinCondition [ rr:child "Ref" ; rr:parent "Key" ] ] ] .
"""


@pytest.mark.parametrize("children, parents", [(0, 5), (40, 60), (1000, 1000)])
def test_hash_join_matches_nested_loop_join(make_dis, children: int, parents: int) -> None:
    rng = random.Random(children * 7919 + parents)
    keys = [f"k{i}" for i in range(50)] + [""]
    child_rows = [(str(i), rng.choice(keys)) for i in range(children)]
    parent_rows = [(str(i), rng.choice(keys)) for i in range(parents)]
    dis = make_dis(_JOINED, {
        "child.csv": "ID,Ref\n" + "".join(f"{i},{k}\n" for i, k in child_rows),
        "parent.csv": "ID,Key\n" + "".join(f"{i},{k}\n" for i, k in parent_rows),
    })
    role = next(a for a in dis.assertions if a.predicate == EX + "ref")
    table = lambda source_id: read_source(dis.source(source_id).path, source_id)

    joined = set(assertion_triples(role, table))
    expected = {
        (f"<{EX}c/{ci}>", f"<{EX}ref>", f"<{EX}p/{pi}>")
        for ci, ref in child_rows
        for pi, key in parent_rows
        if ref and ref == key
    }
    assert joined == expected
