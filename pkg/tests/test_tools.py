from __future__ import annotations

import json
from pathlib import Path

from tools.kg.execution import emit_physical_plan, run_internal_engine
from tools.kg.planning import encode_resource_id, explain_plan, plan_mappings, verify_plan_space


def test_plan_mappings_tool(motivating_example_path: Path, tmp_path: Path) -> None:
    summary = json.loads(plan_mappings([str(motivating_example_path)], run_dir=str(tmp_path)))

    assert summary["groups"] == 4
    assert summary["tree"] == "NDR(NDR(G1, DR(G2, G4)), G3)"
    assert summary["operators"] == {"DR": 1, "NDR": 2, "leaves": 4}
    assert (tmp_path / "partitions.json").is_file()


def test_tools_report_errors_as_text(tmp_path: Path) -> None:
    missing = str(tmp_path / "absent.ttl")

    assert plan_mappings([missing], run_dir=str(tmp_path)).startswith("Error planning mappings: ")
    assert plan_mappings([missing], cost_mode="memory").startswith("Error planning mappings: ")
    assert explain_plan([missing], sections=["bogus"]) == "Error explaining plan: unknown section(s) bogus"


def test_explain_plan_tool(running_example_path: Path) -> None:
    text = explain_plan([str(running_example_path)], sections=["partitions", "tree"])

    assert "G1" in text and "G2" in text
    assert text.endswith("NDR\n  G1\n  G2")


def test_run_and_emit_tools(motivating_example_path: Path, tmp_path: Path) -> None:
    report = json.loads(run_internal_engine([str(motivating_example_path)], run_dir=str(tmp_path / "run")))
    assert report["final_triples"] == 39
    assert report["failed_leaves"] == []

    emitted = emit_physical_plan([str(motivating_example_path)], "rocketrml", run_dir=str(tmp_path / "emit"))
    path, _, script = emitted.partition("\n\n")
    assert Path(path).is_file()
    assert script.count("node rocketrml.js") == 4
    assert emit_physical_plan([str(motivating_example_path)], "internal").startswith("Error emitting physical plan: ")


def test_verify_plan_space_tool(running_example_path: Path, tmp_path: Path) -> None:
    report = json.loads(verify_plan_space([str(running_example_path)], run_dir=str(tmp_path)))

    assert report["tree_count"] == 2
    assert report["equivalent"] is True
    assert "equivalence" not in report


def test_encode_resource_id_tool() -> None:
    assert encode_resource_id(95634785) == "1KXS9T"
    assert encode_resource_id(code="1KXS9T") == "95634785"
    assert encode_resource_id().startswith("Error encoding resource id")
    assert encode_resource_id(code="??").startswith("Error encoding resource id")
