import json
import logging

from cli.commands import explain_text, make_plan, verify_plan, write_plan_artifacts, EXPLAIN_SECTIONS
from config.run_config import build_run_config
from engine.materializer import decode_base36, encode_base36
from utils.errors import KGPlannerError
from utils.server import myserver

logger = logging.getLogger(__name__)


@myserver.tool()
def plan_mappings(mapping_paths: list[str], run_dir: str = "", source_root: str = "",
                  no_partition: bool = False, cost_mode: str = "AbstractOps") -> str:
    """Plan knowledge-graph creation for RML mapping files over CSV sources.

    Partitions the mapping assertions into intra-/inter-source groups, connects groups that
    define the same predicate, and builds a bushy union tree that removes duplicates (DR)
    wherever two overlapping groups first meet. Plan artifacts are written to run_dir
    (partitions.json, graph.dot, tree.dot, tree.json, cost.json, stats.json).

    Parameters:
    - mapping_paths: paths of the Turtle mapping files.
    - run_dir: artifact directory; empty uses the server default.
    - source_root: directory CSV paths are resolved against; empty uses each mapping file's directory.
    - no_partition: plan all assertions as one group (baseline).
    - cost_mode: AbstractOps or MeasuredSeconds.

    Returns:
    - JSON with the group count, the tree (e.g. "NDR(NDR(G1, DR(G2, G4)), G3)"), operator counts and estimated cost.
    """
    logger.info("plan_mappings tool called with mapping_paths: %s, run_dir: %s", mapping_paths, run_dir)
    try:
        config = build_run_config(
            mapping_paths=mapping_paths,
            run_dir=run_dir or None,
            source_root=source_root or None,
            no_partition=no_partition,
            cost_mode=cost_mode,
        )
        plan = make_plan(config)
        write_plan_artifacts(plan, config.run_dir)
        return json.dumps(plan.summary(), indent=2)
    except KGPlannerError as e:
        return f"Error planning mappings: {e.message}"


@myserver.tool()
def explain_plan(mapping_paths: list[str], sections: list[str] | None = None, source_root: str = "") -> str:
    """Explain how mapping files would be planned.

    Sections (any combination, all by default):
    - "partitions": one line per group with its kind, sources, member assertions and predicates
    - "graph": the plan graph in DOT, edges labelled with shared predicates
    - "tree": the bushy tree, one node per line, indented by depth
    """
    logger.info("explain_plan tool called with mapping_paths: %s, sections: %s", mapping_paths, sections)
    sections = sections or list(EXPLAIN_SECTIONS)
    unknown = set(sections) - set(EXPLAIN_SECTIONS)
    if unknown:
        return f"Error explaining plan: unknown section(s) {', '.join(sorted(unknown))}"
    try:
        config = build_run_config(mapping_paths=mapping_paths, source_root=source_root or None)
        return explain_text(make_plan(config), sections)
    except KGPlannerError as e:
        return f"Error explaining plan: {e.message}"


@myserver.tool()
def verify_plan_space(mapping_paths: list[str], run_dir: str = "", check_outputs: bool = True) -> str:
    """Enumerate every bushy tree over the planned groups (at most 7 groups).

    Reports the greedy and the exhaustive optimal cost and, when check_outputs is true, whether
    every tree produces a knowledge graph byte-identical to executing all mappings unpartitioned.
    This executes (2n-2)!/(n-1)! plans, so only use it on small inputs.
    """
    logger.info("verify_plan_space tool called with mapping_paths: %s, check_outputs: %s", mapping_paths, check_outputs)
    try:
        config = build_run_config(mapping_paths=mapping_paths, run_dir=run_dir or None)
        report = verify_plan(config, check_outputs=check_outputs)
        report.pop("equivalence", None)
        return json.dumps(report, indent=2)
    except KGPlannerError as e:
        return f"Error verifying plans: {e.message}"


@myserver.tool()
def encode_resource_id(number: int | None = None, code: str = "") -> str:
    """Convert between a dictionary resource id and its base-36 code (0-9 then A-Z).

    Give `number` to encode it (95634785 -> "1KXS9T") or `code` to decode it.
    """
    logger.info("encode_resource_id tool called with number: %s, code: %s", number, code)
    try:
        if code:
            return str(decode_base36(code))
        if number is None:
            return "Error encoding resource id: give a number or a code"
        return encode_base36(number)
    except ValueError as e:
        return f"Error encoding resource id: {str(e)}"
