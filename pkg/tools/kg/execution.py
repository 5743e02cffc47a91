import json
import logging

from cli.commands import emit_plan, make_plan, run_plan
from config.run_config import build_run_config
from utils.errors import KGPlannerError
from utils.server import myserver

logger = logging.getLogger(__name__)


@myserver.tool()
def emit_physical_plan(mapping_paths: list[str], engine: str, run_dir: str = "", output: str = "") -> str:
    """Write a shell script that builds the knowledge graph with an external RML engine.

    One mapping file per group is written under <run_dir>/mappings; the script runs the engine on
    every group in parallel, then merges the group outputs with `sort -u` (duplicate removal) or
    `cat` following the bushy tree, and moves the result to `output`.
    The script is NOT executed; ask the user before running it.

    Parameters:
    - engine: rmlmapper, rocketrml, morph-kgc or sdm-rdfizer (not "internal").
    - run_dir / output: empty uses the defaults (<run_dir>/kg.nt for the output).

    Returns:
    - The script path followed by the script text.
    """
    logger.info("emit_physical_plan tool called with mapping_paths: %s, engine: %s", mapping_paths, engine)
    try:
        config = build_run_config(
            mapping_paths=mapping_paths, engine=engine, run_dir=run_dir or None, output=output or None
        )
        plan = emit_plan(config, make_plan(config))
        return f"{plan.script_path}\n\n{plan.script}"
    except KGPlannerError as e:
        return f"Error emitting physical plan: {e.message}"


@myserver.tool()
def run_internal_engine(mapping_paths: list[str], run_dir: str = "", output: str = "",
                        parallelism: int = 0, compress: bool = False, timeout_seconds: int = 0) -> str:
    """Build the knowledge graph (N-Triples) with the internal engine following the planned bushy tree.

    Groups run in parallel; intermediate results are merged with duplicate removal where groups
    overlap. If a group times out the run still finishes with a partial graph and the report lists
    the failed groups and the completion percentage.

    Parameters:
    - parallelism: worker threads, 0 for min(#groups, CPUs).
    - compress: dictionary-encode intermediate files.
    - timeout_seconds: per-group timeout, 0 for the server default.

    Returns:
    - The execution report as JSON (per-group and per-union seconds, triple counts, output path).
    """
    logger.info("run_internal_engine tool called with mapping_paths: %s, run_dir: %s", mapping_paths, run_dir)
    try:
        config = build_run_config(
            mapping_paths=mapping_paths,
            engine="internal",
            run_dir=run_dir or None,
            output=output or None,
            parallelism=parallelism or None,
            compress=compress,
            timeout_seconds=timeout_seconds or None,
        )
        report = run_plan(config, make_plan(config))
        return json.dumps(report.to_json(), indent=2)
    except KGPlannerError as e:
        return f"Error running internal engine: {e.message}"
