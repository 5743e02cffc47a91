"""Command line: plan, emit, run, verify, explain, serve.

The same operations back the MCP tools in `tools/kg/`.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import networkx as nx

from config.run_config import RunConfig, build_run_config, use_default_config
from config.settings import configure_logging
from engine.materializer import ExecutionReport, execute_tree
from engine.plan_emitter import PhysicalPlan, emit_physical_plan
from planner.bushy_planner import (
    BushyTree,
    count_ops,
    format_tree,
    generate_bushy_tree,
    render_text,
    tree_from_json,
    tree_to_dot,
    tree_to_json,
)
from planner.cost_model import CostEstimate, CostMode, PlanCoster, SourceStats, collect_stats, load_stats, stats_to_json
from planner.partitioner import PartitionSet, no_partition, partition, partitions_from_json, partitions_to_json
from planner.plan_graph import build_plan_graph, to_dot
from planner.rml_model import DataIntegrationSystem, attach_headers, load_mappings
from utils.errors import ConfigError, ExecutionError, KGPlannerError, VerificationError
from verify.generator import random_dis
from verify.oracle import verify_dis

logger = logging.getLogger(__name__)

EXPLAIN_SECTIONS = ("partitions", "graph", "tree")


@dataclass
class Plan:
    dis: DataIntegrationSystem
    partitions: PartitionSet
    graph: nx.Graph
    tree: BushyTree | None
    stats: dict[str, SourceStats]
    estimate: CostEstimate | None = None

    def summary(self) -> dict[str, Any]:
        return {
            "groups": len(self.partitions),
            "tree": format_tree(self.tree) if self.tree else None,
            "operators": count_ops(self.tree) if self.tree else {"DR": 0, "NDR": 0, "leaves": 0},
            "cost": self.estimate.value if self.estimate else 0.0,
            "flags": list(self.partitions.flags),
        }


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def make_plan(config: RunConfig, stats_path: str | None = None) -> Plan:
    """Parse, partition, build the plan graph and the greedy bushy tree, and cost it."""
    dis = load_mappings(config.mapping_paths, config.source_root)
    if stats_path:
        stats = load_stats(stats_path)
    else:
        dis = attach_headers(dis)
        stats = collect_stats(dis)
    partitions = no_partition(dis) if config.no_partition else partition(dis)
    graph = build_plan_graph(partitions)
    tree = generate_bushy_tree(graph) if len(partitions) else None
    estimate = PlanCoster(partitions, dis, stats, config.cost_model()).estimate(tree) if tree else None
    logger.info("planned %d group(s): %s", len(partitions), format_tree(tree) if tree else "empty")
    return Plan(dis, partitions, graph, tree, stats, estimate)


def reuse_plan(config: RunConfig) -> Plan:
    """Rebuild a Plan from the artifacts a previous `plan` left in run_dir."""
    run_dir = Path(config.run_dir)
    try:
        partitions = partitions_from_json(json.loads((run_dir / "partitions.json").read_text(encoding="utf-8")))
        tree_data = json.loads((run_dir / "tree.json").read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"No reusable plan in {run_dir}: {exc}") from exc
    dis = load_mappings(config.mapping_paths, config.source_root)
    stats = load_stats(run_dir / "stats.json")
    tree = tree_from_json(tree_data) if tree_data else None
    estimate = PlanCoster(partitions, dis, stats, config.cost_model()).estimate(tree) if tree else None
    return Plan(dis, partitions, build_plan_graph(partitions), tree, stats, estimate)


def write_plan_artifacts(plan: Plan, run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / "partitions.json", partitions_to_json(plan.partitions))
    (run_dir / "graph.dot").write_text(to_dot(plan.graph), encoding="utf-8")
    (run_dir / "tree.dot").write_text(tree_to_dot(plan.tree) if plan.tree else "digraph plan {\n}\n", encoding="utf-8")
    _write_json(run_dir / "tree.json", tree_to_json(plan.tree) if plan.tree else None)
    _write_json(run_dir / "cost.json", plan.estimate.to_json() if plan.estimate else {"value": 0.0, "breakdown": {}})
    _write_json(run_dir / "stats.json", stats_to_json(plan.stats))
    return run_dir


def explain_text(plan: Plan, sections: Sequence[str] = EXPLAIN_SECTIONS) -> str:
    parts = []
    if "partitions" in sections:
        parts.append(plan.partitions.describe())
    if "graph" in sections:
        parts.append(to_dot(plan.graph).rstrip("\n"))
    if "tree" in sections:
        parts.append(render_text(plan.tree).rstrip("\n") if plan.tree else "(empty plan)")
    return "\n\n".join(p for p in parts if p)


def emit_plan(config: RunConfig, plan: Plan) -> PhysicalPlan:
    if config.internal:
        raise ConfigError("The internal engine runs with `run`; choose an external engine profile to emit a script")
    if plan.tree is None:
        raise ConfigError("No mapping assertions to emit")
    write_plan_artifacts(plan, config.run_dir)
    return emit_physical_plan(
        plan.tree, plan.partitions, plan.dis, config.engine_profile(), config.run_dir, config.output_path
    )


def run_plan(config: RunConfig, plan: Plan) -> ExecutionReport:
    if not config.internal:
        raise ConfigError(f"`run` executes the internal engine; use `emit` for {config.engine}")
    write_plan_artifacts(plan, config.run_dir)
    report = execute_tree(
        plan.tree,
        plan.partitions,
        plan.dis,
        config.run_dir,
        output=config.output_path,
        parallelism=config.parallelism,
        timeout=config.timeout_seconds,
        leaf_timeouts=config.leaf_timeouts,
        compress=config.compress,
        memory_limit=config.dr_memory_limit,
    )
    data = report.to_json()
    data["tree"] = format_tree(plan.tree) if plan.tree else None
    _write_json(Path(config.run_dir) / "report.json", data)
    return report


def verify_plan(config: RunConfig, *, random_seed: int | None = None, check_outputs: bool = True) -> dict[str, Any]:
    work_dir = Path(config.run_dir) / "verify"
    if random_seed is not None:
        dis = random_dis(random_seed, work_dir / "random", max_groups=min(4, config.enumeration_limit))
    else:
        dis = attach_headers(load_mappings(config.mapping_paths, config.source_root))
    if not dis.assertions:
        raise ConfigError("No mapping assertions to verify")
    model = config.cost_model()
    report = verify_dis(
        dis,
        work_dir,
        model=model,
        limit=config.enumeration_limit,
        check_outputs=check_outputs,
        partitions=no_partition(dis) if config.no_partition else None,
    )
    # noisy measured costs cannot be held to exact equality
    report["optimality_checked"] = model.mode is CostMode.ABSTRACT and report["theorem1_conditions_met"]
    _write_json(work_dir / "verify.json", report)
    return report


# --- argument parsing ---

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _leaf_timeout(text: str) -> tuple[str, float]:
    group, sep, seconds = text.partition("=")
    try:
        value = float(seconds)
    except ValueError:
        value = -1.0
    if not sep or not group or value <= 0:
        raise argparse.ArgumentTypeError(f"expected GROUP=SECONDS with positive seconds, got {text!r}")
    return group, value


def _common(parser: argparse.ArgumentParser, mappings: bool = True) -> None:
    if mappings:
        parser.add_argument("mappings", nargs="*", help="RML/R2RML mapping files (Turtle)")
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--source-root", help="directory logical source paths are resolved against")
    parser.add_argument("--run-dir", help="directory for plan artifacts and intermediates")
    parser.add_argument("--cost-mode", choices=[m.value for m in CostMode])
    parser.add_argument("--no-partition", action="store_const", const=True,
                        help="execute all assertions as a single group")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", default=None)


def _engine_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--engine", help="engine profile name, or `internal`")
    parser.add_argument("--output", help="final N-Triples file (default <run_dir>/kg.nt)")
    parser.add_argument("--timeout", type=int, dest="timeout_seconds", help="per-leaf timeout in seconds")
    parser.add_argument("--stats", help="stats.json of an earlier plan instead of scanning the sources")
    parser.add_argument("--reuse-plan", action="store_true", help="execute the plan already in run_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgplanner", description="Plan and execute knowledge-graph creation from RML mappings.")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="partition, plan and cost; write artifacts to run_dir")
    _common(plan)
    plan.add_argument("--stats", help="stats.json of an earlier plan instead of scanning the sources")
    plan.add_argument("--cost", action="store_true", help="print the per-node cost breakdown")

    emit = sub.add_parser("emit", help="write per-group mappings and a shell script for an external engine")
    _common(emit)
    _engine_options(emit)

    run = sub.add_parser("run", help="execute the plan with the internal engine")
    _common(run)
    _engine_options(run)
    run.add_argument("--parallelism", type=int)
    run.add_argument("--compress", action="store_const", const=True, help="dictionary-encode intermediates")
    run.add_argument("--leaf-timeout", action="append", type=_leaf_timeout, default=[],
                     metavar="GROUP=SECONDS", help="override the timeout of one leaf")

    verify = sub.add_parser("verify", help="enumerate every plan, compare costs and outputs")
    _common(verify)
    verify.add_argument("--random", action="store_true", help="verify a system generated from --seed instead")
    verify.add_argument("--no-execute", action="store_true", help="skip the all-plans output comparison")

    explain = sub.add_parser("explain", help="print partitions, plan graph and bushy tree")
    _common(explain)
    explain.add_argument("--stats", help="stats.json of an earlier plan instead of scanning the sources")
    for section in EXPLAIN_SECTIONS:
        explain.add_argument(f"--{section}", action="store_true")

    serve = sub.add_parser("serve", help="run the MCP server")
    serve.add_argument("--transport", choices=["stdio", "streamable-http", "sse"], default="stdio")
    serve.add_argument("--config", help="TOML run configuration the tools default to")
    serve.add_argument("--log-level", default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "mapping_paths": tuple(args.mappings) or None,
        "source_root": args.source_root,
        "run_dir": args.run_dir,
        "cost_mode": args.cost_mode,
        "no_partition": args.no_partition,
        "seed": args.seed,
        "engine": getattr(args, "engine", None),
        "output": getattr(args, "output", None),
        "timeout_seconds": getattr(args, "timeout_seconds", None),
        "parallelism": getattr(args, "parallelism", None),
        "compress": getattr(args, "compress", None),
        "leaf_timeouts": dict(getattr(args, "leaf_timeout", [])) or None,
    }
    return build_run_config(args.config, **overrides)


def cmd_plan(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    plan = make_plan(config, args.stats)
    run_dir = write_plan_artifacts(plan, config.run_dir)
    print(plan.partitions.describe())
    print(format_tree(plan.tree) if plan.tree else "(empty plan)")
    if args.cost and plan.estimate:
        print(plan.estimate.table())
    for flag in plan.partitions.flags:
        print(f"note: {flag}")
    logger.info("plan artifacts written to %s", run_dir)
    return 0


def _plan_for(config: RunConfig, args: argparse.Namespace) -> Plan:
    return reuse_plan(config) if args.reuse_plan else make_plan(config, args.stats)


def cmd_emit(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if config.internal:
        raise ConfigError("The internal engine runs with `run`; choose an external engine profile to emit a script")
    physical = emit_plan(config, _plan_for(config, args))
    print(physical.script_path)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if not config.internal:
        raise ConfigError(f"`run` executes the internal engine; use `emit` for {config.engine}")
    report = run_plan(config, _plan_for(config, args))
    print(f"{report.final_triples} triples written to {report.output} in {report.total_seconds:.2f}s")
    if report.partial:
        print(
            f"partial knowledge graph: leaves {', '.join(report.failed_leaves)} timed out; "
            f"{report.completion_percent:.1f}% of the assertions completed",
            file=sys.stderr,
        )
        return ExecutionError.exit_code
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    report = verify_plan(config, random_seed=config.seed if args.random else None, check_outputs=not args.no_execute)
    print(json.dumps({k: v for k, v in report.items() if k != "equivalence"}, indent=2, sort_keys=True))
    if report["equivalent"] is False:
        raise VerificationError("Plans over the same partitioning produced different knowledge graphs")
    if report["optimality_checked"] and report["gap"] != 0:
        raise VerificationError(
            f"Greedy plan costs {report['greedy_cost']} but the optimum is {report['optimal_cost']}"
        )
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    sections = [s for s in EXPLAIN_SECTIONS if getattr(args, s)] or list(EXPLAIN_SECTIONS)
    print(explain_text(make_plan(config, args.stats), sections))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    if args.config:
        use_default_config(args.config)
    from utils.server import myserver
    from tools.kg import execution, planning  # noqa: F401  registers the tools

    logger.info("serving MCP tools over %s", args.transport)
    myserver.run(transport=args.transport)
    return 0


COMMANDS = {
    "plan": cmd_plan,
    "emit": cmd_emit,
    "run": cmd_run,
    "verify": cmd_verify,
    "explain": cmd_explain,
    "serve": cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except KGPlannerError as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.exit_code
