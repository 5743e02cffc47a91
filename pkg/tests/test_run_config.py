from __future__ import annotations

import json
from pathlib import Path

import pytest

from config.run_config import BUILTIN_ENGINES, EngineProfile, build_run_config, load_measurements
from config.settings import DEFAULT_TIMEOUT
from planner.cost_model import CostMode
from utils.errors import ConfigError


def test_defaults() -> None:
    config = build_run_config()

    assert config.internal
    assert config.timeout_seconds == DEFAULT_TIMEOUT
    assert config.output_path == str(Path(config.run_dir) / "kg.nt")
    assert config.cost_model().concat_cost == 0.0
    assert set(BUILTIN_ENGINES) <= set(config.engines)


def test_config_file_values_and_overrides(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text(
        """
[run]
mapping_paths = ["maps/a.ttl", "maps/b.ttl"]
run_dir = "out"
timeout_seconds = 60
leaf_timeouts = { G2 = 5.0 }

[cost]
mode = "MeasuredSeconds"
dedup_cost = 2.0

[engine.rmlmapper]
timeout_seconds = 30

[engine.custom]
command_template = "my-engine {mapping_file} > {output_file}"
""",
        encoding="utf-8",
    )
    config = build_run_config(path, timeout_seconds=90, output=None)

    assert config.mapping_paths == (str(tmp_path.resolve() / "maps/a.ttl"), str(tmp_path.resolve() / "maps/b.ttl"))
    assert config.run_dir == str(tmp_path.resolve() / "out")
    assert config.timeout_seconds == 90
    assert config.leaf_timeouts == {"G2": 5.0}
    assert config.cost_mode is CostMode.MEASURED
    assert config.cost_model().dedup_cost == 2.0
    assert config.engine_profile("rmlmapper").timeout_seconds == 30
    assert config.engine_profile("custom") == EngineProfile(
        "custom", "my-engine {mapping_file} > {output_file}", timeout_seconds=90
    )


@pytest.mark.parametrize(
    "document",
    [
        "[run]\nthreads = 4\n",
        "[network]\nport = 1\n",
        "[run\n",
        '[engine.custom]\ncommand_template = "engine {mapping_file}"\n',
        "[engine.fresh]\ntimeout_seconds = 5\n",
        "[run]\ntimeout_seconds = 0\n",
        "[cost]\ndedup_cost = -1.0\n",
    ],
)
def test_invalid_config_files(tmp_path: Path, document: str) -> None:
    path = tmp_path / "run.toml"
    path.write_text(document, encoding="utf-8")
    with pytest.raises(ConfigError) as excinfo:
        build_run_config(path)
    assert excinfo.value.exit_code == 2


def test_unknown_engine_and_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        build_run_config(engine="nonexistent")
    with pytest.raises(ConfigError):
        build_run_config(tmp_path / "absent.toml")


def test_measurements_from_a_previous_report(tmp_path: Path) -> None:
    report = tmp_path / "report.json"
    report.write_text(json.dumps({"leaf_seconds": {"G1": 1.25, "G2": 3}}), encoding="utf-8")

    assert load_measurements(report) == {"G1": 1.25, "G2": 3.0}
    (tmp_path / "bad.json").write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_measurements(tmp_path / "bad.json")
