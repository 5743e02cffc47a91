from __future__ import annotations

from pathlib import Path
from typing import Callable

import pytest

from planner.partitioner import PartitionSet, partition
from planner.rml_model import DataIntegrationSystem, attach_headers, load_mappings

DATA = Path(__file__).parent / "data"
PREFIXES = (
    "@prefix rr: <http://www.w3.org/ns/r2rml#> .\n"
    "@prefix rml: <http://semweb.mmlab.be/ns/rml#> .\n"
    "@prefix ql: <http://semweb.mmlab.be/ns/ql#> .\n"
    "@prefix ex: <http://example.com/> .\n\n"
)


@pytest.fixture
def running_example_path() -> Path:
    return DATA / "running_example" / "mapping.rml.ttl"


@pytest.fixture
def motivating_example_path() -> Path:
    return DATA / "motivating_example" / "mapping.rml.ttl"


@pytest.fixture
def running_example(running_example_path: Path) -> DataIntegrationSystem:
    return attach_headers(load_mappings([running_example_path]))


@pytest.fixture
def motivating_example(motivating_example_path: Path) -> DataIntegrationSystem:
    return attach_headers(load_mappings([motivating_example_path]))


@pytest.fixture
def motivating_partitions(motivating_example: DataIntegrationSystem) -> PartitionSet:
    return partition(motivating_example)


@pytest.fixture
def make_dis(tmp_path: Path) -> Callable[..., DataIntegrationSystem]:
    """Write a mapping body (prefixes added) and CSV sources into tmp_path and load them."""

    def build(mapping: str, sources: dict[str, str]) -> DataIntegrationSystem:
        for name, text in sources.items():
            (tmp_path / name).write_text(text, encoding="utf-8")
        path = tmp_path / "mapping.rml.ttl"
        path.write_text(PREFIXES + mapping, encoding="utf-8")
        return attach_headers(load_mappings([path]))

    return build
